"""Append-only record of kept MCMC iterations, with CSV + JSON persistence.

CSV layout (one row per kept iteration)::

    mln: iteration,R,log_likelihood,bd_move,sc_move,hyper_mu,hyper_tau2,hyper_beta,<w_1..w_R>,<mu_1..mu_R>,<sigma2_1..sigma2_R>
    gb2: iteration,R,log_likelihood,bd_move,sc_move,hyper_mu,hyper_tau2,hyper_beta,a,b,p,q

For GB2 rows ``R`` is 0 and the move/hyper columns are empty. Floats are written
with ``repr`` so a round trip is bit-exact. Move codes: ``B``/``D`` birth/death,
``S``/``C`` split/combine, suffixed ``+`` (accepted) or ``-`` (rejected);
``.`` means no move was possible.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .distributions import DomainError, Gb2Params
from .model import MixtureParams, atomic_write_text

FIXED = ["iteration", "R", "log_likelihood", "bd_move", "sc_move", "hyper_mu", "hyper_tau2", "hyper_beta"]
GB2_BLOCK = ["a", "b", "p", "q"]


@dataclass
class Draws:
    model: str = "mln"
    iteration: list = field(default_factory=list)
    R: list = field(default_factory=list)
    params: list = field(default_factory=list)
    hyper: list = field(default_factory=list)
    log_likelihood: list = field(default_factory=list)
    moves: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in ("mln", "gb2"):
            raise DomainError(f"unknown model {self.model!r}")

    def __len__(self):
        return len(self.iteration)

    def append_mln(self, iteration: int, params: MixtureParams, hyper, loglik: float, moves=(".", ".")):
        self.iteration.append(int(iteration))
        self.R.append(params.R)
        self.params.append(np.concatenate([params.weights, params.mus, params.sigma2s]))
        self.hyper.append(tuple(float(h) for h in hyper))
        self.log_likelihood.append(float(loglik))
        self.moves.append(tuple(moves))

    def append_gb2(self, iteration: int, theta, loglik: float):
        self.iteration.append(int(iteration))
        self.R.append(0)
        self.params.append(np.array(theta, dtype=float))
        self.hyper.append(())
        self.log_likelihood.append(float(loglik))
        self.moves.append((".", "."))

    # -- access ----------------------------------------------------------

    @property
    def R_array(self) -> np.ndarray:
        return np.asarray(self.R, dtype=int)

    @property
    def loglik_array(self) -> np.ndarray:
        return np.asarray(self.log_likelihood, dtype=float)

    def mixture(self, i: int) -> MixtureParams:
        R = self.R[i]
        v = self.params[i]
        return MixtureParams(v[:R], v[R:2 * R], v[2 * R:])

    def gb2(self, i: int) -> Gb2Params:
        return Gb2Params(*self.params[i])

    def distribution(self, i: int):
        return self.mixture(i) if self.model == "mln" else self.gb2(i)

    def parameter_matrix(self) -> np.ndarray:
        """Stack parameter blocks; valid only when every draw has the same width."""
        return np.vstack(self.params)

    def hyper_matrix(self) -> np.ndarray:
        return np.asarray(self.hyper, dtype=float)

    def select(self, R: Optional[int] = None) -> "Draws":
        if R is None or self.model == "gb2":
            return self
        keep = [i for i, r in enumerate(self.R) if r == R]
        out = Draws(self.model, meta=dict(self.meta))
        for name in ("iteration", "R", "params", "hyper", "log_likelihood", "moves"):
            src = getattr(self, name)
            setattr(out, name, [src[i] for i in keep])
        return out

    # -- persistence -----------------------------------------------------

    def to_csv_string(self) -> str:
        import io
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        block = ["params(R:w,mu,sigma2)"] if self.model == "mln" else GB2_BLOCK
        w.writerow(FIXED + block)
        for i in range(len(self)):
            hyper = [repr(h) for h in self.hyper[i]] or ["", "", ""]
            bd, sc = self.moves[i]
            row = [self.iteration[i], self.R[i], repr(self.log_likelihood[i]), bd, sc, *hyper]
            row += [repr(float(v)) for v in self.params[i]]
            w.writerow(row)
        return buf.getvalue()

    def save(self, csv_path) -> None:
        """Write the CSV and a ``.json`` sidecar holding ``meta``."""
        csv_path = Path(csv_path)
        meta = dict(self.meta, model=self.model, n_draws=len(self))
        atomic_write_text(csv_path, self.to_csv_string())
        atomic_write_text(csv_path.with_suffix(".json"), json.dumps(meta, indent=2, sort_keys=True, default=_jsonable))

    @classmethod
    def load(cls, csv_path) -> "Draws":
        csv_path = Path(csv_path)
        side = csv_path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:len(FIXED)] != FIXED:
            raise DomainError(f"{csv_path} is not a draws file")
        model = "gb2" if rows[0][len(FIXED):] == GB2_BLOCK else "mln"
        out = cls(model, meta=meta)
        for row in rows[1:]:
            out.iteration.append(int(row[0]))
            out.R.append(int(row[1]))
            out.log_likelihood.append(float(row[2]))
            out.moves.append((row[3], row[4]))
            out.hyper.append(tuple(float(h) for h in row[5:8] if h != ""))
            out.params.append(np.array([float(v) for v in row[8:]]))
            if model == "mln" and out.params[-1].size != 3 * out.R[-1]:
                raise DomainError(f"row for iteration {row[0]} has a malformed parameter block")
        return out


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")
