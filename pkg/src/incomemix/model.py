"""Grouped income data and the likelihoods built on it.

Grouped data here means *decile-style* tabulations: the boundaries ``t`` are
sample order statistics and the group frequencies are fixed by design. The
likelihood of such data is the joint density of the selected order
statistics, implemented in :func:`log_likelihood_grouped` (lognormal
mixtures) and :func:`log_likelihood_gb2`.

Indexing is zero-based throughout: group ``k`` covers ``(t[k-1], t[k]]`` with
``t[-1] = 0`` for the first group and an open top group ``(t[K-2], inf)``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import special

from . import distributions as dist
from .distributions import DomainError, Gb2Params, InvariantError


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Finite lognormal mixture with components ordered by log-mean."""

    weights: np.ndarray
    mus: np.ndarray
    sigma2s: np.ndarray

    def __post_init__(self):
        for name in ("weights", "mus", "sigma2s"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        w, m, s = self.weights, self.mus, self.sigma2s
        if not (w.ndim == m.ndim == s.ndim == 1 and len(w) == len(m) == len(s) >= 1):
            raise InvariantError("weights, mus and sigma2s must be 1-d of equal length >= 1")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvariantError(f"weights must lie on the simplex (sum={w.sum()!r})")
        if not np.all(np.isfinite(m)):
            raise InvariantError("mus must be finite")
        if np.any(np.diff(m) <= 0):
            raise InvariantError(f"mus must be strictly increasing, got {m}")
        if np.any(~(s > 0)) or not np.all(np.isfinite(s)):
            raise InvariantError("sigma2s must be positive and finite")

    @property
    def R(self) -> int:
        return len(self.weights)

    @classmethod
    def single(cls, mu: float, sigma2: float) -> "MixtureParams":
        return cls([1.0], [mu], [sigma2])

    def component(self, r: int) -> dist.LognormalParams:
        return dist.LognormalParams(float(self.mus[r]), float(self.sigma2s[r]))

    def mean(self) -> float:
        return float(np.sum(self.weights * np.exp(self.mus + 0.5 * self.sigma2s)))

    def __eq__(self, other):
        if not isinstance(other, MixtureParams):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights) and np.array_equal(self.mus, other.mus)
                and np.array_equal(self.sigma2s, other.sigma2s))

    def __repr__(self):
        return (f"MixtureParams(weights={self.weights.tolist()}, mus={self.mus.tolist()}, "
                f"sigma2s={self.sigma2s.tolist()})")


@dataclass(frozen=True, eq=False)
class GroupedData:
    """Boundaries ``t`` (K-1), counts (K) and optional within-group means (K)."""

    t: np.ndarray
    counts: np.ndarray
    group_means: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        counts = np.array(self.counts).reshape(-1)
        if counts.size and not np.all(np.equal(np.mod(counts, 1), 0)):
            raise DomainError("counts must be integers")
        counts = counts.astype(np.int64)
        if counts.size < 2 or t.size != counts.size - 1:
            raise DomainError(f"need K >= 2 groups and K-1 boundaries, got {counts.size} counts and {t.size} boundaries")
        if np.any(~np.isfinite(t)) or np.any(t <= 0):
            raise DomainError("boundaries must be positive and finite")
        if np.any(np.diff(t) <= 0):
            raise DomainError("boundaries must be strictly increasing")
        if np.any(counts < 1):
            raise DomainError("every group needs at least one observation")
        means = None
        if self.group_means is not None:
            means = np.array(self.group_means, dtype=float).reshape(-1)
            if means.size != counts.size:
                raise DomainError("group_means must have one entry per group")
            lo = np.concatenate([[0.0], t])
            hi = np.concatenate([t, [np.inf]])
            bad = ~((means > lo) & (means <= hi))
            # a top group whose only member is its lower boundary cannot happen: boundaries close lower groups
            if np.any(bad):
                k = int(np.flatnonzero(bad)[0])
                raise InvariantError(f"group mean {means[k]} of group {k + 1} lies outside ({lo[k]}, {hi[k]}]")
            means.setflags(write=False)
        t.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "group_means", means)

    @property
    def K(self) -> int:
        return int(self.counts.size)

    @property
    def n_total(self) -> int:
        return int(self.counts.sum())

    @property
    def lower(self) -> np.ndarray:
        """Lower interval edge per group (0 for the first)."""
        return np.concatenate([[0.0], self.t])

    @property
    def upper(self) -> np.ndarray:
        """Upper interval edge per group (inf for the last)."""
        return np.concatenate([self.t, [np.inf]])

    @property
    def boundary_index(self) -> np.ndarray:
        """Zero-based positions of the pinned boundary observations in the latent vector."""
        return np.cumsum(self.counts)[:-1] - 1

    def group_labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.K), self.counts)

    def __eq__(self, other):
        if not isinstance(other, GroupedData):
            return NotImplemented
        same_means = (self.group_means is None and other.group_means is None) or (
            self.group_means is not None and other.group_means is not None
            and np.array_equal(self.group_means, other.group_means))
        return np.array_equal(self.t, other.t) and np.array_equal(self.counts, other.counts) and same_means

    # -- CSV ---------------------------------------------------------------

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "t_upper", "count", "mean"])
        for k in range(self.K):
            t_up = repr(float(self.t[k])) if k < self.K - 1 else ""
            mean = repr(float(self.group_means[k])) if self.group_means is not None else ""
            w.writerow([k + 1, t_up, int(self.counts[k]), mean])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_string())

    @classmethod
    def from_csv_string(cls, text: str) -> "GroupedData":
        rows = list(csv.DictReader(io.StringIO(text)))
        missing = {"k", "t_upper", "count"} - set(rows[0].keys() if rows else [])
        if missing:
            raise DomainError(f"grouped-data CSV lacks columns {sorted(missing)}")
        rows.sort(key=lambda r: int(r["k"]))
        if [int(r["k"]) for r in rows] != list(range(1, len(rows) + 1)):
            raise DomainError("group index k must run 1..K")
        t = [float(r["t_upper"]) for r in rows[:-1]]
        if rows[-1]["t_upper"].strip():
            raise DomainError("the last group must have an empty t_upper (open top group)")
        counts = [int(r["count"]) for r in rows]
        means_raw = [(r.get("mean") or "").strip() for r in rows]
        if all(means_raw):
            means = [float(m) for m in means_raw]
        elif any(means_raw):
            raise DomainError("group means must be given for every group or none")
        else:
            means = None
        return cls(t, counts, means)

    @classmethod
    def from_csv(cls, path) -> "GroupedData":
        return cls.from_csv_string(Path(path).read_text())

    def digest(self) -> str:
        """SHA-256 of the canonical CSV form; used to tie draws to their data."""
        return hashlib.sha256(self.to_csv_string().encode()).hexdigest()


@dataclass
class LatentState:
    """Latent incomes ``x`` (with ``logx`` cache), allocations ``z`` and group labels ``d``.

    Labels are zero-based. Boundary slots (see ``GroupedData.boundary_index``)
    hold the boundary values exactly and belong to the group they close.
    """

    x: np.ndarray
    z: np.ndarray
    d: np.ndarray
    logx: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.logx is None:
            self.logx = np.log(self.x)

    @property
    def n(self) -> int:
        return int(self.x.size)

    @classmethod
    def empty(cls) -> "LatentState":
        return cls(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))

    @classmethod
    def initial(cls, data: GroupedData, R: int, rng: np.random.Generator) -> "LatentState":
        """Geometric midpoints of each group (first: t1/1.5, top: 1.5 t_{K-1}) and random z."""
        lo, hi = data.lower, data.upper
        mid = np.sqrt(lo[1:-1] * hi[1:-1])
        mid = np.concatenate([[data.t[0] / 1.5], mid, [data.t[-1] * 1.5]])
        d = data.group_labels()
        x = mid[d].copy()
        x[data.boundary_index] = data.t
        z = rng.integers(0, R, size=x.size)
        return cls(x, z, d)

    def copy(self) -> "LatentState":
        return LatentState(self.x.copy(), self.z.copy(), self.d.copy(), self.logx.copy())

    def check(self, data: GroupedData, R: int) -> None:
        """Raise InvariantError unless consistent with ``data`` and ``R`` components."""
        if not (self.x.size == self.z.size == self.d.size == data.n_total):
            raise InvariantError("latent vectors must have n_total entries")
        if not np.array_equal(self.d, data.group_labels()):
            raise InvariantError("group labels d must be the sorted block vector of the counts")
        bi = data.boundary_index
        if not np.array_equal(self.x[bi], data.t):
            raise InvariantError("boundary slots must equal the boundaries exactly")
        lo, hi = data.lower[self.d], data.upper[self.d]
        if np.any(~((self.x > lo) & (self.x <= hi))):
            i = int(np.flatnonzero(~((self.x > lo) & (self.x <= hi)))[0])
            raise InvariantError(f"latent x[{i}]={self.x[i]} outside its group ({lo[i]}, {hi[i]}]")
        if self.z.size and (self.z.min() < 0 or self.z.max() >= R):
            raise InvariantError(f"allocations must lie in 0..{R - 1}")
        if not np.allclose(self.logx, np.log(self.x), rtol=0, atol=1e-12):
            raise InvariantError("logx cache out of sync with x")


# --- likelihoods ----------------------------------------------------------

def _order_statistics_loglik(counts, interval_mass, log_dens_at_t) -> float:
    """Joint log-density of the selected order statistics.

    ``interval_mass`` has the K probabilities of the groups; ``log_dens_at_t``
    the K-1 log densities at the boundaries.
    """
    counts = np.asarray(counts)
    mass = np.asarray(interval_mass, dtype=float)
    if np.any(~(mass > 0)) or np.any(~np.isfinite(log_dens_at_t)):
        return -math.inf
    n = counts.sum()
    expo = counts.astype(float).copy()
    expo[:-1] -= 1.0
    val = (special.gammaln(n + 1) + np.sum(expo * np.log(mass)) - np.sum(special.gammaln(expo + 1))
           + np.sum(log_dens_at_t))
    return float(val)


def log_likelihood_grouped(data: GroupedData, params: MixtureParams) -> float:
    """Log of the selected-order-statistics likelihood for a lognormal mixture.

    Returns ``-inf`` when some group gets no probability mass at double precision.
    """
    if not isinstance(data, GroupedData) or not isinstance(params, MixtureParams):
        raise DomainError("expected GroupedData and MixtureParams")
    mass = dist.mln_interval_mass(data.lower, data.upper, params)
    return _order_statistics_loglik(data.counts, mass, dist.mln_logpdf(data.t, params))


def log_likelihood_gb2(data: GroupedData, params: Gb2Params) -> float:
    if not isinstance(data, GroupedData) or not isinstance(params, Gb2Params):
        raise DomainError("expected GroupedData and Gb2Params")
    mass = dist.gb2_interval_mass(data.lower, data.upper, params)
    return _order_statistics_loglik(data.counts, mass, dist.gb2_logpdf(data.t, params))


def component_loglik(logx: np.ndarray, mu: float, sigma2: float) -> float:
    """Sum over ``logx`` of the normal kernel -0.5 log(sigma2) - (logx - mu)^2 / (2 sigma2)."""
    if logx.size == 0:
        return 0.0
    return float(-0.5 * logx.size * math.log(sigma2) - np.sum((logx - mu) ** 2) / (2.0 * sigma2))


def log_augmented_likelihood(data: GroupedData, latent: LatentState, params: MixtureParams,
                             check: bool = True) -> float:
    """Complete-data log-likelihood of (x, d, z) given the mixture.

    Equals sum_r [n_r log w_r - n_r/2 log s2_r - sum_{z_i=r} (log x_i - m_r)^2 / (2 s2_r)].
    The omitted constant is ``-sum(log x) - n/2 log(2 pi)``: it does not depend on
    the mixture, so it cancels in every ratio the sampler forms with fixed x.
    """
    if check:
        latent.check(data, params.R)
    total = 0.0
    for r in range(params.R):
        lx = latent.logx[latent.z == r]
        if lx.size:
            total += lx.size * math.log(params.weights[r])
        total += component_loglik(lx, params.mus[r], params.sigma2s[r])
    return total


# --- simulation -----------------------------------------------------------

Dgp = Union[MixtureParams, Gb2Params]


def sample_dgp(dgp: Dgp, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(dgp, MixtureParams):
        return dist.sample_lognormal_mixture(dgp, n, rng)
    if isinstance(dgp, Gb2Params):
        return dist.sample_gb2(dgp, n, rng)
    raise DomainError(f"unknown DGP type {type(dgp).__name__}")


def simulate_grouped(dgp: Dgp, n: int, K: int, seed=None) -> tuple[GroupedData, np.ndarray]:
    """Draw ``n`` incomes, sort them and keep the K-1 order statistics at ranks n*k/K.

    Returns the grouped data (with within-group means) and the sorted raw sample.
    """
    if K < 2 or n < K or n % K:
        raise DomainError(f"n={n} must be a multiple of K={K} >= 2")
    rng = dist.make_rng(seed)
    x = np.sort(sample_dgp(dgp, n, rng))
    m = n // K
    t = x[m - 1:n - 1:m]
    counts = np.full(K, m)
    means = x.reshape(K, m).mean(axis=1)
    # floating-point means can land a hair outside a very narrow group; pull them in
    lo = np.concatenate([[0.0], t])
    hi = np.concatenate([t, [np.inf]])
    means = np.minimum(np.maximum(means, np.nextafter(lo, np.inf)), hi)
    return GroupedData(t, counts, means), x


def gastwirth_bounds(data: GroupedData) -> tuple[float, float]:
    """Nonparametric lower and upper Gini bounds from boundaries, counts and group means."""
    if data.group_means is None:
        raise DomainError("Gastwirth bounds need group means")
    means = data.group_means
    share = data.counts / data.n_total
    overall = float(np.sum(share * means))
    lower = float(np.sum(np.outer(share, share) * np.abs(means[:, None] - means[None, :])) / (2.0 * overall))
    lo, hi = data.lower, data.upper
    gmax = np.empty(data.K)
    width = hi[:-1] - lo[:-1]
    p = (hi[:-1] - means[:-1]) / width
    gmax[:-1] = p * (1.0 - p) * width / means[:-1]
    gmax[-1] = (means[-1] - lo[-1]) / means[-1]
    upper = lower + float(np.sum(share ** 2 * (means / overall) * gmax))
    return lower, upper
