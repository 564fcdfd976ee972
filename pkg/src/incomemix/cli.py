"""Command-line front end: simulate, fit, fit-gb2, report.

Config files are JSON. A DGP spec looks like::

    {"family": "mln", "weights": [0.2, 0.5, 0.3], "mus": [2, 3, 4],
     "sigma2s": [0.3, 0.1, 0.2], "n": 10000, "K": 10}
    {"family": "gb2", "a": 2, "b": 10, "p": 2.5, "q": 1.5, "n": 10000, "K": 10}

``--spec sim-1`` / ``--spec sim-2`` select these two built-in designs. A
prior file holds any subset of the :class:`~incomemix.rjmcmc.PriorConfig`
fields; a GB2 config any subset of :class:`~incomemix.gb2.Gb2ChainConfig`
fields. Exit codes: 0 success, 2 bad input or configuration, 3 numerical
failure while sampling or integrating. Every file is written to a
temporary name and renamed into place, so failures leave no partial output.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import inference as inf
from .distributions import DegenerateIntervalError, DomainError, Gb2Params, InvariantError, spawn_seeds
from .draws import Draws, atomic_write_text
from .gb2 import Gb2ChainConfig, run_gb2_chain
from .model import GroupedData, MixtureParams, gastwirth_bounds, simulate_grouped
from .rjmcmc import PriorConfig, run_chain

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

PRESETS = {
    "sim-1": {"family": "mln", "weights": [0.2, 0.5, 0.3], "mus": [2.0, 3.0, 4.0],
              "sigma2s": [0.3, 0.1, 0.2], "n": 10000, "K": 10},
    "sim-2": {"family": "gb2", "a": 2.0, "b": 10.0, "p": 2.5, "q": 1.5, "n": 10000, "K": 10},
}


class InputError(Exception):
    """Bad command-line input; maps to exit code 2."""


# --- config loading -------------------------------------------------------

def load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(obj, dict):
        raise InputError(f"{path}: expected a JSON object at the top level")
    return obj


def _known(obj: dict, cls, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    extra = sorted(set(obj) - names)
    if extra:
        raise InputError(f"{where}: unknown field(s) {', '.join(extra)}; allowed: {', '.join(sorted(names))}")
    return obj


def load_prior(path) -> PriorConfig:
    if path is None:
        return PriorConfig()
    obj = _known(load_json(path), PriorConfig, str(path))
    try:
        return PriorConfig(**obj)
    except (TypeError, DomainError) as e:
        raise InputError(f"{path}: {e}") from None


def parse_dgp(spec: dict, where: str):
    """Return (dgp, n, K) from a spec mapping."""
    try:
        family = spec["family"]
        n, K = int(spec["n"]), int(spec["K"])
        if family == "mln":
            dgp = MixtureParams(spec["weights"], spec["mus"], spec["sigma2s"])
        elif family == "gb2":
            dgp = Gb2Params(float(spec["a"]), float(spec["b"]), float(spec["p"]), float(spec["q"]))
        else:
            raise InputError(f"{where}: family must be 'mln' or 'gb2', got {family!r}")
    except KeyError as e:
        raise InputError(f"{where}: missing field {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise InputError(f"{where}: {e}") from None
    return dgp, n, K


def load_data(path) -> GroupedData:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        return GroupedData.from_csv(path)
    except (ValueError, KeyError, IndexError) as e:
        raise InputError(f"{path}: {e}") from None


def _seeds(seed, chains: int):
    if chains < 1:
        raise InputError("--chains must be at least 1")
    if chains == 1:
        return [seed]
    return spawn_seeds(seed, chains)


def _map_chains(fn, jobs, workers: int):
    """Run ``fn`` over ``jobs`` in order, in worker processes when ``workers > 1``."""
    if workers < 1:
        raise InputError("--workers must be at least 1")
    if workers == 1 or len(jobs) == 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _rj_job(data, prior, args, seed):
    return run_chain(data, prior, args.iterations, args.burn_in, args.thin, seed=seed,
                     initial_R=args.initial_r, fixed_R=args.fixed_r)


def _gb2_job(data, cfg):
    return run_gb2_chain(data, cfg)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --- commands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.spec in PRESETS:
        spec, where = PRESETS[args.spec], args.spec
    else:
        spec, where = load_json(args.spec), args.spec
    dgp, n, K = parse_dgp(spec, where)
    try:
        data, raw = simulate_grouped(dgp, n, K, seed=args.seed)
    except DomainError as e:
        raise InputError(f"{where}: {e}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(out)
    if args.raw:
        atomic_write_text(args.raw, "x\n" + "".join(f"{v!r}\n" for v in raw.tolist()))
    print(f"wrote {out} (K={data.K}, n={data.n_total})")
    return EXIT_OK


def cmd_fit(args) -> int:
    data = load_data(args.data)
    prior = load_prior(args.prior)
    if args.iterations <= 0:
        raise InputError("--iterations must be positive")
    if not 0 <= args.burn_in < args.iterations:
        raise InputError("--burn-in must satisfy 0 <= burn-in < iterations")
    if args.thin < 1:
        raise InputError("--thin must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = _seeds(args.seed, args.chains)
    results = _map_chains(_rj_job, [(data, prior, args, seed) for seed in seeds], args.workers)
    for i, draws in enumerate(results, start=1):
        draws.meta["data_path"] = str(Path(args.data).resolve())
        path = out / f"chain-{i}.csv"
        draws.save(path)
        rates = draws.meta["acceptance"]["rates"]
        print(f"chain {i}: {len(draws)} draws -> {path}; acceptance "
              + ", ".join(f"{k}={v:.3f}" if v is not None else f"{k}=n/a" for k, v in rates.items()))
    return EXIT_OK


def cmd_fit_gb2(args) -> int:
    data = load_data(args.data)
    base = _known(load_json(args.config), Gb2ChainConfig, args.config) if args.config else {}
    for key, val in (("iterations", args.iterations), ("burn_in", args.burn_in), ("thin", args.thin)):
        if val is not None:
            base[key] = val
    if args.step_size is not None:
        base["step_sizes"] = (args.step_size,) * 4
        base["adapt"] = False
    for key in ("step_sizes", "prior_shape", "prior_rate", "start"):
        if base.get(key) is not None:
            base[key] = tuple(base[key])
    configs = []
    for seed in _seeds(args.seed, args.chains):
        try:
            configs.append(Gb2ChainConfig(**{**base, "seed": seed}))
        except (TypeError, DomainError) as e:
            raise InputError(f"GB2 configuration: {e}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = _map_chains(_gb2_job, [(data, cfg) for cfg in configs], args.workers)
    for i, draws in enumerate(results, start=1):
        draws.meta["data_path"] = str(Path(args.data).resolve())
        path = out / f"gb2-chain-{i}.csv"
        draws.save(path)
        for w in draws.meta["warnings"]:
            print(f"warning (chain {i}): {w}", file=sys.stderr)
        print(f"chain {i}: {len(draws)} draws -> {path}")
    return EXIT_OK


def load_draws(paths, data: GroupedData) -> Draws:
    """Load and concatenate draw files, checking each was fitted to ``data``."""
    combined = None
    digest = data.digest()
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise InputError(f"{p}: no such file")
        try:
            d = Draws.load(p)
        except (ValueError, IndexError) as e:
            raise InputError(f"{p}: {e}") from None
        recorded = d.meta.get("data_sha256")
        if recorded is not None and recorded != digest:
            raise InputError(f"{p}: draws were fitted to different data (hash {recorded[:12]}..., "
                             f"data file hashes to {digest[:12]}...)")
        if combined is None:
            combined = d
        else:
            if d.model != combined.model:
                raise InputError("cannot pool MLN and GB2 draws in one report")
            for name in ("iteration", "R", "params", "hyper", "log_likelihood", "moves"):
                getattr(combined, name).extend(getattr(d, name))
    return combined


def build_report(draws: Draws, data: GroupedData, condition_R=None, grid=None) -> tuple[dict, dict]:
    """Summary mapping plus CSV texts keyed by file name."""
    gini = inf.gini_posterior(draws, condition_R)
    used = inf.condition(draws, condition_R)
    try:
        params = inf.parameter_summaries(used)
    except DomainError:
        params = []  # unconditional MLN draws mix several R; parameters need conditioning
    try:
        hm = inf.log_marginal_likelihood_hm(draws, data, condition_R)
        log_ml = {"value": hm.value, "se": hm.se, "ess": hm.ess, "warning": hm.warning}
    except DomainError as e:
        log_ml = {"value": None, "se": None, "warning": str(e)}
    summary = {
        "model": draws.model,
        "condition_R": condition_R,
        "n_draws": len(used),
        "parameters": params,
        "gini": inf.posterior_summaries(gini).as_dict(),
        "log_ml": log_ml,
        "r_posterior": ({str(r): float(f) for r, f in inf.posterior_of_R(draws).items()}
                        if draws.model == "mln" else {}),
    }
    if data.group_means is not None:
        lo, hi = gastwirth_bounds(data)
        summary["gastwirth"] = {"lower": lo, "upper": hi}
    files = {}
    if grid is None:
        grid = np.linspace(data.t[0] / 10.0, data.t[-1] * 3.0, 400)
    dens = inf.predictive_density(draws, grid, condition_R)
    files["predictive.csv"] = _csv(["x", "density"], zip(grid.tolist(), dens.tolist()))
    files["gini_draws.csv"] = _csv(["iteration", "gini"], zip(used.iteration, gini.tolist()))
    if draws.model == "mln":
        rows = [(r, float(f), f"{f.numerator}/{f.denominator}") for r, f in inf.posterior_of_R(draws).items()]
        files["r_posterior.csv"] = _csv(["R", "probability", "fraction"], rows)
    return summary, files


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_report(args) -> int:
    data = load_data(args.data)
    draws = load_draws(args.draws, data)
    grid = None
    if args.grid:
        try:
            grid = inf.parse_grid(args.grid)
        except DomainError as e:
            raise InputError(str(e)) from None
    try:
        summary, files = build_report(draws, data, args.condition_r, grid)
    except inf.ConditioningError as e:
        raise InputError(str(e)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prefix = f"R{args.condition_r}-" if args.condition_r is not None else ""
    texts = {f"{prefix}summary.json": _json_text(summary)}
    texts.update({prefix + k: v for k, v in files.items()})
    for name, text in texts.items():
        atomic_write_text(out / name, text)
    g = summary["gini"]
    print(f"Gini mean {g['mean']:.4f} sd {g['sd']:.4f} mode {g['mode']:.4f}; reports in {out}")
    return EXIT_OK


# --- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="incomemix", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate grouped data from a DGP spec")
    s.add_argument("--spec", required=True, help="JSON spec file, or sim-1 / sim-2")
    s.add_argument("--out", required=True, help="grouped-data CSV to write")
    s.add_argument("--raw", help="optional CSV for the sorted raw sample")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a lognormal mixture by reversible-jump MCMC")
    f.add_argument("--data", required=True)
    f.add_argument("--prior", help="JSON prior file (defaults to the simulation-study values)")
    f.add_argument("--iterations", type=int, default=100_000)
    f.add_argument("--burn-in", type=int, default=20_000)
    f.add_argument("--thin", type=int, default=10)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--chains", type=int, default=1)
    f.add_argument("--workers", type=int, default=1, help="processes used to run the chains")
    f.add_argument("--initial-r", type=int, default=1)
    f.add_argument("--fixed-r", action="store_true", help="keep R at --initial-r")
    f.add_argument("--out", required=True, help="output directory")
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("fit-gb2", help="fit a GB2 distribution by random-walk Metropolis")
    g.add_argument("--data", required=True)
    g.add_argument("--config", help="JSON GB2 chain config")
    g.add_argument("--iterations", type=int, default=None)
    g.add_argument("--burn-in", type=int, default=None)
    g.add_argument("--thin", type=int, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--chains", type=int, default=1)
    g.add_argument("--workers", type=int, default=1, help="processes used to run the chains")
    g.add_argument("--step-size", type=float, default=None, help="fixed proposal scale (disables adaptation)")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_fit_gb2)

    r = sub.add_parser("report", help="summaries, predictive density and Gini draws from fitted chains")
    r.add_argument("--draws", required=True, nargs="+")
    r.add_argument("--data", required=True)
    r.add_argument("--condition-r", type=int, default=None)
    r.add_argument("--grid", help="predictive grid as lo:hi:steps")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, DomainError, InvariantError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateIntervalError, inf.IntegrationError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
