"""The two simulation designs and cached chain runs on them.

Runs are stored as Draws CSV/JSON pairs under a cache directory keyed by a
fingerprint of the source files each sampler depends on, so editing a
sampler invalidates its old results while editing reporting code does not. The cache root defaults to
``.cache/experiments`` under the current directory and can be moved with the
``INCOMEMIX_CACHE`` environment variable.
"""
from __future__ import annotations

import functools
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .distributions import Gb2Params
from .draws import Draws
from .gb2 import Gb2ChainConfig, run_gb2_chain
from .model import MixtureParams, simulate_grouped
from .rjmcmc import PriorConfig, run_chain

DGPS = {
    "sim-1": MixtureParams([0.2, 0.5, 0.3], [2.0, 3.0, 4.0], [0.3, 0.1, 0.2]),
    "sim-2": Gb2Params(2.0, 10.0, 2.5, 1.5),
}
_SHARED = ("distributions.py", "model.py", "draws.py")
SAMPLER_MODULES = {"rj": _SHARED + ("rjmcmc.py", "_kernels.py"), "gb2": _SHARED + ("gb2.py",)}
KINDS = ("rj", "fixed3", "gb2")


@dataclass(frozen=True)
class RunPlan:
    n: int = 10_000
    K: int = 10
    iterations: int = 100_000
    burn_in: int = 20_000
    thin: int = 5


DESK = RunPlan()


def dataset(name: str, seed: int, plan: RunPlan = DESK):
    """Grouped data and sorted raw sample for one design and seed."""
    return simulate_grouped(DGPS[name], plan.n, plan.K, seed=seed)


@functools.cache
def fingerprint(sampler: str) -> str:
    """Hash of the sources behind ``sampler`` ("rj" or "gb2"), fixed for the life of the process."""
    h = hashlib.sha256()
    here = Path(__file__).parent
    for name in SAMPLER_MODULES[sampler]:
        h.update(name.encode())
        h.update((here / name).read_bytes())
    return h.hexdigest()[:16]


def cache_root() -> Path:
    return Path(os.environ.get("INCOMEMIX_CACHE", ".cache/experiments"))


def chain_seed(seed: int, kind: str) -> int:
    return 1000 * seed + KINDS.index(kind) + 1


def run_path(name: str, seed: int, kind: str, plan: RunPlan = DESK) -> Path:
    tag = f"{name}-seed{seed}-{kind}-it{plan.iterations}-b{plan.burn_in}-t{plan.thin}-n{plan.n}-K{plan.K}.csv"
    return cache_root() / fingerprint("gb2" if kind == "gb2" else "rj") / tag


def run(name: str, seed: int, kind: str, plan: RunPlan = DESK, use_cache: bool = True) -> Draws:
    """Fit one chain of ``kind`` ("rj", "fixed3" or "gb2") to design ``name`` at ``seed``."""
    if kind not in KINDS:
        raise ValueError(f"unknown run kind {kind!r}")
    path = run_path(name, seed, kind, plan)
    if use_cache and path.exists() and path.with_suffix(".json").exists():
        return Draws.load(path)
    data, _ = dataset(name, seed, plan)
    cs = chain_seed(seed, kind)
    if kind == "gb2":
        cfg = Gb2ChainConfig(iterations=plan.iterations, burn_in=plan.burn_in, thin=plan.thin, seed=cs)
        draws = run_gb2_chain(data, cfg)
    else:
        fixed = kind == "fixed3"
        draws = run_chain(data, PriorConfig(), plan.iterations, plan.burn_in, plan.thin, seed=cs,
                          initial_R=3 if fixed else 1, fixed_R=fixed)
    draws.meta.update(design=name, data_seed=seed, kind=kind)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        draws.save(path)
    return draws
