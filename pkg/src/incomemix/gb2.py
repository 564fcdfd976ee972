"""Random-walk Metropolis for a GB2 distribution fitted to grouped data.

The chain moves on theta = log(a, b, p, q), one coordinate at a time, with
independent Gamma(shape, rate) priors on the original scale. The log
Jacobian of the log transform is added to the target, so the chain samples
the posterior of (a, b, p, q) itself.

Proposal scales adapt during burn-in (batch-wise, toward a target
acceptance rate) and are frozen afterwards, so kept draws come from a
time-homogeneous kernel.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import optimize, special

from . import distributions as dist
from .distributions import DomainError
from .draws import Draws
from .model import GroupedData

NAMES = ("a", "b", "p", "q")
ADAPT_BATCH = 100
ACCEPT_WARN = (0.05, 0.95)


@dataclass(frozen=True)
class Gb2ChainConfig:
    iterations: int = 100_000
    burn_in: int = 20_000
    thin: int = 1
    seed: Optional[int] = None
    step_sizes: tuple = (0.1, 0.1, 0.1, 0.1)
    prior_shape: tuple = (1.0, 1.0, 1.0, 1.0)
    prior_rate: tuple = (1.0, 1.0, 1.0, 1.0)
    target_accept: float = 0.3
    adapt: bool = True
    start: Optional[tuple] = None  # (a, b, p, q); default is the posterior mode

    def __post_init__(self):
        if self.iterations <= 0:
            raise DomainError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise DomainError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        for name in ("step_sizes", "prior_shape", "prior_rate"):
            v = getattr(self, name)
            if len(v) != 4 or not all(x > 0 and math.isfinite(x) for x in v):
                raise DomainError(f"{name} needs four positive finite values")
        if not 0 < self.target_accept < 1:
            raise DomainError("target_accept must lie in (0, 1)")
        if self.start is not None and (len(self.start) != 4 or not all(x > 0 for x in self.start)):
            raise DomainError("start needs four positive values")


class _Target:
    """Log-posterior in theta = log(a, b, p, q), optionally without the likelihood."""

    def __init__(self, data: Optional[GroupedData], shape, rate):
        self.data = data
        self.shape = np.asarray(shape, dtype=float)
        self.rate = np.asarray(rate, dtype=float)
        if data is not None:
            self.lo, self.hi, self.t = data.lower, data.upper, data.t
            n = data.n_total
            expo = data.counts.astype(float)
            expo[:-1] -= 1.0
            self.expo = expo
            self.const = special.gammaln(n + 1) - np.sum(special.gammaln(expo + 1))
            self.logt = np.log(self.t)

    def loglik(self, theta) -> float:
        if self.data is None:
            return 0.0
        a, b, p, q = np.exp(theta)
        if not all(0 < v < math.inf for v in (a, b, p, q)):
            return -math.inf
        lb = theta[1]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            logy_edges = a * (np.log(self.hi) - lb)
            cdf = special.betainc(p, q, special.expit(logy_edges))
            sf = special.betainc(q, p, special.expit(-logy_edges))
            # interval masses from whichever tail keeps precision
            cdf_lo = np.concatenate(([0.0], cdf[:-1]))
            sf_lo = np.concatenate(([1.0], sf[:-1]))
            use_sf = cdf_lo > 0.5
            mass = np.where(use_sf, sf_lo - sf, cdf - cdf_lo)
            logy = a * (self.logt - lb)
            logf = (math.log(a) + (a * p - 1) * self.logt - a * p * lb
                    - special.betaln(p, q) - (p + q) * np.logaddexp(0.0, logy))
        if np.any(~(mass > 0)) or np.any(~np.isfinite(logf)):
            return -math.inf
        return float(self.const + np.sum(self.expo * np.log(mass)) + np.sum(logf))

    def log_prior(self, theta) -> float:
        # Gamma(shape, rate) on exp(theta) plus the log-Jacobian theta; overflow gives -inf
        with np.errstate(over="ignore"):
            return float(np.sum(self.shape * theta - self.rate * np.exp(theta)))

    def __call__(self, theta):
        lp = self.log_prior(theta)
        if not math.isfinite(lp):
            return -math.inf, -math.inf
        ll = self.loglik(theta)
        return lp + ll, ll


def posterior_mode(data: Optional[GroupedData], shape=(1.0,) * 4, rate=(1.0,) * 4, start=None) -> np.ndarray:
    """Nelder-Mead maximiser of the log-posterior on the log scale; returns (a, b, p, q)."""
    target = _Target(data, shape, rate)
    if start is None:
        b0 = float(np.median(data.t)) if data is not None else 1.0
        start = (2.0, b0, 1.0, 1.0)
    x0 = np.log(np.asarray(start, dtype=float))

    def neg(theta):
        v, _ = target(theta)
        return -v if math.isfinite(v) else 1e300

    res = optimize.minimize(neg, x0, method="Nelder-Mead",
                            options=dict(xatol=1e-8, fatol=1e-10, maxiter=20_000, maxfev=40_000))
    if not math.isfinite(-res.fun) or res.fun >= 1e300:
        raise DomainError("posterior mode search failed: log-posterior is -inf everywhere visited")
    return np.exp(res.x)


def run_gb2_chain(data: Optional[GroupedData], config: Gb2ChainConfig, prior_only: bool = False,
                  progress=None) -> Draws:
    """Componentwise log-scale random-walk Metropolis; returns kept draws with acceptance metadata."""
    if not isinstance(config, Gb2ChainConfig):
        raise DomainError("config must be a Gb2ChainConfig")
    if data is None and not prior_only:
        raise DomainError("data are required unless prior_only is set")
    rng = dist.make_rng(config.seed)
    target = _Target(None if prior_only else data, config.prior_shape, config.prior_rate)
    if config.start is not None:
        theta = np.log(np.asarray(config.start, dtype=float))
    else:
        theta = np.log(posterior_mode(target.data, config.prior_shape, config.prior_rate))
    logpost, ll = target(theta)
    if not math.isfinite(logpost):
        raise DomainError("starting point has zero posterior density")
    log_step = np.log(np.asarray(config.step_sizes, dtype=float))
    start = np.exp(theta)

    batch_acc = np.zeros(4)
    acc = np.zeros(4)
    att = np.zeros(4)
    draws = Draws("gb2")
    t0 = time.perf_counter()
    for it in range(1, config.iterations + 1):
        noise = rng.standard_normal(4)
        logu = np.log(rng.random(4))
        for j in range(4):
            prop = theta.copy()
            prop[j] += math.exp(log_step[j]) * noise[j]
            lp_new, ll_new = target(prop)
            ok = logu[j] < lp_new - logpost
            if ok:
                theta, logpost, ll = prop, lp_new, ll_new
            if it <= config.burn_in:
                batch_acc[j] += ok
            else:
                att[j] += 1
                acc[j] += ok
        if config.adapt and it <= config.burn_in and it % ADAPT_BATCH == 0:
            delta = min(0.1, 1.0 / math.sqrt(it / ADAPT_BATCH))
            rate = batch_acc / ADAPT_BATCH
            log_step += np.where(rate > config.target_accept, delta, -delta)
            batch_acc[:] = 0
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            draws.append_gb2(it, np.exp(theta), ll if target.data is not None else math.nan)
        if progress is not None and it % 1000 == 0:
            progress(it)

    rates = acc / np.maximum(att, 1)
    warnings = [f"acceptance rate for {n} is {r:.3f}, outside {ACCEPT_WARN}"
                for n, r in zip(NAMES, rates) if not ACCEPT_WARN[0] < r < ACCEPT_WARN[1]]
    cfg = asdict(config)
    seed = cfg.pop("seed")
    draws.meta.update(
        model="gb2",
        config=cfg,
        seed=seed.entropy if isinstance(seed, np.random.SeedSequence) else seed,
        spawn_key=list(seed.spawn_key) if isinstance(seed, np.random.SeedSequence) else [],
        prior_only=prior_only,
        start=dict(zip(NAMES, start.tolist())),
        final_step_sizes=dict(zip(NAMES, np.exp(log_step).tolist())),
        acceptance={"rates": dict(zip(NAMES, rates.tolist()))},
        warnings=warnings,
        wall_time_s=time.perf_counter() - t0,
    )
    if data is not None:
        draws.meta["data_sha256"] = data.digest()
    return draws
