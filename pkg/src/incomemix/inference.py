"""Quantities computed from fitted parameters and chains.

Gini coefficients, posterior predictive densities, harmonic-mean marginal
likelihoods, posterior summaries and the half-sample mode.

Two independent Gini routes exist and are cross-checked in the tests:

* :func:`gini_numeric` integrates ``1 - (int S^2) / (int S)`` with ``S = 1 - F``
  by adaptive quadrature; it works for any distribution function.
* :func:`gini_mln` uses the mean absolute difference of a lognormal
  mixture, which is available in closed form pair by pair. It is exact and
  fast enough to run on every posterior draw.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from . import distributions as dist
from .distributions import DomainError, Gb2Params, LognormalParams
from .draws import Draws
from .model import GroupedData, MixtureParams, log_likelihood_gb2, log_likelihood_grouped

MIN_CONDITIONAL_DRAWS = 100
MIN_HM_DRAWS = 100
MIN_HM_ESS = 10.0


class IntegrationError(RuntimeError):
    """Numerical integration failed to converge."""


class ConditioningError(DomainError):
    """Too few draws survive conditioning on the component count."""


# --- Gini -----------------------------------------------------------------

def gini_lognormal(params: LognormalParams) -> float:
    """2 Phi(sigma / sqrt 2) - 1, written as erf(sigma / 2)."""
    return float(special.erf(params.sigma / 2.0))


def gini_mln(params: MixtureParams) -> float:
    """Gini of a lognormal mixture from the pairwise mean absolute difference.

    For independent lognormals X_r, X_s with d = mu_r - mu_s and
    v = sigma_r^2 + sigma_s^2,
    E(X_r - X_s)^+ = m_r Phi((d + sigma_r^2) / sqrt v) - m_s Phi((d - sigma_s^2) / sqrt v),
    and Gini = E|X - Y| / (2 E X).
    """
    return float(_gini_mln_arrays(params.weights[None], params.mus[None], params.sigma2s[None])[0])


def _gini_mln_arrays(w, mu, s2):
    """Vectorised :func:`gini_mln` over rows of equally sized parameter arrays."""
    # work relative to the largest component mean to keep exp() in range
    logm = mu + 0.5 * s2
    shift = logm.max(axis=1, keepdims=True)
    m = np.exp(logm - shift)
    d = mu[:, :, None] - mu[:, None, :]
    v = np.sqrt(s2[:, :, None] + s2[:, None, :])
    pos = (m[:, :, None] * special.ndtr((d + s2[:, :, None]) / v)
           - m[:, None, :] * special.ndtr((d - s2[:, None, :]) / v))
    # E|X_r - X_s| = E(X_r - X_s)^+ + E(X_s - X_r)^+
    mad = pos + np.swapaxes(pos, 1, 2)
    ww = w[:, :, None] * w[:, None, :]
    mean = np.sum(w * m, axis=1)
    return np.sum(ww * mad, axis=(1, 2)) / (2.0 * mean)


def _upper_limit(sf: Callable, scale: float, tail_tol: float = 1e-11) -> float:
    """Point U with U S(U) < tail_tol * scale, found by doubling and then bisection.

    U S(U) bounds the neglected tail up to a constant for any tail at least
    as light as a power law with finite mean.
    """
    def small(x):
        return x * float(sf(x)) < tail_tol * scale

    x = scale
    base = None
    for _ in range(2000):
        if small(x):
            base = x
            break
        x *= 2.0
        if not math.isfinite(x):
            break
    if base is None:
        raise IntegrationError("upper tail of 1 - F does not vanish numerically; the mean may not be finite")
    lo, hi = base / 2.0, base
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if small(mid):
            hi = mid
        else:
            lo = mid
    return hi


def gini_numeric(cdf: Callable, mean_hint: Optional[float] = None, sf: Optional[Callable] = None,
                 tol: float = 1e-10) -> float:
    """Gini = 1 - int S(x)^2 dx / int S(x) dx with S = 1 - F, by adaptive quadrature.

    The integrals are taken in log-income, ``int S(e^y) e^y dy``, over
    ``(log U - 80, log U]`` where U S(U) is below 1e-11 of the scale; the tail
    beyond U is checked to be negligible by doubling U. Pass ``sf`` when a
    more accurate survival function than ``1 - cdf`` is available.
    """
    if sf is None:
        def sf(x):
            return 1.0 - cdf(x)
    scale = float(mean_hint) if mean_hint and mean_hint > 0 else 1.0
    U = _upper_limit(sf, scale)
    top = math.log(U)

    def integrals(upper):
        parts = []
        for power in (1, 2):
            def f(y, power=power):
                return float(sf(math.exp(y))) ** power * math.exp(y)
            # breakpoints spread across the bulk help quad locate narrow features
            pts = np.linspace(upper - 25.0, upper, 26)[1:-1]
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", integrate.IntegrationWarning)
                val, err = integrate.quad(f, upper - 80.0, upper, points=pts, limit=500, epsabs=0.0, epsrel=tol)
            # quad warns when it misses epsrel; only an error estimate that matters is fatal
            if caught and not err <= 1e-8 * abs(val):
                raise IntegrationError(f"quadrature of S^{power} did not converge (value {val:.6g}, "
                                       f"error estimate {err:.3g})")
            parts.append(val)
        return parts

    s1, s2 = integrals(top)
    if not (s1 > 0 and math.isfinite(s1)):
        raise IntegrationError("integral of 1 - F is not positive and finite")
    # tail check: doubling the range must not move the answer materially
    t1, _ = integrals(top + math.log(2.0))
    if abs(t1 - s1) > 1e-8 * s1:
        raise IntegrationError("upper tail of 1 - F contributes more than 1e-8 of the mean; "
                               "the mean may not be finite")
    return 1.0 - s2 / s1


def gini_of(params) -> float:
    """Gini of a lognormal, lognormal mixture or GB2 parameter object."""
    if isinstance(params, LognormalParams):
        return gini_lognormal(params)
    if isinstance(params, MixtureParams):
        if params.R == 1:
            return gini_lognormal(params.component(0))
        return gini_mln(params)
    if isinstance(params, Gb2Params):
        return gini_gb2(params)
    raise DomainError(f"no Gini for {type(params).__name__}")


def gini_gb2(params: Gb2Params) -> float:
    if not params.has_finite_mean:
        raise IntegrationError("GB2 mean is infinite (a q <= 1), so the Gini is undefined")
    return gini_numeric(lambda x: dist.gb2_cdf(x, params), dist.gb2_mean(params),
                        sf=lambda x: dist.gb2_sf(x, params))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gini_fixed_rule(sf_rows: Callable, ylo: np.ndarray, yhi: np.ndarray, panels: int = 64) -> np.ndarray:
    """Batched Gini by composite 16-point Gauss-Legendre in log-income.

    ``sf_rows(x)`` maps an (M, N) array of incomes to survival probabilities
    row by row; row m is integrated over [ylo[m], yhi[m]]. Below ylo the
    survival function is taken as 1, which adds exp(ylo) to both integrals.
    """
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    unit = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
    uw = (half[:, None] * _GL_WEIGHTS).ravel()
    span = (yhi - ylo)[:, None]
    y = ylo[:, None] + span * unit
    ey = np.exp(y)
    s = sf_rows(ey)
    w = uw * span * ey
    below = np.exp(ylo)
    return 1.0 - (below + np.sum(w * s * s, axis=1)) / (below + np.sum(w * s, axis=1))


def gini_gb2_batch(theta: np.ndarray, tail: float = 1e-14) -> np.ndarray:
    """Gini for each row (a, b, p, q) of ``theta`` by a fixed composite rule.

    The range runs between the ``tail`` and ``1 - tail`` quantiles in
    log-income; rows whose tail beyond the upper limit is not negligible
    (heavy power tails) fall back to adaptive quadrature.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    a, b, p, q = (theta[:, j:j + 1] for j in range(4))
    if np.any(a * q <= 1):
        raise IntegrationError("GB2 mean is infinite (a q <= 1) for some rows, so the Gini is undefined")

    def log_quantile(u, upper):
        # x = b (B / (1 - B))^(1/a) with B ~ Beta(p, q); the upper tail uses the (q, p) complement
        if upper:
            c = special.betaincinv(q[:, 0], p[:, 0], u)
            return np.log(b[:, 0]) + (np.log1p(-c) - np.log(c)) / a[:, 0]
        B = special.betaincinv(p[:, 0], q[:, 0], u)
        return np.log(b[:, 0]) + (np.log(B) - np.log1p(-B)) / a[:, 0]

    ylo = log_quantile(tail, False)
    yhi = log_quantile(tail, True)

    def sf_rows(x):
        z = a * (np.log(x) - np.log(b))
        return special.betainc(q, p, special.expit(-z))

    out = _gini_fixed_rule(sf_rows, ylo, yhi)
    # neglected upper tail is about U S(U) / (a q - 1); compare with the mean
    mean = np.array([dist.gb2_mean(Gb2Params(*row)) for row in theta])
    neglected = np.exp(yhi) * tail / (a[:, 0] * q[:, 0] - 1.0)
    for i in np.flatnonzero(~(neglected < 1e-9 * mean) | ~np.isfinite(out)):
        out[i] = gini_gb2(Gb2Params(*theta[i]))
    return out


def gini_quadrature(params) -> float:
    """Gini by :func:`gini_numeric` for any supported parameter object."""
    if isinstance(params, LognormalParams):
        params = MixtureParams.single(params.mu, params.sigma2)
    if isinstance(params, MixtureParams):
        return gini_numeric(lambda x: dist.mln_cdf(x, params), params.mean(),
                            sf=lambda x: dist.mln_sf(x, params))
    if isinstance(params, Gb2Params):
        return gini_gb2(params)
    raise DomainError(f"no Gini for {type(params).__name__}")


def sample_gini(x) -> float:
    """Gini of a raw sample: sum_i (2i - n - 1) x_(i) / (n sum x)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n == 0 or np.any(x < 0) or x.sum() <= 0:
        raise DomainError("sample Gini needs a non-empty, non-negative sample with positive total")
    i = np.arange(1, n + 1)
    return float(np.sum((2 * i - n - 1) * x) / (n * x.sum()))


# --- conditioning ---------------------------------------------------------

def condition(draws: Draws, condition_R: Optional[int] = None, minimum: int = MIN_CONDITIONAL_DRAWS) -> Draws:
    if len(draws) == 0:
        raise DomainError("no draws")
    if condition_R is None or draws.model == "gb2":
        return draws
    sub = draws.select(condition_R)
    if len(sub) < minimum:
        raise ConditioningError(f"only {len(sub)} draws have R={condition_R}; at least {minimum} are needed")
    return sub


def _by_R(draws: Draws):
    """Yield (indices, weights, mus, sigma2s) blocks of draws sharing R."""
    R = draws.R_array
    for r in np.unique(R):
        idx = np.flatnonzero(R == r)
        block = np.vstack([draws.params[i] for i in idx])
        yield idx, block[:, :r], block[:, r:2 * r], block[:, 2 * r:]


def gini_posterior(draws: Draws, condition_R: Optional[int] = None, method: str = "exact") -> np.ndarray:
    """Gini of every kept draw, in draw order.

    ``method="exact"`` uses the closed forms for mixtures and a batched
    fixed Gauss-Legendre rule for GB2; ``"quadrature"`` integrates each
    draw adaptively.
    """
    d = condition(draws, condition_R)
    if method not in ("exact", "quadrature"):
        raise DomainError(f"unknown method {method!r}")
    out = np.empty(len(d))
    if d.model == "gb2" and method == "exact":
        mat = d.parameter_matrix()
        uniq, inverse = np.unique(mat, axis=0, return_inverse=True)
        vals = np.concatenate([gini_gb2_batch(c) for c in np.array_split(uniq, max(1, len(uniq) // 500))])
        return vals[inverse.ravel()]
    if d.model == "gb2" or method == "quadrature":
        cache = {}
        for i in range(len(d)):
            key = tuple(d.params[i])
            if key not in cache:
                p = d.distribution(i)
                cache[key] = gini_gb2(p) if d.model == "gb2" else gini_quadrature(p)
            out[i] = cache[key]
        return out
    for idx, w, mu, s2 in _by_R(d):
        for chunk in np.array_split(np.arange(idx.size), max(1, idx.size // 5000)):
            out[idx[chunk]] = _gini_mln_arrays(w[chunk], mu[chunk], s2[chunk])
    return out


# --- predictive density ---------------------------------------------------

def predictive_density(draws: Draws, grid, condition_R: Optional[int] = None) -> np.ndarray:
    """Pointwise posterior mean of the density over ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be positive and strictly increasing")
    d = condition(draws, condition_R, minimum=1 if condition_R is None else MIN_CONDITIONAL_DRAWS)
    total = np.zeros(grid.size)
    if d.model == "gb2":
        for i in range(len(d)):
            total += dist.gb2_pdf(grid, d.gb2(i))
        return total / len(d)
    lx = np.log(grid)
    for idx, w, mu, s2 in _by_R(d):
        for chunk in np.array_split(np.arange(idx.size), max(1, idx.size // 2000)):
            sig = np.sqrt(s2[chunk])
            z = (lx[:, None, None] - mu[chunk]) / sig
            dens = w[chunk] * np.exp(-0.5 * z * z) / sig
            total += dens.sum(axis=(1, 2))
    return total / (len(d) * math.sqrt(2.0 * math.pi) * grid)


def parse_grid(spec: str) -> np.ndarray:
    """'lo:hi:steps' -> ``steps`` evenly spaced points from lo to hi inclusive."""
    try:
        lo, hi, steps = spec.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise DomainError(f"grid must look like 'lo:hi:steps', got {spec!r}") from None
    if not (0 < lo < hi and steps >= 2):
        raise DomainError("grid needs 0 < lo < hi and at least 2 steps")
    return np.linspace(lo, hi, steps)


# --- marginal likelihood --------------------------------------------------

@dataclass(frozen=True)
class MarginalLikelihood:
    value: float
    se: float
    n_draws: int
    ess: float
    warning: Optional[str] = None


def harmonic_mean(loglik) -> MarginalLikelihood:
    """Harmonic-mean estimate of the log evidence from per-draw log-likelihoods.

    logML = -[logsumexp(-l) - log M]; the standard error is the delta-method
    value sd(w) / (sqrt(M) mean(w)) with w = exp(-l + min l).
    """
    ll = np.asarray(loglik, dtype=float)
    M = ll.size
    if M < MIN_HM_DRAWS:
        raise DomainError(f"harmonic mean needs at least {MIN_HM_DRAWS} draws, got {M}")
    if not np.all(np.isfinite(ll)):
        raise DomainError("log-likelihood values must be finite")
    value = -(special.logsumexp(-ll) - math.log(M))
    w = np.exp(-(ll - ll.min()))
    mean = w.mean()
    se = float(w.std(ddof=1) / (math.sqrt(M) * mean)) if M > 1 else 0.0
    ess = float(w.sum() ** 2 / np.sum(w * w))
    warning = None
    if ess < MIN_HM_ESS:
        warning = f"effective sample size of the harmonic-mean weights is {ess:.2f} < {MIN_HM_ESS:g}"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return MarginalLikelihood(float(value), se, M, ess, warning)


def draw_logliks(draws: Draws, data: GroupedData) -> np.ndarray:
    """Stored per-draw grouped log-likelihoods, recomputed where missing."""
    ll = draws.loglik_array.copy()
    bad = ~np.isfinite(ll)
    for i in np.flatnonzero(bad):
        p = draws.distribution(i)
        ll[i] = log_likelihood_gb2(data, p) if draws.model == "gb2" else log_likelihood_grouped(data, p)
    return ll


def log_marginal_likelihood_hm(draws: Draws, data: GroupedData, condition_R: Optional[int] = None
                               ) -> MarginalLikelihood:
    d = condition(draws, condition_R, minimum=MIN_HM_DRAWS)
    return harmonic_mean(draw_logliks(d, data))


# --- summaries ------------------------------------------------------------

def half_sample_mode(values) -> float:
    """Robust mode: repeatedly keep the shortest window holding half the sorted points.

    With three points left the answer is the mean of the closer pair (the
    middle point on a tie); two points give their mean, one point itself.
    """
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise DomainError("half-sample mode of an empty sample")
    if not np.all(np.isfinite(x)):
        raise DomainError("half-sample mode needs finite values")
    while x.size > 3:
        h = math.ceil(x.size / 2)
        widths = x[h - 1:] - x[:x.size - h + 1]
        i = int(np.argmin(widths))
        x = x[i:i + h]
    if x.size == 3:
        left, right = x[1] - x[0], x[2] - x[1]
        if left < right:
            return float(0.5 * (x[0] + x[1]))
        if right < left:
            return float(0.5 * (x[1] + x[2]))
        return float(x[1])
    return float(x.mean())


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    mode: float
    lower: float
    upper: float

    def as_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "mode": self.mode, "ci95": [self.lower, self.upper]}


def posterior_summaries(values, credible_level: float = 0.95) -> Summary:
    """Mean, SD (M - 1 denominator), half-sample mode and equal-tailed interval."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("cannot summarise an empty sample")
    if not 0 < credible_level < 1:
        raise DomainError("credible_level must lie in (0, 1)")
    tail = 0.5 * (1.0 - credible_level)
    lo, hi = np.quantile(v, [tail, 1.0 - tail], method="linear")
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return Summary(float(v.mean()), sd, half_sample_mode(v), float(lo), float(hi))


def parameter_summaries(draws: Draws, condition_R: Optional[int] = None, credible_level: float = 0.95) -> list:
    """Per-parameter summaries; MLN draws must share one R (condition first)."""
    d = condition(draws, condition_R)
    if d.model == "gb2":
        names = ["a", "b", "p", "q"]
    else:
        Rs = set(d.R)
        if len(Rs) != 1:
            raise DomainError("parameter summaries need draws with a single R; pass condition_R")
        R = Rs.pop()
        names = ([f"pi_{r}" for r in range(1, R + 1)] + [f"mu_{r}" for r in range(1, R + 1)]
                 + [f"sigma2_{r}" for r in range(1, R + 1)])
    mat = d.parameter_matrix()
    out = []
    for j, name in enumerate(names):
        out.append({"name": name, **posterior_summaries(mat[:, j], credible_level).as_dict()})
    return out


def posterior_of_R(draws: Draws) -> dict:
    """Exact relative frequencies of R among the kept draws."""
    if len(draws) == 0:
        raise DomainError("no draws")
    R, counts = np.unique(draws.R_array, return_counts=True)
    M = len(draws)
    return {int(r): Fraction(int(c), M) for r, c in zip(R, counts)}
