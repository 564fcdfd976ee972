"""Densities, distribution functions and random draws used by the samplers.

Everything here works on numpy scalars or arrays. The standard normal CDF and
its inverse come from ``scipy.special`` (``ndtr``, ``ndtri``, ``log_ndtr``),
which are accurate to near machine precision over the whole real line.

Mixture parameters are duck-typed: any object exposing ``weights``, ``mus``
and ``sigma2s`` arrays works (see :class:`incomemix.model.MixtureParams`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
MIN_INTERVAL_MASS = 1e-300


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class InvariantError(ValueError):
    """A structural invariant of a parameter or state object is violated."""


class DegenerateIntervalError(RuntimeError):
    """A truncation interval carries (numerically) no probability mass."""

    def __init__(self, lo, hi, mass, context: str = ""):
        self.lo, self.hi, self.mass = lo, hi, mass
        msg = f"truncation interval ({lo!r}, {hi!r}] has mass {mass!r} < {MIN_INTERVAL_MASS}"
        super().__init__(f"{context}: {msg}" if context else msg)


@dataclass(frozen=True)
class LognormalParams:
    """Lognormal with log-scale location ``mu`` and log-scale variance ``sigma2``."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class Gb2Params:
    """Generalized beta of the second kind: shape ``a``, scale ``b``, shapes ``p``, ``q``."""

    a: float
    b: float
    p: float
    q: float

    def __post_init__(self):
        for name in ("a", "b", "p", "q"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"GB2 parameter {name} must be positive, got {v}")

    @property
    def has_finite_mean(self) -> bool:
        return self.a * self.q > 1

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.p, self.q])


def _positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("income must be strictly positive")
    return x


def _out(v):
    return v.item() if np.ndim(v) == 0 else v


# --- normal helpers -------------------------------------------------------

def norm_cdf(z):
    return special.ndtr(z)


def norm_ppf(p):
    return special.ndtri(p)


def norm_interval_mass(a, b):
    """P(a < Z <= b) for standard normal Z, computed on the tail that keeps precision."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    return np.where(upper, special.ndtr(-a) - special.ndtr(-b), special.ndtr(b) - special.ndtr(a))


# --- lognormal ------------------------------------------------------------

def ln_logpdf(x, params: LognormalParams):
    x = _positive(x)
    lx = np.log(x)
    v = -0.5 * (lx - params.mu) ** 2 / params.sigma2 - 0.5 * math.log(params.sigma2) - LOG_SQRT_2PI - lx
    return _out(v)


def ln_pdf(x, params: LognormalParams):
    """Lognormal density."""
    x = _positive(x)
    z = (np.log(x) - params.mu) / params.sigma
    v = np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi * params.sigma2) * x)
    return _out(v)


def ln_cdf(x, params: LognormalParams):
    x = _positive(x)
    return _out(special.ndtr((np.log(x) - params.mu) / params.sigma))


def ln_sf(x, params: LognormalParams):
    x = _positive(x)
    return _out(special.ndtr(-(np.log(x) - params.mu) / params.sigma))


# --- lognormal mixture ----------------------------------------------------

def _check_weights(params):
    w = np.asarray(params.weights, dtype=float)
    if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
        raise InvariantError(f"mixture weights must lie on the simplex, sum={w.sum()!r}")
    return w


def _standardized(x, params):
    lx = np.log(x)[..., None]
    sig = np.sqrt(np.asarray(params.sigma2s, dtype=float))
    return lx, (lx - np.asarray(params.mus, dtype=float)) / sig, sig


def mln_logpdf(x, params):
    x = _positive(x)
    w = _check_weights(params)
    lx, z, sig = _standardized(x, params)
    with np.errstate(divide="ignore"):
        terms = np.log(w) - np.log(sig) - 0.5 * z * z
    v = special.logsumexp(terms, axis=-1) - LOG_SQRT_2PI - lx[..., 0]
    return _out(v)


def mln_pdf(x, params):
    """Density of a finite lognormal mixture."""
    x = _positive(x)
    w = _check_weights(params)
    lx, z, sig = _standardized(x, params)
    dens = np.exp(-0.5 * z * z) / (sig * math.sqrt(2.0 * math.pi))
    return _out((dens * w).sum(axis=-1) / x)


def mln_cdf(x, params):
    x = _positive(x)
    w = _check_weights(params)
    _, z, _ = _standardized(x, params)
    return _out((special.ndtr(z) * w).sum(axis=-1))


def mln_sf(x, params):
    x = _positive(x)
    w = _check_weights(params)
    _, z, _ = _standardized(x, params)
    return _out((special.ndtr(-z) * w).sum(axis=-1))


def mln_interval_mass(lo, hi, params):
    """F(hi) - F(lo) for a lognormal mixture; ``lo`` may be 0 and ``hi`` may be inf."""
    w = _check_weights(params)
    mus = np.asarray(params.mus, dtype=float)
    sig = np.sqrt(np.asarray(params.sigma2s, dtype=float))
    with np.errstate(divide="ignore"):
        a = (np.log(np.asarray(lo, dtype=float))[..., None] - mus) / sig
        b = (np.log(np.asarray(hi, dtype=float))[..., None] - mus) / sig
    return _out((norm_interval_mass(a, b) * w).sum(axis=-1))


# --- GB2 ------------------------------------------------------------------

def _gb2_ratio(x, params: Gb2Params):
    # returns (y/(1+y), 1/(1+y)) with y = (x/b)^a, both computed without cancellation
    logy = params.a * (np.log(x) - math.log(params.b))
    return special.expit(logy), special.expit(-logy), logy


def gb2_logpdf(x, params: Gb2Params):
    x = _positive(x)
    a, p, q = params.a, params.p, params.q
    logy = a * (np.log(x) - math.log(params.b))
    v = (math.log(a) + (a * p - 1) * np.log(x) - a * p * math.log(params.b)
         - special.betaln(p, q) - (p + q) * np.logaddexp(0.0, logy))
    return _out(v)


def gb2_pdf(x, params: Gb2Params):
    """GB2 density a x^(ap-1) / (b^(ap) B(p,q) (1+(x/b)^a)^(p+q))."""
    return _out(np.exp(gb2_logpdf(x, params)))


def gb2_cdf(x, params: Gb2Params):
    x = _positive(x)
    u, _, _ = _gb2_ratio(x, params)
    return _out(special.betainc(params.p, params.q, u))


def gb2_sf(x, params: Gb2Params):
    x = _positive(x)
    _, v, _ = _gb2_ratio(x, params)
    # I_u(p, q) complement equals I_{1-u}(q, p)
    return _out(special.betainc(params.q, params.p, v))


def gb2_interval_mass(lo, hi, params: Gb2Params):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(divide="ignore"):
        ulo, vlo, _ = _gb2_ratio(lo, params)
        uhi, vhi, _ = _gb2_ratio(hi, params)
    p, q = params.p, params.q
    lower = special.betainc(p, q, uhi) - special.betainc(p, q, ulo)
    upper = special.betainc(q, p, vlo) - special.betainc(q, p, vhi)
    return _out(np.where(ulo > 0.5, upper, lower))


def gb2_mean(params: Gb2Params) -> float:
    if not params.has_finite_mean:
        return math.inf
    a, p, q = params.a, params.p, params.q
    return params.b * math.exp(special.betaln(p + 1 / a, q - 1 / a) - special.betaln(p, q))


# --- random draws ---------------------------------------------------------

def make_rng(seed=None) -> np.random.Generator:
    """PCG64 generator from an int, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def sample_dirichlet(concentrations, rng: np.random.Generator) -> np.ndarray:
    c = np.asarray(concentrations, dtype=float)
    if c.size == 0 or np.any(~(c > 0)):
        raise DomainError("Dirichlet concentrations must be positive")
    g = rng.standard_gamma(c)
    tot = g.sum()
    if not tot > 0:
        # every gamma underflowed (tiny concentrations): fall back to a log-space draw
        logg = np.log(rng.random(c.size)) / c + np.log(rng.standard_gamma(c + 1.0))
        g = np.exp(logg - logg.max())
        tot = g.sum()
    out = g / tot
    return out / out.sum()


def sample_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Gamma draw with shape/rate parameterization (mean shape/rate)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise DomainError("gamma shape and rate must be positive")
    return _out(rng.standard_gamma(shape, size=size) / rate)


def sample_beta(p, q, rng: np.random.Generator, size=None):
    if not (p > 0 and q > 0):
        raise DomainError("beta parameters must be positive")
    return _out(np.asarray(rng.beta(p, q, size=size)))


def sample_normal(mean, var, rng: np.random.Generator, size=None):
    var = np.asarray(var, dtype=float)
    if np.any(~(var > 0)):
        raise DomainError("normal variance must be positive")
    return _out(np.asarray(rng.normal(mean, np.sqrt(var), size=size)))


def truncnorm_terms(a, b):
    """Precompute the inverse-CDF pieces for standard normals truncated to [a, b].

    Intervals entirely in the upper tail are handled through survival
    functions and everything is kept in log space, so intervals far out in
    either tail keep full relative precision. Returns ``(upper, log_anchor,
    delta, log_mass)``; feed the first three to :func:`truncnorm_invert`.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    log_anchor = np.where(upper, special.log_ndtr(-a), special.log_ndtr(b))
    log_other = np.where(upper, special.log_ndtr(-b), special.log_ndtr(a))
    with np.errstate(invalid="ignore"):
        delta = -np.expm1(log_other - log_anchor)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mass = log_anchor + np.log(delta)
    return upper, log_anchor, delta, log_mass


def truncnorm_invert(upper, log_anchor, delta, u):
    v = np.where(upper, u, 1.0 - u)
    with np.errstate(divide="ignore"):
        z = special.ndtri_exp(log_anchor + np.log1p(-v * delta))
    return np.where(upper, -z, z)


def truncated_std_normal(a, b, u, strict: bool = True):
    """Map uniforms ``u`` to standard normals truncated to [a, b] by inverse CDF.

    With ``strict`` an interval whose mass is below 1e-300 raises
    :class:`DegenerateIntervalError`; otherwise only empty intervals do.
    """
    a, b, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, u)))
    upper, la, delta, log_mass = truncnorm_terms(a, b)
    floor = math.log(MIN_INTERVAL_MASS) if strict else -math.inf
    bad = ~(log_mass > floor)
    if np.any(bad):
        i = int(np.flatnonzero(bad.reshape(-1))[0])
        raise DegenerateIntervalError(a.flat[i], b.flat[i], float(np.exp(log_mass.flat[i])))
    z = truncnorm_invert(upper, la, delta, u)
    return np.clip(z, a, b)


def sample_truncated_normal(mean, sd, lo, hi, rng: np.random.Generator, size=None, strict: bool = True):
    """Normal(mean, sd^2) restricted to [lo, hi]; bounds may be infinite."""
    if not lo < hi:
        raise DomainError(f"need lo < hi, got ({lo}, {hi})")
    u = rng.random(size)
    z = truncated_std_normal((lo - mean) / sd, (hi - mean) / sd, u, strict=strict)
    return _out(np.clip(mean + sd * z, lo, hi))


def _clip_open_closed(x, lo, hi):
    lo = np.asarray(lo, dtype=float)
    x = np.where(x <= lo, np.nextafter(lo, np.inf), x)
    return np.minimum(x, hi)


def sample_truncated_lognormal(params: LognormalParams, lo, hi, rng: np.random.Generator, size=None):
    """Lognormal draw restricted to (lo, hi]; ``lo`` may be 0, ``hi`` may be inf."""
    if not (lo >= 0 and lo < hi):
        raise DomainError(f"need 0 <= lo < hi, got ({lo}, {hi})")
    with np.errstate(divide="ignore"):
        a = (math.log(lo) - params.mu) / params.sigma if lo > 0 else -math.inf
    b = (math.log(hi) - params.mu) / params.sigma if math.isfinite(hi) else math.inf
    z = truncated_std_normal(a, b, rng.random(size))
    x = np.exp(params.mu + params.sigma * z)
    return _out(_clip_open_closed(x, lo, hi))


def sample_truncated_lognormal_many(mus, sigmas, lo, hi, rng: np.random.Generator):
    """Vectorised truncated lognormal: one draw per element, returning (x, log x)."""
    with np.errstate(divide="ignore"):
        a = (np.log(lo) - mus) / sigmas
        b = (np.log(hi) - mus) / sigmas
    z = truncated_std_normal(a, b, rng.random(np.shape(mus)))
    logx = mus + sigmas * z
    x = _clip_open_closed(np.exp(logx), lo, hi)
    return x, np.log(x)


def sample_lognormal_mixture(params, n: int, rng: np.random.Generator) -> np.ndarray:
    w = _check_weights(params)
    comp = rng.choice(len(w), size=n, p=w)
    mus = np.asarray(params.mus, dtype=float)[comp]
    sig = np.sqrt(np.asarray(params.sigma2s, dtype=float))[comp]
    return np.exp(rng.normal(mus, sig))


def sample_gb2(params: Gb2Params, n: int, rng: np.random.Generator) -> np.ndarray:
    bt = rng.beta(params.p, params.q, size=n)
    return params.b * np.exp((np.log(bt) - np.log1p(-bt)) / params.a)
