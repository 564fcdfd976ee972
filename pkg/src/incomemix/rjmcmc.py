"""Reversible-jump sampler for lognormal mixtures fitted to grouped data.

One sweep runs, in order: birth/death, split/combine, then Gibbs updates of
the weights, component parameters, allocations, latent incomes and the
hyper-parameters (mu, tau2, beta). Gamma distributions are shape/rate
throughout. Component labels are kept ordered by log-mean.

Moves mutate the :class:`ChainState` they are given and return it; a rejected
proposal leaves the state untouched.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from . import _kernels
from . import distributions as dist
from .distributions import DomainError, InvariantError
from .draws import Draws
from .model import GroupedData, LatentState, MixtureParams, component_loglik, log_likelihood_grouped

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    """Hyper-parameters of the hierarchical prior; defaults are the simulation-study values."""

    lambda0: float = 10.0
    R_max: int = 50
    alpha0: float = 1.0
    mu0: float = 0.0
    tau0_2: float = 100.0
    n0: float = 2.0
    s0: float = 0.01
    nu0: float = 2.0
    g0: float = 0.2
    h0: float = 0.01

    def __post_init__(self):
        for name, v in asdict(self).items():
            if name == "mu0":
                if not math.isfinite(v):
                    raise DomainError("mu0 must be finite")
            elif not (v > 0 and math.isfinite(v)):
                raise DomainError(f"prior hyper-parameter {name} must be positive, got {v!r}")
        if int(self.R_max) != self.R_max or self.R_max < 1:
            raise DomainError("R_max must be an integer >= 1")

    def birth_prob(self, R: int) -> float:
        if R >= self.R_max:
            return 0.0
        return 1.0 if R == 1 else 0.5

    def death_prob(self, R: int) -> float:
        if R <= 1:
            return 0.0
        return 1.0 - self.birth_prob(R)

    def log_prior_R_ratio(self, R: int) -> float:
        """log p(R+1) - log p(R) under the truncated Poisson prior (R+1 <= R_max)."""
        return math.log(self.lambda0) - math.log(R + 1)


@dataclass
class MoveTally:
    attempts: dict = field(default_factory=lambda: dict.fromkeys(("birth", "death", "split", "combine"), 0))
    accepts: dict = field(default_factory=lambda: dict.fromkeys(("birth", "death", "split", "combine"), 0))
    last_bd: str = "."
    last_sc: str = "."

    def record(self, kind: str, accepted: bool) -> str:
        self.attempts[kind] += 1
        self.accepts[kind] += int(accepted)
        return kind[0].upper() + ("+" if accepted else "-")

    def rates(self) -> dict:
        return {k: (self.accepts[k] / self.attempts[k] if self.attempts[k] else None) for k in self.attempts}


@dataclass
class ChainState:
    params: MixtureParams
    latent: LatentState
    mu: float
    tau2: float
    beta: float
    tally: MoveTally = field(default_factory=MoveTally)

    @property
    def R(self) -> int:
        return self.params.R

    def counts(self) -> np.ndarray:
        return np.bincount(self.latent.z, minlength=self.R)


# --- helpers --------------------------------------------------------------

def _log_beta_pdf(x: float, p: float, q: float) -> float:
    return (p - 1) * math.log(x) + (q - 1) * math.log1p(-x) - special.betaln(p, q)


def _mixture(weights, mus, sigma2s) -> MixtureParams:
    w = np.asarray(weights, dtype=float)
    return MixtureParams(w / w.sum(), mus, sigma2s)


def _alloc_logits(logx, w1, m1, s1, w2, m2, s2):
    """log P(first) - log P(second) for assigning log-incomes between two components."""
    l1 = math.log(w1) - 0.5 * math.log(s1) - (logx - m1) ** 2 / (2.0 * s1)
    l2 = math.log(w2) - 0.5 * math.log(s2) - (logx - m2) ** 2 / (2.0 * s2)
    return l1 - l2


# --- birth / death --------------------------------------------------------

def log_birth_acceptance(R: int, w: float, n: int, R0: int, prior: PriorConfig) -> float:
    """log A for a birth from R to R+1 components with new weight ``w``.

    ``n`` is the number of allocated observations and ``R0`` the number of
    empty components before the birth. The death from R+1 back to R uses -log A.
    """
    a0 = prior.alpha0
    lw, l1w = math.log(w), math.log1p(-w)
    return (prior.log_prior_R_ratio(R)
            - special.betaln(R * a0, a0)
            + (a0 - 1.0) * lw + (n + R * a0 - R) * l1w
            + math.log(R + 1)
            + math.log(prior.death_prob(R + 1)) - math.log(R0 + 1) - math.log(prior.birth_prob(R))
            - _log_beta_pdf(w, 1.0, R)
            + (R - 1) * l1w)


def birth_death_move(state: ChainState, data: Optional[GroupedData], prior: PriorConfig,
                     rng: np.random.Generator) -> ChainState:
    R = state.R
    b, d = prior.birth_prob(R), prior.death_prob(R)
    if b + d == 0:
        state.tally.last_bd = "."
        return state
    n = state.latent.n
    counts = state.counts()
    p = state.params
    if rng.random() < b:
        w = rng.beta(1.0, R)
        m_new = rng.normal(state.mu, math.sqrt(state.tau2))
        s_new = state.beta / rng.standard_gamma(prior.nu0)
        R0 = int(np.sum(counts == 0))
        if not 0.0 < w < 1.0:
            state.tally.last_bd = state.tally.record("birth", False)
            return state
        log_a = log_birth_acceptance(R, w, n, R0, prior)
        accepted = math.log(rng.random()) < log_a
        if accepted:
            pos = int(np.searchsorted(p.mus, m_new))
            if (pos > 0 and p.mus[pos - 1] == m_new) or (pos < R and p.mus[pos] == m_new):
                accepted = False
        if accepted:
            state.params = _mixture(np.insert(p.weights * (1.0 - w), pos, w),
                                    np.insert(p.mus, pos, m_new), np.insert(p.sigma2s, pos, s_new))
            z = state.latent.z
            z[z >= pos] += 1
        state.tally.last_bd = state.tally.record("birth", accepted)
        return state

    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        state.tally.last_bd = state.tally.record("death", False)
        return state
    j = int(empties[rng.integers(empties.size)])
    w = float(p.weights[j])
    log_a = log_birth_acceptance(R - 1, w, n, empties.size - 1, prior) if w < 1.0 else math.inf
    accepted = math.log(rng.random()) < -log_a
    if accepted:
        keep = np.arange(R) != j
        state.params = _mixture(p.weights[keep] / (1.0 - w), p.mus[keep], p.sigma2s[keep])
        z = state.latent.z
        z[z > j] -= 1
    state.tally.last_bd = state.tally.record("death", accepted)
    return state


# --- split / combine ------------------------------------------------------

def split_transform(w, m, s2, u1, u2, u3):
    """Map one component and (u1, u2, u3) to two components matching weight, mean and second moment."""
    w1, w2 = w * u1, w * (1.0 - u1)
    sd = math.sqrt(s2)
    m1 = m - u2 * sd * math.sqrt(w2 / w1)
    m2 = m + u2 * sd * math.sqrt(w1 / w2)
    s21 = u3 * (1.0 - u2 * u2) * s2 * w / w1
    s22 = (1.0 - u3) * (1.0 - u2 * u2) * s2 * w / w2
    return w1, m1, s21, w2, m2, s22


def combine_transform(w1, m1, s21, w2, m2, s22):
    """Inverse of :func:`split_transform`: returns (w, m, s2, u1, u2, u3)."""
    w = w1 + w2
    m = (w1 * m1 + w2 * m2) / w
    # second-moment matching, written without the E[X^2] - E[X]^2 cancellation
    s2 = (w1 * s21 + w2 * s22) / w + w1 * w2 * (m2 - m1) ** 2 / (w * w)
    u1 = w1 / w
    u2 = (m2 - m1) / (math.sqrt(s2) * (math.sqrt(w2 / w1) + math.sqrt(w1 / w2)))
    u3 = w1 * s21 / (w1 * s21 + w2 * s22)
    return w, m, s2, u1, u2, u3


def split_log_jacobian(w, m1, m2, s21, s22, s2, u2, u3) -> float:
    return (math.log(w) + math.log(abs(m1 - m2)) + math.log(s21) + math.log(s22)
            - math.log(u2) - math.log1p(-u2 * u2) - math.log(u3) - math.log1p(-u3) - math.log(s2))


def log_split_acceptance(*, R: int, prior: PriorConfig, mu: float, tau2: float, beta: float,
                         merged, first, second, u, loglik_ratio: float, log_p_alloc: float) -> float:
    """log A for splitting one of R components into two (R+1 afterwards).

    ``merged``/``first``/``second`` are (weight, mean, variance) triples and
    ``loglik_ratio`` is the change in the augmented log-likelihood, allocation
    weight terms included. The matching combine accepts with -log A.
    """
    w, m, s2 = merged
    w1, m1, s21 = first
    w2, m2, s22 = second
    u1, u2, u3 = u
    a0, nu0 = prior.alpha0, prior.nu0
    out = loglik_ratio
    out += prior.log_prior_R_ratio(R) + math.log(R + 1)
    out += (a0 - 1.0) * (math.log(w1) + math.log(w2) - math.log(w)) - special.betaln(a0, R * a0)
    out += -0.5 * (LOG_2PI + math.log(tau2)) - ((m1 - mu) ** 2 + (m2 - mu) ** 2 - (m - mu) ** 2) / (2.0 * tau2)
    out += (nu0 * math.log(beta) - special.gammaln(nu0)
            - (nu0 + 1.0) * (math.log(s21) + math.log(s22) - math.log(s2))
            - beta * (1.0 / s21 + 1.0 / s22 - 1.0 / s2))
    out += math.log(prior.death_prob(R + 1)) - math.log(prior.birth_prob(R)) - log_p_alloc
    out -= _log_beta_pdf(u1, 2.0, 2.0) + _log_beta_pdf(u2, 2.0, 2.0) + _log_beta_pdf(u3, 1.0, 1.0)
    out += split_log_jacobian(w, m1, m2, s21, s22, s2, u2, u3)
    return out


def _split_pieces(logx_first, logx_second, logx_all, merged, first, second):
    """Augmented log-likelihood change for moving ``logx_all`` from merged to first/second."""
    (w, m, s2), (w1, m1, s21), (w2, m2, s22) = merged, first, second
    l1, l2 = logx_first.size, logx_second.size
    ratio = (component_loglik(logx_first, m1, s21) + component_loglik(logx_second, m2, s22)
             - component_loglik(logx_all, m, s2))
    if l1:
        ratio += l1 * math.log(w1)
    if l2:
        ratio += l2 * math.log(w2)
    if l1 + l2:
        ratio -= (l1 + l2) * math.log(w)
    return ratio


def split_combine_move(state: ChainState, data: Optional[GroupedData], prior: PriorConfig,
                       rng: np.random.Generator) -> ChainState:
    R = state.R
    b, d = prior.birth_prob(R), prior.death_prob(R)
    if b + d == 0:
        state.tally.last_sc = "."
        return state
    p = state.params
    z, logx = state.latent.z, state.latent.logx
    hyper = dict(mu=state.mu, tau2=state.tau2, beta=state.beta)

    if rng.random() < b:
        r = int(rng.integers(R))
        u1, u2, u3 = rng.beta(2.0, 2.0), rng.beta(2.0, 2.0), rng.beta(1.0, 1.0)
        merged = (float(p.weights[r]), float(p.mus[r]), float(p.sigma2s[r]))
        if not (0 < u1 < 1 and 0 < u2 < 1 and 0 < u3 < 1):
            state.tally.last_sc = state.tally.record("split", False)
            return state
        w1, m1, s21, w2, m2, s22 = split_transform(*merged, u1, u2, u3)
        if (r > 0 and m1 <= p.mus[r - 1]) or (r < R - 1 and m2 >= p.mus[r + 1]) or not (
                w1 > 0 and w2 > 0 and s21 > 0 and s22 > 0 and m1 < m2):
            state.tally.last_sc = state.tally.record("split", False)
            return state
        idx = np.flatnonzero(z == r)
        lx = logx[idx]
        logit = _alloc_logits(lx, w1, m1, s21, w2, m2, s22)
        to_first = rng.random(idx.size) < special.expit(logit)
        # log P(first) = -log(1 + e^-logit), log P(second) = -log(1 + e^logit)
        log_p_alloc = float(-np.sum(np.logaddexp(0.0, np.where(to_first, -logit, logit))))
        first, second = (w1, m1, s21), (w2, m2, s22)
        ratio = _split_pieces(lx[to_first], lx[~to_first], lx, merged, first, second)
        log_a = log_split_acceptance(R=R, prior=prior, **hyper, merged=merged, first=first, second=second,
                                     u=(u1, u2, u3), loglik_ratio=ratio, log_p_alloc=log_p_alloc)
        accepted = math.log(rng.random()) < log_a
        if accepted:
            weights = np.concatenate([p.weights[:r], [w1, w2], p.weights[r + 1:]])
            mus = np.concatenate([p.mus[:r], [m1, m2], p.mus[r + 1:]])
            s2s = np.concatenate([p.sigma2s[:r], [s21, s22], p.sigma2s[r + 1:]])
            state.params = _mixture(weights, mus, s2s)
            z[z > r] += 1
            z[idx[~to_first]] = r + 1
        state.tally.last_sc = state.tally.record("split", accepted)
        return state

    j = int(rng.integers(R - 1))
    first = (float(p.weights[j]), float(p.mus[j]), float(p.sigma2s[j]))
    second = (float(p.weights[j + 1]), float(p.mus[j + 1]), float(p.sigma2s[j + 1]))
    w, m, s2, u1, u2, u3 = combine_transform(*first, *second)
    merged = (w, m, s2)
    in1, in2 = z == j, z == j + 1
    lx1, lx2 = logx[in1], logx[in2]
    log_p_alloc = float(-np.sum(np.logaddexp(0.0, -_alloc_logits(lx1, *first, *second)))
                        - np.sum(np.logaddexp(0.0, _alloc_logits(lx2, *first, *second))))
    ratio = _split_pieces(lx1, lx2, np.concatenate([lx1, lx2]), merged, first, second)
    log_a = log_split_acceptance(R=R - 1, prior=prior, **hyper, merged=merged, first=first, second=second,
                                 u=(u1, u2, u3), loglik_ratio=ratio, log_p_alloc=log_p_alloc)
    accepted = math.log(rng.random()) < -log_a
    if accepted:
        weights = np.concatenate([p.weights[:j], [w], p.weights[j + 2:]])
        mus = np.concatenate([p.mus[:j], [m], p.mus[j + 2:]])
        s2s = np.concatenate([p.sigma2s[:j], [s2], p.sigma2s[j + 2:]])
        state.params = _mixture(weights, mus, s2s)
        z[in2] = j
        z[z > j + 1] -= 1
    state.tally.last_sc = state.tally.record("combine", accepted)
    return state


# --- Gibbs updates --------------------------------------------------------

def update_weights(state: ChainState, prior: PriorConfig, rng: np.random.Generator) -> ChainState:
    p = state.params
    if p.R == 1:
        state.params = MixtureParams([1.0], p.mus, p.sigma2s)
        return state
    w = dist.sample_dirichlet(state.counts() + prior.alpha0, rng)
    state.params = MixtureParams(w, p.mus, p.sigma2s)
    return state


def update_components(state: ChainState, prior: PriorConfig, rng: np.random.Generator) -> ChainState:
    """Conjugate draws of each log-mean (restricted to keep the ordering) and each variance."""
    p = state.params
    R = p.R
    z, lx = state.latent.z, state.latent.logx
    n_r = np.bincount(z, minlength=R).astype(float)
    s1 = np.bincount(z, weights=lx, minlength=R)
    mus = p.mus.copy()
    s2s = p.sigma2s.copy()
    for r in range(R):
        prec = n_r[r] / s2s[r] + 1.0 / state.tau2
        var = 1.0 / prec
        mean = var * (s1[r] / s2s[r] + state.mu / state.tau2)
        lo = mus[r - 1] if r > 0 else -math.inf
        hi = mus[r + 1] if r < R - 1 else math.inf
        mus[r] = dist.sample_truncated_normal(mean, math.sqrt(var), lo, hi, rng, strict=False)
        if not (lo < mus[r] < hi):
            # the window is narrower than one ulp of the draw: stay put
            mus[r] = p.mus[r]
    ss = np.bincount(z, weights=(lx - mus[z]) ** 2, minlength=R) if z.size else np.zeros(R)
    prec = rng.standard_gamma(0.5 * n_r + prior.nu0) / (0.5 * ss + state.beta)
    s2s = 1.0 / prec
    state.params = MixtureParams(p.weights, mus, s2s)
    return state


def allocation_probabilities(logx: np.ndarray, params: MixtureParams) -> np.ndarray:
    """Row-normalised P(z_i = r | x_i, mixture) for each log-income."""
    logits = _allocation_logits(logx, params)
    logits -= logits.max(axis=1, keepdims=True)
    pr = np.exp(logits)
    return pr / pr.sum(axis=1, keepdims=True)


def _allocation_logits(logx, params):
    with np.errstate(divide="ignore"):
        base = np.log(params.weights) - 0.5 * np.log(params.sigma2s)
    return base - (logx[:, None] - params.mus) ** 2 / (2.0 * params.sigma2s)


def update_allocations(state: ChainState, rng: np.random.Generator) -> ChainState:
    """Redraw every z_i.

    Each row is normalised after subtracting its largest log weight, so the
    most likely component always carries weight 1 and rows never underflow
    to all zeros.
    """
    p = state.params
    lat = state.latent
    if p.R == 1:
        lat.z[:] = 0
        return state
    if lat.n == 0:
        return state
    with np.errstate(divide="ignore"):
        log_base = np.log(p.weights) - 0.5 * np.log(p.sigma2s)
    _kernels.allocate(lat.logx, log_base, p.mus, 0.5 / p.sigma2s, rng.random(lat.n), lat.z)
    return state


def update_latent_incomes(state: ChainState, data: GroupedData, rng: np.random.Generator,
                          free: Optional[np.ndarray] = None) -> ChainState:
    """Redraw every non-boundary latent income from its component truncated to its group."""
    lat = state.latent
    if lat.n == 0:
        return state
    p = state.params
    if free is None:
        free = np.ones(lat.n, dtype=bool)
        free[data.boundary_index] = False
    R = p.R
    sig = np.sqrt(p.sigma2s)
    with np.errstate(divide="ignore"):
        a = (np.log(data.lower)[:, None] - p.mus) / sig
        b = (np.log(data.upper)[:, None] - p.mus) / sig
    upper, la, delta, log_mass = dist.truncnorm_terms(a, b)
    idx = np.flatnonzero(free)
    cell = lat.d[idx] * R + lat.z[idx]
    bad = ~(log_mass.reshape(-1)[cell] > math.log(dist.MIN_INTERVAL_MASS))
    if np.any(bad):
        k, r = divmod(int(cell[np.flatnonzero(bad)[0]]), R)
        raise dist.DegenerateIntervalError(
            data.lower[k], data.upper[k], float(np.exp(log_mass[k, r])),
            context=f"latent update, group {k + 1}, component {r + 1} "
                    f"(mu={p.mus[r]:.6g}, sigma2={p.sigma2s[r]:.6g})")
    # group interiors are open: non-boundary points never sit on a boundary
    _kernels.draw_latent(idx, lat.d, lat.z, R, upper, la, delta, a, b, p.mus, sig,
                         data.lower, data.upper, rng.random(idx.size), lat.x, lat.logx)
    return state


def update_hypers(state: ChainState, prior: PriorConfig, rng: np.random.Generator) -> ChainState:
    p = state.params
    R = p.R
    prec_tau = 1.0 / state.tau2
    var = 1.0 / (prec_tau * R + 1.0 / prior.tau0_2)
    mean = var * (prec_tau * p.mus.sum() + prior.mu0 / prior.tau0_2)
    state.mu = rng.normal(mean, math.sqrt(var))
    rate = prior.s0 + 0.5 * float(np.sum((p.mus - state.mu) ** 2))
    state.tau2 = rate / rng.standard_gamma(prior.n0 + 0.5 * R)
    rate_b = prior.h0 + float(np.sum(1.0 / p.sigma2s))
    state.beta = rng.standard_gamma(R * prior.nu0 + prior.g0) / rate_b
    return state


# --- chain driver ---------------------------------------------------------

def initial_state(data: Optional[GroupedData], prior: PriorConfig, rng: np.random.Generator,
                  initial_R: int = 1) -> ChainState:
    """Start at R = initial_R with hyper-parameters at their prior means.

    With data, latent incomes start at group geometric midpoints, allocations
    are uniform at random and component log-means sit at evenly spaced
    quantiles of the starting log-incomes. Without data (prior-only runs)
    the components are drawn from the prior.
    """
    if not 1 <= initial_R <= prior.R_max:
        raise DomainError(f"initial_R must lie in 1..{prior.R_max}")
    mu = prior.mu0
    tau2 = prior.s0 / prior.n0
    beta = prior.g0 / prior.h0
    weights = np.full(initial_R, 1.0 / initial_R)
    if data is None:
        latent = LatentState.empty()
        mus = np.sort(rng.normal(mu, math.sqrt(tau2), initial_R))
        s2s = np.full(initial_R, beta / prior.nu0)
    else:
        latent = LatentState.initial(data, initial_R, rng)
        lx = latent.logx
        mus = np.quantile(lx, (np.arange(initial_R) + 0.5) / initial_R)
        if np.any(np.diff(mus) <= 0):
            mus = lx.mean() + lx.std() * np.linspace(-1, 1, initial_R) if initial_R > 1 else np.array([lx.mean()])
        s2s = np.full(initial_R, max(lx.var() / initial_R, 1e-4))
    return ChainState(MixtureParams(weights, mus, s2s), latent, mu, tau2, beta)


def check_state(state: ChainState, data: Optional[GroupedData], prior: PriorConfig) -> None:
    """Raise InvariantError if any per-sweep invariant fails."""
    p = state.params
    if abs(p.weights.sum() - 1.0) > 1e-10:
        raise InvariantError("weights do not sum to 1")
    if np.any(np.diff(p.mus) <= 0):
        raise InvariantError("log-means are not strictly increasing")
    if not 1 <= p.R <= prior.R_max:
        raise InvariantError(f"R={p.R} outside 1..{prior.R_max}")
    if not (state.tau2 > 0 and state.beta > 0 and math.isfinite(state.mu)):
        raise InvariantError("hyper-parameters out of range")
    if data is not None:
        state.latent.check(data, p.R)
    if state.latent.n and state.counts().sum() != state.latent.n:
        raise InvariantError("component counts disagree with allocations")


@dataclass(frozen=True)
class ChainConfig:
    iterations: int
    burn_in: int = 0
    thin: int = 10
    seed: Optional[int] = None
    initial_R: int = 1
    fixed_R: bool = False
    prior_only: bool = False
    check_invariants: bool = False

    def __post_init__(self):
        if self.iterations <= 0:
            raise DomainError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise DomainError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")


def sweep(state: ChainState, data: Optional[GroupedData], prior: PriorConfig, rng: np.random.Generator,
          fixed_R: bool = False, free: Optional[np.ndarray] = None) -> ChainState:
    if not fixed_R:
        birth_death_move(state, data, prior, rng)
        split_combine_move(state, data, prior, rng)
    update_weights(state, prior, rng)
    update_components(state, prior, rng)
    if data is not None:
        update_allocations(state, rng)
        update_latent_incomes(state, data, rng, free)
    update_hypers(state, prior, rng)
    return state


def run_chain(data: Optional[GroupedData], prior: PriorConfig, iterations: int, burn_in: int = 0,
              thin: int = 10, seed=None, initial_R: int = 1, *, fixed_R: bool = False,
              prior_only: bool = False, check_invariants: bool = False, progress=None) -> Draws:
    """Run one reversible-jump chain and return the kept draws.

    Iterations are numbered from 1; iteration ``i`` is kept when ``i > burn_in``
    and ``(i - burn_in) % thin == 0``. With ``prior_only`` the data are ignored
    entirely (no observations), so the chain should sample the prior;
    ``fixed_R`` switches off both trans-dimensional moves.
    """
    cfg = ChainConfig(iterations, burn_in, thin, None, initial_R, fixed_R, prior_only, check_invariants)
    if data is None and not prior_only:
        raise DomainError("data are required unless prior_only is set")
    rng = dist.make_rng(seed)
    used = None if prior_only else data
    state = initial_state(used, prior, rng, initial_R)
    free = None
    if used is not None:
        free = np.ones(used.n_total, dtype=bool)
        free[used.boundary_index] = False
    draws = Draws("mln")
    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        sweep(state, used, prior, rng, fixed_R, free)
        if check_invariants:
            check_state(state, used, prior)
        if it > burn_in and (it - burn_in) % thin == 0:
            ll = log_likelihood_grouped(data, state.params) if used is not None else math.nan
            draws.append_mln(it, state.params, (state.mu, state.tau2, state.beta), ll,
                             (state.tally.last_bd, state.tally.last_sc))
        if progress is not None and it % 1000 == 0:
            progress(it)
    seed_info = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    draws.meta.update(
        model="mln",
        prior=asdict(prior),
        seed=seed_info,
        spawn_key=list(seed.spawn_key) if isinstance(seed, np.random.SeedSequence) else [],
        iterations=iterations, burn_in=burn_in, thin=thin, initial_R=initial_R,
        fixed_R=fixed_R, prior_only=prior_only,
        acceptance={"attempts": state.tally.attempts, "accepts": state.tally.accepts,
                    "rates": state.tally.rates()},
        wall_time_s=time.perf_counter() - t0,
    )
    if data is not None:
        draws.meta["data_sha256"] = data.digest()
    return draws
