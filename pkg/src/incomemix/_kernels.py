"""Compiled per-observation loops for the Gibbs sweep.

Uniform variates are generated by the caller's numpy Generator and passed in,
so results depend only on the seed, not on numba's own RNG.
"""
import math

import numpy as np
from numba import njit

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation to the normal quantile, refined by one Halley step
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


@njit(cache=True)
def _tail_quantile(lq, x):
    """Solve log Phi(x) = lq for x far in the lower tail, starting from ``x``."""
    c = 0.5 * math.log(2.0 * math.pi)
    for _ in range(8):
        r = 1.0 / (x * x)
        f = -0.5 * x * x - math.log(-x) - c + math.log1p(r * (-1.0 + r * (3.0 - 15.0 * r))) - lq
        step = f / (-x - 1.0 / x)
        x -= step
        if abs(step) < 1e-15 * abs(x):
            break
    return x


@njit(cache=True)
def ndtri_exp(lp):
    """Standard normal quantile of exp(lp) for lp <= 0."""
    if lp == 0.0:
        return np.inf
    if lp < -700.0:
        # p underflows; start from the leading tail asymptotics
        t = -2.0 * lp
        return _tail_quantile(lp, -math.sqrt(t - math.log(2.0 * math.pi * t)))
    p = math.exp(lp)
    if p < 0.02425:
        q = math.sqrt(-2.0 * lp)
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p > 1.0 - 0.02425:
        q = math.sqrt(-2.0 * math.log(-math.expm1(lp)))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    else:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    if x < -30.0:
        return _tail_quantile(lp, x)
    if x > 30.0:
        return -_tail_quantile(math.log(-math.expm1(lp)), -x)
    # Halley refinement; the upper branch works with the complement for precision
    if x > 0.0:
        e = 0.5 * math.erfc(x / SQRT2) - (-math.expm1(lp))
        e = -e
    else:
        e = 0.5 * math.erfc(-x / SQRT2) - p
    u = e * SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@njit(cache=True)
def allocate(logx, log_base, mus, inv_two_s2, u, z):
    """Sample z_i proportional to exp(log_base_r - (logx_i - mu_r)^2 * inv_two_s2_r)."""
    n = logx.shape[0]
    R = mus.shape[0]
    lw = np.empty(R)
    for i in range(n):
        mx = -np.inf
        for r in range(R):
            dlt = logx[i] - mus[r]
            lw[r] = log_base[r] - dlt * dlt * inv_two_s2[r]
            if lw[r] > mx:
                mx = lw[r]
        tot = 0.0
        for r in range(R):
            lw[r] = math.exp(lw[r] - mx)
            tot += lw[r]
        target = u[i] * tot
        acc = 0.0
        k = R - 1
        for r in range(R):
            acc += lw[r]
            if target < acc:
                k = r
                break
        z[i] = k


@njit(cache=True)
def draw_latent(idx, d, z, R, upper, log_anchor, delta, a, b, mus, sig, lo, hi, u, x, logx):
    """Truncated lognormal redraw of x[idx] given per-(group, component) inversion tables."""
    for j in range(idx.shape[0]):
        i = idx[j]
        k = d[i]
        r = z[i]
        v = u[j] if upper[k, r] else 1.0 - u[j]
        s = ndtri_exp(log_anchor[k, r] + math.log1p(-v * delta[k, r]))
        if upper[k, r]:
            s = -s
        if s < a[k, r]:
            s = a[k, r]
        elif s > b[k, r]:
            s = b[k, r]
        val = math.exp(mus[r] + sig[r] * s)
        if val <= lo[k]:
            val = np.nextafter(lo[k], np.inf)
        if val >= hi[k]:
            val = np.nextafter(hi[k], 0.0)
        x[i] = val
        logx[i] = math.log(val)
