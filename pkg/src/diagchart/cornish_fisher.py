"""Quantile machinery: Hermite polynomials, Cornish-Fisher expansions of
the standardized chart statistic, its cumulants, and a simulation oracle
for weighted chi-square spectra.

The normal quantile is computed locally (rational approximation plus one
Newton refinement through erfc) so the control limits do not depend on an
external stats library.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError

SQRT2 = math.sqrt(2.0)


def normal_cdf(x: float) -> float:
    """Standard normal CDF via erfc; full double precision in both tails."""
    return 0.5 * math.erfc(-x / SQRT2)


def normal_sf(x: float) -> float:
    """Standard normal survival function 1 - Phi(x)."""
    return 0.5 * math.erfc(x / SQRT2)


# Acklam's rational approximation to the normal quantile; the raw
# approximation is good to ~1.15e-9 and one Newton step through erfc
# pushes it to machine precision.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def _norm_ppf(prob: float) -> float:
    """Phi^{-1}(prob) for prob in (0, 1)."""
    p = prob
    if p <= 0.0 or p >= 1.0:
        raise ValueError(f"probability must be in (0, 1), got {p}")
    p_low, p_high = 0.02425, 1.0 - 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # One Newton refinement: f(x) = Phi(x) - p.
    err = normal_cdf(x) - p
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if pdf > 0.0:
        x -= err / pdf
    return x


def normal_quantile(alpha: float) -> float:
    """Upper-alpha standard normal quantile z_alpha = Phi^{-1}(1 - alpha)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    # Work in the smaller tail for accuracy.
    if alpha <= 0.5:
        return -_norm_ppf(alpha)
    return _norm_ppf(1.0 - alpha)


def hermite(k: int, x: float) -> float:
    """Probabilists' Hermite polynomial H_k(x) for k in 0..6.

    H_k(x) = sum_{i=0}^{floor(k/2)} (-1)^i (2i)!/(2^i i!) C(k, 2i) x^(k-2i).
    """
    if not 0 <= int(k) <= 6:
        raise ValueError(f"hermite order must be in 0..6, got {k}")
    k = int(k)
    total = 0.0
    for i in range(k // 2 + 1):
        coef = ((-1) ** i
                * math.factorial(2 * i) / (2**i * math.factorial(i))
                * math.comb(k, 2 * i))
        total += coef * x ** (k - 2 * i)
    return total


def cf_general(z_alpha: float, gamma1: float, gamma2: float) -> float:
    """General Cornish-Fisher quantile through the skewness and kurtosis
    terms:

        z + gamma1 H2(z)/6 + gamma2 H3(z)/24 - gamma1^2 (2 H3(z) + H1(z))/36
    """
    z = z_alpha
    h1 = hermite(2, z) / 6.0
    h2 = hermite(3, z) / 24.0
    h11 = -(2.0 * hermite(3, z) + hermite(1, z)) / 36.0
    return z + gamma1 * h1 + gamma2 * h2 + gamma1 * gamma1 * h11


def kappa3(tr2: float, tr3: float) -> float:
    """Third standardized cumulant of the chart statistic:
    8 tr(rho^3) / [2 tr(rho^2)]^(3/2)."""
    if tr2 <= 0.0:
        raise ValueError(f"tr2 must be positive, got {tr2}")
    return 8.0 * tr3 / (2.0 * tr2) ** 1.5


def kappa4(tr2: float, tr4: float) -> float:
    """Fourth standardized cumulant (excess kurtosis):
    12 tr(rho^4) / [tr(rho^2)]^2."""
    if tr2 <= 0.0:
        raise ValueError(f"tr2 must be positive, got {tr2}")
    return 12.0 * tr4 / (tr2 * tr2)


def _check_chart_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must be in (0, 0.5), got {alpha}")


def cf_quantile_first_order(tr2: float, tr3: float, alpha: float) -> float:
    """First-order Cornish-Fisher upper quantile of the chart statistic:

        z_a + 4 tr(rho^3) (z_a^2 - 1) / (3 [2 tr(rho^2)]^(3/2))
    """
    _check_chart_alpha(alpha)
    if tr2 <= 0.0:
        raise ValueError(f"tr2 must be positive, got {tr2}")
    za = normal_quantile(alpha)
    return za + 4.0 * tr3 * (za * za - 1.0) / (3.0 * (2.0 * tr2) ** 1.5)


def cf_quantile_second_order(tr2: float, tr3: float, tr4: float, alpha: float) -> float:
    """Second-order Cornish-Fisher upper quantile:

        z_a + 4 tr3 (z^2-1) / (3 (2 tr2)^(3/2))
            + tr4 (z^3-3z) / (2 tr2^2)
            + 2 tr3^2 (5z-2z^3) / (9 tr2^3)

    Algebraically identical to cf_general evaluated at kappa3/kappa4.
    """
    _check_chart_alpha(alpha)
    if tr2 <= 0.0:
        raise ValueError(f"tr2 must be positive, got {tr2}")
    if tr4 < 0.0:
        raise ValueError(f"tr4 must be nonnegative, got {tr4}")
    za = normal_quantile(alpha)
    first = 4.0 * tr3 * (za * za - 1.0) / (3.0 * (2.0 * tr2) ** 1.5)
    second = tr4 * (za**3 - 3.0 * za) / (2.0 * tr2 * tr2)
    third = 2.0 * tr3 * tr3 * (5.0 * za - 2.0 * za**3) / (9.0 * tr2**3)
    return za + first + second + third


def weighted_chisq_quantile_oracle(
    lambdas, alpha: float, n_draws: int, seed: int
) -> float:
    """Empirical upper-alpha quantile of the standardized weighted
    chi-square sum (sum_j lambda_j xi_j^2 - sum_j lambda_j) / sqrt(2 sum lambda_j^2).

    Validation oracle only. Deterministic for a given seed: draws come from
    a Philox stream in fixed chunks and the quantile is taken over the
    full sorted sample.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise DimensionError("lambdas must be a nonempty 1-D array")
    if np.any(lam < 0.0):
        raise ValueError("eigenvalues must be nonnegative")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    n_draws = int(n_draws)
    if n_draws < 10**5:
        raise ValueError(f"n_draws must be at least 1e5, got {n_draws}")

    center = float(lam.sum())
    scale = math.sqrt(2.0 * float((lam * lam).sum()))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed)])))
    out = np.empty(n_draws)
    chunk = 200_000
    pos = 0
    while pos < n_draws:
        n = min(chunk, n_draws - pos)
        xi = rng.standard_normal((n, lam.size))
        out[pos:pos + n] = (lam * xi * xi).sum(axis=1)
        pos += n
    out = (out - center) / scale
    return float(np.quantile(out, 1.0 - alpha))
