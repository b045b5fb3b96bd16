"""Charting statistics and the alarm rule.

The chart scales each deviation by the per-variable variance only (the
diagonal of the covariance matrix), standardizes the resulting distance M2
into U, applies a Cornish-Fisher shift, and signals when the shifted
statistic exceeds the upper-alpha normal quantile.

Both phrasings of the rule -- "shift the statistic, compare to z_alpha"
and "compare U to the Cornish-Fisher limit" -- are evaluated through the
single canonical form z = U - (UCL - z_alpha), so they can never disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_stats import TraceEstimates
from .cornish_fisher import (
    cf_quantile_first_order,
    cf_quantile_second_order,
    normal_quantile,
    normal_sf,
)
from .errors import DimensionError, InvalidParametersError

SOURCE_KNOWN = "known"
SOURCE_CLASSICAL = "classical"
SOURCE_ROBUST = "robust"
_SOURCES = (SOURCE_KNOWN, SOURCE_CLASSICAL, SOURCE_ROBUST)


@dataclass
class ProcessParameters:
    """In-control mean, per-variable variances, and trace estimates.

    Treat instances as immutable once constructed; they may be shared
    across concurrent chart evaluations.
    """

    mu: np.ndarray
    d_diag: np.ndarray
    traces: TraceEstimates
    source: str = SOURCE_KNOWN

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.d_diag = np.asarray(self.d_diag, dtype=float)
        if self.mu.ndim != 1 or self.d_diag.ndim != 1:
            raise DimensionError("mu and d_diag must be 1-D vectors")
        if self.mu.size != self.d_diag.size:
            raise DimensionError(
                f"mu has length {self.mu.size} but d_diag has {self.d_diag.size}"
            )
        if np.any(self.d_diag <= 0.0):
            raise InvalidParametersError("all entries of d_diag must be positive")
        if self.source not in _SOURCES:
            raise InvalidParametersError(f"unknown source tag {self.source!r}")
        if self.traces.tr2_hat <= 0.0:
            raise InvalidParametersError("traces.tr2_hat must be positive")

    @property
    def p(self) -> int:
        return self.mu.size


@dataclass
class ChartConfig:
    """Chart knobs: significance level, Cornish-Fisher order (0 = plain
    normal limit, 1, or 2), and whether c_pm corrects estimated scales."""

    alpha: float
    cf_order: int = 1
    apply_correction: bool = True
    z_alpha: float = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise InvalidParametersError(
                f"alpha must be in (0, 0.5), got {self.alpha}"
            )
        if self.cf_order not in (0, 1, 2):
            raise InvalidParametersError(
                f"cf_order must be 0, 1 or 2, got {self.cf_order}"
            )
        self.z_alpha = normal_quantile(self.alpha)


@dataclass
class ChartPoint:
    """One monitored observation: its distance, standardized value,
    shifted statistic, and alarm flag."""

    index: int
    m2: float
    u: float
    z: float
    signal: bool
    ucl: float


def control_limit(params: ProcessParameters, config: ChartConfig) -> float:
    """Upper control limit on the U scale for the configured CF order."""
    t = params.traces
    if config.cf_order == 0:
        return config.z_alpha
    if config.cf_order == 1:
        return cf_quantile_first_order(t.tr2_hat, t.tr3_hat, config.alpha)
    if t.tr4_hat is None:
        raise InvalidParametersError("cf_order 2 requires traces.tr4_hat")
    return cf_quantile_second_order(t.tr2_hat, t.tr3_hat, t.tr4_hat, config.alpha)


def modified_distance(x, params: ProcessParameters) -> float:
    """Diagonal-scaled squared distance sum_j (x_j - mu_j)^2 / sigma_jj."""
    x = np.asarray(x, dtype=float)
    if x.shape != params.mu.shape:
        raise DimensionError(
            f"observation has shape {x.shape}, expected {params.mu.shape}"
        )
    diff = x - params.mu
    return float(np.sum(diff * diff / params.d_diag))


def modified_distances(x_rows: np.ndarray, params: ProcessParameters) -> np.ndarray:
    """Row-wise modified distances for an (n, p) batch."""
    x_rows = np.asarray(x_rows, dtype=float)
    if x_rows.ndim != 2 or x_rows.shape[1] != params.p:
        raise DimensionError(
            f"batch has shape {x_rows.shape}, expected (n, {params.p})"
        )
    diff = x_rows - params.mu
    return (diff * diff / params.d_diag).sum(axis=1)


def _u_scale(params: ProcessParameters, apply_correction: bool) -> float:
    t = params.traces
    if t.tr2_hat <= 0.0:
        raise InvalidParametersError("tr2_hat must be positive")
    c = t.c_pm if (apply_correction and params.source != SOURCE_KNOWN) else 1.0
    return c * float(np.sqrt(2.0 * t.tr2_hat))


def u_statistic(m2: float, params: ProcessParameters, apply_correction: bool = True) -> float:
    """Standardize M2: (M2 - p) / (c sqrt(2 tr2_hat)).

    The correction c = c_pm applies only when the traces were estimated
    (params.source != "known"); with known parameters it is inert.
    """
    return (m2 - params.p) / _u_scale(params, apply_correction)


def u_statistics(m2: np.ndarray, params: ProcessParameters, apply_correction: bool = True) -> np.ndarray:
    """Vectorized u_statistic."""
    return (np.asarray(m2, dtype=float) - params.p) / _u_scale(params, apply_correction)


def chart_decision(
    u: float, params: ProcessParameters, config: ChartConfig
) -> tuple[float, bool]:
    """Shifted statistic z and the alarm flag for one standardized value.

    z = u - (UCL - z_alpha); the alarm fires on the strict inequality
    z > z_alpha, so equality is in-control.
    """
    shift = control_limit(params, config) - config.z_alpha
    z = u - shift
    return z, bool(z > config.z_alpha)


def evaluate_point(
    index: int, x, params: ProcessParameters, config: ChartConfig
) -> ChartPoint:
    """Full chart evaluation of one observation."""
    m2 = modified_distance(x, params)
    u = u_statistic(m2, params, config.apply_correction)
    ucl = control_limit(params, config)
    z = u - (ucl - config.z_alpha)
    return ChartPoint(
        index=index, m2=m2, u=u, z=z, signal=bool(z > config.z_alpha), ucl=ucl,
    )


def evaluate_batch(
    x_rows: np.ndarray, params: ProcessParameters, config: ChartConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized chart evaluation: returns (m2, u, z, signal) arrays."""
    m2 = modified_distances(x_rows, params)
    u = u_statistics(m2, params, config.apply_correction)
    shift = control_limit(params, config) - config.z_alpha
    z = u - shift
    return m2, u, z, z > config.z_alpha


def nominal_arl0(alpha: float) -> float:
    """Design in-control ARL of a Shewhart-type chart, 1/alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return 1.0 / alpha


def noncentrality_eta(delta, params: ProcessParameters) -> float:
    """Standardized shift size eta = delta' D^{-1} delta / sqrt(2 tr2)."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != params.mu.shape:
        raise DimensionError(
            f"delta has shape {delta.shape}, expected {params.mu.shape}"
        )
    quad = float(np.sum(delta * delta / params.d_diag))
    return quad / float(np.sqrt(2.0 * params.traces.tr2_hat))


def nominal_arl1(eta: float, alpha: float) -> float:
    """Asymptotic out-of-control ARL: 1 / (1 - beta), beta = Phi(z_alpha - eta)."""
    if eta < 0.0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    za = normal_quantile(alpha)
    return 1.0 / normal_sf(za - eta)


def chisq_t2_baseline(x, mu, sigma_full) -> float:
    """Classical Mahalanobis T2 with a full covariance; small-p oracle.

    Fails (singular matrix) exactly where the diagonal chart is designed
    not to, e.g. p > m sample covariances.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma_full, dtype=float)
    if x.shape != mu.shape:
        raise DimensionError("x and mu must have the same shape")
    if sigma.shape != (x.size, x.size):
        raise DimensionError(f"sigma has shape {sigma.shape}, expected square p x p")
    diff = x - mu
    sol = np.linalg.solve(sigma, diff)
    return float(diff @ sol)
