"""Batch moment estimation: means, covariance, correlation, and the
high-dimensional trace estimators the control limits depend on.

All functions are pure and operate on plain numpy arrays with observations
in rows. Reductions go through numpy's pairwise summation, so results are
deterministic for a given array layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateVariableError,
    DimensionError,
    IllConditionedEstimateError,
    InsufficientDataError,
)


@dataclass
class CovarianceSummary:
    """Sample covariance S, its diagonal d_s, and (optionally) the
    correlation matrix R derived from it."""

    s: np.ndarray
    d_s: np.ndarray
    r: Optional[np.ndarray] = None

    @property
    def p(self) -> int:
        return self.s.shape[0]


@dataclass
class TraceEstimates:
    """Estimates of tr(rho^k) plus the finite-sample correction c_pm.

    ``m_eff`` is the sample size the estimates were computed from; ``None``
    marks exact values derived from a known correlation matrix. ``tr4_hat``
    is a plug-in value (tr(R^4)); it has no bias correction and is only
    needed by the second-order control limit.
    """

    p: int
    m_eff: Optional[int]
    tr2_hat: float
    tr3_hat: float
    tr4_hat: Optional[float] = None
    c_pm: float = 1.0

    def __post_init__(self):
        if self.tr2_hat <= 0.0:
            raise IllConditionedEstimateError(
                f"tr2_hat must be positive, got {self.tr2_hat}"
            )
        if self.c_pm < 1.0:
            raise IllConditionedEstimateError(f"c_pm must be >= 1, got {self.c_pm}")


def validate_data_matrix(data, min_rows: int = 1) -> np.ndarray:
    """Coerce to a 2-D float array of shape (m, p) and check basic sanity."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D data matrix, got ndim={x.ndim}")
    m, p = x.shape
    if p < 1:
        raise DimensionError("data matrix has no columns")
    if m < min_rows:
        raise InsufficientDataError(f"need at least {min_rows} rows, got {m}")
    if not np.all(np.isfinite(x)):
        raise DimensionError("data matrix contains non-finite entries")
    return x


def sample_mean(data) -> np.ndarray:
    """Column means of an (m, p) data matrix; requires m >= 1."""
    x = validate_data_matrix(data, min_rows=1)
    return x.mean(axis=0)


def sample_covariance(data) -> CovarianceSummary:
    """Unbiased sample covariance (denominator m-1) and its diagonal.

    Raises
    ------
    InsufficientDataError
        If fewer than two rows are supplied.
    DegenerateVariableError
        If any column has zero variance; the error names the columns.
    """
    x = validate_data_matrix(data, min_rows=2)
    m = x.shape[0]
    centered = x - x.mean(axis=0)
    s = centered.T @ centered / (m - 1)
    s = 0.5 * (s + s.T)
    d_s = np.diag(s).copy()
    bad = np.flatnonzero(d_s <= 0.0)
    if bad.size:
        raise DegenerateVariableError(bad)
    return CovarianceSummary(s=s, d_s=d_s)


def correlation(cov: CovarianceSummary) -> np.ndarray:
    """Correlation matrix R with the diagonal forced to exactly one."""
    d_s = np.asarray(cov.d_s, dtype=float)
    bad = np.flatnonzero(d_s <= 0.0)
    if bad.size:
        raise DegenerateVariableError(bad)
    sd = np.sqrt(d_s)
    r = cov.s / np.outer(sd, sd)
    np.fill_diagonal(r, 1.0)
    return r


def correlation_from_data(data) -> tuple[np.ndarray, int]:
    """Convenience: sample correlation and the row count, in one call."""
    x = validate_data_matrix(data, min_rows=2)
    return correlation(sample_covariance(x)), x.shape[0]


def trace_power(matrix, k: int) -> float:
    """Trace of the k-th matrix power, k in 1..6, by repeated multiplication.

    Deterministic (no eigendecomposition); for symmetric input the result
    equals the eigenvalue power sum.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"trace_power needs a square matrix, got {m.shape}")
    if not 1 <= int(k) <= 6:
        raise ValueError(f"k must be an integer in 1..6, got {k}")
    power = m
    for _ in range(int(k) - 1):
        power = power @ m
    return float(np.trace(power))


def estimate_tr_rho2(r: np.ndarray, m: int) -> float:
    """Consistent estimate of tr(rho^2): tr(R^2) - p^2/m.

    Raises IllConditionedEstimateError when the result is nonpositive,
    which signals that m is too small relative to p for this R.
    """
    r = np.asarray(r, dtype=float)
    p = r.shape[0]
    if m < 2:
        raise InsufficientDataError("estimate_tr_rho2 needs m >= 2")
    est = trace_power(r, 2) - p * p / m
    if est <= 0.0:
        raise IllConditionedEstimateError(
            f"tr(R^2) - p^2/m = {est:.6g} <= 0 (p={p}, m={m})"
        )
    return est


def estimate_tr_rho3(r: np.ndarray, m: int) -> float:
    """Consistent estimate of tr(rho^3):
    tr(R^3) - (3p/m) tr(R^2) + 2 p^3 / m^2.

    May legitimately be negative for small m; callers decide what to do.
    """
    r = np.asarray(r, dtype=float)
    p = r.shape[0]
    if m < 2:
        raise InsufficientDataError("estimate_tr_rho3 needs m >= 2")
    tr2 = trace_power(r, 2)
    tr3 = trace_power(r, 3)
    return tr3 - (3.0 * p / m) * tr2 + 2.0 * p**3 / m**2


def correction_coefficient(r: np.ndarray, m: int) -> float:
    """Finite-sample correction c_pm = 1 + 2p / (m sqrt(tr(R^2) - p^2/m)).

    Always >= 1 and tends to 1 as m grows.
    """
    r = np.asarray(r, dtype=float)
    p = r.shape[0]
    radicand = estimate_tr_rho2(r, m)  # raises if nonpositive
    return 1.0 + 2.0 * p / (m * np.sqrt(radicand))


def make_trace_estimates(r: np.ndarray, m: int, with_tr4: bool = True) -> TraceEstimates:
    """Bundle the trace estimators and c_pm into a TraceEstimates.

    Shares the single matrix product R @ R across tr2/tr3/tr4 using the
    symmetric-trace identities tr(AB) = sum(A * B) for symmetric A, B;
    these agree with trace_power to floating-point roundoff.
    """
    r = np.asarray(r, dtype=float)
    p = r.shape[0]
    if m < 2:
        raise InsufficientDataError("trace estimation needs m >= 2")
    r2 = r @ r
    tr2 = float(np.sum(r * r))
    tr3 = float(np.sum(r2 * r))
    tr4 = float(np.sum(r2 * r2)) if with_tr4 else None

    tr2_hat = tr2 - p * p / m
    if tr2_hat <= 0.0:
        raise IllConditionedEstimateError(
            f"tr(R^2) - p^2/m = {tr2_hat:.6g} <= 0 (p={p}, m={m})"
        )
    tr3_hat = tr3 - (3.0 * p / m) * tr2 + 2.0 * p**3 / m**2
    c_pm = 1.0 + 2.0 * p / (m * np.sqrt(tr2_hat))
    return TraceEstimates(
        p=p, m_eff=m, tr2_hat=tr2_hat, tr3_hat=tr3_hat, tr4_hat=tr4, c_pm=c_pm
    )


def exact_traces(rho: np.ndarray) -> TraceEstimates:
    """Exact trace values for a known correlation matrix (c_pm = 1)."""
    rho = np.asarray(rho, dtype=float)
    p = rho.shape[0]
    rho2 = rho @ rho
    return TraceEstimates(
        p=p,
        m_eff=None,
        tr2_hat=float(np.sum(rho * rho)),
        tr3_hat=float(np.sum(rho2 * rho)),
        tr4_hat=float(np.sum(rho2 * rho2)),
        c_pm=1.0,
    )
