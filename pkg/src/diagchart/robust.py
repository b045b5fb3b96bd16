"""Outlier-resistant Phase I estimation.

The estimator searches for the h-row subset minimizing the product of the
per-variable subset variances (a diagonal analogue of the MCD objective),
rescales those variances for the trimming bias, and then runs one
reweighting pass that flags rows whose chart statistic exceeds the
first-order Cornish-Fisher cutoff. Final estimates come from the unflagged
rows only. Because only marginal variances are estimated, the subset size
h has no h > p requirement; the method works with p far above m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import chi2

from . import chart as _chart
from .core_stats import TraceEstimates, make_trace_estimates, sample_covariance, correlation
from .errors import (
    DegenerateSubsetError,
    DimensionError,
    EstimationFailureError,
    InsufficientDataError,
)


@dataclass
class RobustConfig:
    """Knobs for the robust subset search and reweighting pass."""

    h: Optional[int] = None          # default floor(m/2) + 1
    n_starts: int = 50
    max_c_steps: int = 30
    outlier_alpha: float = 0.005
    seed: int = 0

    def resolve_h(self, m: int) -> int:
        h = self.h if self.h is not None else m // 2 + 1
        if not 2 <= h <= m:
            raise InsufficientDataError(f"subset size h={h} invalid for m={m}")
        return h


@dataclass
class RobustEstimates:
    """Outputs of the robust pass: estimates, per-row outlier flags, and
    the index sets the estimates were computed from."""

    mu_tilde: np.ndarray
    d_tilde: np.ndarray
    traces: TraceEstimates
    outlier_flags: np.ndarray
    subset_indices: np.ndarray        # final clean set (unflagged rows)
    raw_subset_indices: np.ndarray    # the h-subset from the concentration search
    raw_objective: float = field(default=float("nan"))


def _subset_moments(data: np.ndarray, subset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and ddof-1 variances of a row subset; errors on zero variance."""
    rows = data[subset]
    mu = rows.mean(axis=0)
    var = rows.var(axis=0, ddof=1)
    bad = np.flatnonzero(var <= 0.0)
    if bad.size:
        raise DegenerateSubsetError(bad)
    return mu, var


def diagonal_product_objective(data, subset) -> float:
    """Log of the product of subset variances, sum_j log s_j^2(subset).

    The log form keeps the objective finite for large p.
    """
    data = np.asarray(data, dtype=float)
    subset = np.asarray(subset, dtype=int)
    if subset.size < 2:
        raise InsufficientDataError("objective needs a subset of at least 2 rows")
    _, var = _subset_moments(data, subset)
    return float(np.sum(np.log(var)))


def _h_smallest(distances: np.ndarray, h: int) -> np.ndarray:
    """Indices of the h smallest distances; ties break by ascending row index."""
    order = np.argsort(distances, kind="stable")[:h]
    order.sort()
    return order


def concentration_step(data, subset, h: Optional[int] = None) -> np.ndarray:
    """One C-step under the diagonal metric.

    Computes the subset mean and variances, scores every row by its
    modified distance against them, and returns the h rows with the
    smallest distances (sorted by index). The diagonal-product objective
    is non-increasing across iterations of this map.
    """
    data = np.asarray(data, dtype=float)
    subset = np.asarray(subset, dtype=int)
    if h is None:
        h = subset.size
    mu, var = _subset_moments(data, subset)
    d = ((data - mu) ** 2 / var).sum(axis=1)
    return _h_smallest(d, h)


def _chi2_truncation_factor(h_frac: float, p: int) -> float:
    """k = h_frac / F_{chi2_{p+2}}(q), q the h_frac-quantile of chi2_p.
    Valid for any h_frac in (0, 1]."""
    if h_frac == 1.0:
        return 1.0
    q = chi2.ppf(h_frac, df=p)
    return float(h_frac / chi2.cdf(q, df=p + 2))


def trimming_consistency_factor(h_frac: float, p: int = 1) -> float:
    """Consistency factor for variances computed from the most concentrated
    h_frac fraction of p-variate normal rows (selection by the diagonal
    distance).

    k = h_frac / F_{chi2_{p+2}}(q), with q the h_frac-quantile of chi2_p.
    k(1) = 1 for any p; for p = 1 this is the classical chi2_1 / chi2_3
    truncated-variance identity. The public domain is the usual breakdown
    range h_frac in [0.5, 1]; the subset search itself may run below it.
    """
    if not 0.5 <= h_frac <= 1.0:
        raise ValueError(f"h_frac must be in [0.5, 1], got {h_frac}")
    if p < 1:
        raise DimensionError(f"p must be >= 1, got {p}")
    return _chi2_truncation_factor(h_frac, p)


def _run_one_start(data: np.ndarray, h: int, max_c_steps: int, rng) -> tuple[float, np.ndarray]:
    """Grow a 2-row seed into an h-subset and concentrate to a fixed point."""
    m = data.shape[0]
    pair = rng.choice(m, size=2, replace=False)
    mu, var = _subset_moments(data, np.sort(pair))
    d = ((data - mu) ** 2 / var).sum(axis=1)
    subset = _h_smallest(d, h)
    for _ in range(max_c_steps):
        new = concentration_step(data, subset)
        if np.array_equal(new, subset):
            break
        subset = new
    return diagonal_product_objective(data, subset), subset


def rmdp_estimate(data, cfg: Optional[RobustConfig] = None) -> RobustEstimates:
    """Robust Phase I estimation.

    1. Best h-subset over cfg.n_starts concentration searches; each
       restart's randomness is keyed by (cfg.seed, restart index), and the
       winner is the smallest (objective, subset) pair, so the result does
       not depend on evaluation order.
    2. Subset variances are rescaled by the trimming consistency factor.
    3. Trace estimates and c_pm come from the subset's correlation matrix
       with m_eff = h.
    4. Each row is flagged as an outlier when its chart statistic exceeds
       the first-order Cornish-Fisher cutoff at cfg.outlier_alpha.
    5. Final estimates are recomputed from the unflagged rows (single
       reweighting pass; flags are never revisited).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionError("data must be a 2-D matrix")
    m, p = data.shape
    if cfg is None:
        cfg = RobustConfig()
    h = cfg.resolve_h(m)

    best: Optional[tuple[tuple[float, tuple], np.ndarray]] = None
    failures = 0
    for start in range(cfg.n_starts):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([int(cfg.seed), start]))
        )
        try:
            obj, subset = _run_one_start(data, h, cfg.max_c_steps, rng)
        except DegenerateSubsetError:
            failures += 1
            continue
        key = (obj, tuple(subset))
        if best is None or key < best[0]:
            best = (key, subset)
    if best is None:
        raise EstimationFailureError(
            f"all {cfg.n_starts} restarts hit degenerate subsets"
        )
    (raw_objective, _), raw_subset = best

    mu0, var0 = _subset_moments(data, raw_subset)
    var0 = var0 * _chi2_truncation_factor(h / m, p)

    subset_corr = correlation(sample_covariance(data[raw_subset]))
    traces0 = make_trace_estimates(subset_corr, h)

    params0 = _chart.ProcessParameters(
        mu=mu0, d_diag=var0, traces=traces0, source=_chart.SOURCE_ROBUST
    )
    config0 = _chart.ChartConfig(alpha=cfg.outlier_alpha, cf_order=1, apply_correction=True)
    _, _, _, flags = _chart.evaluate_batch(data, params0, config0)
    if flags.all():
        raise EstimationFailureError("reweighting flagged every row")

    keep = np.flatnonzero(~flags)
    clean = data[keep]
    mu_tilde = clean.mean(axis=0)
    cov = sample_covariance(clean)
    d_tilde = cov.d_s
    traces = make_trace_estimates(correlation(cov), keep.size)

    return RobustEstimates(
        mu_tilde=mu_tilde,
        d_tilde=d_tilde,
        traces=traces,
        outlier_flags=flags,
        subset_indices=keep,
        raw_subset_indices=raw_subset,
        raw_objective=raw_objective,
    )


def robust_process_parameters(est: RobustEstimates) -> _chart.ProcessParameters:
    """Package robust estimates as chart parameters."""
    return _chart.ProcessParameters(
        mu=est.mu_tilde, d_diag=est.d_tilde, traces=est.traces,
        source=_chart.SOURCE_ROBUST,
    )
