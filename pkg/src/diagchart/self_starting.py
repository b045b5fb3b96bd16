"""Self-starting monitoring: streaming mean/scatter updates, parameter
refresh, and the monitor-then-update loop.

Each accepted in-control observation is folded into the running mean and
scatter via the rank-one recursions

    A_j = X_j - Xbar_{j-1}
    Q_j = Q_{j-1} + ((j-1)/j) A_j A_j'
    Xbar_j = ((j-1) Xbar_{j-1} + X_j) / j,     S_j = Q_j / (j-1)

so the state stays O(p^2) regardless of stream length, and the parameter
estimates are refreshed from (Xbar_j, Q_j). Alarmed observations are never
absorbed; after an alarm the state freezes until the caller resumes it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import chart as _chart
from .core_stats import TraceEstimates, make_trace_estimates
from .errors import (
    DegenerateVariableError,
    DimensionError,
    IllConditionedEstimateError,
    InsufficientDataError,
)
from .robust import RobustConfig, rmdp_estimate

STATE_FORMAT_VERSION = 1


@dataclass
class SelfStartState:
    """Evolving state of the unified Phase I / Phase II procedure."""

    j: int
    xbar: np.ndarray
    q_mat: np.ndarray
    params: _chart.ProcessParameters
    config: _chart.ChartConfig
    source: str
    refresh_every: int = 1
    stale: bool = False
    tripped: bool = False
    state_version: int = 0
    _since_refresh: int = field(default=0, repr=False)

    @property
    def p(self) -> int:
        return self.xbar.size


@dataclass
class MonitorOutcome:
    point: _chart.ChartPoint
    absorbed: bool
    state_version: int


@dataclass
class RunRecord:
    """Result of streaming a sequence through the chart: 1-based index of
    the first alarm (None if censored at stream end) and all points."""

    first_signal: Optional[int]
    points: list
    censored: bool

    @property
    def run_length(self) -> int:
        return self.first_signal if self.first_signal is not None else len(self.points)


def _refresh_from_moments(
    xbar: np.ndarray,
    q_mat: np.ndarray,
    j: int,
    source: str,
    previous: Optional[TraceEstimates],
) -> tuple[_chart.ProcessParameters, bool]:
    """Parameters from the running moments; falls back to the previous
    traces (marking the result stale) when the trace estimate is
    ill-conditioned at small j."""
    if j < 2:
        raise InsufficientDataError("parameter refresh needs j >= 2")
    s = q_mat / (j - 1)
    d = np.diag(s).copy()
    bad = np.flatnonzero(d <= 0.0)
    if bad.size:
        raise DegenerateVariableError(bad)
    sd = np.sqrt(d)
    r = s / np.outer(sd, sd)
    np.fill_diagonal(r, 1.0)
    stale = False
    try:
        traces = make_trace_estimates(r, j)
    except IllConditionedEstimateError:
        if previous is None:
            raise
        traces = previous
        stale = True
    params = _chart.ProcessParameters(mu=xbar.copy(), d_diag=d, traces=traces, source=source)
    return params, stale


def init_state(
    phase1,
    config: _chart.ChartConfig,
    robust: bool = False,
    robust_cfg: Optional[RobustConfig] = None,
    refresh_every: int = 1,
) -> SelfStartState:
    """Seed the state from Phase I data.

    With robust=True the robust pass runs first and only its unflagged
    rows seed the moments, so the initial parameters coincide with the
    robust estimates. No covariance inversion is involved anywhere, so
    p > m is fine.
    """
    data = np.asarray(phase1, dtype=float)
    if data.ndim != 2:
        raise DimensionError("phase1 must be a 2-D matrix")
    if data.shape[0] < 2:
        raise InsufficientDataError("phase1 needs at least 2 rows")
    if refresh_every < 1:
        raise ValueError("refresh_every must be >= 1")
    source = _chart.SOURCE_CLASSICAL
    if robust:
        est = rmdp_estimate(data, robust_cfg)
        data = data[est.subset_indices]
        source = _chart.SOURCE_ROBUST

    j = data.shape[0]
    xbar = data.mean(axis=0)
    centered = data - xbar
    q_mat = centered.T @ centered
    q_mat = 0.5 * (q_mat + q_mat.T)
    params, stale = _refresh_from_moments(xbar, q_mat, j, source, previous=None)
    return SelfStartState(
        j=j, xbar=xbar, q_mat=q_mat, params=params, config=config,
        source=source, refresh_every=refresh_every, stale=stale,
    )


def update_state(state: SelfStartState, x) -> SelfStartState:
    """Absorb one observation into the running moments (in place)."""
    x = np.asarray(x, dtype=float)
    if x.shape != state.xbar.shape:
        raise DimensionError(f"observation has shape {x.shape}, expected {state.xbar.shape}")
    j_new = state.j + 1
    a = x - state.xbar
    state.q_mat += (state.j / j_new) * np.outer(a, a)
    state.xbar = (state.j * state.xbar + x) / j_new
    state.j = j_new
    return state


def refresh_params(state: SelfStartState) -> _chart.ProcessParameters:
    """Recompute parameters from the current moments (deterministic)."""
    params, stale = _refresh_from_moments(
        state.xbar, state.q_mat, state.j, state.source, previous=state.params.traces
    )
    state.params = params
    state.stale = stale
    return params


def monitor_step(state: SelfStartState, x) -> MonitorOutcome:
    """Chart one observation; absorb it and refresh only if in control.

    A signalling step leaves the state untouched and freezes it; call
    resume() before monitoring further.
    """
    if state.tripped:
        raise RuntimeError("state is frozen after a signal; call resume() first")
    point = _chart.evaluate_point(state.j + 1, x, state.params, state.config)
    if point.signal:
        state.tripped = True
        return MonitorOutcome(point=point, absorbed=False, state_version=state.state_version)
    update_state(state, x)
    state._since_refresh += 1
    if state._since_refresh >= state.refresh_every:
        refresh_params(state)
        state._since_refresh = 0
    state.state_version += 1
    return MonitorOutcome(point=point, absorbed=True, state_version=state.state_version)


def resume(state: SelfStartState) -> SelfStartState:
    """Explicitly clear the frozen-after-signal latch."""
    state.tripped = False
    return state


def run_stream(state: SelfStartState, observations: Sequence) -> RunRecord:
    """Monitor a sequence until the first alarm or the stream ends."""
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[None, :]
    if obs.shape[0] == 0:
        raise InsufficientDataError("run_stream needs a nonempty sequence")
    points = []
    for i in range(obs.shape[0]):
        outcome = monitor_step(state, obs[i])
        points.append(outcome.point)
        if outcome.point.signal:
            return RunRecord(first_signal=i + 1, points=points, censored=False)
    return RunRecord(first_signal=None, points=points, censored=True)


def state_to_json(state: SelfStartState) -> str:
    """Serialize the state to a versioned JSON document."""
    t = state.params.traces
    doc = {
        "format_version": STATE_FORMAT_VERSION,
        "j": state.j,
        "xbar": state.xbar.tolist(),
        "q": state.q_mat.tolist(),
        "alpha": state.config.alpha,
        "cf_order": state.config.cf_order,
        "apply_correction": state.config.apply_correction,
        "source": state.source,
        "refresh_every": state.refresh_every,
        "stale": state.stale,
        "tripped": state.tripped,
        "state_version": state.state_version,
        "traces": {
            "p": t.p, "m_eff": t.m_eff, "tr2_hat": t.tr2_hat,
            "tr3_hat": t.tr3_hat, "tr4_hat": t.tr4_hat, "c_pm": t.c_pm,
        },
    }
    return json.dumps(doc)


def state_from_json(text: str) -> SelfStartState:
    """Rebuild a state from its JSON snapshot."""
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != STATE_FORMAT_VERSION:
        raise ValueError(f"unsupported state format_version: {version}")
    config = _chart.ChartConfig(
        alpha=doc["alpha"],
        cf_order=doc["cf_order"],
        apply_correction=doc.get("apply_correction", True),
    )
    t = doc["traces"]
    traces = TraceEstimates(
        p=t["p"], m_eff=t["m_eff"], tr2_hat=t["tr2_hat"],
        tr3_hat=t["tr3_hat"], tr4_hat=t.get("tr4_hat"), c_pm=t["c_pm"],
    )
    xbar = np.asarray(doc["xbar"], dtype=float)
    q_mat = np.asarray(doc["q"], dtype=float)
    j = int(doc["j"])
    s = q_mat / (j - 1)
    params = _chart.ProcessParameters(
        mu=xbar.copy(), d_diag=np.diag(s).copy(), traces=traces, source=doc["source"]
    )
    return SelfStartState(
        j=j, xbar=xbar, q_mat=q_mat, params=params, config=config,
        source=doc["source"], refresh_every=int(doc.get("refresh_every", 1)),
        stale=bool(doc.get("stale", False)), tripped=bool(doc.get("tripped", False)),
        state_version=int(doc.get("state_version", 0)),
    )
