"""Scenario generators and the Monte Carlo run-length engine.

Every replication draws from its own counter-based substream keyed by
(seed, rep index), so results are bit-identical for a given seed no matter
how the replications are scheduled or how many workers run them. The RNG
algorithm is pinned (numpy Philox 4x64) and recorded in result manifests.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import chart as _chart
from .core_stats import correlation, exact_traces, make_trace_estimates, sample_covariance
from .errors import (
    ConfigError,
    DegenerateVariableError,
    EstimationFailureError,
    IllConditionedEstimateError,
)
from .robust import RobustConfig, rmdp_estimate, robust_process_parameters
from .self_starting import init_state, monitor_step, resume

RNG_ALGORITHM = "philox4x64"

STRUCTURE_IDENTITY = "identity"
STRUCTURE_AR1 = "ar1"


def substream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic Philox generator keyed by (seed, *key)."""
    entropy = [int(seed)] + [int(k) for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse (seed, *key) into a fresh integer seed for sub-experiments."""
    entropy = [int(seed)] + [int(k) for k in key]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@dataclass
class Scenario:
    """In-control data model: dimension, correlation structure, mean."""

    p: int
    structure: str = STRUCTURE_IDENTITY
    a: float = 0.0
    mu: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("scenario.p", f"must be >= 1, got {self.p}")
        if self.structure not in (STRUCTURE_IDENTITY, STRUCTURE_AR1):
            raise ConfigError("scenario.structure", f"unknown value {self.structure!r}")
        if self.structure == STRUCTURE_AR1 and not 0.0 <= self.a < 1.0:
            raise ConfigError("scenario.a", f"must be in [0, 1), got {self.a}")
        if self.mu is not None:
            self.mu = np.asarray(self.mu, dtype=float)
            if self.mu.shape != (self.p,):
                raise ConfigError("scenario.mu", f"must have length p={self.p}")
        if not self.name:
            tag = "identity" if self.structure == STRUCTURE_IDENTITY else f"ar1({self.a})"
            self.name = f"{tag}, p={self.p}"


def correlation_matrix(scenario: Scenario) -> np.ndarray:
    """In-control correlation matrix of the scenario."""
    if scenario.structure == STRUCTURE_IDENTITY or scenario.a == 0.0:
        return np.eye(scenario.p)
    idx = np.arange(scenario.p)
    return scenario.a ** np.abs(idx[:, None] - idx[None, :])


def known_parameters(scenario: Scenario) -> _chart.ProcessParameters:
    """Exact chart parameters for the scenario (unit variances)."""
    return _chart.ProcessParameters(
        mu=scenario.mu if scenario.mu is not None else np.zeros(scenario.p),
        d_diag=np.ones(scenario.p),
        traces=exact_traces(correlation_matrix(scenario)),
        source=_chart.SOURCE_KNOWN,
    )


def sample_batch(scenario: Scenario, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n observations; AR(1) rows are built by the exact recursion
    X_1 = e_1, X_j = a X_{j-1} + sqrt(1-a^2) e_j, giving corr a^{|i-j|}
    with unit variances."""
    eps = rng.standard_normal((n, scenario.p))
    if scenario.structure == STRUCTURE_AR1 and scenario.a != 0.0:
        a = scenario.a
        s = math.sqrt(1.0 - a * a)
        x = np.empty_like(eps)
        x[:, 0] = eps[:, 0]
        for jcol in range(1, scenario.p):
            x[:, jcol] = a * x[:, jcol - 1] + s * eps[:, jcol]
    else:
        x = eps
    if scenario.mu is not None:
        x = x + scenario.mu
    return x


def sample_observation(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Single draw from the scenario."""
    return sample_batch(scenario, 1, rng)[0]


@dataclass
class ShiftModel:
    """Mean shift: a magnitude applied to a coordinate set given either as
    a fraction (the first round(fraction*p) variables) or explicitly."""

    delta: float
    fraction: Optional[float] = None
    coords: Optional[Sequence[int]] = None

    def __post_init__(self):
        if (self.fraction is None) == (self.coords is None):
            raise ConfigError("shift", "give exactly one of fraction or coords")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ConfigError("shift.fraction", f"must be in (0, 1], got {self.fraction}")

    def delta_vector(self, p: int) -> np.ndarray:
        vec = np.zeros(p)
        if self.coords is not None:
            idx = np.asarray(self.coords, dtype=int)
            if idx.size and (idx.min() < 0 or idx.max() >= p):
                raise ConfigError("shift.coords", f"indices must lie in 0..{p - 1}")
        else:
            idx = np.arange(int(round(self.fraction * p)))
        vec[idx] = self.delta
        return vec


def shift_for_eta(eta_target: float, scenario: Scenario) -> ShiftModel:
    """Uniform shift over all coordinates whose true noncentrality equals
    eta_target under the scenario's exact parameters."""
    if eta_target <= 0.0:
        raise ConfigError("eta_target", f"must be positive, got {eta_target}")
    params = known_parameters(scenario)
    tr2 = params.traces.tr2_hat
    delta = math.sqrt(eta_target * math.sqrt(2.0 * tr2) / scenario.p)
    return ShiftModel(delta=delta, fraction=1.0)


@dataclass
class ContaminationModel:
    """Phase I contamination: floor(m * rate) rows get the shift applied."""

    rate: float
    shift: ShiftModel

    def __post_init__(self):
        if not 0.0 <= self.rate < 0.5:
            raise ConfigError("contamination.rate", f"must be in [0, 0.5), got {self.rate}")

    def apply(self, phase1: np.ndarray) -> np.ndarray:
        k = int(math.floor(phase1.shape[0] * self.rate))
        if k:
            phase1 = phase1.copy()
            phase1[:k] += self.shift.delta_vector(phase1.shape[1])
        return phase1


@dataclass
class ArlResult:
    """Estimated average run length with its Monte Carlo standard error."""

    arl_hat: float
    std_err: float
    n_reps: int
    censored: int
    skipped: int
    descriptors: dict
    seed: int
    wall_time: float = 0.0


MODE_KNOWN = "known"
MODE_CLASSICAL = "classical"
MODE_ROBUST = "robust"
_MODES = (MODE_KNOWN, MODE_CLASSICAL, MODE_ROBUST)

_SKIPPABLE = (EstimationFailureError, IllConditionedEstimateError, DegenerateVariableError)


def _phase1_parameters(
    scenario: Scenario,
    mode: str,
    phase1_size: int,
    contamination: Optional[ContaminationModel],
    rng: np.random.Generator,
    robust_seed: int,
    robust_cfg: Optional[RobustConfig],
) -> _chart.ProcessParameters:
    phase1 = sample_batch(scenario, phase1_size, rng)
    if contamination is not None:
        phase1 = contamination.apply(phase1)
    if mode == MODE_ROBUST:
        cfg = robust_cfg if robust_cfg is not None else RobustConfig()
        cfg = RobustConfig(
            h=cfg.h, n_starts=cfg.n_starts, max_c_steps=cfg.max_c_steps,
            outlier_alpha=cfg.outlier_alpha, seed=robust_seed,
        )
        return robust_process_parameters(rmdp_estimate(phase1, cfg))
    cov = sample_covariance(phase1)
    traces = make_trace_estimates(correlation(cov), phase1.shape[0])
    return _chart.ProcessParameters(
        mu=phase1.mean(axis=0), d_diag=cov.d_s, traces=traces,
        source=_chart.SOURCE_CLASSICAL,
    )


def _stream_until_signal(
    scenario: Scenario,
    shift_vec: Optional[np.ndarray],
    params: _chart.ProcessParameters,
    config: _chart.ChartConfig,
    max_len: int,
    rng: np.random.Generator,
) -> tuple[int, bool]:
    """Run length (1-based) of the frozen-parameter chart, censored at
    max_len. Chunked draws keep the generated stream identical to a
    one-at-a-time loop over the same substream."""
    taken = 0
    chunk = 64
    while taken < max_len:
        n = min(chunk, max_len - taken)
        x = sample_batch(scenario, n, rng)
        if shift_vec is not None:
            x += shift_vec
        _, _, _, sig = _chart.evaluate_batch(x, params, config)
        hit = np.flatnonzero(sig)
        if hit.size:
            return taken + int(hit[0]) + 1, False
        taken += n
        chunk = min(chunk * 2, 4096)
    return max_len, True


def _arl_rep_range(args: dict, reps: Sequence[int]) -> list[tuple[int, int, bool, bool]]:
    """Worker: evaluate a block of replications. Returns
    (rep, run_length, censored, skipped) tuples."""
    scenario: Scenario = args["scenario"]
    mode = args["mode"]
    shift: Optional[ShiftModel] = args["shift"]
    contamination = args["contamination"]
    config = _chart.ChartConfig(
        alpha=args["alpha"], cf_order=args["cf_order"],
        apply_correction=args["apply_correction"],
    )
    max_len = args["max_len"]
    seed = args["seed"]
    phase1_size = args["phase1_size"]
    robust_cfg = args["robust_cfg"]
    shift_vec = shift.delta_vector(scenario.p) if shift is not None else None
    known = known_parameters(scenario) if mode == MODE_KNOWN else None

    out = []
    for rep in reps:
        rng = substream(seed, rep)
        if mode == MODE_KNOWN:
            params = known
        else:
            try:
                params = _phase1_parameters(
                    scenario, mode, phase1_size, contamination, rng,
                    robust_seed=derive_seed(seed, rep, 786), robust_cfg=robust_cfg,
                )
            except _SKIPPABLE:
                out.append((rep, 0, False, True))
                continue
        run_len, censored = _stream_until_signal(
            scenario, shift_vec, params, config, max_len, rng
        )
        out.append((rep, run_len, censored, False))
    return out


def run_arl(
    scenario: Scenario,
    alpha: float,
    cf_order: int = 1,
    apply_correction: bool = True,
    shift: Optional[ShiftModel] = None,
    mode: str = MODE_KNOWN,
    phase1_size: int = 200,
    contamination: Optional[ContaminationModel] = None,
    n_reps: int = 10_000,
    max_len: Optional[int] = None,
    seed: int = 0,
    threads: int = 1,
    robust_cfg: Optional[RobustConfig] = None,
) -> ArlResult:
    """Monte Carlo ARL of the chart with frozen post-Phase-I parameters.

    Each replication generates its own Phase I sample (for the estimated
    modes), optionally contaminated, then streams shifted Phase II
    observations until the first alarm or max_len (default 50/alpha).
    Replications whose estimation fails are skipped; a skip rate above 1%
    aborts the experiment.
    """
    if mode not in _MODES:
        raise ConfigError("mode", f"must be one of {_MODES}, got {mode!r}")
    if n_reps < 1:
        raise ConfigError("n_reps", "must be >= 1")
    if max_len is None:
        max_len = int(math.ceil(50.0 / alpha))
    args = {
        "scenario": scenario, "mode": mode, "shift": shift,
        "contamination": contamination, "alpha": alpha, "cf_order": cf_order,
        "apply_correction": apply_correction, "max_len": max_len, "seed": seed,
        "phase1_size": phase1_size, "robust_cfg": robust_cfg,
    }
    t0 = time.perf_counter()
    rows: list[tuple[int, int, bool, bool]] = []
    if threads > 1:
        blocks = np.array_split(np.arange(n_reps), threads * 4)
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_arl_rep_range, args, blk.tolist())
                       for blk in blocks if blk.size]
            for fut in futures:
                rows.extend(fut.result())
    else:
        rows = _arl_rep_range(args, range(n_reps))
    rows.sort(key=lambda r: r[0])

    lengths = np.array([r[1] for r in rows if not r[3]], dtype=float)
    censored = sum(1 for r in rows if r[2])
    skipped = sum(1 for r in rows if r[3])
    if skipped > 0.01 * n_reps:
        raise EstimationFailureError(
            f"{skipped}/{n_reps} replications failed estimation (> 1%)"
        )
    if lengths.size == 0:
        raise EstimationFailureError("no replication completed")
    arl = float(lengths.mean())
    se = float(lengths.std(ddof=1) / math.sqrt(lengths.size)) if lengths.size > 1 else 0.0
    descriptors = {
        "scenario": scenario.name, "p": scenario.p, "structure": scenario.structure,
        "a": scenario.a, "alpha": alpha, "cf_order": cf_order,
        "apply_correction": apply_correction, "mode": mode,
        "phase1_size": phase1_size if mode != MODE_KNOWN else None,
        "contamination_rate": contamination.rate if contamination else 0.0,
        "shift_delta": shift.delta if shift else 0.0,
        "max_len": max_len, "rng": RNG_ALGORITHM,
    }
    return ArlResult(
        arl_hat=arl, std_err=se, n_reps=int(lengths.size), censored=censored,
        skipped=skipped, descriptors=descriptors, seed=seed,
        wall_time=time.perf_counter() - t0,
    )


def correlation_sensitivity(
    p_grid: Sequence[int],
    a_grid: Sequence[float],
    alpha: float,
    n_reps: int = 10_000,
    seed: int = 0,
    cf_order: int = 1,
    max_len: Optional[int] = None,
    threads: int = 1,
) -> list[ArlResult]:
    """In-control ARL over a (p, a) grid with known AR(1) parameters."""
    results = []
    point = 0
    for p in p_grid:
        for a in a_grid:
            scenario = Scenario(p=p, structure=STRUCTURE_AR1, a=a)
            res = run_arl(
                scenario, alpha=alpha, cf_order=cf_order, mode=MODE_KNOWN,
                n_reps=n_reps, max_len=max_len,
                seed=derive_seed(seed, point), threads=threads,
            )
            res.descriptors["grid_point"] = point
            results.append(res)
            point += 1
    return results


PREALARM_IGNORE = "ignore"
PREALARM_RESTART = "restart"


def _one_learning_rep(
    scenario: Scenario,
    tau: int,
    shift_vec: np.ndarray,
    alpha: float,
    cf_order: int,
    phase1_size: int,
    max_post: int,
    seed: int,
    point: int,
    rep: int,
    prealarm: str,
    refresh_every: int,
    max_restarts: int = 10_000,
) -> tuple[int, bool, int]:
    """One learning-time replication: tau monitored in-control steps, then
    shifted observations until the first alarm. Returns (post-shift run
    length, censored, pre-tau alarm count)."""
    config = _chart.ChartConfig(alpha=alpha, cf_order=cf_order, apply_correction=True)
    restarts = 0
    attempt = 0
    while True:
        rng = substream(seed, point, rep, attempt)
        phase1 = sample_batch(scenario, phase1_size, rng)
        try:
            state = init_state(phase1, config, robust=False, refresh_every=refresh_every)
        except _SKIPPABLE:
            attempt += 1
            if attempt > max_restarts:
                raise EstimationFailureError("learning-time replication kept failing")
            continue
        survived = True
        for _ in range(tau):
            outcome = monitor_step(state, sample_observation(scenario, rng))
            if outcome.point.signal:
                restarts += 1
                if prealarm == PREALARM_RESTART:
                    survived = False
                    break
                resume(state)  # alarm ignored: not absorbed, keep monitoring
        if not survived:
            attempt += 1
            if attempt > max_restarts:
                raise EstimationFailureError(
                    f"no replication survived tau={tau} within {max_restarts} restarts"
                )
            continue
        for step in range(1, max_post + 1):
            x = sample_observation(scenario, rng) + shift_vec
            outcome = monitor_step(state, x)
            if outcome.point.signal:
                return step, False, restarts
        return max_post, True, restarts


def learning_time_experiment(
    p_grid: Sequence[int],
    tau_grid: Sequence[int],
    eta_target: float,
    alpha: float,
    n_reps: int = 1000,
    seed: int = 0,
    structure: str = STRUCTURE_IDENTITY,
    a: float = 0.0,
    phase1_size: int = 20,
    cf_order: int = 1,
    max_post: Optional[int] = None,
    prealarm: str = PREALARM_IGNORE,
    refresh_every: int = 1,
) -> list[ArlResult]:
    """Out-of-control ARL of the self-starting chart after an in-control
    learning period of length tau, for each (p, tau) grid point.

    The shift is spread equally over all coordinates and sized so the true
    noncentrality equals eta_target. Alarms during the learning period are
    "ignored" by default (the alarmed point is simply not absorbed and
    monitoring continues); prealarm="restart" instead discards the whole
    replication and redraws it, reporting the discard count. Restart
    conditioning is impractical when tau * alpha is large.
    """
    if prealarm not in (PREALARM_IGNORE, PREALARM_RESTART):
        raise ConfigError("prealarm", f"must be ignore or restart, got {prealarm!r}")
    if max_post is None:
        max_post = int(math.ceil(50.0 / alpha))
    results = []
    point = 0
    for p in p_grid:
        scenario = Scenario(p=p, structure=structure, a=a)
        shift_vec = shift_for_eta(eta_target, scenario).delta_vector(p)
        for tau in tau_grid:
            t0 = time.perf_counter()
            lengths = np.empty(n_reps)
            censored = 0
            pre_alarms = 0
            for rep in range(n_reps):
                run_len, cens, restarts = _one_learning_rep(
                    scenario, tau, shift_vec, alpha, cf_order, phase1_size,
                    max_post, seed, point, rep, prealarm, refresh_every,
                )
                lengths[rep] = run_len
                censored += cens
                pre_alarms += restarts
            res = ArlResult(
                arl_hat=float(lengths.mean()),
                std_err=float(lengths.std(ddof=1) / math.sqrt(n_reps)),
                n_reps=n_reps, censored=censored, skipped=0,
                descriptors={
                    "experiment": "learning_time", "p": p, "tau": tau,
                    "eta": eta_target, "alpha": alpha, "cf_order": cf_order,
                    "structure": structure, "a": a, "phase1_size": phase1_size,
                    "prealarm": prealarm, "pre_tau_alarms": pre_alarms,
                    "nominal_arl1": _chart.nominal_arl1(eta_target, alpha),
                    "rng": RNG_ALGORITHM, "grid_point": point,
                },
                seed=seed, wall_time=time.perf_counter() - t0,
            )
            results.append(res)
            point += 1
    return results
