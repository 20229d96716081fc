"""Escape-time experiments, survival-curve diagnostics, and drift maps.

Trials and grid points are independent tasks on derived streams (see
``estimators.task_seed``).  Aggregation is in task order, so results are
bit-identical for any thread count given the same master seed.
"""

from __future__ import annotations

import concurrent.futures
import math
import multiprocessing
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .es import GENERATOR_NAME, TARGET, UNDERFLOW, EsParams, EsState, run, target_reached
from .estimators import (
    SALT_DRIFT_PHI,
    SALT_DRIFT_V,
    SALT_DRIFT_W,
    SALT_TRIAL,
    GridPointEstimate,
    GridSpec,
    drift_phi,
    drift_v,
    drift_w,
    task_seed,
)
from .normalization import NormalizedState, sample_M_plus_0
from .objective import RegionLabel, SaddleProblem


def _mean_on_shell(problem: SaddleProblem, w: float) -> np.ndarray:
    """Deterministic mean with norm_plus = 1 and norm_minus = w, any w >= 0.

    Same construction as the deterministic sample_M_plus_0, without the
    compact-shell cap: w > 1 starts inside the negative region.
    """
    if w < 0.0:
        raise ValueError("w must be nonnegative")
    m = np.zeros(problem.d)
    m[0] = w / math.sqrt(-problem.a[0])
    m[problem.b] = 1.0 / math.sqrt(problem.a[problem.b])
    return m

ESCAPED = "escaped"
CENSORED = "censored"
UNDERFLOWED = "underflow"

# Reporting-only fallback weight for the combined potential before the
# constants pipeline has produced beta = -C / (2 B1).
DEFAULT_BETA_FALLBACK = 0.1

# Premature-convergence risk is highest when the normalized step size starts
# tiny, so escape experiments sweep it by default.
DEFAULT_SIGMA0_SWEEP = (1e-3, 1e-1, 1.0, 10.0)


def default_budget(problem: SaddleProblem) -> int:
    """Iteration budget heuristic growing with the conditioning of the saddle.

    10^5 * max(1, cond / 10) with cond the ratio of the largest positive to the
    smallest-magnitude negative coefficient (|a2/a1| in the 2-D case).  A crude
    artifact-level choice, adjustable wherever a budget is accepted.
    """
    cond = float(np.max(problem.a[problem.b:]) / np.min(-problem.a[: problem.b]))
    return int(100_000 * max(1.0, cond / 10.0))


@dataclass(frozen=True)
class EscapeExperimentSpec:
    """Escape experiment: repeated independent runs from one initial family.

    The initial mean sits on the norm_plus = 1 shell at norm_minus = w0
    (deterministic parametrization, so sigma_tilde0 is also the raw initial
    step size); w0 in [0, 1] covers the compact shell, larger values start
    inside the negative region.
    """

    problem: SaddleProblem
    params: EsParams
    w0: float = 0.0
    sigma_tilde0: float = 1.0
    trials: int = 1000
    budget: int = 1_000_000
    master_seed: int = 0

    def __post_init__(self):
        if self.w0 < 0.0:
            raise ValueError("w0 must be nonnegative")
        if not self.sigma_tilde0 > 0.0:
            raise ValueError("sigma_tilde0 must be positive")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.master_seed < 0:
            raise ValueError("master seed must be nonnegative")

    def initial_state(self) -> EsState:
        return EsState(m=_mean_on_shell(self.problem, self.w0),
                       sigma=self.sigma_tilde0)


@dataclass(frozen=True)
class TailFit:
    """Least-squares line through log S(t) over a survival range.

    A goodness-of-line diagnostic, not a hypothesis test.  ``rate`` is the
    negated slope (nan when fewer than 3 curve points fall in the range).
    """

    rate: float
    intercept: float
    r_squared: float
    n_points: int
    s_range: tuple

    def to_dict(self) -> dict:
        return {"rate": self.rate, "intercept": self.intercept,
                "r_squared": self.r_squared, "n_points": self.n_points,
                "s_range": list(self.s_range)}


@dataclass
class HittingTimeStats:
    """Per-trial escape times plus survival-curve summaries.

    Counts are primary (they sum to ``trials`` exactly); fractions are derived.
    ``times`` holds the first iteration in the negative region for escaped
    trials, the budget for censored trials, and the stopping iteration for
    step-size-underflow trials.  An underflow count > 0 flags premature
    convergence, which the escape model predicts cannot happen.
    """

    statuses: list
    times: np.ndarray
    n_escaped: int
    n_censored: int
    n_underflow: int
    quantiles: dict
    survival_t: np.ndarray
    survival_s: np.ndarray
    tail: Optional[TailFit]
    trials: int
    budget: int
    master_seed: int

    @property
    def escape_fraction(self) -> float:
        return self.n_escaped / self.trials

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.trials

    @property
    def underflow_fraction(self) -> float:
        return self.n_underflow / self.trials

    @property
    def premature_convergence_detected(self) -> bool:
        return self.n_underflow > 0

    def to_dict(self) -> dict:
        return {
            "generator": GENERATOR_NAME,
            "seed": self.master_seed,
            "trials": self.trials,
            "budget": self.budget,
            "n_escaped": self.n_escaped,
            "n_censored": self.n_censored,
            "n_underflow": self.n_underflow,
            "escape_fraction": self.escape_fraction,
            "censored_fraction": self.censored_fraction,
            "underflow_fraction": self.underflow_fraction,
            "premature_convergence_detected": self.premature_convergence_detected,
            "quantiles": self.quantiles,
            "tail": None if self.tail is None else self.tail.to_dict(),
        }

    def survival_rows(self):
        return [(int(t), float(s)) for t, s in zip(self.survival_t, self.survival_s)]


def _escape_trial(spec: EscapeExperimentSpec, idx: int) -> tuple[str, int]:
    rng = np.random.default_rng(task_seed(spec.master_seed, idx, SALT_TRIAL))
    params = replace(spec.params, max_iters=spec.budget)
    trace = run(spec.problem, params, spec.initial_state(), rng,
                stop=target_reached, record_every=0)
    if trace.reason == TARGET:
        return ESCAPED, int(trace.t_escape)
    if trace.reason == UNDERFLOW:
        return UNDERFLOWED, int(trace.t_final)
    return CENSORED, int(spec.budget)


def _escape_trial_star(args) -> tuple[str, int]:
    return _escape_trial(*args)


def _map_tasks(fn, args_list, threads: int):
    """Run tasks in order-preserving fashion, optionally on a fork pool."""
    if threads <= 1 or len(args_list) <= 1:
        return [fn(args) for args in args_list]
    ctx = multiprocessing.get_context("fork")
    chunk = max(1, len(args_list) // (threads * 8))
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as ex:
        return list(ex.map(fn, args_list, chunksize=chunk))


def survival_curve(times: np.ndarray, escaped_mask: np.ndarray):
    """Empirical survival S(t) = fraction of trials with escape time > t,
    evaluated at the distinct escape times.  Non-escaped trials never count as
    escaped, so they hold the curve up.
    """
    finite = np.asarray(times)[np.asarray(escaped_mask)]
    if finite.size == 0:
        return np.array([], dtype=int), np.array([])
    t_values = np.unique(finite)
    total = len(times)
    # count escapes at times <= t via cumulative counts over the sorted values
    counts = np.array([np.count_nonzero(finite <= t) for t in t_values])
    s = 1.0 - counts / total
    return t_values.astype(int), s


def fit_exponential_tail(t: np.ndarray, s: np.ndarray,
                         s_range: tuple = (0.01, 0.5)) -> TailFit:
    """Fit log S(t) = intercept - rate * t over the points with S in ``s_range``."""
    lo, hi = s_range
    if not 0.0 < lo < hi <= 1.0:
        raise ValueError("survival fit range must satisfy 0 < low < high <= 1")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    mask = (s >= lo) & (s <= hi) & (s > 0.0)
    n_points = int(np.count_nonzero(mask))
    if n_points < 3:
        return TailFit(rate=math.nan, intercept=math.nan, r_squared=math.nan,
                       n_points=n_points, s_range=tuple(s_range))
    x = t[mask]
    y = np.log(s[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float((y - y.mean()) @ (y - y.mean()))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0.0 else math.nan
    return TailFit(rate=float(-slope), intercept=float(intercept), r_squared=r2,
                   n_points=n_points, s_range=tuple(s_range))


def run_escape_experiment(spec: EscapeExperimentSpec, threads: int = 1,
                          fit_s_range: tuple = (0.01, 0.5)) -> HittingTimeStats:
    """Run ``spec.trials`` independent escape trials and summarize them.

    Trials are embarrassingly parallel; per-trial traces are discarded, only
    the escape time and terminal reason are kept.
    """
    results = _map_tasks(_escape_trial_star,
                         [(spec, i) for i in range(spec.trials)], threads)
    statuses = [status for status, _ in results]
    times = np.array([t for _, t in results], dtype=int)
    escaped_mask = np.array([s == ESCAPED for s in statuses])
    n_escaped = int(np.count_nonzero(escaped_mask))
    n_censored = statuses.count(CENSORED)
    n_underflow = statuses.count(UNDERFLOWED)

    escaped_times = times[escaped_mask]
    if escaped_times.size:
        quantiles = {f"p{int(q * 100)}": float(np.quantile(escaped_times, q))
                     for q in (0.1, 0.5, 0.9, 0.99)}
    else:
        quantiles = {}
    surv_t, surv_s = survival_curve(times, escaped_mask)
    tail = fit_exponential_tail(surv_t, surv_s, fit_s_range) if surv_t.size else None
    return HittingTimeStats(statuses=statuses, times=times,
                            n_escaped=n_escaped, n_censored=n_censored,
                            n_underflow=n_underflow, quantiles=quantiles,
                            survival_t=surv_t, survival_s=surv_s, tail=tail,
                            trials=spec.trials, budget=spec.budget,
                            master_seed=spec.master_seed)


def run_sigma0_sweep(spec: EscapeExperimentSpec,
                     sigma0_values=DEFAULT_SIGMA0_SWEEP,
                     threads: int = 1) -> dict:
    """Escape experiments over a sweep of initial normalized step sizes.

    Returns {sigma0: HittingTimeStats}; each sweep point reuses the spec with
    only sigma_tilde0 replaced, so the per-trial streams are shared across
    sweep points and differences are attributable to the initial step size.
    """
    return {float(s): run_escape_experiment(replace(spec, sigma_tilde0=float(s)),
                                            threads=threads)
            for s in sigma0_values}


def post_escape_monotonicity(problem: SaddleProblem, trace) -> bool:
    """True iff, after first reaching the negative region, every recorded
    state stays at or below that function value and keeps the NEGATIVE label.

    Requires a trace that escaped (t_escape set); raises otherwise.
    """
    if trace.t_escape is None:
        raise ValueError("trace never reached the negative region")
    idx = next(i for i, r in enumerate(trace.records) if r.f_value < 0.0)
    f_ref = trace.records[idx].f_value
    for rec in trace.records[idx + 1:]:
        if rec.f_value > f_ref:
            return False
        if problem.classify(rec.m) is not RegionLabel.NEGATIVE:
            return False
    return True


_QUANTITY_SALTS = {"V": SALT_DRIFT_V, "W": SALT_DRIFT_W, "Phi": SALT_DRIFT_PHI}


def _drift_point(args) -> GridPointEstimate:
    (problem, params, w, m_tilde, sigma, quantity, beta, n, seed, confidence) = args
    rng = np.random.default_rng(seed)
    ns = NormalizedState(m_tilde, sigma)
    if quantity == "V":
        est = drift_v(problem, params, ns, n, rng, confidence)
    elif quantity == "W":
        est = drift_w(problem, params, ns, n, rng, confidence)
    else:
        est = drift_phi(problem, params, ns, beta, n, rng, confidence)
    return GridPointEstimate(w=w, sigma_tilde=sigma, est=est)


def drift_map(problem: SaddleProblem, params: EsParams, quantity: str,
              grid: GridSpec | None = None, n: int = 100_000,
              master_seed: int = 0, beta: Optional[float] = None,
              confidence: float = 0.99, threads: int = 1) -> list:
    """Evaluate one drift quantity ("V", "W", or "Phi") on the full (w, sigma~)
    grid, one derived stream per point, rows in grid order (w-major).

    The V and W maps use the same per-point streams as the constants pipeline,
    so their measurements agree for the same master seed, grid, and n.
    """
    quantity = {"v": "V", "w": "W", "phi": "Phi"}.get(quantity.lower())
    if quantity is None:
        raise ValueError("quantity must be one of V, W, Phi")
    if quantity == "Phi" and beta is None:
        beta = DEFAULT_BETA_FALLBACK
    grid = grid if grid is not None else GridSpec.default()
    salt = _QUANTITY_SALTS[quantity]
    n_sigma = grid.sigma_values.size
    tasks = []
    for i, w in enumerate(grid.w_values):
        m_tilde = sample_M_plus_0(problem, float(w))
        for j, sigma in enumerate(grid.sigma_values):
            seed = task_seed(master_seed, i * n_sigma + j, salt)
            tasks.append((problem, params, float(w), m_tilde, float(sigma),
                          quantity, beta, n, seed, confidence))
    return _map_tasks(_drift_point, tasks, threads)
