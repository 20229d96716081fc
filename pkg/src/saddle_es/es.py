"""(1+1) evolution strategy with multiplicative 1/5-success-rule step-size control.

One offspring per iteration, sampled isotropically around the mean; the mean
moves only when the offspring is not worse (ties accept).  A success multiplies
the step size by alpha, a failure by alpha**-0.25, so one success balances four
failures at the 1/5 success rate.

Randomness contract: streams are ``numpy.random.Generator`` instances (use
``numpy.random.default_rng(seed)``, i.e. PCG64).  Every iteration consumes
exactly d standard normal draws in component order 1..d.  ``run`` may prefetch
draws from the stream in blocks; the values used for iteration t are always the
same d normals regardless of the block size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .objective import SaddleProblem

GENERATOR_NAME = "numpy-pcg64"

TARGET = "target"
BUDGET = "budget"
UNDERFLOW = "underflow"

_BLOCK = 256


@dataclass(frozen=True)
class EsParams:
    """Strategy parameters: step-size factor, iteration budget, underflow guard."""

    alpha: float = 1.5
    max_iters: int = 100_000
    sigma_min: float = 1e-300

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError("alpha must be > 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not self.sigma_min > 0.0:
            raise ValueError("sigma_min must be positive")


@dataclass(frozen=True)
class EsState:
    """Algorithm state: mean, step size, iteration counter (search-space units)."""

    m: np.ndarray
    sigma: float
    t: int = 0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.ndim != 1:
            raise ValueError("mean must be a one-dimensional point")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass(frozen=True)
class StepOutcome:
    accepted: bool
    offspring: np.ndarray
    new_state: EsState


@dataclass
class TraceRecord:
    t: int
    m: np.ndarray
    sigma: float
    f_value: float
    accepted: Optional[bool]  # None for the initial record


@dataclass
class RunTrace:
    """Recorded iterations of one run plus terminal bookkeeping.

    ``records`` is decimated unless the run was started with record_every=1;
    it always contains the initial state, every acceptance, and the final
    state.  ``t_escape`` is the first iteration with f(m) < 0, or None.
    """

    records: list
    reason: str
    final_state: EsState
    t_escape: Optional[int]
    n_accepts: int
    n_rejects: int

    @property
    def t_final(self) -> int:
        return self.final_state.t

    def f_values(self) -> np.ndarray:
        return np.array([r.f_value for r in self.records])

    def summary_dict(self, seed=None, params: Optional[EsParams] = None,
                     problem: Optional[SaddleProblem] = None) -> dict:
        out = {
            "generator": GENERATOR_NAME,
            "seed": seed,
            "reason": self.reason,
            "t_final": int(self.t_final),
            "t_escape": None if self.t_escape is None else int(self.t_escape),
            "f_final": float(self.records[-1].f_value),
            "sigma_final": float(self.final_state.sigma),
            "n_accepts": int(self.n_accepts),
            "n_rejects": int(self.n_rejects),
        }
        if params is not None:
            out["params"] = {"alpha": params.alpha, "max_iters": params.max_iters,
                             "sigma_min": params.sigma_min}
        if problem is not None:
            out["problem"] = problem.to_dict()
        return out


StopCondition = Callable[[SaddleProblem, EsState], bool]


def target_reached(problem: SaddleProblem, state: EsState) -> bool:
    """Default stop condition: the mean has strictly negative objective value."""
    return problem.evaluate(state.m) < 0.0


def sample_offspring(state: EsState, rng: np.random.Generator) -> np.ndarray:
    """m + sigma * z with z a vector of d independent standard normals.

    Consumes exactly d draws from ``rng``; this fixed consumption enables
    coupled-trajectory comparisons across runs sharing a seed.
    """
    return state.m + state.sigma * rng.standard_normal(state.m.size)


def step(problem: SaddleProblem, params: EsParams, state: EsState,
         rng: np.random.Generator) -> StepOutcome:
    """One iteration: sample, compare (ties accept), adapt the step size."""
    if not state.sigma > params.sigma_min:
        raise ValueError("step size already at or below sigma_min")
    offspring = sample_offspring(state, rng)
    accepted = problem.evaluate(offspring) <= problem.evaluate(state.m)
    if accepted:
        new_state = EsState(m=offspring, sigma=state.sigma * params.alpha, t=state.t + 1)
    else:
        new_state = EsState(m=state.m, sigma=state.sigma * params.alpha ** -0.25, t=state.t + 1)
    return StepOutcome(accepted=accepted, offspring=offspring, new_state=new_state)


def run(problem: SaddleProblem, params: EsParams, init: EsState,
        rng: np.random.Generator, stop: Optional[StopCondition] = target_reached,
        record_every: int = 100) -> RunTrace:
    """Iterate until the stop condition fires, the budget runs out, or the
    step size underflows ``params.sigma_min``.

    ``stop`` is checked before each iteration (a satisfied initial state
    terminates at t = init.t with reason "target"); ``stop=None`` runs to the
    budget.  ``record_every=k`` keeps every k-th iteration plus all
    acceptances; ``record_every=0`` keeps only the initial and final states.
    Underflow is reported as a terminal reason, never raised.
    """
    if init.m.size != problem.d:
        raise ValueError(f"initial mean has dimension {init.m.size}, expected {problem.d}")
    if not init.sigma > params.sigma_min:
        raise ValueError("initial sigma must exceed sigma_min")
    if record_every < 0:
        raise ValueError("record_every must be nonnegative")

    a = problem.a
    d = problem.d
    m = np.array(init.m, dtype=float)
    sigma = float(init.sigma)
    fm = float(np.square(m) @ a)
    t = init.t
    t_escape = t if fm < 0.0 else None
    n_accepts = n_rejects = 0
    records = [TraceRecord(t, m.copy(), sigma, fm, None)]
    last_accepted: Optional[bool] = None

    fast_target = stop is target_reached
    dec = params.alpha ** -0.25
    buf = None
    k = _BLOCK

    while True:
        if fast_target:
            hit = fm < 0.0
        else:
            hit = stop is not None and stop(problem, EsState(m=m, sigma=sigma, t=t))
        if hit:
            reason = TARGET
            break
        if t - init.t >= params.max_iters:
            reason = BUDGET
            break
        if k >= _BLOCK:
            buf = rng.standard_normal((_BLOCK, d))
            k = 0
        x = m + sigma * buf[k]
        k += 1
        fx = float(np.square(x) @ a)
        t += 1
        if fx <= fm:
            last_accepted = True
            m = x
            fm = fx
            sigma *= params.alpha
            n_accepts += 1
            if t_escape is None and fm < 0.0:
                t_escape = t
        else:
            last_accepted = False
            sigma *= dec
            n_rejects += 1
        if sigma < params.sigma_min:
            reason = UNDERFLOW
            break
        if record_every and (last_accepted or (t - init.t) % record_every == 0):
            records.append(TraceRecord(t, m.copy(), sigma, fm, last_accepted))

    if records[-1].t != t:
        records.append(TraceRecord(t, m.copy(), sigma, fm, last_accepted))
    final_state = EsState(m=m, sigma=sigma, t=t)
    return RunTrace(records=records, reason=reason, final_state=final_state,
                    t_escape=t_escape, n_accepts=n_accepts, n_rejects=n_rejects)
