"""Monte Carlo estimators: success probabilities, one-step drifts, drift
constants, and the mirror-pairing verifier.

Drift estimators take one strategy step per sample from the denormalized state
at scale one (norm_plus(m~) = 1 makes the normalized state its own raw state)
and renormalize the successor, because the drifts are one-step quantities.

Grid pipelines derive one independent stream per task from a master seed:
``task seed = master_seed XOR (stage salt + flat task index)``.  Stage salts
keep task indices of different pipeline stages disjoint, so reruns with the
same master seed are bit-identical regardless of scheduling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .es import EsParams
from .normalization import NormalizedState, NormPlusZeroError, in_M_plus_0, sample_M_plus_0
from .objective import SaddleProblem

DEFAULT_CONFIDENCE = 0.99
_CHUNK = 1 << 18

SALT_DRIFT_V = 1 << 24
SALT_DRIFT_W = 2 << 24
SALT_DRIFT_PHI = 3 << 24
SALT_SIGMA40 = 4 << 24
SALT_TRIAL = 5 << 24

# Row stride for the per-mean success-rate scans inside estimate_constants:
# each scan uses at most the sigma grid plus the bisection refinements.
_SIGMA40_ROW_STRIDE = 128


def task_seed(master_seed: int, index: int, salt: int = 0) -> int:
    """Derived stream seed for an independent task; see module docstring."""
    if master_seed < 0:
        raise ValueError("master seed must be nonnegative")
    return master_seed ^ (salt + index)


def z_critical(confidence: float) -> float:
    """Two-sided normal quantile for the given confidence level."""
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    return NormalDist().inv_cdf(0.5 + confidence / 2.0)


@dataclass(frozen=True)
class DriftEstimate:
    """Monte Carlo mean with normal-approximation confidence interval."""

    mean: float
    stderr: float
    n: int
    ci_low: float
    ci_high: float
    confidence: float = DEFAULT_CONFIDENCE

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an estimate needs at least 2 samples")
        if not self.stderr >= 0.0:
            raise ValueError("stderr must be nonnegative")
        if not self.ci_low <= self.mean <= self.ci_high:
            raise ValueError("confidence interval must bracket the mean")

    @classmethod
    def from_samples(cls, values: np.ndarray,
                     confidence: float = DEFAULT_CONFIDENCE) -> "DriftEstimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        if n < 2:
            raise ValueError("an estimate needs at least 2 samples")
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(n))
        z = z_critical(confidence)
        return cls(mean=mean, stderr=stderr, n=n,
                   ci_low=mean - z * stderr, ci_high=mean + z * stderr,
                   confidence=confidence)

    @classmethod
    def from_binomial(cls, successes: int, n: int,
                      confidence: float = DEFAULT_CONFIDENCE) -> "DriftEstimate":
        p = successes / n
        stderr = math.sqrt(p * (1.0 - p) / n)
        z = z_critical(confidence)
        return cls(mean=p, stderr=stderr, n=n,
                   ci_low=p - z * stderr, ci_high=p + z * stderr,
                   confidence=confidence)


@dataclass(frozen=True)
class GridPointEstimate:
    """One (w, sigma~) grid point of a drift or success-rate map."""

    w: float
    sigma_tilde: float
    est: DriftEstimate


def success_probability(problem: SaddleProblem, ns: NormalizedState, n: int,
                        rng: np.random.Generator,
                        confidence: float = DEFAULT_CONFIDENCE) -> DriftEstimate:
    """Fraction of offspring x ~ N(m~, sigma~^2 I) with f(x) <= f(m~).

    Binomial standard error sqrt(p(1-p)/n).  By scale invariance this is the
    success probability of every raw state on the same ray.
    """
    if n < 100:
        raise ValueError("need n >= 100 samples")
    m = ns.m_tilde
    sigma = ns.sigma_tilde
    fm = problem.evaluate(m)
    hits = 0
    left = n
    while left > 0:
        c = min(left, _CHUNK)
        x = m + sigma * rng.standard_normal((c, problem.d))
        hits += int(np.count_nonzero(problem.evaluate(x) <= fm))
        left -= c
    return DriftEstimate.from_binomial(hits, n, confidence)


def saddle_success_mc(problem: SaddleProblem, n: int, rng: np.random.Generator,
                      confidence: float = DEFAULT_CONFIDENCE) -> DriftEstimate:
    """Success probability sampling from the saddle point itself (m = 0).

    Step-size independent by scale invariance, so unit sigma is used.
    """
    if n < 100:
        raise ValueError("need n >= 100 samples")
    hits = 0
    left = n
    while left > 0:
        c = min(left, _CHUNK)
        x = rng.standard_normal((c, problem.d))
        hits += int(np.count_nonzero(problem.evaluate(x) <= 0.0))
        left -= c
    return DriftEstimate.from_binomial(hits, n, confidence)


def saddle_success_analytic_2d(problem: SaddleProblem) -> float:
    """Closed form for d = 2: the fraction of the plane covered by the double
    cone {f < 0} around the negative axis, (2/pi) * atan(sqrt(|a1| / a2)).

    The angular fraction is already a probability; sampling from the saddle is
    isotropic, so the radial part integrates out.
    """
    if problem.d != 2 or problem.b != 1:
        raise ValueError("closed form requires d = 2 with exactly one negative direction")
    return (2.0 / math.pi) * math.atan(math.sqrt(-problem.a[0] / problem.a[1]))


@dataclass(frozen=True)
class StepSamples:
    """Per-sample outcome of n independent single steps from one normalized state.

    ``norm_minus``/``norm_plus`` are the semi-norms of the offspring; only the
    accepted entries feed the increments (a rejection leaves the mean in place
    and shrinks the step size by the exact factor alpha**-0.25).
    """

    accepted: np.ndarray
    norm_minus: np.ndarray
    norm_plus: np.ndarray
    w0: float
    alpha: float

    @property
    def n(self) -> int:
        return self.accepted.size

    def v_increments(self) -> np.ndarray:
        """Per-sample change of log(sigma~).

        Rejections contribute the constant -log(alpha)/4 with no estimation
        noise; acceptances contribute log(alpha) - log(norm_plus(offspring)).
        """
        acc = self.accepted
        if np.any(acc & (self.norm_plus == 0.0)):
            raise NormPlusZeroError("accepted offspring with zero positive-block semi-norm")
        out = np.full(self.n, -0.25 * math.log(self.alpha))
        out[acc] = math.log(self.alpha) - np.log(self.norm_plus[acc])
        return out

    def w_increments(self) -> np.ndarray:
        """Per-sample truncated change of W: min(W' - W, 1); rejections contribute 0.

        A successor with zero positive-block semi-norm has W' = +inf and
        contributes the cap 1, so no error can occur on this path.
        """
        acc = self.accepted
        out = np.zeros(self.n)
        nm = self.norm_minus[acc]
        npl = self.norm_plus[acc]
        ratio = np.divide(nm, npl, out=np.full(nm.shape, math.inf), where=npl > 0.0)
        out[acc] = np.minimum(ratio - self.w0, 1.0)
        return out


def one_step_samples(problem: SaddleProblem, params: EsParams, ns: NormalizedState,
                     n: int, rng: np.random.Generator) -> StepSamples:
    """Draw n independent single steps from (m~, sigma~) at scale one."""
    if n < 2:
        raise ValueError("need n >= 2 samples")
    m = ns.m_tilde
    sigma = ns.sigma_tilde
    fm = problem.evaluate(m)
    w0 = float(problem.norm_minus(m))
    acc_parts, nm_parts, np_parts = [], [], []
    left = n
    while left > 0:
        c = min(left, _CHUNK)
        x = m + sigma * rng.standard_normal((c, problem.d))
        acc_parts.append(problem.evaluate(x) <= fm)
        nm_parts.append(problem.norm_minus(x))
        np_parts.append(problem.norm_plus(x))
        left -= c
    return StepSamples(accepted=np.concatenate(acc_parts),
                       norm_minus=np.concatenate(nm_parts),
                       norm_plus=np.concatenate(np_parts),
                       w0=w0, alpha=params.alpha)


def _require_drift_inputs(problem: SaddleProblem, ns: NormalizedState, n: int) -> None:
    if n < 1000:
        raise ValueError("drift estimation needs n >= 1000 samples")
    if not in_M_plus_0(problem, ns):
        warnings.warn("normalized mean lies outside the compact shell (norm_minus > 1); "
                      "the estimate is a valid Monte Carlo average but the drift bounds "
                      "are calibrated inside it", stacklevel=3)


def drift_v(problem: SaddleProblem, params: EsParams, ns: NormalizedState, n: int,
            rng: np.random.Generator,
            confidence: float = DEFAULT_CONFIDENCE) -> DriftEstimate:
    """Expected one-step change of log(sigma~)."""
    _require_drift_inputs(problem, ns, n)
    samples = one_step_samples(problem, params, ns, n, rng)
    return DriftEstimate.from_samples(samples.v_increments(), confidence)


def drift_w(problem: SaddleProblem, params: EsParams, ns: NormalizedState, n: int,
            rng: np.random.Generator,
            confidence: float = DEFAULT_CONFIDENCE) -> DriftEstimate:
    """Expected one-step truncated change of W = norm_minus(m~)."""
    _require_drift_inputs(problem, ns, n)
    samples = one_step_samples(problem, params, ns, n, rng)
    return DriftEstimate.from_samples(samples.w_increments(), confidence)


def drift_phi(problem: SaddleProblem, params: EsParams, ns: NormalizedState,
              beta: float, n: int, rng: np.random.Generator,
              confidence: float = DEFAULT_CONFIDENCE) -> DriftEstimate:
    """Expected one-step change of phi = beta * V + W, estimated per sample.

    A single coupled estimator (not the sum of two separate runs), so the
    confidence interval is honest.  beta = 0 degenerates to the W drift.
    """
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    _require_drift_inputs(problem, ns, n)
    samples = one_step_samples(problem, params, ns, n, rng)
    w_inc = samples.w_increments()
    inc = w_inc if beta == 0.0 else beta * samples.v_increments() + w_inc
    return DriftEstimate.from_samples(inc, confidence)


def estimate_sigma_40(problem: SaddleProblem, m_tilde: np.ndarray, sigma_grid,
                      n: int, master_seed: int, threshold: float = 0.4,
                      bisect_steps: int = 12, _seed_salt: int = SALT_SIGMA40) -> float:
    """Largest step size below which the success rate stays >= ``threshold``.

    Scans the full ascending grid (no monotonicity assumed), then bisects in
    log space between the last passing and first failing grid points.  Returns
    math.inf when the threshold is never crossed on the grid.
    """
    grid = np.asarray(sigma_grid, dtype=float)
    if grid.size < 8:
        raise ValueError("sigma grid too coarse: need at least 8 points")
    if grid[0] <= 0.0 or not np.all(np.diff(grid) > 0.0):
        raise ValueError("sigma grid must be positive and strictly ascending")
    if grid.size + bisect_steps > _SIGMA40_ROW_STRIDE:
        raise ValueError("sigma grid plus bisection exceeds the per-scan seed stride")

    def p_at(sigma: float, idx: int) -> float:
        rng = np.random.default_rng(task_seed(master_seed, idx, _seed_salt))
        return success_probability(problem, NormalizedState(m_tilde, sigma), n, rng).mean

    p_hat = [p_at(s, j) for j, s in enumerate(grid)]
    failing = [j for j, p in enumerate(p_hat) if p < threshold]
    if not failing:
        return math.inf
    first_fail = failing[0]
    if first_fail == 0:
        raise ValueError("success rate below threshold at the smallest grid step size; "
                         "extend the grid downward")
    lo, hi = float(grid[first_fail - 1]), float(grid[first_fail])
    for k in range(bisect_steps):
        mid = math.sqrt(lo * hi)
        if p_at(mid, grid.size + k) >= threshold:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def closed_form_b1(alpha: float) -> float:
    """Worst-case expected log step-size change under pure rejection: -log(alpha)/4."""
    return -0.25 * math.log(alpha)


def closed_form_b2(alpha: float) -> float:
    """Guaranteed expected log step-size growth at >= 2/5 success rate: log(alpha)/20."""
    return math.log(alpha) / 20.0


def derive_beta_theta(b1: float, b2: float, c: float) -> tuple[float, float]:
    """beta = -C / (2 B1) and theta = min(beta * B2, C + beta * B1)."""
    beta = -c / (2.0 * b1)
    theta = min(beta * b2, c + beta * b1)
    return beta, theta


class ConstantsEstimationError(RuntimeError):
    """The measured drifts do not support positive constants at the requested confidence."""


@dataclass(frozen=True)
class DriftConstants:
    """Closed-form and measured constants of the combined drift argument.

    B1/B2 are closed forms in alpha; C is the smallest 99%-lower-bounded W
    drift over the grid with sigma~ >= sigma_tilde_star; sigma_tilde_40 is the
    smallest per-mean success-rate crossing (inf if never crossed);
    sigma_tilde_star is the largest grid sigma~ below which the measured V
    drift stays above B2 at the requested confidence.
    """

    alpha: float
    B1: float
    B2: float
    C: float
    sigma_tilde_40: float
    sigma_tilde_star: float
    beta: float
    theta: float
    confidence: float
    seed: int | None = None

    def __post_init__(self):
        if not (self.B1 < 0.0 < self.B2):
            raise ValueError("need B1 < 0 < B2 (requires alpha > 1)")
        if not self.C > 0.0:
            raise ValueError("C must be positive")
        beta, theta = derive_beta_theta(self.B1, self.B2, self.C)
        if not math.isclose(self.beta, beta, rel_tol=1e-12):
            raise ValueError("beta must equal -C / (2 B1)")
        if not (self.theta > 0.0 and math.isclose(self.theta, theta, rel_tol=1e-12)):
            raise ValueError("theta must equal min(beta B2, C + beta B1) > 0")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "B1": self.B1, "B2": self.B2, "C": self.C,
            "sigma_tilde_40": self.sigma_tilde_40,
            "sigma_tilde_star": self.sigma_tilde_star,
            "beta": self.beta, "theta": self.theta,
            "confidence": self.confidence, "seed": self.seed,
        }


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid: W values of the mean and a log-spaced sigma~ axis."""

    w_values: np.ndarray
    sigma_values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w_values, dtype=float)
        s = np.asarray(self.sigma_values, dtype=float)
        if w.size < 1 or np.any(w < 0.0) or np.any(w > 1.0):
            raise ValueError("w values must lie in [0, 1]")
        if s.size < 8:
            raise ValueError("sigma grid too coarse: need at least 8 points")
        if s[0] <= 0.0 or not np.all(np.diff(s) > 0.0):
            raise ValueError("sigma grid must be positive and strictly ascending")
        w.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "w_values", w)
        object.__setattr__(self, "sigma_values", s)

    @classmethod
    def default(cls) -> "GridSpec":
        return cls(w_values=np.linspace(0.0, 1.0, 11),
                   sigma_values=np.geomspace(1e-4, 1e3, 36))


@dataclass(frozen=True)
class ConstantsReport:
    """estimate_constants result plus the intermediate grid measurements."""

    constants: DriftConstants
    sigma_40_by_w: list
    v_map: list
    w_map: list


def estimate_constants_report(problem: SaddleProblem, params: EsParams,
                              grid: GridSpec | None = None, n: int = 100_000,
                              master_seed: int = 0,
                              confidence: float = DEFAULT_CONFIDENCE) -> ConstantsReport:
    """Full constants pipeline, keeping the intermediate drift maps.

    Stages (each grid task on its own derived stream, merged in grid order):
    success-rate scans per mean for sigma_tilde_40, a V-drift map to locate
    sigma_tilde_star, and a W-drift map over sigma~ >= sigma_tilde_star whose
    smallest CI lower bound is C.
    """
    grid = grid if grid is not None else GridSpec.default()
    alpha = params.alpha
    b1 = closed_form_b1(alpha)
    b2 = closed_form_b2(alpha)
    means = [sample_M_plus_0(problem, w) for w in grid.w_values]
    n_sigma = grid.sigma_values.size

    sigma_40_by_w = [
        estimate_sigma_40(problem, m, grid.sigma_values, n, master_seed,
                          _seed_salt=SALT_SIGMA40 + i * _SIGMA40_ROW_STRIDE)
        for i, m in enumerate(means)
    ]
    sigma_tilde_40 = min(sigma_40_by_w)

    v_map = []
    for i, (w, m) in enumerate(zip(grid.w_values, means)):
        for j, s in enumerate(grid.sigma_values):
            rng = np.random.default_rng(task_seed(master_seed, i * n_sigma + j, SALT_DRIFT_V))
            est = drift_v(problem, params, NormalizedState(m, s), n, rng, confidence)
            v_map.append(GridPointEstimate(float(w), float(s), est))

    # sigma* = top of the longest grid prefix on which every mean's V drift is
    # lower-bounded by B2 at the requested confidence.
    ok_prefix = 0
    for j in range(n_sigma):
        if all(v_map[i * n_sigma + j].est.ci_low >= b2 for i in range(len(means))):
            ok_prefix = j + 1
        else:
            break
    if ok_prefix == 0:
        raise ConstantsEstimationError(
            "no step-size growth region resolved at this confidence; "
            "increase n or extend the sigma grid downward")
    sigma_tilde_star = float(grid.sigma_values[ok_prefix - 1])

    w_map = []
    for i, (w, m) in enumerate(zip(grid.w_values, means)):
        for j, s in enumerate(grid.sigma_values):
            if s < sigma_tilde_star:
                continue
            rng = np.random.default_rng(task_seed(master_seed, i * n_sigma + j, SALT_DRIFT_W))
            est = drift_w(problem, params, NormalizedState(m, s), n, rng, confidence)
            w_map.append(GridPointEstimate(float(w), float(s), est))

    c = min(row.est.ci_low for row in w_map)
    if c <= 0.0:
        raise ConstantsEstimationError(
            f"W-drift lower bound {c:.3g} is not positive at confidence {confidence}; "
            "increase n")
    beta, theta = derive_beta_theta(b1, b2, c)
    constants = DriftConstants(alpha=alpha, B1=b1, B2=b2, C=c,
                               sigma_tilde_40=sigma_tilde_40,
                               sigma_tilde_star=sigma_tilde_star,
                               beta=beta, theta=theta,
                               confidence=confidence, seed=master_seed)
    return ConstantsReport(constants=constants, sigma_40_by_w=sigma_40_by_w,
                           v_map=v_map, w_map=w_map)


def estimate_constants(problem: SaddleProblem, params: EsParams,
                       grid: GridSpec | None = None, n: int = 100_000,
                       master_seed: int = 0,
                       confidence: float = DEFAULT_CONFIDENCE) -> DriftConstants:
    """Constants record only; see estimate_constants_report."""
    return estimate_constants_report(problem, params, grid, n, master_seed,
                                     confidence).constants


@dataclass(frozen=True)
class PairingReport:
    """Outcome of the mirror-pairing inequality check at one (mean, radius)."""

    violations: int
    min_margin: float
    n_pairs: int
    n_sampled: int
    epsilon: float


def mirror_pair_margins(problem: SaddleProblem, m_tilde: np.ndarray, z):
    """Pair each point z with its negative-block mirror z' around the mean
    (z'_minus = 2 m_minus - z_minus, z'_plus = z_plus) and return

      in_set: W(z) < W(m~), the points whose own contribution is negative,
      margin: W(z) + W(z') - 2 W(m~).

    W(x) = norm_minus(x)/norm_plus(x), +inf on a zero positive block.
    """
    z = np.asarray(z, dtype=float)
    b = problem.b
    wm = float(problem.norm_minus(m_tilde))

    def ratio(points):
        nm = problem.norm_minus(points)
        npl = problem.norm_plus(points)
        nm = np.atleast_1d(nm)
        npl = np.atleast_1d(npl)
        return np.divide(nm, npl, out=np.full(nm.shape, math.inf), where=npl > 0.0)

    z_mirror = z.copy()
    z_mirror[..., :b] = 2.0 * np.asarray(m_tilde, dtype=float)[:b] - z[..., :b]
    ratio_z = ratio(z)
    in_set = ratio_z < wm
    margin = ratio_z + ratio(z_mirror) - 2.0 * wm
    if np.asarray(z).ndim == 1:
        return bool(in_set[0]), float(margin[0])
    return in_set, margin


def pairing_check(problem: SaddleProblem, m_tilde: np.ndarray, radius: float,
                  n: int, rng: np.random.Generator,
                  epsilon: float = 1e-9) -> PairingReport:
    """Sample n points uniformly on the sphere of ``radius`` around the mean,
    keep the successful ones (f(z) <= f(m~)) whose own W contribution is
    negative, and verify that each mirror pair's combined contribution is
    >= -epsilon.

    Both filters matter: success plus W(z) < W(m~) force norm_plus(z) <= 1,
    which is what makes the combined contribution nonnegative.  Unsuccessful
    points never move the mean, so they are outside the construction.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if n < 1:
        raise ValueError("need at least one sample")
    m_tilde = np.asarray(m_tilde, dtype=float)
    fm = problem.evaluate(m_tilde)
    violations = 0
    min_margin = math.inf
    n_pairs = 0
    left = n
    while left > 0:
        c = min(left, _CHUNK)
        u = rng.standard_normal((c, problem.d))
        norms = np.linalg.norm(u, axis=1)
        # a zero draw (probability zero) would land on the mean itself, which
        # the strict in-set test excludes anyway
        u /= np.where(norms > 0.0, norms, 1.0)[:, None]
        z = m_tilde + radius * u
        in_set, margin = mirror_pair_margins(problem, m_tilde, z)
        margins = margin[in_set & (problem.evaluate(z) <= fm)]
        if margins.size:
            violations += int(np.count_nonzero(margins < -epsilon))
            min_margin = min(min_margin, float(margins.min()))
            n_pairs += margins.size
        left -= c
    return PairingReport(violations=violations, min_margin=min_margin,
                         n_pairs=n_pairs, n_sampled=n, epsilon=epsilon)
