"""Release-gate checks at the scales the project commits to.

Run with ``pytest tests/test_acceptance.py -v -s``: each check prints one
PASS/FAIL line with its measured numbers.  Sample sizes and tolerances are
fixed here, not calibrated at run time.
"""

import math
import time

import numpy as np

from saddle_es import (
    EscapeExperimentSpec,
    EsParams,
    EsState,
    NormalizedState,
    SaddleProblem,
    drift_map,
    estimate_constants_report,
    one_step_samples,
    pairing_check,
    run,
    run_escape_experiment,
    saddle_success_analytic_2d,
    saddle_success_mc,
    sample_M_plus_0,
    success_probability,
)
from saddle_es.cli import EXIT_OK, main

MASTER_SEED = 20260810


def report(name: str, ok: bool, detail: str = ""):
    print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{name}: {detail}"


def make(a, b=1):
    return SaddleProblem(a=np.asarray(a, dtype=float), b=b)


def test_criterion_01_elitism_and_region_monotonicity():
    t0 = time.perf_counter()
    problems = [make((-1.0, 1.0)), make((-4.0, 1.0)), make((-1.0, 20.0))]
    params = EsParams(alpha=1.5, max_iters=5000)
    spec_rng = np.random.default_rng(MASTER_SEED)
    violations = 0
    runs = 0
    for i in range(1000):
        p = problems[i % 3]
        w0 = float(spec_rng.uniform(0.0, 1.0))
        sigma0 = float(10.0 ** spec_rng.uniform(-2.0, 1.0))
        trace = run(p, params, EsState(m=sample_M_plus_0(p, w0), sigma=sigma0),
                    np.random.default_rng(MASTER_SEED ^ (1000 + i)), record_every=1)
        f = trace.f_values()
        if np.any(np.diff(f) > 0.0):
            violations += 1
        ranks = np.array([p.classify(r.m).value for r in trace.records])
        if np.any(np.diff(ranks) > 0):
            violations += 1
        runs += 1
    elapsed = time.perf_counter() - t0
    report("1 elitism/region monotonicity",
           violations == 0 and runs == 1000 and elapsed < 60.0,
           f"runs={runs} violations={violations} elapsed={elapsed:.1f}s")


def test_criterion_02_coupled_scale_invariance():
    p = make((-1.0, 20.0))
    params = EsParams(alpha=1.5, max_iters=1000)
    spec_rng = np.random.default_rng(MASTER_SEED + 1)
    worst = 0.0
    for i in range(100):
        m0 = spec_rng.standard_normal(2)
        if p.norm_plus(m0) == 0.0:
            m0[1] = 1.0
        sigma0 = float(10.0 ** spec_rng.uniform(-1.0, 1.0))
        c = float(10.0 ** spec_rng.uniform(-3.0, 3.0))
        seed = MASTER_SEED ^ (2000 + i)
        t1 = run(p, params, EsState(m=m0, sigma=sigma0),
                 np.random.default_rng(seed), stop=None, record_every=1)
        t2 = run(p, params, EsState(m=c * m0, sigma=c * sigma0),
                 np.random.default_rng(seed), stop=None, record_every=1)
        assert len(t1.records) == len(t2.records) == 1001
        for r1, r2 in zip(t1.records, t2.records):
            if r1.accepted != r2.accepted:
                worst = math.inf
                break
            scale = c * (float(np.abs(r1.m).max()) + r1.sigma)
            worst = max(worst, float(np.abs(c * r1.m - r2.m).max()) / scale,
                        abs(c * r1.sigma - r2.sigma) / (c * r1.sigma))
    report("2 coupled scale invariance", worst <= 1e-9,
           f"worst relative deviation={worst:.3e} over 100 triples x 1000 steps")


def test_criterion_03_saddle_success_probability():
    expected = {(-1.0, 1.0): 0.5, (-1.0, 20.0): 0.14005, (-4.0, 1.0): 0.70483}
    details = []
    ok = True
    for i, (a, quoted) in enumerate(expected.items()):
        p = make(a)
        analytic = saddle_success_analytic_2d(p)
        ok &= abs(analytic - quoted) < 5e-6
        est = saddle_success_mc(p, 1_000_000, np.random.default_rng(MASTER_SEED ^ (3000 + i)))
        ok &= abs(est.mean - analytic) <= 3.0 * est.stderr
        details.append(f"a={a}: mc={est.mean:.5f} analytic={analytic:.5f} "
                       f"3se={3 * est.stderr:.1e}")
    report("3 saddle success probability (n=1e6)", ok, "; ".join(details))


def test_criterion_04_small_sigma_success_limit():
    p = make((-1.0, 20.0))
    results = {}
    ok = True
    for i, w in enumerate((0.0, 0.25, 0.5, 0.75, 0.9)):
        ns = NormalizedState(sample_M_plus_0(p, w), 1e-4)
        est = success_probability(p, ns, 100_000,
                                  np.random.default_rng(MASTER_SEED ^ (4000 + i)))
        results[w] = est.mean
        ok &= 0.45 <= est.mean <= 0.55
    report("4 small-step success limit (sigma~=1e-4)", ok,
           " ".join(f"w={w}:{v:.3f}" for w, v in results.items()))


def test_criterion_05_step_size_drift():
    t0 = time.perf_counter()
    p = make((-1.0, 20.0))
    params = EsParams(alpha=1.5)
    rep = estimate_constants_report(p, params, n=100_000, master_seed=MASTER_SEED)
    c = rep.constants

    # closed forms, recomputed through a different formula path
    b1_ref = -math.log1p(0.5) / 4.0
    b2_ref = math.log1p(0.5) / 20.0
    ok = abs(c.B1 - b1_ref) <= 1e-12 and abs(c.B2 - b2_ref) <= 1e-12

    below = [row for row in rep.v_map if row.sigma_tilde < c.sigma_tilde_star]
    ok &= len(below) > 0 and all(row.est.ci_low > 0.0 for row in below)

    samples = one_step_samples(p, params, NormalizedState(sample_M_plus_0(p, 0.5), 1.0),
                               100_000, np.random.default_rng(MASTER_SEED ^ 5000))
    v_inc = samples.v_increments()
    rejected = ~samples.accepted
    exact = -0.25 * math.log(1.5)
    ok &= rejected.sum() > 0 and bool(np.all(v_inc[rejected] == exact))
    report("5 step-size drift (alpha=1.5, n=1e5/point)", ok,
           f"sigma*={c.sigma_tilde_star:.4g} points_below={len(below)} "
           f"min_ci_low={min((r.est.ci_low for r in below), default=math.nan):.4f} "
           f"rejection_const={exact!r} elapsed={time.perf_counter() - t0:.0f}s")


def test_criterion_06_mean_drift_positive_everywhere():
    t0 = time.perf_counter()
    p = make((-1.0, 20.0))
    rows = drift_map(p, EsParams(alpha=1.5), "W", n=100_000, master_seed=MASTER_SEED)
    assert len(rows) == 11 * 36
    n_nonpositive = sum(1 for r in rows if r.est.ci_low <= 0.0)

    p_star = saddle_success_analytic_2d(p)
    top = [r for r in rows if r.w == 0.0 and r.sigma_tilde == 1e3]
    assert len(top) == 1
    gap = abs(top[0].est.mean - p_star)
    elapsed = time.perf_counter() - t0
    ok = n_nonpositive == 0 and gap <= 3.0 * top[0].est.stderr and elapsed < 1800.0
    report("6 mean drift positive on 11x36 grid (n=1e5)", ok,
           f"nonpositive={n_nonpositive} apex@1e3 mean={top[0].est.mean:.5f} "
           f"p*={p_star:.5f} gap={gap:.2e} elapsed={elapsed:.0f}s")


def test_criterion_07_mirror_pairing_inequality():
    ok = True
    details = []
    for ai, a in enumerate([(-1.0, 1.0), (-1.0, 20.0)]):
        p = make(a)
        for wi, w in enumerate((0.1, 0.5, 0.9)):
            m_tilde = sample_M_plus_0(p, w)
            for ri, radius in enumerate((0.1, 1.0, 10.0)):
                seed = MASTER_SEED ^ (7000 + 100 * ai + 10 * wi + ri)
                rep = pairing_check(p, m_tilde, radius, 100_000,
                                    np.random.default_rng(seed))
                ok &= rep.violations == 0
                if rep.violations:
                    details.append(f"a={a} w={w} r={radius}: {rep.violations}")
    report("7 mirror-pairing inequality (18 configs, n=1e5)", ok,
           "zero margins below -1e-9" if ok else "; ".join(details))


def test_criterion_08_escape_reliability():
    t0 = time.perf_counter()
    ok = True
    details = []
    for ai, a in enumerate([(-1.0, 1.0), (-1.0, 20.0), (-1.0, 100.0)]):
        for si, sigma0 in enumerate((1e-3, 1.0, 10.0)):
            spec = EscapeExperimentSpec(problem=make(a), params=EsParams(alpha=1.5),
                                        w0=0.0, sigma_tilde0=sigma0, trials=1000,
                                        budget=1_000_000,
                                        master_seed=MASTER_SEED ^ (8000 + 10 * ai + si))
            stats = run_escape_experiment(spec)
            good = stats.escape_fraction == 1.0 and stats.n_underflow == 0
            ok &= good
            if not good:
                details.append(f"a={a} sigma0={sigma0}: escaped={stats.n_escaped} "
                               f"underflow={stats.n_underflow}")
    report("8 escape reliability (9 configs x 1000 trials)", ok,
           ("all escaped, zero underflows" if ok else "; ".join(details)) +
           f" elapsed={time.perf_counter() - t0:.0f}s")


def test_criterion_09_exponential_tail():
    t0 = time.perf_counter()
    spec = EscapeExperimentSpec(problem=make((-1.0, 100.0)), params=EsParams(alpha=1.5),
                                w0=0.0, sigma_tilde0=1.0, trials=10_000,
                                budget=1_000_000, master_seed=MASTER_SEED ^ 9000)
    stats = run_escape_experiment(spec, fit_s_range=(0.01, 0.5))
    fit = stats.tail
    elapsed = time.perf_counter() - t0
    ok = (stats.escape_fraction == 1.0 and fit is not None
          and fit.r_squared >= 0.95 and fit.rate > 0.0 and elapsed < 3600.0)
    report("9 exponential escape-time tail (1e4 trials)", ok,
           f"lambda={fit.rate:.4f} R2={fit.r_squared:.4f} points={fit.n_points} "
           f"elapsed={elapsed:.0f}s")


def test_criterion_10_constants_pipeline_via_cli(tmp_path):
    t0 = time.perf_counter()
    args = ["constants", "--a=-1,20", "--b=1", "--alpha=1.5",
            f"--seed={MASTER_SEED}"]
    code1 = main(args + [f"--constants-out={tmp_path}/c1.json"])
    code2 = main(args + [f"--constants-out={tmp_path}/c2.json"])
    b1 = (tmp_path / "c1.json").read_bytes()
    b2 = (tmp_path / "c2.json").read_bytes()
    import json
    record = json.loads(b1)
    ok = (code1 == EXIT_OK and code2 == EXIT_OK and b1 == b2
          and record["C"] > 0.0 and record["theta"] > 0.0
          and record["confidence"] == 0.99)
    report("10 constants pipeline (CLI, byte-identical rerun)", ok,
           f"C={record['C']:.4f} theta={record['theta']:.4f} "
           f"beta={record['beta']:.4f} identical={b1 == b2} "
           f"elapsed={time.perf_counter() - t0:.0f}s")
