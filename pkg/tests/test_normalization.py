import numpy as np
import pytest

from saddle_es import (
    EsState,
    NormalizedState,
    NormPlusZeroError,
    RegionLabel,
    SaddleProblem,
    in_M_plus_0,
    normalize,
    potentials,
    sample_M_plus_0,
    w_of,
)


def problem(a=(-1.0, 1.0), b=1):
    return SaddleProblem(a=np.asarray(a, dtype=float), b=b)


class TestNormalize:
    def test_known_values(self):
        ns = normalize(problem(), EsState(m=np.array([3.0, 2.0]), sigma=1.0))
        assert np.array_equal(ns.m_tilde, [1.5, 1.0])
        assert ns.sigma_tilde == 0.5

        ns = normalize(problem(), EsState(m=np.array([0.0, 1.0]), sigma=2.0))
        assert np.array_equal(ns.m_tilde, [0.0, 1.0])
        assert ns.sigma_tilde == 2.0

    def test_example_on_zero_level_set(self):
        p = problem((-4.0, 1.0))
        ns = normalize(p, EsState(m=np.array([1.0, 2.0]), sigma=4.0))
        assert np.array_equal(ns.m_tilde, [0.5, 1.0])
        assert ns.sigma_tilde == 2.0
        assert p.norm_minus(ns.m_tilde) == 1.0

    def test_idempotent(self):
        p = problem((-1.0, 20.0))
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = rng.standard_normal(2)
            if p.norm_plus(m) == 0.0:
                continue
            ns1 = normalize(p, EsState(m=m, sigma=float(rng.uniform(0.1, 10.0))))
            ns2 = normalize(p, EsState(m=ns1.m_tilde, sigma=ns1.sigma_tilde))
            np.testing.assert_allclose(ns2.m_tilde, ns1.m_tilde, rtol=1e-12)
            assert ns2.sigma_tilde == pytest.approx(ns1.sigma_tilde, rel=1e-12)

    def test_scale_invariant(self):
        p = problem((-1.0, 20.0))
        rng = np.random.default_rng(1)
        for _ in range(50):
            m = rng.standard_normal(2)
            sigma = float(rng.uniform(0.1, 10.0))
            c = float(rng.uniform(1e-3, 1e3))
            ns1 = normalize(p, EsState(m=m, sigma=sigma))
            ns2 = normalize(p, EsState(m=c * m, sigma=c * sigma))
            np.testing.assert_allclose(ns1.m_tilde, ns2.m_tilde, rtol=1e-12)
            assert ns1.sigma_tilde == pytest.approx(ns2.sigma_tilde, rel=1e-12)

    def test_power_of_two_scaling_is_exact(self):
        p = problem((-1.0, 20.0))
        m = np.array([0.3, 0.7])
        ns1 = normalize(p, EsState(m=m, sigma=0.9))
        ns2 = normalize(p, EsState(m=4.0 * m, sigma=4.0 * 0.9))
        assert np.array_equal(ns1.m_tilde, ns2.m_tilde)
        assert ns1.sigma_tilde == ns2.sigma_tilde

    def test_norm_plus_zero_raises(self):
        with pytest.raises(NormPlusZeroError):
            normalize(problem(), EsState(m=np.array([1.0, 0.0]), sigma=1.0))
        with pytest.raises(NormPlusZeroError):
            w_of(problem(), np.array([1.0, 0.0]))


class TestPotentials:
    def test_log_identity(self):
        p = problem()
        ns = NormalizedState(np.array([0.0, 1.0]), 1.0)
        assert potentials(p, ns, beta=1.0).v == 0.0

    def test_w_and_phi(self):
        p = problem()
        ns = NormalizedState(np.array([0.5, 1.0]), 2.0)
        pot = potentials(p, ns, beta=1.0)
        assert pot.w == 0.5
        assert pot.phi == pytest.approx(0.5 + np.log(2.0), rel=1e-15)

    def test_w_threshold_matches_region(self):
        p = problem((-1.0, 20.0))
        rng = np.random.default_rng(2)
        for _ in range(200):
            m = rng.standard_normal(2)
            if p.norm_plus(m) == 0.0:
                continue
            w = w_of(p, m)
            label = p.classify(m)
            if w > 1.0 + 1e-12:
                assert label is RegionLabel.NEGATIVE
            elif w < 1.0 - 1e-12:
                assert label is RegionLabel.POSITIVE

    def test_w_raw_state_example(self):
        p = problem()
        assert w_of(p, np.array([3.0, 2.0])) == 1.5
        assert p.evaluate([3.0, 2.0]) < 0.0

    def test_phi_affine_in_beta(self):
        p = problem((-1.0, 20.0))
        ns = NormalizedState(np.array([0.5, np.sqrt(0.75 / 20.0)]), 0.7)
        pots = [potentials(p, ns, beta) for beta in (0.5, 1.0, 2.0)]
        v = pots[0].v
        for pot, beta in zip(pots, (0.5, 1.0, 2.0)):
            assert pot.phi == pytest.approx(beta * v + pot.w, rel=1e-15)
        # slope between any two beta values is V
        slope = (pots[2].phi - pots[0].phi) / (2.0 - 0.5)
        assert slope == pytest.approx(v, rel=1e-12)

    def test_beta_zero_allowed_negative_rejected(self):
        p = problem()
        ns = NormalizedState(np.array([0.0, 1.0]), 1.0)
        assert potentials(p, ns, beta=0.0).phi == potentials(p, ns, beta=0.0).w
        with pytest.raises(ValueError):
            potentials(p, ns, beta=-0.1)


class TestMPlusZero:
    def test_membership_examples(self):
        p = problem()
        assert in_M_plus_0(p, NormalizedState(np.array([0.0, 1.0]), 1.0))
        assert in_M_plus_0(p, NormalizedState(np.array([1.0, 1.0]), 1.0))  # boundary included
        assert not in_M_plus_0(p, NormalizedState(np.array([1.5, 1.0]), 1.0))

    def test_rejects_unnormalized_state(self):
        with pytest.raises(ValueError):
            in_M_plus_0(problem(), NormalizedState(np.array([0.0, 2.0]), 1.0))


class TestSampleMPlus0:
    def test_deterministic_examples(self):
        assert np.array_equal(sample_M_plus_0(problem(), 0.0), [0.0, 1.0])
        assert np.array_equal(sample_M_plus_0(problem(), 1.0), [1.0, 1.0])
        assert np.array_equal(sample_M_plus_0(problem((-4.0, 1.0)), 1.0), [0.5, 1.0])

    def test_norms_match_request(self):
        p = SaddleProblem(a=np.array([-3.0, -0.5, 7.0, 2.0, 11.0]), b=2)
        rng = np.random.default_rng(3)
        for w in (0.0, 0.25, 0.5, 0.75, 1.0):
            for use_rng in (None, rng):
                m = sample_M_plus_0(p, w, use_rng)
                assert p.norm_plus(m) == pytest.approx(1.0, rel=1e-12)
                assert p.norm_minus(m) == pytest.approx(w, rel=1e-12, abs=1e-12)

    def test_w_out_of_range(self):
        with pytest.raises(ValueError):
            sample_M_plus_0(problem(), 1.5)
        with pytest.raises(ValueError):
            sample_M_plus_0(problem(), -0.1)

    def test_randomized_directions_spread(self):
        p = SaddleProblem(a=np.array([-1.0, -1.0, 1.0, 1.0]), b=2)
        rng = np.random.default_rng(4)
        samples = np.array([sample_M_plus_0(p, 0.5, rng) for _ in range(200)])
        # both axes of each block get visited with both signs
        assert (samples[:, 0] > 0).any() and (samples[:, 0] < 0).any()
        assert (samples[:, 3] > 0).any() and (samples[:, 3] < 0).any()
