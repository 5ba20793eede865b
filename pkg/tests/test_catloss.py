import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randpurify import catloss, core
from randpurify.catloss import CatMixture, FeedbackModel, LossChannel
from randpurify.core import BinaryEvent, MixtureState

ZERO, NOT_ZERO = BinaryEvent.ZERO, BinaryEvent.NOT_ZERO
purity = st.floats(-0.99, 0.99, allow_nan=False)


def gram_eigenvalues(r: float, mean_photons: float) -> np.ndarray:
    """Eigenvalues of the cat mixture from its coefficients in the non-orthogonal pair."""
    e = math.exp(-2 * mean_photons)
    C = np.array([[1.0, r], [r, 1.0]]) / (2 * (1 + r * e))
    G = np.array([[1.0, e], [e, 1.0]])
    vals, vecs = np.linalg.eigh(G)
    G_half = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
    return np.sort(np.linalg.eigvalsh(G_half @ C @ G_half))


class TestEigensystem:
    def test_pure_limit(self):
        p0, p1 = catloss.cat_eigensystem(CatMixture((1.5,), 1.0))
        assert (p0, p1) == (1.0, 0.0)

    def test_symmetric_limit(self):
        p0, p1 = catloss.cat_eigensystem(CatMixture((6.0,), 0.0))
        assert p0 == pytest.approx(0.5, abs=1e-15) and p1 == pytest.approx(0.5, abs=1e-15)

    def test_against_gram_diagonalization(self):
        cat = CatMixture((1.0, 1.0j), 0.5)  # |alpha|^2 = 2
        p = catloss.cat_eigensystem(cat)
        np.testing.assert_allclose(sorted(p), gram_eigenvalues(0.5, 2.0), rtol=0, atol=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(r=st.floats(-1, 1), n=st.floats(0.01, 4))
    def test_gram_oracle_property(self, r, n):
        cat = CatMixture((math.sqrt(n),), r)
        p = catloss.cat_eigensystem(cat)
        assert min(p) >= 0 and sum(p) == pytest.approx(1, abs=1e-14)
        np.testing.assert_allclose(sorted(p), gram_eigenvalues(r, n), rtol=0, atol=1e-12)

    def test_invalid_r(self):
        with pytest.raises(ValueError):
            CatMixture((1.0,), 1.2)


class TestMixture:
    def test_limits(self):
        assert catloss.to_mixture(CatMixture((1.0,), 1.0)).allclose(MixtureState([1.0, 0.0]), atol=0)
        assert catloss.to_mixture(CatMixture((8.0,), 0.0)).allclose(MixtureState([0.5, 0.5]))

    @pytest.mark.parametrize("r", [-0.9, -0.3, 0.0, 0.4, 0.95])
    @pytest.mark.parametrize("alpha", [0.3, 0.8, 2.0])
    def test_round_trip(self, r, alpha):
        cat = CatMixture((alpha,), r)
        assert catloss.purity_from_mixture(catloss.to_mixture(cat), cat.overlap) == pytest.approx(r, abs=1e-12)


class TestDecohere:
    def test_identity_cases(self):
        cat = CatMixture((1.0, 0.5j), 0.7)
        for channel in (LossChannel((1.0, 2.0), L=1.0, x=0.0), LossChannel((0.0, 0.0), L=1.0, x=5.0)):
            for approx in (False, True):
                out = catloss.decohere(cat, channel, approximate=approx)
                assert out.r == pytest.approx(cat.r, abs=1e-15)
                np.testing.assert_allclose(out.alphas, cat.alphas)

    def test_single_mode_both_branches(self):
        cat = CatMixture((1.0,), 1.0)
        channel = LossChannel((1.0,), L=1.0, x=0.1)
        exact = catloss.decohere(cat, channel)
        approx = catloss.decohere(cat, channel, approximate=True)
        assert exact.r == pytest.approx(math.exp(2 * (math.exp(-0.2) - 1)), rel=1e-14)
        assert approx.r == pytest.approx(math.exp(-0.4), rel=1e-14)
        assert exact.alphas[0] == pytest.approx(math.exp(-0.1))
        # exponents agree to first order; the remainder is at most (2 eta x/L)^2 |alpha|^2
        gap = math.log(exact.r / approx.r)
        assert 0 < gap <= 0.2 ** 2

    @settings(max_examples=50, deadline=None)
    @given(etas=st.lists(st.floats(0, 3), min_size=1, max_size=3), x=st.floats(0, 2), r=purity)
    def test_monotone_damping(self, etas, x, r):
        cat = CatMixture(tuple(0.7 + 0.2j * i for i in range(len(etas))), r)
        out = catloss.decohere(cat, LossChannel(tuple(etas), L=1.0, x=x))
        assert abs(out.r) <= abs(cat.r) + 1e-15
        assert all(abs(a) <= abs(b) + 1e-15 for a, b in zip(out.alphas, cat.alphas))

    def test_feedback_efficiency_from_channel(self):
        cat = CatMixture((1.0,), 0.5)
        eta_F = catloss.feedback_efficiency(cat, LossChannel((0.5,), L=10.0, x=1.0))
        assert eta_F == pytest.approx(math.exp(-4 * 1.0 * 0.5 * 0.1))


class TestPurityStep:
    @pytest.mark.parametrize("r", [0.1, 0.5, 0.9])
    def test_first_step(self, r):
        model = FeedbackModel(1.0)
        assert catloss.purity_step(r, r, ZERO, model) == pytest.approx(2 * r / (1 + r * r), abs=1e-15)
        assert catloss.purity_step(r, r, NOT_ZERO, FeedbackModel(0.8)) == 0.0

    def test_exact_mode_limit(self):
        exact = FeedbackModel(0.9, exact_overlap=True)
        meso = FeedbackModel(0.9)
        grid = np.linspace(-0.95, 0.95, 9)
        for R in grid:
            for r in grid:
                for ev in (ZERO, NOT_ZERO):
                    a = catloss.purity_step(R, r, ev, exact, e=1e-14)
                    b = catloss.purity_step(R, r, ev, meso)
                    assert abs(a - b) < 1e-10

    @settings(max_examples=200, deadline=None)
    @given(R=purity, r=purity, n=st.floats(0.05, 3), zero=st.booleans())
    def test_exact_mode_matches_engine(self, R, r, n, zero):
        e = math.exp(-2 * n)
        ev = ZERO if zero else NOT_ZERO
        state = catloss.to_mixture(CatMixture((math.sqrt(n),), R))
        source = catloss.to_mixture(CatMixture((math.sqrt(n),), r))
        expected = catloss.purity_from_mixture(core.binary_step(state, source, ev), e)
        got = catloss.purity_step(R, r, ev, FeedbackModel(1.0, exact_overlap=True), e)
        assert got == pytest.approx(expected, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(R=purity, r=purity, zero=st.booleans())
    def test_mesoscopic_matches_engine(self, R, r, zero):
        ev = ZERO if zero else NOT_ZERO
        state = MixtureState([(1 + R) / 2, (1 - R) / 2])
        source = MixtureState([(1 + r) / 2, (1 - r) / 2])
        P = core.binary_step(state, source, ev).probs
        assert catloss.purity_step(R, r, ev, FeedbackModel(1.0)) == pytest.approx(P[0] - P[1], abs=1e-12)

    def test_impossible_event(self):
        with pytest.raises(ValueError):
            catloss.purity_step(1.0, 1.0, NOT_ZERO, FeedbackModel(1.0))

    def test_r_zero_damps(self):
        assert catloss.purity_step(0.4, 0.0, ZERO, FeedbackModel(0.5)) == pytest.approx(0.2)


class TestEventProbability:
    def test_values(self):
        assert catloss.binary_event_prob_cat(0.0, 0.0) == 0.5
        # with finite overlap the weights are (1 +- e)/2, so p(0) = (1 + e^2)/2
        assert catloss.binary_event_prob_cat(0.0, 0.0, 0.3) == pytest.approx((1 + 0.09) / 2, abs=1e-15)
        assert catloss.binary_event_prob_cat(1.0, 1.0, 0.3) == pytest.approx(1.0)
        assert catloss.binary_event_prob_cat(0.3, 0.5) == pytest.approx(0.575, abs=1e-15)

    def test_matches_engine(self):
        for n in (0.2, 1.0):
            cat_R, cat_r = CatMixture((math.sqrt(n),), 0.3), CatMixture((math.sqrt(n),), -0.6)
            expected = core.binary_outcome_prob(catloss.to_mixture(cat_R), catloss.to_mixture(cat_r))
            assert catloss.binary_event_prob_cat(0.3, -0.6, cat_R.overlap) == pytest.approx(expected, abs=1e-15)


def fixed_point_event(r):
    return ZERO if r > 0 else NOT_ZERO


class TestBounds:
    def test_lossless(self):
        assert catloss.stationary_bounds(0.3, 1.0) == pytest.approx((-1.0, 1.0), abs=1e-15)

    @pytest.mark.parametrize("r", [-0.8, -0.2, 0.2, 0.6, 0.9])
    @pytest.mark.parametrize("eta", [0.3, 0.7, 0.9, 1.0])
    def test_fixed_points(self, r, eta):
        low, high = catloss.stationary_bounds(r, eta)
        model = FeedbackModel(eta)
        up, down = fixed_point_event(r), fixed_point_event(-r)
        assert abs(catloss.purity_step(high, r, up, model) - high) < 1e-12
        assert abs(catloss.purity_step(low, r, down, model) - low) < 1e-12

    def test_iteration_oracle(self):
        r, eta = 0.6, 0.9
        R = catloss.iterate_purity(r, [ZERO] * 500, FeedbackModel(eta))[-1]
        assert catloss.stationary_bounds(r, eta)[1] == pytest.approx(R, abs=1e-13)

    def test_r_zero_rejected(self):
        with pytest.raises(ValueError):
            catloss.stationary_bounds(0.0, 0.9)

    @settings(max_examples=100, deadline=None)
    @given(r=st.floats(0.05, 0.95), eta=st.floats(0.05, 1.0), R0=st.floats(-1, 1),
           events=st.lists(st.booleans(), max_size=60))
    def test_bracketing(self, r, eta, R0, events):
        high = catloss.stationary_bounds(r, eta)[1]
        seq = [ZERO if z else NOT_ZERO for z in events]
        try:
            trace = catloss.iterate_purity(r, seq, FeedbackModel(eta), R0=R0)
        except ValueError:
            return  # sequence hits an impossible event
        assert np.all(np.abs(trace) <= max(abs(R0), high) + 1e-12)


class TestThresholds:
    @pytest.mark.parametrize("r, expected", [(0.0, 0.5), (1.0, 1.0), (0.6, 0.68)])
    def test_min_efficiency(self, r, expected):
        assert catloss.min_feedback_efficiency(r) == pytest.approx(expected, abs=1e-15)

    def test_required_efficiency(self):
        assert catloss.required_efficiency(1.0, 0.01) == pytest.approx(0.99, abs=1e-15)
        assert catloss.required_efficiency(0.5, 1e-15) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("r", [0.2, 0.5, 0.8, 1.0])
    @pytest.mark.parametrize("eps", [1e-4, 1e-3, 1e-2])
    def test_required_efficiency_consistency(self, r, eps):
        high = catloss.stationary_bounds(r, catloss.required_efficiency(r, eps))[1]
        assert high >= 1 - eps - 2 * eps ** 2

    @pytest.mark.parametrize("r", [0.2, 0.5, 0.8])
    def test_threshold_sharpness(self, r):
        threshold = catloss.min_feedback_efficiency(r)
        below = catloss.iterate_purity(r, [ZERO] * 2000, FeedbackModel(threshold - 0.01))
        above = catloss.iterate_purity(r, [ZERO] * 10, FeedbackModel(threshold + 0.01))
        assert np.all(below[1:] <= abs(r))
        assert np.any(above[1:] > abs(r))


def test_purity_walk_reproducible():
    a = catloss.run_purity_walk(0.5, FeedbackModel(0.95), 100, np.random.default_rng(4))
    b = catloss.run_purity_walk(0.5, FeedbackModel(0.95), 100, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(a) <= max(0.5, catloss.stationary_bounds(0.5, 0.95)[1]) + 1e-12)
