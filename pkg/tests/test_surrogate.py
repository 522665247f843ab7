import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracopt.exceptions import DegenerateMetricError, InvalidInputError
from fracopt.metrics import class_score, spec_for
from fracopt.surrogate import (
    SplitSample,
    TauDiscrepantLoss,
    gradient_direction,
    loss_derivative,
    loss_value,
    numerator_gradient,
    population_direction,
    population_w0,
    population_w1,
    score_w0,
    score_w1,
    surrogate_gradient,
    surrogate_numerator,
    surrogate_utility,
)

from conftest import SIGNED_PRESETS, preset_id, random_labeled
from oracles import central_difference, fd_surrogate_gradient, pairwise_direction, phi_reference

LN2 = math.log(2)


class TestLoss:
    def test_values(self):
        loss = TauDiscrepantLoss(0.33)
        assert loss_value(loss, 0.0) == 1.0
        assert loss_value(loss, -1.0) == pytest.approx(phi_reference(0.33, -1.0), abs=1e-15)
        assert loss_value(loss, -1.0) == pytest.approx(1.894636, abs=1e-6)
        assert loss_value(loss, 1.0) == pytest.approx(phi_reference(0.33, 1.0), abs=1e-15)
        assert loss_value(loss, 1.0) == pytest.approx(0.781506, abs=1e-6)

    def test_derivatives_at_kink(self):
        loss = TauDiscrepantLoss(0.33)
        left = loss_derivative(loss, 0.0)
        assert left == pytest.approx(-1 / (2 * LN2), abs=1e-15)
        assert left == pytest.approx(-0.721348, abs=1e-6)
        right = loss_derivative(loss, 1e-300)
        assert right == pytest.approx(-0.33 / (2 * LN2), abs=1e-15)
        assert right == pytest.approx(-0.238045, abs=1e-6)
        assert abs(loss.right_derivative_at_zero() / loss.left_derivative_at_zero() - 0.33) <= 1e-12

    @pytest.mark.parametrize("t", [-800.0, -40.0, -1e-3, 2.5, 40.0, 800.0])
    def test_stable_extremes(self, t):
        loss = TauDiscrepantLoss(0.5)
        v = loss_value(loss, t)
        assert np.isfinite(v)
        if t < -30:
            assert v == pytest.approx(-t / LN2, rel=1e-13)
        elif t > 30:
            assert v == pytest.approx(math.exp(-0.5 * t) / LN2, rel=1e-6)

    def test_derivative_matches_finite_difference(self, rng):
        loss = TauDiscrepantLoss(0.4)
        t = rng.uniform(-8, 8, 200)
        t = t[np.abs(t) > 1e-3]
        fd = (loss_value(loss, t + 1e-6) - loss_value(loss, t - 1e-6)) / 2e-6
        np.testing.assert_allclose(loss_derivative(loss, t), fd, rtol=1e-6, atol=1e-9)

    def test_dominates_zero_one(self):
        loss = TauDiscrepantLoss(0.2)
        t = np.linspace(-50, 50, 100_001)
        v = loss_value(loss, t)
        assert np.all(v[t <= 0] >= 1.0)
        assert np.all(v[t > 0] >= 0.0)

    def test_convex_and_nonincreasing(self, rng):
        loss = TauDiscrepantLoss(0.33)
        grid = np.linspace(-20, 20, 40_001)
        v = loss_value(loss, grid)
        assert np.all(np.diff(v) <= 0)
        t, u = rng.uniform(-30, 30, (2, 10_000))
        mid = loss_value(loss, (t + u) / 2)
        assert np.all(mid <= (loss_value(loss, t) + loss_value(loss, u)) / 2 + 1e-12)

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.5])
    def test_tau_range(self, tau):
        with pytest.raises(InvalidInputError):
            TauDiscrepantLoss(tau)


class TestScores:
    def test_f1_w0_zero_margin(self):
        spec = spec_for("fbeta", 0.37, 1)
        assert score_w0(spec, TauDiscrepantLoss(0.33), 0.0, 1) == 0.0

    def test_f1_w1_zero_margin(self):
        spec = spec_for("fbeta", 0.5, 1)
        assert score_w1(spec, TauDiscrepantLoss(0.33), 0.0, 1) == pytest.approx(2.5, abs=1e-15)

    def test_jaccard_w1_negative(self):
        spec = spec_for("jaccard", 0.3)
        assert score_w1(spec, TauDiscrepantLoss(0.75), 0.0, -1) == pytest.approx(1.3, abs=1e-15)

    @pytest.mark.parametrize("preset", SIGNED_PRESETS, ids=preset_id)
    def test_pointwise_domination(self, preset, rng):
        spec = spec_for(preset[0], 0.4, preset[1])
        loss = TauDiscrepantLoss(0.33)
        xi = np.concatenate([rng.uniform(-10, 10, 20_000), [0.0]])
        q = rng.random(xi.size)
        assert np.all(population_w0(spec, loss, xi, q) <= class_score(spec, 0, xi, q))
        assert np.all(population_w1(spec, loss, xi, q) >= class_score(spec, 1, xi, q))


class TestSplit:
    def test_default_half(self, rng):
        x, y = random_labeled(rng, 11, 3)
        s = SplitSample.from_arrays(x, y, seed=1)
        assert s.y0.size == 5 and s.y1.size == 6

    def test_disjoint_cover(self):
        x = np.arange(10.0)[:, None]
        s = SplitSample.from_arrays(x, np.ones(10), seed=3)
        got = np.concatenate([s.x0[:, 0], s.x1[:, 0]])
        assert sorted(got.tolist()) == list(range(10))

    def test_seeded(self, rng):
        x, y = random_labeled(rng, 20, 2)
        a = SplitSample.from_arrays(x, y, seed=7)
        b = SplitSample.from_arrays(x, y, seed=7)
        assert np.array_equal(a.x0, b.x0) and np.array_equal(a.y1, b.y1)

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            SplitSample(np.zeros((0, 2)), [], np.zeros((1, 2)), [1])
        with pytest.raises(InvalidInputError):
            SplitSample.from_arrays(np.zeros((1, 2)), [1])


class TestEmpirical:
    loss = TauDiscrepantLoss(0.33)

    def test_numerator_single_zero_margin_positive(self):
        spec = spec_for("fbeta", 0.5, 1)
        assert surrogate_numerator(spec, self.loss, np.zeros(1), [[1.0]], [1]) == 0.0

    def test_numerator_asymptote(self):
        spec = spec_for("fbeta", 0.5, 1)
        assert surrogate_numerator(spec, self.loss, np.array([1e4]), [[1.0]], [1]) == pytest.approx(2.0)

    def test_numerator_jaccard_mixed(self):
        spec = spec_for("jaccard", 0.3)
        num = surrogate_numerator(spec, self.loss, np.zeros(1), [[1.0], [2.0]], [1, -1])
        assert num == 0.0

    def test_utility_asymptote_all_positive(self):
        # f -> +inf on positives only: numerator -> 2, denominator -> 1 + pi = 2
        spec = spec_for("fbeta", 0.999999, 1)
        split = SplitSample([[1.0]] * 3, [1, 1, 1], [[1.0]] * 3, [1, 1, 1])
        u = surrogate_utility(spec, self.loss, np.array([1e5]), split)
        assert u == pytest.approx(2 / (1 + 0.999999), abs=1e-9)

    def test_four_point_fixture_at_zero(self):
        # zero margins everywhere, so phi = 1 in every score
        spec = spec_for("gower-legendre", 0.25, 2.0)  # a0=(1,-1) b0=.75 a1=(-1,1) b1=1.25
        split = SplitSample([[1.0, 0.0], [0.0, 1.0]], [1, -1], [[1.0, 1.0], [2.0, -1.0]], [1, 1])
        num = (0.75 + (-1 + 0.75)) / 2
        den = (-1 * 2 + 1.25) * 2 / 2
        assert surrogate_numerator(spec, self.loss, np.zeros(2), split.x0, split.y0) == pytest.approx(num)
        assert surrogate_utility(spec, self.loss, np.zeros(2), split) == pytest.approx(num / den)

    def test_zero_denominator(self):
        spec = spec_for("jaccard", 0.5)
        # negatives drive the denominator: a1_neg * phi(-xi) + b1 with b1 forced to zero
        from fracopt.metrics import custom_spec
        spec = custom_spec(1, 0, 0, 0, 1, 0)
        split = SplitSample([[1.0]], [1], [[-1e6]], [-1])
        with pytest.raises(DegenerateMetricError):
            surrogate_utility(spec, self.loss, np.array([1.0]), split)

    def test_single_pair_factorization(self, rng):
        spec = spec_for("fbeta", 0.5, 1)
        x, y = rng.standard_normal((2, 3)), np.array([1.0, -1.0])
        split = SplitSample(x[:1], y[:1], x[1:], y[1:])
        theta = rng.standard_normal(3)
        m0, m1 = x[0] @ theta, x[1] @ theta
        from fracopt.surrogate import dscore_w0, dscore_w1
        expected = (score_w1(spec, self.loss, m1, -1) * dscore_w0(spec, self.loss, m0, 1) * x[0]
                    - score_w0(spec, self.loss, m0, 1) * dscore_w1(spec, self.loss, m1, -1) * x[1])
        np.testing.assert_allclose(gradient_direction(spec, self.loss, theta, split), expected, rtol=1e-14)

    def test_numerator_gradient_fd(self, rng):
        spec = spec_for("jaccard", 0.4)
        x, y = random_labeled(rng, 40, 4)
        theta = rng.standard_normal(4)
        fd = central_difference(lambda t: surrogate_numerator(spec, self.loss, t, x, y), theta)
        np.testing.assert_allclose(numerator_gradient(spec, self.loss, theta, x, y), fd, rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("preset", SIGNED_PRESETS, ids=preset_id)
    def test_direction_is_scaled_gradient(self, preset, rng):
        x, y = random_labeled(rng, 60, 3)
        split = SplitSample.from_arrays(x, y, seed=0)
        spec = spec_for(preset[0], float(np.mean(y > 0)), preset[1])
        theta = rng.standard_normal(3)
        den = np.mean(score_w1(spec, self.loss, split.x1 @ theta, split.y1))
        v = gradient_direction(spec, self.loss, theta, split)
        np.testing.assert_allclose(v, den**2 * surrogate_gradient(spec, self.loss, theta, split), rtol=1e-12, atol=1e-14)
        fd = fd_surrogate_gradient(spec, self.loss, theta, split)
        assert np.linalg.norm(v - den**2 * fd) <= 1e-4 * np.linalg.norm(v)
        np.testing.assert_allclose(pairwise_direction(spec, self.loss, theta, split), v, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-6, 6), st.floats(-6, 6),
    st.floats(0.05, 0.95),
    st.sampled_from(SIGNED_PRESETS),
)
def test_numerator_concave_along_segments(a, b, tau, preset):
    rng = np.random.default_rng(0)
    x, y = random_labeled(rng, 30, 2)
    spec = spec_for(preset[0], 0.4, preset[1])
    loss = TauDiscrepantLoss(tau)
    t0, t1 = np.array([a, b]), np.array([b, -a])
    mid = surrogate_numerator(spec, loss, (t0 + t1) / 2, x, y)
    ends = (surrogate_numerator(spec, loss, t0, x, y) + surrogate_numerator(spec, loss, t1, x, y)) / 2
    assert mid >= ends - 1e-10


def test_population_direction_matches_enumeration(three_point):
    spec = spec_for("fbeta", three_point.pi, 1)
    loss = TauDiscrepantLoss(0.33)
    theta = np.array([0.7, -0.4])
    # enumerate the four (x, y) atoms explicitly
    atoms = [(x, yy, m * (e if yy > 0 else 1 - e))
             for x, e, m in zip(three_point.x, three_point.eta, three_point.mass) for yy in (1, -1)]
    from fracopt.surrogate import dscore_w0, dscore_w1
    e0 = sum(p * score_w0(spec, loss, x @ theta, yy) for x, yy, p in atoms)
    e1 = sum(p * score_w1(spec, loss, x @ theta, yy) for x, yy, p in atoms)
    g0 = sum(p * dscore_w0(spec, loss, x @ theta, yy) * x for x, yy, p in atoms)
    g1 = sum(p * dscore_w1(spec, loss, x @ theta, yy) * x for x, yy, p in atoms)
    np.testing.assert_allclose(population_direction(spec, loss, theta, three_point), e1 * g0 - e0 * g1, rtol=1e-13)
