import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixattack.geometry import LINF, ThreatModel, lp_norm
from mixattack.linear import (
    LabeledPoint,
    LinearClassifier,
    Mixture,
    decide,
    fooled_mask,
    margin_and_direction,
    mixture_from_dict,
    mixture_to_dict,
    sample_random_mixture,
    srh,
    trial_rng,
    weighted_rev_hinge,
    zero_one_mixture,
)

H1 = LinearClassifier(np.array([1.0, 0.0]), -0.5)


def test_classifier_validation():
    with pytest.raises(ValueError):
        LinearClassifier(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        LinearClassifier(np.array([1.0, math.nan]), 0.0)


def test_decide_examples():
    assert decide(H1, [0.0, 0.0]) == -1
    assert decide(H1, [1.0, 0.0]) == 1
    # boundary tie-break: f(x) = 0 maps to -1
    assert decide(LinearClassifier(np.array([1.0, 0.0]), 0.0), [0.0, 0.0]) == -1


def test_margin_and_direction_l2():
    h = LinearClassifier(np.array([3.0, 4.0]), 0.0)
    margin, d = margin_and_direction(h, [1.0, 0.0], 1, ThreatModel.l2(1.0))
    assert margin == pytest.approx(0.6)
    np.testing.assert_allclose(d, [-0.6, -0.8])


def test_margin_and_direction_linf():
    h = LinearClassifier(np.array([3.0, 4.0]), 0.0)
    margin, d = margin_and_direction(h, [1.0, 0.0], 1, ThreatModel.linf(1.0))
    assert margin == pytest.approx(3.0 / 7.0)
    np.testing.assert_array_equal(d, [-1.0, -1.0])


def test_margin_negative_label():
    margin, d = margin_and_direction(H1, [0.0, 0.0], -1, ThreatModel.l2(1.0))
    assert margin == pytest.approx(0.5)
    np.testing.assert_allclose(d, [1.0, 0.0])


def test_margin_requires_correct_point():
    with pytest.raises(ValueError):
        margin_and_direction(H1, [1.0, 0.0], -1, ThreatModel.l2(1.0))


def test_margin_step_flips_decision():
    """Moving margin + nu along the attack direction always crosses the
    boundary and stays inside the budget when nu <= eps - margin."""
    rng = np.random.default_rng(3)
    for tm in (ThreatModel.l2(1.0), ThreatModel.linf(1.0)):
        done = 0
        while done < 200:
            d = int(rng.integers(2, 6))
            w = rng.standard_normal(d)
            if not np.any(w):
                continue
            h = LinearClassifier(w, float(rng.normal()))
            x = rng.standard_normal(d)
            y = 1 if h.score(x) > 0 else -1
            if y * h.score(x) <= 0:
                continue
            margin, direction = margin_and_direction(h, x, y, tm)
            if margin >= tm.epsilon:
                continue
            nu = rng.uniform(1e-9, tm.epsilon - margin)
            z = x + (margin + nu) * direction
            assert y * h.score(z) < 0
            assert lp_norm(z - x, tm.p) <= tm.epsilon + 1e-9
            done += 1


def test_zero_one_mixture_examples():
    h2 = LinearClassifier(np.array([-1.0, 0.0]), -0.5)
    mix = Mixture((H1, h2))
    # at (1,0): h1 predicts +1, h2 predicts -1; only one wrong for y=+1
    assert zero_one_mixture(mix, [1.0, 0.0], 1) == 0.5
    weighted = Mixture((H1, h2), np.array([0.7, 0.3]))
    assert zero_one_mixture(weighted, [1.0, 0.0], 1) == pytest.approx(0.3)
    assert zero_one_mixture(weighted, [1.0, 0.0], -1) == pytest.approx(0.7)
    robust = Mixture((H1,))
    assert zero_one_mixture(robust, [1.0, 0.0], 1) == 0.0


def test_zero_one_equals_fooled_mass():
    rng = np.random.default_rng(11)
    for _ in range(100):
        mix = sample_random_mixture(3, 4, 0.3, 0.2, rng=rng)
        x = rng.standard_normal(3)
        y = int(rng.choice([-1, 1]))
        mask = fooled_mask(mix, x, y)
        mass = sum(mix.weights[i] for i in range(4) if mask >> i & 1)
        assert zero_one_mixture(mix, x, y) == mass


def test_srh_example():
    f1 = LinearClassifier(np.array([1.0, 0.0]), 0.0)
    f2 = LinearClassifier(np.array([0.0, 1.0]), 0.0)
    value, grad = srh([f1, f2], [1.0, 2.0], 1)
    assert value == pytest.approx(1.5)
    np.testing.assert_allclose(grad, [0.5, 0.5])


def test_srh_zero_when_all_fooled():
    value, grad = srh([H1], [0.0, 0.0], 1)
    assert value == 0.0
    np.testing.assert_array_equal(grad, np.zeros(2))


def test_srh_empty_pool():
    with pytest.raises(ValueError):
        srh([], [0.0], 1)


def test_srh_matches_finite_differences():
    """Subgradient agrees with central differences away from hinge kinks."""
    rng = np.random.default_rng(5)
    h = 1e-6
    checked = 0
    while checked < 100:
        d = int(rng.integers(2, 6))
        cls = [LinearClassifier(rng.standard_normal(d), float(rng.normal()))
               for _ in range(int(rng.integers(1, 5)))]
        x = rng.standard_normal(d)
        y = int(rng.choice([-1, 1]))
        if min(abs(y * c.score(x)) for c in cls) < 1e-3:
            continue
        _, grad = srh(cls, x, y)
        fd = np.zeros(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            fd[i] = (srh(cls, x + e, y)[0] - srh(cls, x - e, y)[0]) / (2 * h)
        denom = max(np.linalg.norm(fd), 1e-12)
        assert np.linalg.norm(grad - fd) / denom < 1e-5
        checked += 1


@given(t=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
@settings(max_examples=150, deadline=None)
def test_srh_convex_along_segments(t, seed):
    rng = np.random.default_rng(seed)
    cls = [LinearClassifier(rng.standard_normal(3), float(rng.normal()))
           for _ in range(3)]
    x1, x2 = rng.standard_normal(3), rng.standard_normal(3)
    y = int(rng.choice([-1, 1]))
    mid = t * x1 + (1 - t) * x2
    lhs = srh(cls, mid, y)[0]
    rhs = t * srh(cls, x1, y)[0] + (1 - t) * srh(cls, x2, y)[0]
    assert lhs <= rhs + 1e-12


def test_weighted_rev_hinge_matches_srh_for_uniform():
    rng = np.random.default_rng(9)
    mix = sample_random_mixture(4, 3, 0.3, 0.2, rng=rng)
    uniform = Mixture(mix.classifiers)
    x = rng.standard_normal(4)
    v1, g1 = weighted_rev_hinge(uniform, x, -1)
    v2, g2 = srh(uniform.classifiers, x, -1)
    assert v1 == pytest.approx(v2)
    np.testing.assert_allclose(g1, g2)


class TestSampler:
    def test_construction_invariants(self):
        mix = sample_random_mixture(16, 8, 0.25, 0.05, rng=trial_rng(42))
        for h in mix.classifiers:
            assert abs(lp_norm(h.w, 2) - 1.0) <= 1e-12
            assert h.b <= 0
        assert mix.weights.sum() == pytest.approx(1.0)
        assert np.all(mix.weights > 0)

    def test_folded_gaussian_distance_mean(self):
        """Empirical mean of the boundary distances matches the folded-normal
        moment formula within 3 standard errors."""
        alpha, beta, n = 0.25, 0.05, 100_000
        phi = lambda z: 0.5 * (1.0 + math.erf(z / math.sqrt(2)))
        mean_f = (beta * math.sqrt(2 / math.pi) * math.exp(-alpha**2 / (2 * beta**2))
                  + alpha * (1 - 2 * phi(-alpha / beta)))
        var_f = alpha**2 + beta**2 - mean_f**2
        mix = sample_random_mixture(2, n, alpha, beta, rng=trial_rng(7))
        dists = -mix.bvec
        assert abs(dists.mean() - mean_f) <= 3 * math.sqrt(var_f / n)

    def test_deterministic_given_stream(self):
        a = sample_random_mixture(5, 3, 0.25, 0.2, rng=trial_rng(42, 1))
        b = sample_random_mixture(5, 3, 0.25, 0.2, rng=trial_rng(42, 1))
        c = sample_random_mixture(5, 3, 0.25, 0.2, rng=trial_rng(42, 2))
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert not np.array_equal(a.W, c.W)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            sample_random_mixture(0, 3, 0.25, 0.2)
        with pytest.raises(ValueError):
            sample_random_mixture(2, 3, 0.25, -1.0)
        with pytest.raises(ValueError):
            sample_random_mixture(2, 3, 0.25, 0.2, temperature=0.0)


def test_mixture_weight_validation():
    with pytest.raises(ValueError):
        Mixture((H1,), np.array([0.5]))
    with pytest.raises(ValueError):
        Mixture((H1, H1), np.array([1.0]))


def test_serialization_roundtrip():
    mix = sample_random_mixture(3, 2, 0.25, 0.2, rng=trial_rng(0))
    data = json.loads(json.dumps(mixture_to_dict(mix)))
    back = mixture_from_dict(data)
    np.testing.assert_array_equal(back.W, mix.W)
    np.testing.assert_array_equal(back.bvec, mix.bvec)
    np.testing.assert_array_equal(back.weights, mix.weights)


def test_serialization_uniform_default():
    data = {"classifiers": [{"w": [1.0, 0.0], "b": -0.5}, {"w": [0.0, 1.0], "b": -0.5}]}
    mix = mixture_from_dict(data)
    np.testing.assert_array_equal(mix.weights, [0.5, 0.5])


def test_labeled_point_coerces():
    pt = LabeledPoint([1.0, 2.0], -1)
    assert pt.x.dtype == float
    assert pt.y == -1
