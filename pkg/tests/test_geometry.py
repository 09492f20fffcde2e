import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixattack.geometry import (
    LINF,
    ThreatModel,
    descent_step,
    lp_norm,
    project_ball,
)


def test_lp_norm_values():
    assert lp_norm((3, 4), 2) == 5.0
    assert lp_norm((1, -2, 3), LINF) == 3.0
    assert lp_norm((0, 0), 2) == 0.0


def test_lp_norm_rejects_non_finite():
    with pytest.raises(ValueError):
        lp_norm((1.0, math.nan), 2)
    with pytest.raises(ValueError):
        lp_norm((math.inf, 0.0), LINF)


def test_threat_model_validation():
    with pytest.raises(ValueError):
        ThreatModel(3.0, 1.0)
    with pytest.raises(ValueError):
        ThreatModel.l2(-0.1)
    assert ThreatModel.l2(1.0).dual_p == 2.0
    assert ThreatModel.linf(1.0).dual_p == 1.0


def test_project_ball_examples():
    tm = ThreatModel.l2(1.0)
    np.testing.assert_allclose(project_ball([3.0, 4.0], [0.0, 0.0], tm), [0.6, 0.8])
    tmi = ThreatModel.linf(1.0)
    np.testing.assert_array_equal(project_ball([0.5, -2.0], [0.0, 0.0], tmi), [0.5, -1.0])
    v = np.array([0.1, 0.1])
    np.testing.assert_array_equal(project_ball(v, np.zeros(2), tm), v)


def test_project_ball_dimension_mismatch():
    with pytest.raises(ValueError):
        project_ball([1.0, 2.0], [0.0], ThreatModel.l2(1.0))


@given(
    v=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6),
    eps=st.floats(1e-6, 1e3),
    p_inf=st.booleans(),
)
@settings(max_examples=200, deadline=None)
def test_projection_idempotent_and_contractive(v, eps, p_inf):
    tm = ThreatModel(LINF if p_inf else 2.0, eps)
    arr = np.asarray(v)
    center = np.zeros_like(arr)
    proj = project_ball(arr, center, tm)
    np.testing.assert_array_equal(project_ball(proj, center, tm), proj)
    assert lp_norm(proj - center, tm.p) <= lp_norm(arr - center, tm.p)


def test_projection_stays_inside_bulk():
    """10^4 random points land within eps + 1e-12 of the center."""
    rng = np.random.default_rng(0)
    for tm in (ThreatModel.l2(0.7), ThreatModel.linf(0.7)):
        for _ in range(10):
            V = rng.standard_normal((1000, 5)) * rng.uniform(0.01, 100)
            center = rng.standard_normal(5)
            for v in V:
                proj = project_ball(v, center, tm)
                assert lp_norm(proj - center, tm.p) <= tm.epsilon + 1e-12


def test_descent_step_examples():
    tm2 = ThreatModel.l2(1.0)
    tmi = ThreatModel.linf(1.0)
    np.testing.assert_allclose(descent_step([1.0, -2.0], 0.5, tmi, "steepest"), [-0.5, 0.5])
    np.testing.assert_allclose(descent_step([3.0, 4.0], 1.0, tm2, "steepest"), [-0.6, -0.8])
    np.testing.assert_allclose(descent_step([3.0, 4.0], 0.1, tm2, "raw"), [-0.3, -0.4])


def test_descent_step_zero_gradient_stalls():
    tm = ThreatModel.l2(1.0)
    np.testing.assert_array_equal(descent_step(np.zeros(3), 1.0, tm, "steepest"), np.zeros(3))


def test_descent_step_validation():
    tm = ThreatModel.l2(1.0)
    with pytest.raises(ValueError):
        descent_step([1.0], 0.0, tm)
    with pytest.raises(ValueError):
        descent_step([1.0], 1.0, tm, "sideways")
    with pytest.raises(ValueError):
        descent_step([math.nan], 1.0, tm)
