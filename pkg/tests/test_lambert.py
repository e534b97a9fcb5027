import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parabolica.action import SolverConfig, best_minimizer, discrete_action
from parabolica.lambert import (
    KeplerComparison,
    SampleSpec,
    excess_F,
    excess_F0,
    kepler_central_action_A0,
    lambert_collinear_reduction,
    localization_constants,
    localization_radii,
    polar_angle_variation,
    random_direction_configuration,
    verify_localization,
)
from parabolica.kepler1d import kepler_action_S


def test_reduction_values():
    d1, d2 = lambert_collinear_reduction(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert d1 == pytest.approx(1 - math.sqrt(2) / 2)
    assert d2 == pytest.approx(1 + math.sqrt(2) / 2)
    # collinear same-side endpoints reduce to themselves
    d1, d2 = lambert_collinear_reduction(np.array([0.5, 0.0]), np.array([2.0, 0.0]))
    assert (d1, d2) == pytest.approx((0.5, 2.0))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0, math.pi), st.floats(0.1, 5))
def test_comparison_action_bounds(r1, r2, th, s):
    x1 = np.array([r1, 0.0])
    x2 = np.array([r2 * math.cos(th), r2 * math.sin(th)])
    A0 = kepler_central_action_A0(x1, x2, s, 2.0)
    # never more than the radial action with the same radii (angle only helps the chord)
    assert A0 >= kepler_action_S(min(r1, r2), max(r1, r2), s, 2.0) - 1e-9 * A0 or th > 0
    d1, d2 = lambert_collinear_reduction(x1, x2)
    assert d1 + d2 == pytest.approx(r1 + r2)
    assert d2 - d1 == pytest.approx(math.dist(x1, x2), abs=1e-12)


def test_comparison_potential_interface():
    kc = KeplerComparison(2.0, (1.0, 3.0))
    y = np.array([[0.3, -0.2], [0.1, 0.4]])
    h = 1e-6
    g = kc.partials_batch(y)
    fd = np.zeros_like(y)
    for idx in np.ndindex(y.shape):
        e = np.zeros_like(y)
        e[idx] = h
        fd[idx] = (kc.potential_batch(y + e) - kc.potential_batch(y - e)) / (2 * h)
    assert np.allclose(g, fd, rtol=1e-6)
    with pytest.raises(ValueError):
        KeplerComparison(-1.0)


def test_planar_minimizer_matches_reduction():
    kc = KeplerComparison(1.5)
    x1 = np.array([[1.0, 0.0]])
    x2 = np.array([[0.0, 1.6]])
    rep = best_minimizer(kc, x1, x2, 1.2, SolverConfig(nodes=2000))
    A0 = kepler_central_action_A0(x1[0], x2[0], 1.2, 1.5)
    assert rep.converged
    assert rep.action == pytest.approx(A0, rel=1e-3)
    assert polar_angle_variation(rep.path) <= math.pi + 0.05


def test_F0_vanishes_on_homothetic_ray(cc3):
    x = cc3.alpha * cc3.x0
    for s in (10.0, 100.0):
        assert abs(excess_F0(cc3, x, s)) < 1e-7
    with pytest.raises(ValueError):
        excess_F0(cc3, x, 0.5)


def test_excess_chain_at_sample(three_equal, cc3, rng):
    x = random_direction_configuration(three_equal, cc3.x0, cc3.alpha * 1.2, 0.4, rng)
    rep = excess_F(three_equal, cc3, x, 20.0, SolverConfig(nodes=600))
    assert rep.converged and rep.chain_ok
    assert rep.F_val >= rep.F0_val - rep.slack
    assert rep.F0_val >= rep.scriptG_val >= 0


def test_random_direction_geometry(three_equal, cc3, rng):
    x = random_direction_configuration(three_equal, cc3.x0, 2.0, 0.3, rng)
    assert three_equal.norm(x) == pytest.approx(2.0)
    cos = three_equal.dot(x, cc3.x0) / 2.0
    assert math.acos(min(cos, 1.0)) == pytest.approx(0.3, abs=1e-12)


def test_localization_constants_for_equal_three_bodies():
    consts = localization_constants(3.0)
    assert consts.C1 == pytest.approx(0.75, rel=1e-2)
    assert consts.C2 > consts.C2_threshold
    d1, d2, ball, mu = localization_radii(1e-3, 3.0, consts)
    assert d1 == pytest.approx(math.sqrt(2e-3 / consts.C1))
    assert abs(mu) < 1 / 8
    assert ball > d1


def test_verify_small_sample(cc3):
    rep = verify_localization(cc3, [1e-3], [1000.0], SampleSpec(60, 60, 60))
    assert rep["total_violations"] == 0
    assert rep["entries"][0]["verdict"] == "pass"
    # eps far beyond the admissible range is reported without a verdict
    rep = verify_localization(cc3, [10.0], [1000.0], SampleSpec(10, 10, 10))
    assert rep["entries"][0]["verdict"] == "outside_hypotheses"
