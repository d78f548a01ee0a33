import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_cycles.errors import HybridCyclesError
from hybrid_cycles.hybrid import HybridOptions, check_hypotheses, hybrid_flow, impact_sequence
from hybrid_cycles.models import (
    MODELS,
    PolarParams,
    RimlessWheelParams,
    VdpHybridParams,
    energy_gain,
    energy_loss,
    existence_inequality,
    make_counterexamples,
    make_logistic_line,
    make_model,
    make_noninvariance,
    make_polar,
    make_rimless_wheel,
    make_vdp_hybrid,
    polar_flow,
    rimless_fixed_speed,
    rimless_step_oracle,
    vdp_reference_impacts,
)
from hybrid_cycles.poincare import chart_map, derivative_planar, find_fixed_point, return_map

OPTS = HybridOptions().with_tolerance(1e-11)
WHEEL = RimlessWheelParams()


# Van der Pol


def test_vdp_divergence_and_guard():
    sys = make_vdp_hybrid(VdpHybridParams(mu=0.7))
    z = np.array([0.4, -0.3])
    assert sys.field.divergence(z) == pytest.approx(0.7 * (1 - 0.16))
    assert sys.guard(np.array([1.0, 5.0])) == 0.0


def test_vdp_reference_values():
    y_minus, y_plus = vdp_reference_impacts()
    assert y_minus == pytest.approx(-1.0498, abs=5e-5)
    assert y_plus == pytest.approx(1.5747, abs=5e-5)


def test_linear_reset_keeps_orbit_and_sets_slope():
    A, B = vdp_reference_impacts()
    sys = make_vdp_hybrid(VdpHybridParams(m=-3.0))
    assert np.allclose(sys.reset([1.0, A]), [1.0, B])
    assert np.allclose(sys.reset([1.0, A + 0.1]), [1.0, B - 0.3])


def test_linear_reset_stability_boundary():
    A, _ = vdp_reference_impacts()
    mags = {}
    for m in (-4.4, -4.6):
        sys = make_vdp_hybrid(VdpHybridParams(m=m))
        mags[m] = derivative_planar(sys, sys.extras["chart"], A, OPTS, with_fd=False).product
    assert mags[-4.4] < 1 < mags[-4.6]
    # |P'| is linear in |m|; solve for the crossing
    slope = mags[-4.6] / 4.6
    assert 1 / slope == pytest.approx(4.4943, abs=1e-3)


# polar


def test_polar_closed_form_flow():
    assert polar_flow(0.5, 0.1, 2.0) == pytest.approx(((0.5 - 1) * math.exp(-2) + 1, 2.1))


def test_polar_fixed_radius_reference():
    p = PolarParams(alpha=math.pi, beta=2.0, gamma=0.0)
    # post-reset radius of the periodic orbit
    assert p.beta * p.fixed_radius == pytest.approx(2.0946, abs=1e-4)
    assert p.return_map(p.fixed_radius) == pytest.approx(p.fixed_radius)


def test_polar_without_fixed_point():
    p = PolarParams(alpha=1.0, beta=3.0, gamma=0.0)
    assert p.contraction >= 1 and p.fixed_radius is None
    sys = make_polar(p, "polar")
    chart = sys.extras["chart"]
    try:
        s = find_fixed_point(sys, chart, 0.8, OPTS, max_iter=30)
    except HybridCyclesError:
        return
    # the affine map's only fixed point is at negative radius, and repelling
    assert s < 0
    assert derivative_planar(sys, chart, s, OPTS, with_fd=False).verdict == "unstable"


def test_polar_params_validation():
    with pytest.raises(ValueError):
        PolarParams(alpha=1.0, gamma=1.0)
    with pytest.raises(ValueError):
        PolarParams(beta=0.0)
    with pytest.raises(ValueError):
        make_polar(coords="spherical")


def test_cartesian_polar_divergence_matches_finite_difference():
    sys = make_polar()
    z = np.array([0.6, -0.9])
    h = 1e-6
    fd = sum((sys.field(z + h * e)[i] - sys.field(z - h * e)[i]) / (2 * h) for i, e in enumerate(np.eye(2)))
    assert sys.field.divergence(z) == pytest.approx(fd, rel=1e-7)


# rimless wheel


def test_wheel_params_validation():
    with pytest.raises(ValueError):
        RimlessWheelParams(delta=math.pi / 4)
    with pytest.raises(ValueError):
        RimlessWheelParams(alpha=0.0)
    with pytest.raises(ValueError):
        RimlessWheelParams(zeta=-1.0)
    assert RimlessWheelParams(zeta=4.0, ell=2.0).gravity == 8.0


def test_wheel_structure():
    sys = make_rimless_wheel(WHEEL)
    d, a = WHEEL.delta, WHEEL.alpha
    assert sys.field.divergence(np.array([0.3, 1.0])) == 0.0
    assert np.allclose(sys.reset([-d - a, -2.0]), [d - a, -2.0 * math.cos(2 * d)])
    assert sys.guard(np.array([-d - a, 1.0])) == pytest.approx(0.0, abs=1e-15)


def test_wheel_stable_gait():
    sys = make_rimless_wheel(WHEEL)
    chart = sys.extras["chart"]
    s = find_fixed_point(sys, chart, -1.5, OPTS, horizon=50.0)
    assert s == pytest.approx(-1.9144005619, abs=1e-8)
    assert derivative_planar(sys, chart, s, OPTS, horizon=50.0).product < 1


def test_wheel_falls_back_below_vaulting_speed():
    d, a, z = WHEEL.delta, WHEEL.alpha, WHEEL.zeta
    v_min = math.sqrt(2 * z * (1 - math.cos(d - a)))
    sys = make_rimless_wheel(WHEEL)
    slow = hybrid_flow(sys, [d - a, -0.9 * v_min], 20.0, OPTS)
    fast = hybrid_flow(sys, [d - a, -1.1 * v_min], 20.0, OPTS, stop_after=1)
    assert slow.impacts == [] and slow.termination == "left-domain"
    assert len(fast.impacts) == 1


def test_step_oracle_on_random_states():
    sys = make_rimless_wheel(WHEEL)
    chart = sys.extras["chart"]
    P = chart_map(sys, chart, OPTS, horizon=50.0)
    rng = np.random.default_rng(7)
    checked = 0
    for v in rng.uniform(-6.0, -0.6, size=100):
        nxt = rimless_step_oracle(WHEEL, v)
        if nxt is None:
            continue
        assert P(v) == pytest.approx(nxt, abs=1e-8)
        checked += 1
    assert checked > 80


def test_energy_gain_values():
    assert energy_gain(WHEEL) == pytest.approx(2 * 9.8 * 0.309017 * 0.104528, rel=1e-5)
    assert energy_gain(WHEEL) == pytest.approx(0.63311, abs=1e-5)
    assert energy_gain(RimlessWheelParams(alpha=1e-12)) == pytest.approx(0.0, abs=1e-10)
    double = RimlessWheelParams(zeta=9.8, ell=2.0)
    assert energy_gain(double) == pytest.approx(4 * energy_gain(WHEEL))  # g = zeta ell and ell both double


def test_energy_loss_values():
    assert energy_loss(WHEEL, 0.0) == 0.0
    assert energy_loss(RimlessWheelParams(delta=1e-9), 3.0) == pytest.approx(0.0, abs=1e-15)
    assert energy_loss(WHEEL, 1.0) == pytest.approx(0.5 * (1 - math.cos(math.pi / 5) ** 2))


def test_energy_balance_at_gait():
    sys = make_rimless_wheel(WHEEL)
    evs = impact_sequence(sys, sys.extras["x0"], 80, OPTS, horizon=400.0)
    v = evs[-1].x_minus[1]
    assert abs(energy_gain(WHEEL) - energy_loss(WHEEL, v)) < 1e-6
    assert v == pytest.approx(rimless_fixed_speed(WHEEL), abs=1e-8)


def test_existence_inequality_reference():
    lhs, rhs, holds = existence_inequality(WHEEL)
    assert lhs == pytest.approx(0.06461, abs=2e-5)
    assert rhs == pytest.approx(0.011534, abs=2e-6)
    assert holds


def test_existence_inequality_limits():
    lhs, rhs, holds = existence_inequality(RimlessWheelParams(delta=0.3, alpha=1e-9))
    assert lhs < 1e-8 and rhs > 0 and not holds
    lhs, rhs, holds = existence_inequality(RimlessWheelParams(delta=math.pi / 4 - 1e-9, alpha=0.1))
    assert rhs > 1e6 and not holds
    assert not existence_inequality(RimlessWheelParams(delta=0.1, alpha=0.2))[2]


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 0.7), st.floats(0.01, 0.6))
def test_inequality_matches_vaulting_fixed_point(delta, alpha):
    # the condition is exactly that the period-one gait clears the upright position
    p = RimlessWheelParams(delta=delta, alpha=alpha)
    lhs, rhs, holds = existence_inequality(p)
    if abs(lhs - rhs) < 1e-9 or delta <= alpha:
        return
    v = rimless_fixed_speed(p)
    assert holds == (rimless_step_oracle(p, v) is not None)


# counterexamples and registry


def test_noninvariance_first_impact():
    sys = make_noninvariance()
    ev = impact_sequence(sys, sys.extras["x0"], 1, OPTS)[0]
    assert ev.x_minus[1] == pytest.approx(0.5, abs=1e-10)


def test_annulus_stays_in_annulus():
    sys = make_counterexamples()["annulus"]
    traj = hybrid_flow(sys, sys.extras["x0"], 200.0, OPTS)
    radii = np.concatenate([np.linalg.norm(s.states, axis=1) for s in traj.segments])
    assert radii.min() >= 1.0 - 1e-9 and radii.max() <= 2.0 + 1e-9
    assert len(traj.impacts) > 100


def test_logistic_line_section_map():
    sys = make_logistic_line()
    for y in np.linspace(0.05, 0.95, 19):
        x = np.array([2.0, y])
        assert return_map(sys, x, OPTS).x_out[1] == pytest.approx(4 * y * (1 - y), abs=1e-9)


@pytest.mark.parametrize("name,expect", [("vdp", True), ("rimless_wheel", True), ("logistic_line", False), ("annulus", False)])
def test_registry_hypotheses(name, expect):
    sys = make_model(name)
    rep = check_hypotheses(sys, sys.extras["chart"])
    core = ["chart", "H.4", "C.2", "C.4", "C.5(S)"]
    assert rep.all_passed(core) == expect


def test_registry():
    assert set(MODELS) == {"vdp", "polar", "rimless_wheel", "noninvariance", "annulus", "logistic_line"}
    assert make_model("polar", {"beta": 1.5, "coords": "polar"}).extras["params"].beta == 1.5
    with pytest.raises(KeyError):
        make_model("pendulum")
    with pytest.raises(TypeError):
        make_model("annulus", {"r": 1})
