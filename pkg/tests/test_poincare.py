import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_cycles.errors import NoImpact, NotAFixedPoint
from hybrid_cycles.hybrid import HybridOptions
from hybrid_cycles.models import (
    PolarParams,
    RimlessWheelParams,
    make_polar,
    make_polar_3d,
    make_rimless_wheel,
    make_vdp_hybrid,
    rimless_fixed_speed,
    vdp_reference_impacts,
)
from hybrid_cycles.poincare import (
    chart_map,
    derivative_multi,
    derivative_planar,
    determinant_test,
    fd_derivative,
    find_fixed_point,
    return_map,
    section_basis,
    time_to_impact,
)

OPTS = HybridOptions().with_tolerance(1e-11)


@pytest.fixture(scope="module")
def vdp():
    sys = make_vdp_hybrid()
    chart = sys.extras["chart"]
    s = find_fixed_point(sys, chart, -1.0, OPTS)
    return sys, chart, s


def test_vdp_fixed_point(vdp):
    sys, chart, s = vdp
    assert s == pytest.approx(-1.0498120355, abs=1e-9)
    assert s == pytest.approx(vdp_reference_impacts()[0], abs=1e-9)
    y = return_map(sys, chart(s), OPTS).y
    assert y[1] == pytest.approx(1.5747180533, abs=1e-9)


def test_vdp_factorized_derivative(vdp):
    sys, chart, s = vdp
    rep = derivative_planar(sys, chart, s, OPTS)
    assert rep.reset_derivative == pytest.approx(1.5)
    assert rep.speed_ratio == pytest.approx(1.28661, abs=1e-5)
    assert rep.sine_ratio == pytest.approx(1.16586, abs=1e-5)
    assert rep.divergence_factor == pytest.approx(0.148325, abs=1e-6)
    assert rep.product == pytest.approx(0.333731, abs=1e-6)
    assert rep.signed_product == pytest.approx(rep.product)
    assert rep.fd_relative_error < 1e-6
    assert rep.verdict == "stable"


def test_vdp_derivative_is_linear_in_reset_gain():
    # the reset gain m enters only through Delta' = |m|; the rest is a flow property
    from hybrid_cycles.models import VdpHybridParams

    for m in (-1.2, -1.8, 2.0):
        sys = make_vdp_hybrid(VdpHybridParams(scale=m))
        chart = sys.extras["chart"]
        s = find_fixed_point(sys, chart, -1.0, OPTS)
        rep = derivative_planar(sys, chart, s, OPTS)
        assert rep.reset_derivative == pytest.approx(abs(m))
        assert rep.signed_product == pytest.approx(rep.fd_check, rel=1e-5)


def test_derivative_rejects_non_fixed_point(vdp):
    sys, chart, s = vdp
    with pytest.raises(NotAFixedPoint):
        derivative_planar(sys, chart, s + 0.1, OPTS)


def test_return_map_without_impact():
    from hybrid_cycles.guard import RISING, Guard
    from hybrid_cycles.hybrid import HybridSystem, Reset
    from hybrid_cycles.ode import VectorField

    # the reset throws the state past S and the flow carries it away
    sys = HybridSystem(
        VectorField(lambda z: np.array([1.0, 0.0]), 2),
        Guard(lambda z: z[0] - 1.0, direction=RISING),
        Reset(lambda z: np.array([2.0, z[1]])),
    )
    with pytest.raises(NoImpact):
        return_map(sys, [1.0, 0.0], OPTS, horizon=5.0)
    with pytest.raises(ValueError):
        return_map(sys, [0.0, 0.0], OPTS)


@pytest.mark.parametrize("coords", ["polar", "cartesian"])
def test_polar_chart_map_matches_closed_form(coords):
    p = PolarParams(alpha=2.5, beta=1.7, gamma=0.4)
    sys = make_polar(p, coords)
    P = chart_map(sys, sys.extras["chart"], OPTS)
    for r in (0.2, 0.9, 2.5):
        assert P(r) == pytest.approx(p.return_map(r), rel=1e-9)


def test_polar_time_to_impact():
    p = PolarParams(alpha=2.5, beta=1.7, gamma=0.4)
    sys = make_polar(p, "polar")
    assert time_to_impact(sys, [0.8, p.gamma], OPTS)[0] == pytest.approx(p.alpha - p.gamma, abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(
    T=st.floats(0.3, 3.0),
    frac=st.floats(0.0, 1.0),
    p=st.floats(0.1, 0.9),
)
def test_polar_derivative_product(T, frac, p):
    gamma = frac * (2 * math.pi - T - 1e-6)
    params = PolarParams(alpha=gamma + T, beta=p * math.exp(T), gamma=gamma)
    sys = make_polar(params, "polar")
    r_star = params.fixed_radius
    rep = derivative_planar(sys, sys.extras["chart"], r_star, OPTS, with_fd=False)
    assert rep.product == pytest.approx(params.contraction, rel=1e-8)
    assert rep.reset_derivative == pytest.approx(params.beta)
    assert rep.speed_ratio * rep.sine_ratio == pytest.approx(1.0, rel=1e-9)
    assert rep.divergence_factor == pytest.approx(math.exp(-T), rel=1e-8)


def test_polar_fixed_point_solver():
    p = PolarParams()
    sys = make_polar(p)
    s = find_fixed_point(sys, sys.extras["chart"], 0.5, OPTS)
    assert s == pytest.approx(p.fixed_radius, abs=1e-9)


def test_unstable_polar_verdict():
    p = PolarParams(alpha=1.0, beta=2.9, gamma=0.0)  # contraction 1.067 > 1
    assert p.fixed_radius is None
    # no positive fixed point; P is still expanding everywhere
    sys = make_polar(p, "polar")
    d = fd_derivative(sys, sys.extras["chart"], 0.8, opts=OPTS)
    assert d == pytest.approx(p.contraction, rel=1e-6)


def test_rimless_wheel_derivative():
    p = RimlessWheelParams()
    sys = make_rimless_wheel(p)
    chart = sys.extras["chart"]
    s = find_fixed_point(sys, chart, -1.5, OPTS, horizon=50.0)
    assert s == pytest.approx(rimless_fixed_speed(p), abs=1e-9)
    rep = derivative_planar(sys, chart, s, OPTS, horizon=50.0)
    assert rep.product == pytest.approx(math.cos(2 * p.delta) ** 2, rel=1e-6)
    assert rep.fd_relative_error < 1e-5


def test_period_two_product_is_square_of_period_one(vdp):
    sys, chart, s = vdp
    one = derivative_planar(sys, chart, s, OPTS, with_fd=False)
    two = derivative_multi(sys, chart, [s, s], OPTS)
    assert two.product == pytest.approx(one.product**2, rel=1e-9)
    assert two.period == pytest.approx(2 * one.period)


def test_fd_richardson_agrees(vdp):
    sys, chart, s = vdp
    plain = fd_derivative(sys, chart, s, opts=OPTS)
    rich = fd_derivative(sys, chart, s, opts=OPTS, richardson=True)
    assert rich == pytest.approx(plain, rel=1e-5)


def test_report_serializes(vdp):
    import json

    sys, chart, s = vdp
    rep = derivative_planar(sys, chart, s, OPTS)
    d = json.loads(rep.to_json())
    assert d["product"] == pytest.approx(rep.product)
    assert len(d["legs"]) == 1 and "product" in d["legs"][0]


def test_section_basis_is_orthonormal():
    n = np.array([1.0, 2.0, -0.5])
    E = section_basis(n)
    assert E.shape == (3, 2)
    assert np.allclose(E.T @ E, np.eye(2))
    assert np.allclose(n @ E, 0.0)


def test_determinant_test_on_extruded_polar():
    p = PolarParams()
    sys = make_polar_3d(p)
    T = p.alpha - p.gamma
    x = np.array([p.fixed_radius * math.cos(p.alpha), p.fixed_radius * math.sin(p.alpha), 0.0])
    value, verdict, details = determinant_test(sys, x, T, OPTS)
    assert value == pytest.approx(p.beta * math.exp(-2 * T), rel=1e-6)
    assert verdict == "inconclusive"
    assert details["closure_error"] < 1e-8


def test_determinant_test_flags_instability():
    p = PolarParams(alpha=0.5, beta=1.5, gamma=0.0)  # beta e^{-2T} = 0.55; expand z to push it over 1
    from hybrid_cycles.hybrid import HybridSystem, Reset

    base = make_polar_3d(p)
    sys = HybridSystem(base.field, base.guard, Reset(lambda z: base.reset(z) * np.array([1, 1, 5.0])))
    x = np.array([p.fixed_radius * math.cos(p.alpha), p.fixed_radius * math.sin(p.alpha), 0.0])
    value, verdict, _ = determinant_test(sys, x, p.alpha, OPTS)
    assert value == pytest.approx(5 * p.beta * math.exp(-2 * p.alpha), rel=1e-6)
    assert verdict == "necessarily unstable"
