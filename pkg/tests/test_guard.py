import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybrid_cycles.errors import DegenerateGuard, RefinementFailure
from hybrid_cycles.guard import (
    EITHER,
    FALLING,
    RISING,
    SCAN_POINTS,
    CrossingBracket,
    Guard,
    GrazingWarning,
    curve_frame,
    frame_at,
    refine_crossing,
    scan_crossings,
    signed_sine,
    transversality,
)
from hybrid_cycles.models import RimlessWheelParams, make_annulus, make_polar, make_rimless_wheel, make_vdp_hybrid
from hybrid_cycles.ode import IntegratorOptions, VectorField, flow

UNIT = VectorField(lambda x: np.ones(1), 1)
VDP = VectorField(lambda z: np.array([z[1], (1 - z[0] ** 2) * z[1] - z[0]]), 2)


def test_no_sign_change_gives_no_bracket():
    seg = flow(UNIT, [0.0], 2.0)
    assert scan_crossings(Guard(lambda x: x[0] + 5.0), seg) == []


def test_linear_crossing_is_bracketed_and_refined():
    seg = flow(UNIT, [0.0], 2.0)
    g = Guard(lambda x: x[0] - 1.0, lambda x: np.array([1.0]))
    (b,) = scan_crossings(g, seg)
    assert b.t_lo <= 1.0 <= b.t_hi
    t, x = refine_crossing(UNIT, g, seg, b)
    assert t == pytest.approx(1.0, abs=1e-12)
    assert abs(g(x)) <= 1e-9


def test_direction_filters_crossings():
    f = VectorField(lambda z: np.array([z[1], -z[0]]), 2)
    seg = flow(f, [0.0, 1.0], 2 * math.pi)  # x = sin t crosses 0.5 up then down
    up = scan_crossings(Guard(lambda z: z[0] - 0.5, direction=RISING), seg)
    down = scan_crossings(Guard(lambda z: z[0] - 0.5, direction=FALLING), seg)
    both = scan_crossings(Guard(lambda z: z[0] - 0.5, direction=EITHER), seg)
    assert len(up) == 1 and len(down) == 1 and len(both) == 2
    assert up[0].t_hi < down[0].t_lo


def test_grazing_touch_without_sign_change_is_not_reported():
    f = VectorField(lambda z: np.array([z[1], -z[0]]), 2)
    seg = flow(f, [0.0, 1.0], math.pi)
    assert scan_crossings(Guard(lambda z: z[0] - 1.0), seg) == []


def test_vdp_first_return_matches_fine_scan_oracle():
    g = Guard(lambda z: z[0] - 1.0, direction=FALLING)
    seg = flow(VDP, [1.0, 3.0], 5.0)
    b = scan_crossings(g, seg)[0]
    t_star, _ = refine_crossing(VDP, g, seg, b)
    fine = flow(VDP, [1.0, 3.0], 5.0, IntegratorOptions(rel_tol=1e-12, abs_tol=1e-14))
    ts = np.linspace(0.0, 5.0, 200001)
    hs = fine(ts)[:, 0] - 1.0
    k = np.nonzero((hs[:-1] > 0) & (hs[1:] <= 0))[0][0]
    assert b.t_lo <= ts[k + 1] and ts[k] <= b.t_hi
    assert abs(t_star - ts[k]) <= ts[1] - ts[0]


def test_polar_return_time_is_alpha_minus_gamma():
    sys = make_polar(coords="polar")
    p = sys.extras["params"]
    seg = flow(sys.field, [0.7, p.gamma], 5.0)
    (b,) = scan_crossings(sys.guard, seg)
    t, _ = refine_crossing(sys.field, sys.guard, seg, b)
    assert t == pytest.approx(p.alpha - p.gamma, abs=1e-10)


def test_rimless_wheel_impact_time_against_tight_run():
    p = RimlessWheelParams()
    sys = make_rimless_wheel(p)
    c = math.cos(2 * p.delta)
    x0 = np.array([p.delta - p.alpha, c * -1.914400561893198])

    def impact_time(rel_tol):
        seg = flow(sys.field, x0, 2.0, IntegratorOptions(rel_tol=rel_tol, abs_tol=rel_tol * 1e-2))
        b = scan_crossings(sys.guard, seg)[0]
        return refine_crossing(sys.field, sys.guard, seg, b)[0]

    assert impact_time(1e-10) == pytest.approx(impact_time(1e-13), abs=1e-9)


def test_refinement_failure_on_a_jump():
    seg = flow(UNIT, [0.0], 2.0)
    g = Guard(lambda x: 1.0 if x[0] > 1.0 else -1.0)
    (b,) = scan_crossings(g, seg)
    with pytest.raises(RefinementFailure):
        refine_crossing(UNIT, g, seg, b)


def test_bracket_validation():
    with pytest.raises(ValueError):
        CrossingBracket(1.0, 0.5, -1, 1)
    with pytest.raises(ValueError):
        CrossingBracket(0.0, 0.5, 1, 1)


def test_frames_of_builtin_guards():
    f = frame_at(Guard(lambda z: z[0] - 1.0), [1.0, 0.3])
    assert np.allclose(f.normal, [1, 0]) and np.allclose(f.tangent, [0, 1])
    f = frame_at(make_annulus().guard, [2.0, 0.0])
    assert np.allclose(f.normal, [1, 0]) and np.allclose(f.tangent, [0, 1])
    p = RimlessWheelParams()
    f = frame_at(make_rimless_wheel(p).guard, [-p.delta - p.alpha, -1.0])
    assert np.allclose(f.normal, [1, 0]) and np.allclose(f.tangent, [0, 1])


def test_vanishing_gradient_is_degenerate():
    with pytest.raises(DegenerateGuard):
        frame_at(Guard(lambda z: z[0] ** 2 + z[1] ** 2), [0.0, 0.0])


@pytest.mark.parametrize("factory", [make_vdp_hybrid, make_annulus, make_rimless_wheel, make_polar])
def test_frame_orthonormality_on_random_points(factory):
    guard = factory().guard
    rng = np.random.default_rng(1)
    for x in rng.uniform(-3, 3, size=(1000, 2)):
        if np.linalg.norm(x) < 1e-3:
            continue
        fr = frame_at(guard, x)
        assert abs(fr.tangent @ fr.normal) < 1e-12
        assert abs(np.linalg.norm(fr.tangent) - 1) < 1e-12
        assert abs(np.linalg.norm(fr.normal) - 1) < 1e-12


def test_signed_sine_reference_values():
    fr = frame_at(Guard(lambda z: z[0] - 1.0), [1.0, 0.0])
    assert signed_sine(fr.tangent, fr) == 0.0
    assert signed_sine(fr.normal, fr) == pytest.approx(1.0)
    assert signed_sine(-fr.normal, fr) == pytest.approx(-1.0)
    with pytest.raises(DegenerateGuard):
        signed_sine([0.0, 0.0], fr)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0, 2 * math.pi))
def test_sine_cosine_identity(vx, vy, angle):
    v = np.array([vx, vy])
    if np.linalg.norm(v) < 1e-6:
        return
    fr = curve_frame(lambda s: np.array([math.cos(s), math.sin(s)]), angle)
    s = signed_sine(v, fr)
    c = float(v @ fr.tangent) / np.linalg.norm(v)
    assert s * s + c * c == pytest.approx(1.0, abs=1e-12)


def test_curve_frame_follows_parameter():
    fr = curve_frame(lambda s: np.array([s, 2 * s]), 0.3)
    assert np.allclose(fr.tangent, np.array([1, 2]) / math.sqrt(5))
    assert abs(fr.normal @ fr.tangent) < 1e-15


def test_transversality_values():
    g = Guard(lambda x: x[0] - 1.0, lambda x: np.array([1.0]))
    assert transversality(UNIT, g, [1.0]) == 1.0
    along = VectorField(lambda z: np.array([0.0, 1.0]), 2)
    assert transversality(along, Guard(lambda z: z[0] - 1.0), [1.0, 0.0]) == pytest.approx(0.0, abs=1e-9)
    p = RimlessWheelParams()
    sys = make_rimless_wheel(p)
    x = np.array([-p.delta - p.alpha, -1.9])
    assert transversality(sys.field, sys.guard, x) == pytest.approx(-1.9)


def test_scan_resolution_constant():
    assert SCAN_POINTS == 8


def test_grazing_warning_fires_for_tangential_impact():
    f = VectorField(lambda z: np.array([1e-9, 1.0]), 2)
    g = Guard(lambda z: z[0], lambda z: np.array([1.0, 0.0]))
    seg = flow(f, [-1e-9, 0.0], 2.0)
    (b,) = scan_crossings(g, seg)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        refine_crossing(f, g, seg, b)
    assert any(issubclass(x.category, GrazingWarning) for x in w)
