import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from hybrid_cycles.errors import BlowUp, IntegrationError, OutOfSegment, StepLimitExceeded
from hybrid_cycles.ode import (
    IntegratorOptions,
    SegmentBuilder,
    VectorField,
    divergence_at,
    divergence_integral,
    eval_at,
    flow,
    flow_map,
    steps,
)

TIGHT = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-13)


def linear_field(A):
    A = np.asarray(A, dtype=float)
    return VectorField(lambda x: A @ x, A.shape[0], divergence=lambda x: float(np.trace(A)))


def test_exponential_decay_matches_closed_form():
    f = VectorField(lambda x: -x, 1)
    x = flow_map(f, [1.0], 5.0, TIGHT)
    assert x[0] == pytest.approx(math.exp(-5.0), rel=1e-9)


def test_harmonic_oscillator_conserves_energy_over_many_periods():
    f = linear_field([[0.0, 1.0], [-1.0, 0.0]])
    x = flow_map(f, [1.0, 0.0], 20 * math.pi, TIGHT)
    assert np.allclose(x, [1.0, 0.0], atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4),
    st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=2),
    st.floats(0.1, 3.0),
)
def test_linear_flow_matches_matrix_exponential(entries, x0, T):
    A = np.array(entries).reshape(2, 2)
    got = flow_map(linear_field(A), x0, T, TIGHT)
    ref = expm(A * T) @ np.array(x0)
    assert np.allclose(got, ref, rtol=1e-8, atol=1e-10)


def test_dense_output_tracks_solution_between_nodes():
    f = linear_field([[0.0, 1.0], [-1.0, 0.0]])
    seg = flow(f, [1.0, 0.0], 6.0, IntegratorOptions(rel_tol=1e-10, abs_tol=1e-12))
    ts = np.linspace(0.0, 6.0, 301)
    xs = eval_at(seg, ts)
    assert np.allclose(xs[:, 0], np.cos(ts), atol=1e-8)
    assert np.allclose(xs[:, 1], -np.sin(ts), atol=1e-8)


def test_eval_at_returns_stored_nodes_exactly():
    seg = flow(VectorField(lambda x: -x, 1), [2.0], 1.0)
    for t, x in zip(seg.times, seg.states):
        assert np.array_equal(eval_at(seg, t), x)
    assert seg.t_end == 1.0


def test_eval_outside_segment_raises():
    seg = flow(VectorField(lambda x: -x, 1), [2.0], 1.0)
    with pytest.raises(OutOfSegment):
        eval_at(seg, 1.5)
    with pytest.raises(OutOfSegment):
        eval_at(seg, -0.1)


def test_finite_time_singularity_stops_integration():
    f = VectorField(lambda x: x**2, 1)
    with pytest.raises(IntegrationError):
        flow_map(f, [1.0], 2.0)


def test_non_finite_state_is_blow_up():
    f = VectorField(lambda x: np.array([np.inf if x[0] > 0.5 else 1.0]), 1)
    with pytest.raises(BlowUp):
        flow_map(f, [1.0], 5.0)
    with pytest.raises(BlowUp):
        flow_map(f, [np.nan], 1.0)


def test_step_budget():
    f = VectorField(lambda x: np.array([x[1], -x[0]]), 2)
    with pytest.raises(StepLimitExceeded):
        flow_map(f, [1.0, 0.0], 100.0, IntegratorOptions(max_steps=5))


def test_steps_can_be_truncated_by_the_consumer():
    f = VectorField(lambda x: np.ones(1), 1)
    builder = SegmentBuilder(0.0, [0.0])
    for st_ in steps(f, [0.0], 0.0, 10.0):
        if st_.t1 > 0.5:
            builder.add_partial(st_, 0.5, st_(0.5))
            break
        builder.add(st_)
    seg = builder.build()
    assert seg.t_end == 0.5
    assert eval_at(seg, 0.5)[0] == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("bad", [dict(rel_tol=0.0), dict(abs_tol=-1.0), dict(h_min=0.0), dict(max_steps=0)])
def test_options_are_validated(bad):
    with pytest.raises(ValueError):
        IntegratorOptions(**bad)


def test_divergence_fallback_matches_trace():
    A = np.array([[0.3, -1.0], [2.0, -1.7]])
    f = VectorField(lambda x: A @ x + 0.1 * x**2, 2)
    x = np.array([0.4, -0.2])
    assert divergence_at(f, x) == pytest.approx(np.trace(A) + 0.2 * x.sum(), abs=1e-8)


def test_divergence_integral_along_nonlinear_orbit():
    # radial field r' = r(1 - r) in the plane: div = 2 - 3r, r(t) logistic
    def f(x):
        r = math.hypot(*x)
        return (1 - r) * x

    F = VectorField(f, 2)
    seg = flow(F, [0.2, 0.0], 3.0, TIGHT)
    # closed form: integral of 2 - 3 r(t) with r = 1 / (1 + 4 e^{-t})
    ref = 6.0 - 3 * (math.log(math.exp(3.0) + 4) - math.log(5.0))
    assert divergence_integral(F, seg) == pytest.approx(ref, rel=1e-8)


def polar_field():
    return VectorField(lambda z: np.array([1.0 - z[0], 1.0]), 2, divergence=lambda z: -1.0)


def polar_closed_form(r0, th0, t):
    return np.array([(r0 - 1) * np.exp(-t) + 1, th0 + t])


def test_constant_field():
    assert flow_map(VectorField(lambda x: np.ones(1), 1), [0.0], 1.0)[0] == pytest.approx(1.0, abs=1e-12)


def test_polar_segment_matches_closed_form_everywhere():
    opts = IntegratorOptions(rel_tol=1e-9, abs_tol=1e-11)
    seg = flow(polar_field(), [0.3, 0.5], 4.0, opts)
    for t in np.linspace(0.0, 4.0, 97):
        assert np.allclose(eval_at(seg, t), polar_closed_form(0.3, 0.5, t), rtol=10 * opts.rel_tol, atol=1e-10)


def test_vdp_against_tighter_run():
    mu = 1.0
    f = VectorField(lambda z: np.array([z[1], mu * (1 - z[0] ** 2) * z[1] - z[0]]), 2)
    ref = flow_map(f, [1.0, 3.0], 1.0, IntegratorOptions(rel_tol=1e-12, abs_tol=1e-14))
    got = flow_map(f, [1.0, 3.0], 1.0)
    assert np.allclose(got, ref, atol=1e-8)


def test_linear_midpoint_interpolant():
    A = np.array([[-0.5, 2.0], [-1.0, -0.2]])
    seg = flow(linear_field(A), [1.0, 1.0], 3.0, IntegratorOptions(rel_tol=1e-8, abs_tol=1e-10))
    for k in range(seg.n_steps):
        tm = 0.5 * (seg.times[k] + seg.times[k + 1])
        ref = expm(A * tm) @ np.array([1.0, 1.0])
        assert np.linalg.norm(eval_at(seg, tm) - ref) / np.linalg.norm(ref) < 1e-6


def test_divergence_examples():
    vdp = VectorField(lambda z: np.array([z[1], (1 - z[0] ** 2) * z[1] - z[0]]), 2)
    assert divergence_at(vdp, [0.0, 0.7]) == pytest.approx(1.0, abs=1e-8)
    assert divergence_at(vdp, [2.0, -0.3]) == pytest.approx(-3.0, abs=1e-8)
    assert divergence_at(polar_field(), [0.4, 1.0]) == -1.0
    rot = VectorField(lambda z: np.array([-z[1], z[0]]), 2)
    assert divergence_at(rot, [1.3, -0.4]) == pytest.approx(0.0, abs=1e-9)


def test_fallback_divergence_agrees_with_analytic():
    mu = 1.3
    fn = lambda z: np.array([z[1], mu * (1 - z[0] ** 2) * z[1] - z[0]])
    analytic = VectorField(fn, 2, divergence=lambda z: mu * (1 - z[0] ** 2))
    bare = VectorField(fn, 2)
    for x in ([0.1, 2.0], [1.7, -0.4], [-2.2, 3.1]):
        a, b = divergence_at(analytic, x), divergence_at(bare, x, h=1e-5)
        assert abs(a - b) <= 1e-6 * abs(a)


def test_divergence_integral_examples():
    rot = VectorField(lambda z: np.array([-z[1], z[0]]), 2)
    assert divergence_integral(rot, flow(rot, [1.0, 0.0], 5.0)) == pytest.approx(0.0, abs=1e-9)
    T = 2.7
    seg = flow(polar_field(), [0.5, 0.1], T)
    assert divergence_integral(polar_field(), seg) == pytest.approx(-T, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_semigroup(a, b, t1, t2):
    f = VectorField(lambda z: np.array([z[1], -np.sin(z[0]) + a * z[1] * (1 - z[0] ** 2) + b]), 2)
    opts = IntegratorOptions()
    x0 = np.array([0.3, -0.2])
    whole = flow_map(f, x0, t1 + t2, opts)
    split = flow_map(f, flow_map(f, x0, t1, opts), t2, opts)
    assert np.allclose(whole, split, rtol=10 * opts.rel_tol, atol=10 * opts.abs_tol + 1e-9)


def test_error_decreases_as_tolerance_is_halved():
    errs = []
    for k in range(5):
        opts = IntegratorOptions(rel_tol=1e-6 / 2**k, abs_tol=1e-8 / 2**k)
        x = flow_map(polar_field(), [3.0, 0.0], 10.0, opts)
        errs.append(np.linalg.norm(x - polar_closed_form(3.0, 0.0, 10.0)))
    assert errs[-1] < errs[0]
    assert all(b <= a * 1.5 for a, b in zip(errs, errs[1:]))
