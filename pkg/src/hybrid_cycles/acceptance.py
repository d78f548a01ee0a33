"""Acceptance criteria as runnable checks, shared by the test suite and ``verify``.

Each criterion is a function ``(ctx) -> CriterionResult``.  ``ctx`` carries
the integrator tolerance override and collects the guard residuals of every
impact seen along the way, which the property criterion audits.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .hybrid import HybridOptions, hybrid_flow
from .limits import (
    DiscreteMap,
    FiniteImpactSet,
    classify_interval_map,
    detect_cycle_finite,
    hybrid_1d_run,
    omega_estimate,
)
from .models import (
    PolarParams,
    RimlessWheelParams,
    VdpHybridParams,
    existence_inequality,
    make_polar,
    make_rimless_wheel,
    make_vdp_continuous,
    make_vdp_hybrid,
    rimless_fixed_speed,
    rimless_step_oracle,
)
from .ode import IntegratorOptions, divergence_integral, flow, flow_map
from .poincare import derivative_planar, find_fixed_point
from .sweep import Axis, SweepSpec, classify_gait

# reference values quoted for the Van der Pol impact model
VDP_Y_MINUS = -1.0498
VDP_Y_PLUS = 1.5747
VDP_DP = 0.3338
VDP_SLOPE = 0.2225
VDP_TABLE = {
    -4.6: (1.6034,),
    -4.55: (1.5898,),
    -4.5: (1.5768,),
    4.5: (1.5059, 1.6475),
    4.55: (1.3758, 1.8119),
    4.6: (1.3091, 1.9132),
}
VDP_STABLE_M = (-4.45, -4.4, 4.4, 4.45)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    checks: List[str] = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d}. {self.title}: {self.summary}"


@dataclass
class Context:
    rel_tol: Optional[float] = None
    seed: int = 0
    residuals: List[float] = field(default_factory=list)

    def opts(self, rel_tol: float) -> HybridOptions:
        rt = self.rel_tol if self.rel_tol is not None else rel_tol
        return HybridOptions().with_tolerance(rt)

    def record(self, sys, impacts) -> None:
        self.residuals.extend(abs(sys.guard(ev.x_minus)) for ev in impacts)


class _Checks:
    """Accumulates named sub-checks for one criterion."""

    def __init__(self):
        self.lines: List[str] = []
        self.ok = True

    def __call__(self, cond: bool, text: str) -> bool:
        cond = bool(cond)
        self.ok &= cond
        self.lines.append(f"{'ok  ' if cond else 'FAIL'} {text}")
        return cond


def _steady_impacts(sys, n, opts, ctx):
    traj = hybrid_flow(sys, [1.0, 3.0], 1e7, opts, stop_after=n, record=False)
    ctx.record(sys, traj.impacts)
    return traj.impacts


# --------------------------------------------------------------------------


def criterion_1(ctx: Context) -> CriterionResult:
    c = _Checks()
    t0 = time.perf_counter()
    sys = make_vdp_hybrid()
    impacts = _steady_impacts(sys, 100, ctx.opts(1e-9), ctx)
    dt = time.perf_counter() - t0
    ym, yp = impacts[-1].x_minus[1], impacts[-1].x_plus[1]
    c(len(impacts) == 100, f"{len(impacts)} returns")
    c(abs(ym - VDP_Y_MINUS) <= 5e-3, f"y- = {ym:.6f} (ref {VDP_Y_MINUS}, tol 5e-3)")
    c(abs(yp - VDP_Y_PLUS) <= 5e-3, f"y+ = {yp:.6f} (ref {VDP_Y_PLUS}, tol 5e-3)")
    c(dt < 10.0, f"runtime {dt:.2f} s < 10 s")
    return CriterionResult(1, "Van der Pol steady impacts", c.ok, f"y-={ym:.5f}, y+={yp:.5f}, {dt:.2f}s", c.lines)


def criterion_2(ctx: Context) -> CriterionResult:
    c = _Checks()
    opts = ctx.opts(1e-10)
    sys = make_vdp_hybrid()
    chart = sys.extras["chart"]
    s_star = find_fixed_point(sys, chart, -1.05, opts, tol=1e-10)
    rep = derivative_planar(sys, chart, s_star, opts, with_fd=True)
    c(abs(rep.product - VDP_DP) <= 5e-3, f"|P'| = {rep.product:.6f} (ref {VDP_DP}, tol 5e-3)")
    c(rep.fd_relative_error < 1e-4, f"formula vs FD relative error {rep.fd_relative_error:.3e} < 1e-4")
    return CriterionResult(
        2, "Van der Pol stability", c.ok, f"|P'|={rep.product:.6f}, FD rel err {rep.fd_relative_error:.2e}", c.lines
    )


def criterion_3(ctx: Context) -> CriterionResult:
    c = _Checks()
    opts = ctx.opts(1e-10)
    base = make_vdp_hybrid()
    chart = base.extras["chart"]
    s_star = find_fixed_point(base, chart, -1.05, opts, tol=1e-10)
    worst = 0.0
    for m in (1, 2, 3, 4):
        sys = make_vdp_hybrid(VdpHybridParams(m=float(m)))
        rep = derivative_planar(sys, chart, s_star, opts, with_fd=False)
        rel = abs(rep.product - VDP_SLOPE * m) / (VDP_SLOPE * m)
        worst = max(worst, rel)
        c(rel <= 0.02, f"m={m}: |P'| = {rep.product:.5f} vs {VDP_SLOPE * m:.4f} (rel {rel:.2e})")
    return CriterionResult(3, "Linear-reset scaling", c.ok, f"worst relative deviation {worst:.2e}", c.lines)


def vdp_steady_y_plus(m: float, ctx: Context, n: int = 1000, rel_tol: float = 1e-9):
    """Last one and two post-impact ``y`` values after ``n`` returns from (1, 3)."""
    sys = make_vdp_hybrid(VdpHybridParams(m=m))
    impacts = _steady_impacts(sys, n, ctx.opts(rel_tol), ctx)
    return [ev.x_plus[1] for ev in impacts[-2:]]


def criterion_4(ctx: Context) -> CriterionResult:
    c = _Checks()
    for m in VDP_STABLE_M:
        yp = vdp_steady_y_plus(m, ctx)[-1]
        c(abs(yp - VDP_Y_PLUS) <= 1e-2, f"m={m}: y+ = {yp:.4f} within 1e-2 of {VDP_Y_PLUS}")
    for m, ref in VDP_TABLE.items():
        tail = vdp_steady_y_plus(m, ctx)
        if len(ref) == 1:
            yp = tail[-1]
            dev = abs(yp - VDP_Y_PLUS)
            c(dev > 2e-2, f"m={m}: y+ = {yp:.4f} deviates from {VDP_Y_PLUS} by {dev:.4f} (> 2e-2 required)")
            c(abs(yp - ref[0]) <= 1.5e-2, f"m={m}: y+ = {yp:.4f} matches table {ref[0]} within 1.5e-2")
        else:
            pair = sorted(tail)
            dev = max(abs(v - VDP_Y_PLUS) for v in pair)
            c(dev > 2e-2, f"m={m}: two-impact cycle ({pair[0]:.4f}, {pair[1]:.4f}) deviates by {dev:.4f} (> 2e-2 required)")
            c(
                all(abs(v - r) <= 1.5e-2 for v, r in zip(pair, sorted(ref))),
                f"m={m}: pair matches table {tuple(sorted(ref))} within 1.5e-2",
            )
    n_fail = sum(line.startswith("FAIL") for line in c.lines)
    return CriterionResult(4, "Instability onset", c.ok, f"{len(c.lines) - n_fail}/{len(c.lines)} sub-checks", c.lines)


def polar_samples(n: int, seed: int):
    """Random ``(alpha, beta, gamma)`` with ``beta exp(gamma - alpha)`` in (0.05, 0.95)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        T = rng.uniform(0.2, 3.0)
        gamma = rng.uniform(0.0, 2 * math.pi - T)
        beta = rng.uniform(0.05, 0.95) * math.exp(T)
        out.append(PolarParams(alpha=gamma + T, beta=beta, gamma=gamma))
    return out


def criterion_5(ctx: Context) -> CriterionResult:
    c = _Checks()
    opts = ctx.opts(1e-12)
    worst = {"fixed point": 0.0, "derivative": 0.0, "factors": 0.0}
    for p in polar_samples(20, ctx.seed):
        target = p.contraction
        r_star = p.fixed_radius
        for coords in ("polar", "cartesian"):
            sys = make_polar(p, coords)
            chart = sys.extras["chart"]
            s = find_fixed_point(sys, chart, 1.0, opts, tol=1e-13)
            rep = derivative_planar(sys, chart, s, opts, with_fd=False)
            worst["fixed point"] = max(worst["fixed point"], abs(s - r_star))
            worst["derivative"] = max(worst["derivative"], abs(rep.product - target), abs(rep.signed_product - target))
            if coords == "polar":
                fac = max(
                    abs(rep.reset_derivative - p.beta),
                    abs(rep.speed_ratio * rep.sine_ratio - 1.0),
                    abs(rep.divergence_factor - math.exp(p.gamma - p.alpha)),
                )
                worst["factors"] = max(worst["factors"], fac)
    c(worst["fixed point"] <= 1e-8, f"max fixed-point error {worst['fixed point']:.2e} <= 1e-8")
    c(worst["derivative"] <= 1e-6, f"max derivative error {worst['derivative']:.2e} <= 1e-6")
    c(worst["factors"] <= 1e-6, f"max factor error (beta, 1, exp(gamma-alpha)) {worst['factors']:.2e} <= 1e-6")
    return CriterionResult(5, "Analytic polar oracle", c.ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()), c.lines)


def flow_jacobian_fd(f, x0, T, opts: IntegratorOptions, h: float = 1e-5) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    cols = []
    for j in range(len(x0)):
        e = np.zeros_like(x0)
        e[j] = h
        cols.append((flow_map(f, x0 + e, T, opts) - flow_map(f, x0 - e, T, opts)) / (2 * h))
    return np.array(cols).T


def criterion_6(ctx: Context) -> CriterionResult:
    c = _Checks()
    iopts = ctx.opts(1e-12).integrator
    f = make_polar(PolarParams()).field
    worst = 0.0
    for x0, T in (((0.5, 0.2), 2.0), ((1.8, -0.4), 1.0), ((0.3, 0.0), 3.5)):
        det = float(np.linalg.det(flow_jacobian_fd(f, x0, T, iopts)))
        ref = math.exp(divergence_integral(f, flow(f, x0, T, iopts)))
        rel = abs(det - ref) / abs(ref)
        worst = max(worst, rel)
        c(rel < 1e-4, f"x0={x0}, T={T}: det = {det:.8f}, exp(int div) = {ref:.8f}, rel {rel:.2e}")
    return CriterionResult(6, "Flow-map Jacobian determinant", c.ok, f"worst relative error {worst:.2e}", c.lines)


def criterion_7(ctx: Context) -> CriterionResult:
    c = _Checks()
    # the map contracts by ~1e-3 per turn, so integration noise dominates a
    # difference quotient unless the tolerance is tight
    opts = ctx.opts(1e-12)
    sys, chart = make_vdp_continuous(1.0, rel_tol=opts.integrator.rel_tol)
    s_star = find_fixed_point(sys, chart, 0.0, opts, tol=1e-11)
    rep = derivative_planar(sys, chart, s_star, opts, with_fd=True, fd_h=1e-4)
    ref = math.exp(rep.divergence_integral)
    rel = abs(ref - abs(rep.fd_check)) / abs(rep.fd_check)
    c(rel < 1e-3, f"exp(int div) = {ref:.6e}, FD = {rep.fd_check:.6e}, rel {rel:.2e} < 1e-3")
    c(abs(rep.product - ref) <= 1e-12 * max(1.0, ref) or abs(rep.product - ref) / ref < 1e-9,
      "factorized product reduces to the divergence factor")
    return CriterionResult(7, "Continuous Van der Pol consistency", c.ok, f"rel {rel:.2e}", c.lines)


def criterion_8(ctx: Context) -> CriterionResult:
    c = _Checks()
    p = RimlessWheelParams(delta=math.pi / 10, alpha=math.pi / 30, zeta=9.8)
    lhs, rhs, holds = existence_inequality(p)
    c(holds and abs(lhs - 0.0646) < 5e-4 and abs(rhs - 0.0115) < 5e-4,
      f"inequality lhs {lhs:.6f} > rhs {rhs:.6f}")

    opts = ctx.opts(1e-11)
    sys = make_rimless_wheel(p)
    chart = sys.extras["chart"]
    traj = hybrid_flow(sys, sys.extras["x0"], 1e4, opts, stop_after=60, record=False)
    ctx.record(sys, traj.impacts)
    speeds = [ev.x_minus[1] for ev in traj.impacts]
    star = rimless_fixed_speed(p)
    c(len(speeds) == 60 and abs(speeds[-1] - star) < 1e-8,
      f"60 impacts, last pre-impact rate {speeds[-1]:.10f} vs period-one {star:.10f}")
    step_err = max(abs(b - rimless_step_oracle(p, a)) for a, b in zip(speeds, speeds[1:]))
    c(step_err < 1e-8, f"step map vs energy oracle max error {step_err:.2e} < 1e-8")
    s_star = find_fixed_point(sys, chart, speeds[-1], opts, tol=1e-12)
    rep = derivative_planar(sys, chart, s_star, opts, with_fd=True)
    c(rep.product < 1 and abs(rep.fd_check) < 1,
      f"|P'| formula {rep.product:.8f}, FD {rep.fd_check:.8f}, cos^2(2 delta) = {math.cos(2 * p.delta) ** 2:.8f}")

    # sweep agreement on random cells of the fig-5 grid
    spec = SweepSpec(
        Axis("alpha", 0.0, math.pi / 8, 50, open_lo=True),
        Axis("delta", 0.0, math.pi / 4, 50, open_lo=True, open_hi=True),
    )
    cells = [(a, d) for a, d in spec.cells() if d > a]
    rng = np.random.default_rng(ctx.seed)
    pick = rng.choice(len(cells), size=20, replace=False)
    tolerated = hard = 0
    sopts = ctx.opts(1e-10)
    for k in sorted(pick):
        a, d = cells[k]
        q = RimlessWheelParams(delta=d, alpha=a, zeta=9.8)
        l, r, flag = existence_inequality(q)
        label, _ = classify_gait(q, sopts)
        stable = label == "stable period-1"
        if flag == stable or abs(l - r) < 0.002:
            continue
        if flag and not stable:
            hard += 1
        else:
            tolerated += 1
    c(hard == 0, f"20 random cells: {hard} flag-true cells not stable, {tolerated} tolerated (cycle found, flag false)")
    return CriterionResult(8, "Rimless wheel", c.ok, f"lhs {lhs:.4f} > rhs {rhs:.4f}, |P'| {rep.product:.4f}", c.lines)


def brute_force_cycle(table, start):
    """Cycle of a map on ``n`` points by plain iteration, for cross-checking."""
    n = len(table)
    seq = [start]
    for _ in range(2 * n + 1):
        seq.append(table[seq[-1]])
    members = set(seq[n:])
    first = next(i for i, v in enumerate(seq) if v in members)
    return seq[first : first + len(members)], first


ONE_D_EXAMPLES = (
    ("sawtooth", dict(f=lambda x: 1.0, x0=0.0, reset={1.0: 0.0}, R=(0.0, 1.5), impact_points=[1.0]), [1.0], 1.0),
    (
        "two points",
        dict(f=lambda x: 1.0, x0=0.0, reset={1.0: 1.5, 2.0: 0.0}, R=(0.0, 2.5), impact_points=[1.0, 2.0]),
        [1.0, 2.0],
        1.5,
    ),
    (
        "relaxation",
        dict(f=lambda x: 2.0 - x, x0=0.0, reset={1.0: 0.0}, R=(0.0, 1.5), impact_points=[1.0], fixed_points=[2.0]),
        [1.0],
        math.log(2.0),
    ),
)


def criterion_9(ctx: Context) -> CriterionResult:
    c = _Checks()
    opts = ctx.opts(1e-11)
    for name, kw, orbit, period in ONE_D_EXAMPLES:
        res = hybrid_1d_run(opts=opts, **kw)
        d = res.diagnostics
        bound = len(kw["impact_points"]) + 1
        c(
            res.orbit == orbit and abs(d["period"] - period) < 1e-8 and res.transient_length + res.period <= bound,
            f"{name}: orbit {res.orbit}, period {d['period']:.10f} (expected {period:.10f}), "
            f"transient {res.transient_length} + cycle {res.period} <= {bound}",
        )
        c(d["min_inter_impact_time"] >= d["gap_lower_bound"] - 1e-9,
          f"{name}: min inter-impact time {d['min_inter_impact_time']:.4f} >= eta/xi = {d['gap_lower_bound']:.4f}")
    n_maps = mismatches = 0
    for n in range(1, 5):
        for table in itertools.product(range(n), repeat=n):
            for s0 in range(n):
                n_maps += 1
                res = detect_cycle_finite(lambda k: table[k], s0, n_max=n + 1)
                orbit, transient = brute_force_cycle(table, s0)
                if res.orbit != orbit or res.transient_length != transient or res.diagnostics["iterations"] > n:
                    mismatches += 1
    c(mismatches == 0, f"exhaustive finite-set check: {n_maps} (map, start) pairs on <= 4 points, {mismatches} mismatches")
    pts = FiniteImpactSet((0.0, 1.0, 2.0))
    res = detect_cycle_finite(lambda s: {0.0: 1.0 + 1e-12, 1.0: 2.0, 2.0: 1.0}[round(s)], 0.0, pts)
    c(res.orbit == [1.0, 2.0] and res.transient_length == 1, "snapped scalar map on {0, 1, 2}")
    return CriterionResult(9, "1-D hybrid cycles", c.ok, f"{n_maps} exhaustive cases", c.lines)


def _omega_invariance(sys, x0, opts, t_transient, t_window):
    est = omega_estimate(sys, x0, t_transient, t_window, opts)
    if not est.cycle.is_cycle:
        return est, math.inf
    worst = 0.0
    for rep in est.representatives:
        end = hybrid_flow(sys, rep, est.period_time, opts, record=False).x_final
        d = np.linalg.norm(end - rep)
        if abs(sys.guard(end)) <= 1e-6:
            # the run may stop a hair before the closing impact
            d = min(d, np.linalg.norm(sys.reset(end) - rep))
        worst = max(worst, float(d))
    return est, worst


def random_monotone_map(rng, n_knots: int = 8) -> DiscreteMap:
    """Strictly monotone piecewise-linear self-map of [0, 1]."""
    xs = np.linspace(0.0, 1.0, n_knots)
    ys = np.sort(rng.uniform(0.0, 1.0, n_knots))
    while np.any(np.diff(ys) <= 0):
        ys = np.sort(rng.uniform(0.0, 1.0, n_knots))
    if rng.random() < 0.5:
        ys = ys[::-1]
    return DiscreteMap(lambda x, xs=xs, ys=ys: float(np.interp(x, xs, ys)), (0.0, 1.0))


def criterion_10(ctx: Context) -> CriterionResult:
    c = _Checks()
    opts = ctx.opts(1e-10)
    # omega invariance on every cycle the suite detects
    cases = [
        ("vdp", make_vdp_hybrid(), [1.0, 3.0], 100.0, 20.0),
        ("vdp m=4.6", make_vdp_hybrid(VdpHybridParams(m=4.6)), [1.0, 3.0], 600.0, 30.0),
        ("polar", make_polar(PolarParams(alpha=math.pi, beta=2.0, gamma=0.0)), [1.0, 0.0], 60.0, 40.0),
        ("rimless wheel", make_rimless_wheel(), make_rimless_wheel().extras["x0"], 30.0, 10.0),
    ]
    for name, sys, x0, tt, tw in cases:
        est, err = _omega_invariance(sys, x0, opts, tt, tw)
        traj = hybrid_flow(sys, x0, tt + tw, opts, record=False)
        ctx.record(sys, traj.impacts)
        c(err <= 1e-6, f"omega invariance {name}: {est.cycle.label}, one-period return error {err:.2e} <= 1e-6")
    for name, kw, _, _ in ONE_D_EXAMPLES:
        res = hybrid_1d_run(opts=opts, **kw)
        c(res.is_cycle, f"omega invariance {name}: exact finite cycle {res.orbit}")

    worst = max(ctx.residuals, default=0.0)
    c(bool(ctx.residuals) and worst <= 1e-9, f"event residual max |H(x-)| = {worst:.2e} over {len(ctx.residuals)} impacts")

    rng = np.random.default_rng(ctx.seed)
    over = undecided = 0
    for _ in range(1000):
        m = random_monotone_map(rng)
        res = classify_interval_map(m, float(rng.uniform()), n_max=2000, max_period=8, n_samples=201)
        over += res.period > 2
        undecided += not res.is_cycle
    c(over == 0, f"1000 random monotone maps: {over} reported period > 2 ({undecided} undecided)")
    return CriterionResult(10, "Property suites", c.ok, f"max |H(x-)| {worst:.1e}, {over} period>2", c.lines)


CRITERIA: Dict[int, tuple] = {
    1: ("Van der Pol steady impacts", criterion_1),
    2: ("Van der Pol stability", criterion_2),
    3: ("Linear-reset scaling", criterion_3),
    4: ("Instability onset", criterion_4),
    5: ("Analytic polar oracle", criterion_5),
    6: ("Flow-map Jacobian determinant", criterion_6),
    7: ("Continuous Van der Pol consistency", criterion_7),
    8: ("Rimless wheel", criterion_8),
    9: ("1-D hybrid cycles", criterion_9),
    10: ("Property suites", criterion_10),
}


def run_criterion(number: int, ctx: Optional[Context] = None) -> CriterionResult:
    ctx = ctx or Context()
    t0 = time.perf_counter()
    try:
        res = CRITERIA[number][1](ctx)
    except Exception as exc:  # a crash is a failure of that criterion, not of the suite
        res = CriterionResult(number, CRITERIA[number][0], False, f"error: {type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


def run_acceptance(numbers=None, rel_tol: Optional[float] = None, seed: int = 0,
                   report: Optional[Callable[[CriterionResult], None]] = None) -> List[CriterionResult]:
    ctx = Context(rel_tol=rel_tol, seed=seed)
    out = []
    for n in numbers or sorted(CRITERIA):
        res = run_criterion(n, ctx)
        out.append(res)
        if report:
            report(res)
    return out
