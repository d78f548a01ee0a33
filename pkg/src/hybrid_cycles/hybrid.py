"""Hybrid flow: integrate, detect the impact, apply the reset, repeat.

At an impact time the hybrid state is the post-impact value ``Delta(x-)``;
``HybridTrajectory.state_at`` follows that convention.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import BlowUp, ZenoSuspected
from .guard import (
    Guard,
    _check_grazing,
    curve_frame,
    refine_in_step,
    scan_step,
    signed_sine,
    transversality,
)
from .ode import ContinuousSegment, IntegratorOptions, SegmentBuilder, VectorField, eval_at, steps
from .section import SectionChart

log = logging.getLogger(__name__)

TIME_ELAPSED = "time-elapsed"
IMPACT_BUDGET = "impact-budget"
ZENO = "zeno-suspected"
LEFT_DOMAIN = "left-domain"
BLOW_UP = "blow-up"


@dataclass(frozen=True)
class Reset:
    """Impact map ``Delta : S -> X``.

    ``derivative_along_section(x, u)`` returns ``D Delta(x) u`` for a vector
    ``u`` tangent to S; finite differences are used when it is absent.
    """

    delta: Callable[[np.ndarray], np.ndarray]
    derivative_along_section: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.delta(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class HybridSystem:
    field: VectorField
    guard: Guard
    reset: Reset
    fixed_points: Optional[Sequence[np.ndarray]] = None
    domain: Optional[Callable[[np.ndarray], bool]] = None
    name: str = ""
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.fixed_points is not None:
            for p in self.fixed_points:
                if np.linalg.norm(self.field(p)) > 1e-10:
                    raise ValueError(f"declared fixed point {p} has |f| > 1e-10")

    @property
    def dimension(self) -> int:
        return self.field.dimension

    def near_fixed_point(self, x, eps: float) -> Optional[bool]:
        """True inside some ``eps`` ball around ``fix(f)``; None when unknown."""
        if self.fixed_points is None:
            return None
        x = np.asarray(x, dtype=float)
        return any(np.linalg.norm(x - np.asarray(p)) < eps for p in self.fixed_points)


@dataclass(frozen=True)
class HybridOptions:
    integrator: IntegratorOptions = IntegratorOptions()
    max_impacts: int = 10**5
    min_impact_gap: float = 1e-9
    H_tol: float = 1e-9
    t_tol: float = 1e-14
    eps_fixed: float = 1e-3
    max_chain: int = 3

    def replace(self, **changes) -> "HybridOptions":
        return replace(self, **changes)

    def with_tolerance(self, rel_tol: float, abs_tol: Optional[float] = None) -> "HybridOptions":
        abs_tol = abs_tol if abs_tol is not None else rel_tol * 1e-2
        return replace(self, integrator=self.integrator.replace(rel_tol=rel_tol, abs_tol=abs_tol))


@dataclass(frozen=True)
class ImpactEvent:
    t: float
    x_minus: np.ndarray
    x_plus: np.ndarray
    transversality_value: float
    chained: bool = False


@dataclass(frozen=True, eq=False)
class HybridTrajectory:
    segments: List[ContinuousSegment]
    impacts: List[ImpactEvent]
    t_total: float
    termination: str
    x_final: np.ndarray

    def state_at(self, t: float) -> np.ndarray:
        """Hybrid state at time ``t``; at an impact time this is ``x+``."""
        if not self.segments:
            raise ValueError("trajectory was run without recording segments")
        starts = np.array([s.t_start for s in self.segments])
        k = int(np.searchsorted(starts, t, side="right")) - 1
        k = max(k, 0)
        return eval_at(self.segments[k], t)

    @property
    def impact_times(self) -> np.ndarray:
        return np.array([ev.t for ev in self.impacts])

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


def write_trajectory_csv(traj: HybridTrajectory, path) -> None:
    """Rows for every node: ``t, x0..x{n-1}, segment_index, impact_flag``.

    ``impact_flag`` is 1 on the pre-impact row closing a segment.
    """
    n = len(traj.x_final)
    impact_times = {ev.t for ev in traj.impacts}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i}" for i in range(n)] + ["segment_index", "impact_flag"])
        for k, seg in enumerate(traj.segments):
            last = len(seg.times) - 1
            for j, (t, x) in enumerate(zip(seg.times, seg.states)):
                flag = int(j == last and k < len(traj.segments) - 1 and t in impact_times)
                w.writerow([_fmt(t)] + [_fmt(v) for v in x] + [k, flag])


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _zeno_gap(times, gap, sys, x, eps):
    if len(times) < 3:
        return False
    if times[-1] - times[-2] < gap and times[-2] - times[-3] < gap:
        return not sys.near_fixed_point(x, eps)
    return False


def hybrid_flow(
    sys: HybridSystem,
    x0,
    T: float,
    opts: HybridOptions = HybridOptions(),
    stop_after: Optional[int] = None,
    record: bool = True,
) -> HybridTrajectory:
    """Run the hybrid flow from ``x0`` for time ``T``.

    ``stop_after`` ends the run once that many impacts have occurred
    (termination ``impact-budget``).  With ``record=False`` segments are not
    kept, which saves memory on long runs.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    f, guard, reset = sys.field, sys.guard, sys.reset
    t = 0.0
    x = np.array(x0, dtype=float)
    segments: List[ContinuousSegment] = []
    impacts: List[ImpactEvent] = []
    times: List[float] = []
    termination = TIME_ELAPSED

    def chain(t_imp, x_plus):
        # a reset landing on S that would immediately trigger again
        count = 0
        while abs(guard(x_plus)) <= opts.H_tol and guard.matches_flow(transversality(f, guard, x_plus)):
            count += 1
            if count > opts.max_chain:
                return None
            if record:
                segments.append(SegmentBuilder(t_imp, x_plus).build())
            x_new = reset(x_plus)
            impacts.append(ImpactEvent(t_imp, x_plus, x_new, transversality(f, guard, x_plus), True))
            x_plus = x_new
        return x_plus

    x = chain(t, x)
    if x is None:
        return HybridTrajectory(segments, impacts, t, ZENO, impacts[-1].x_plus)

    if T == 0:
        if record:
            segments.append(SegmentBuilder(t, x).build())
        return HybridTrajectory(segments, impacts, 0.0, TIME_ELAPSED, x)

    while True:
        builder = SegmentBuilder(t, x) if record else None
        h_prev = guard(x)
        if abs(h_prev) <= opts.H_tol:
            h_prev = None
        hit = None
        x_last = x
        try:
            for st in steps(f, x, t, T, opts.integrator):
                # the impact check comes first: a step that crosses S may end
                # just outside the domain
                bracket, h_prev = scan_step(guard, st, h_prev, ignore_below=opts.H_tol)
                if bracket is not None:
                    t_star, x_star = refine_in_step(guard, st, bracket, opts.t_tol, opts.H_tol)
                    if builder:
                        builder.add_partial(st, t_star, x_star)
                    hit = (t_star, x_star)
                    break
                if builder:
                    builder.add(st)
                x_last, t_last = st.x1, st.t1
                if sys.domain is not None and not sys.domain(st.x1):
                    termination = LEFT_DOMAIN
                    break
        except BlowUp:
            termination = BLOW_UP
            t_last = t
        if builder:
            segments.append(builder.build())
        if termination in (LEFT_DOMAIN, BLOW_UP):
            return HybridTrajectory(segments, impacts, t_last, termination, x_last)
        if hit is None:
            return HybridTrajectory(segments, impacts, T, TIME_ELAPSED, x_last)

        t_star, x_minus = hit
        x_plus = reset(x_minus)
        impacts.append(ImpactEvent(t_star, x_minus, x_plus, _check_grazing(f, guard, x_minus)))
        times.append(t_star)
        if len(impacts) > opts.max_impacts or _zeno_gap(times, opts.min_impact_gap, sys, x_minus, opts.eps_fixed):
            log.warning("Zeno behaviour suspected at t=%g after %d impacts", t_star, len(impacts))
            return HybridTrajectory(segments, impacts, t_star, ZENO, x_plus)
        x_plus = chain(t_star, x_plus)
        if x_plus is None:
            return HybridTrajectory(segments, impacts, t_star, ZENO, impacts[-1].x_plus)
        t, x = t_star, x_plus
        if stop_after is not None and len(impacts) >= stop_after:
            if record:
                segments.append(SegmentBuilder(t, x).build())
            return HybridTrajectory(segments, impacts, t, IMPACT_BUDGET, x)
        if t >= T:
            if record:
                segments.append(SegmentBuilder(t, x).build())
            return HybridTrajectory(segments, impacts, t, TIME_ELAPSED, x)


def impact_sequence(
    sys: HybridSystem,
    x0,
    n: int,
    opts: HybridOptions = HybridOptions(),
    horizon: float = 1e6,
) -> List[ImpactEvent]:
    """The first ``n`` impact events from ``x0`` (fewer if the run ends first)."""
    if n <= 0:
        return []
    traj = hybrid_flow(sys, x0, horizon, opts, stop_after=n, record=False)
    if traj.termination == ZENO:
        raise ZenoSuspected(f"Zeno behaviour after {len(traj.impacts)} impacts")
    return traj.impacts


# --------------------------------------------------------------------------
# sampled hypothesis checks


PASS, FAIL, UNCHECKED = "pass", "fail", "not checked"


@dataclass
class HypothesisCheck:
    name: str
    status: str
    value: Optional[float] = None
    witness: Optional[float] = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS


@dataclass
class HypothesisReport:
    checks: List[HypothesisCheck]

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def all_passed(self, names: Optional[Sequence[str]] = None) -> bool:
        sel = self.checks if names is None else [self[n] for n in names]
        return all(c.status != FAIL for c in sel)

    def to_dict(self) -> dict:
        return {
            c.name: {"status": c.status, "value": c.value, "witness": c.witness, "detail": c.detail}
            for c in self.checks
        }


def reset_image_curve(sys: HybridSystem, chart: SectionChart):
    """``s -> Delta(chart(s))``, the image curve of the section."""
    return lambda s: sys.reset(chart(s))


def check_hypotheses(
    sys: HybridSystem,
    chart: SectionChart,
    n_samples: int = 1000,
    interval=None,
    sep_tol: float = 1e-6,
    transversal_tol: float = 1e-6,
    H_tol: float = 1e-9,
    eps_fixed: float = 1e-3,
) -> HypothesisReport:
    """Sampled numerical checks of the smoothness and section hypotheses.

    Samples ``n_samples`` chart points of S (on ``interval``, default the
    chart's own) and reports, for each check, pass/fail with the chart
    coordinate of the worst sample as witness.
    """
    f, guard = sys.field, sys.guard
    s_vals = chart.samples(n_samples, interval)
    xs = np.array([chart(s) for s in s_vals])
    ys = np.array([sys.reset(x) for x in xs])
    checks = []

    resid = np.array([abs(guard(x)) for x in xs])
    k = int(np.argmax(resid))
    checks.append(
        HypothesisCheck("chart", PASS if resid[k] <= H_tol else FAIL, float(resid[k]), float(s_vals[k]),
                        "chart points lie on S")
    )

    gnorm = np.array([np.linalg.norm(guard.gradient(x)) for x in xs])
    k = int(np.argmin(gnorm))
    checks.append(
        HypothesisCheck("H.4", PASS if gnorm[k] > 1e-12 else FAIL, float(gnorm[k]), float(s_vals[k]),
                        "grad H nonzero on S")
    )

    # separation of Delta(S) from S away from fix(f); an image lying on S is
    # acceptable only when the flow leaves S there without re-triggering
    worst, worst_s, bad = np.inf, None, None
    for s, y in zip(s_vals, ys):
        if sys.near_fixed_point(y, eps_fixed):
            continue
        g = guard.gradient(y)
        dist = abs(guard(y)) / max(np.linalg.norm(g), 1e-300)
        if dist < worst:
            worst, worst_s = dist, s
        if dist <= sep_tol:
            rate = float(g @ f(y))
            departs = abs(rate) > transversal_tol * np.linalg.norm(g) * np.linalg.norm(f(y)) and not guard.matches_flow(rate)
            if not departs and bad is None:
                bad = s
    detail = "Delta(S) separated from S, or departs S without re-triggering"
    if sys.fixed_points is None:
        detail += "; fix(f) not supplied, N_eps exclusion not checked"
    checks.append(
        HypothesisCheck("H.6", PASS if bad is None else FAIL, float(worst),
                        float(bad if bad is not None else worst_s), detail)
    )

    coords = np.array([chart.coordinate(y) for y in ys])
    d = np.diff(coords)
    mono = bool(np.all(d > 0) or np.all(d < 0))
    witness = None
    if not mono:
        sgn = np.sign(d)
        idx = int(np.nonzero(sgn != sgn[0])[0][0]) if np.any(sgn != sgn[0]) else 0
        witness = float(s_vals[idx])
    checks.append(
        HypothesisCheck("C.2", PASS if mono else FAIL, None, witness,
                        "chart coordinate of Delta strictly monotone along S")
    )

    closed = chart.is_closed()
    checks.append(
        HypothesisCheck("C.4", FAIL if closed else PASS, None, None,
                        "section is a closed curve, not an interval" if closed else "section chart is an interval")
    )

    trans_S = []
    for x in xs:
        fx, g = f(x), guard.gradient(x)
        scale = np.linalg.norm(fx) * np.linalg.norm(g)
        trans_S.append(abs(g @ fx) / scale if scale > 0 else 0.0)
    trans_S = np.array(trans_S)
    k = int(np.argmin(trans_S))
    checks.append(
        HypothesisCheck("C.5(S)", PASS if trans_S[k] > transversal_tol else FAIL, float(trans_S[k]),
                        float(s_vals[k]), "f transverse to S")
    )

    curve = reset_image_curve(sys, chart)
    sines = []
    for s, y in zip(s_vals, ys):
        fy = f(y)
        if np.linalg.norm(fy) == 0:
            sines.append(0.0)
            continue
        try:
            sines.append(abs(signed_sine(fy, curve_frame(curve, s))))
        except Exception:
            sines.append(0.0)
    sines = np.array(sines)
    k = int(np.argmin(sines))
    checks.append(
        HypothesisCheck("C.5(Delta(S))", PASS if sines[k] > transversal_tol else FAIL, float(sines[k]),
                        float(s_vals[k]), "f transverse to Delta(S)")
    )

    if sys.fixed_points is None:
        checks.append(HypothesisCheck("fix(f)", UNCHECKED, detail="no fixed points declared"))
    else:
        fmax = max((float(np.linalg.norm(f(p))) for p in sys.fixed_points), default=0.0)
        checks.append(HypothesisCheck("fix(f)", PASS if fmax <= 1e-10 else FAIL, fmax, None,
                                      "declared fixed points satisfy f = 0"))
    return HypothesisReport(checks)
