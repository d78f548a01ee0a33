"""Limit sets: interval-map and finite-set cycle detection, 1-D hybrid runs, omega estimates."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Hashable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    FixedPointApproach,
    HybridCyclesError,
    LeftDomain,
    NoImpact,
    SnapError,
    Unbounded,
)
from .guard import EITHER, Guard
from .hybrid import BLOW_UP, HybridOptions, HybridSystem, Reset, hybrid_flow
from .ode import VectorField, flow
from .section import SectionChart

__all__ = [
    "DiscreteMap",
    "FiniteImpactSet",
    "CycleResult",
    "OmegaEstimate",
    "classify_interval_map",
    "classify_sequence",
    "sampled_monotonicity",
    "detect_cycle_finite",
    "hybrid_1d_run",
    "omega_estimate",
]

FIXED_POINT = "fixed-point"
PERIODIC = "periodic"
DIVERGENT = "divergent"
UNDECIDED = "undecided"


@dataclass(frozen=True)
class DiscreteMap:
    """Scalar map ``P`` on the interval ``domain = (a, b)``."""

    P: Callable[[float], float]
    domain: Tuple[float, float]

    def __post_init__(self):
        a, b = self.domain
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ValueError("domain must be a finite interval a < b")

    def __call__(self, x: float) -> float:
        return float(self.P(x))

    def maps_into_domain(self, n_samples: int = 1001, slack: float = 1e-12) -> bool:
        a, b = self.domain
        vals = np.array([self(x) for x in np.linspace(a, b, n_samples)])
        return bool(np.all((vals >= a - slack) & (vals <= b + slack)))


@dataclass(frozen=True)
class FiniteImpactSet:
    """Sorted, uniformly separated finite set of scalars."""

    points: Tuple[float, ...]

    def __post_init__(self):
        pts = tuple(sorted(float(p) for p in self.points))
        if not pts:
            raise ValueError("empty impact set")
        object.__setattr__(self, "points", pts)
        if len(pts) > 1 and not self.separation > 0:
            raise ValueError("impact set points must be distinct")

    @property
    def separation(self) -> float:
        if len(self.points) == 1:
            return math.inf
        return float(np.min(np.diff(self.points)))

    def __len__(self):
        return len(self.points)

    def snap(self, x: float) -> int:
        """Index of the member within half the separation of ``x``."""
        pts = np.asarray(self.points)
        k = int(np.argmin(np.abs(pts - x)))
        dist = abs(pts[k] - x)
        if not dist < self.separation / 2:
            raise SnapError(f"{x!r} is {dist:.3e} from the nearest member {pts[k]!r}; half separation is {self.separation / 2:.3e}")
        return k


@dataclass
class CycleResult:
    """Outcome of a cycle search.

    ``kind`` is one of ``fixed-point``, ``periodic``, ``divergent`` or
    ``undecided``; ``period`` counts map iterations (impacts for hybrid
    runs).  ``transient_length`` is the number of iterations before the
    orbit first enters the cycle.
    """

    kind: str
    orbit: list
    transient_length: int
    period: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if self.kind == PERIODIC:
            return f"period-{self.period} cycle"
        return self.kind

    @property
    def is_cycle(self) -> bool:
        return self.kind in (FIXED_POINT, PERIODIC)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["orbit"] = [_jsonable(v) for v in self.orbit]
        d["diagnostics"] = {k: _jsonable(v) for k, v in self.diagnostics.items()}
        d["label"] = self.label
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, dict):
        return {k: _jsonable(u) for k, u in v.items()}
    return v


def _cycle(orbit, transient, diagnostics=None) -> CycleResult:
    k = len(orbit)
    return CycleResult(FIXED_POINT if k == 1 else PERIODIC, list(orbit), transient, k, diagnostics or {})


# --------------------------------------------------------------------------
# interval maps


def sampled_monotonicity(m: DiscreteMap, n_samples: int = 1001):
    """``(monotone, witness)``: strict monotonicity of ``P`` on a sample grid.

    ``witness`` is a triple of consecutive samples at which the direction
    changes (None when monotone).
    """
    a, b = m.domain
    xs = np.linspace(a, b, n_samples)
    ys = np.array([m(x) for x in xs])
    d = np.sign(np.diff(ys))
    if np.all(d > 0) or np.all(d < 0):
        return True, None
    if np.any(d == 0):
        k = int(np.nonzero(d == 0)[0][0])
        return False, (float(xs[k]), float(xs[k + 1]), float(xs[min(k + 2, n_samples - 1)]))
    k = int(np.nonzero(d != d[0])[0][0])
    return False, (float(xs[k - 1]), float(xs[k]), float(xs[k + 1]))


def classify_sequence(xs: Sequence[float], tol: float = 1e-8, persistence: int = 10, max_period: int = 2):
    """Detect eventual periodicity of a recorded scalar sequence.

    Period ``p`` is declared when ``|x[n] - x[n-p]| < tol`` holds for
    ``persistence`` consecutive ``n``, smaller periods taking precedence.
    Returns ``(period, start)`` with ``start`` the first index of the
    persistent window, or ``(0, None)``.
    """
    xs = np.asarray(xs, dtype=float)
    for p in range(1, max_period + 1):
        if len(xs) < p + persistence:
            continue
        ok = np.abs(xs[p:] - xs[:-p]) < tol
        run = 0
        for n, good in enumerate(ok):
            run = run + 1 if good else 0
            if run >= persistence:
                return p, n - persistence + 1
    return 0, None


def classify_interval_map(
    m: DiscreteMap,
    x0: float,
    n_max: int = 10_000,
    tol: float = 1e-8,
    persistence: int = 10,
    max_period: int = 2,
    n_samples: int = 1001,
) -> CycleResult:
    """Iterate ``P`` from ``x0`` and classify the orbit.

    A fixed point is declared once ``|x[n+1] - x[n]| < tol`` has held for
    ``persistence`` consecutive steps, a 2-cycle likewise for
    ``|x[n+2] - x[n]|``.  The injectivity hypothesis under which only these
    two outcomes can occur is checked by sampled monotonicity and reported
    in ``diagnostics``; a non-monotone map is classified as ``undecided``
    unless its orbit settles anyway.  An iterate leaving the domain gives
    ``divergent``.
    """
    monotone, witness = sampled_monotonicity(m, n_samples)
    diag = {
        "injective": monotone,
        "injectivity_witness": witness,
        "maps_into_domain": m.maps_into_domain(n_samples),
        "tol": tol,
        "persistence": persistence,
    }
    a, b = m.domain
    slack = 1e-9 * max(1.0, b - a)
    xs = [float(x0)]
    # check periodically rather than every step to keep the scan cheap
    check_every = max(persistence, 16)
    for n in range(n_max):
        x = m(xs[-1])
        if not math.isfinite(x) or x < a - slack or x > b + slack:
            xs.append(x)
            diag["iterations"] = n + 1
            return CycleResult(DIVERGENT, [x], n + 1, 0, diag)
        xs.append(x)
        if (n + 1) % check_every == 0 or n == n_max - 1:
            p, start = classify_sequence(xs, tol, persistence, max_period)
            if p:
                diag["iterations"] = n + 1
                orbit = xs[start + persistence : start + persistence + p]
                if len(orbit) < p:
                    orbit = xs[-p:]
                transient = start
                diag["residual"] = float(max(abs(m.P(v) - w) for v, w in zip(orbit, orbit[1:] + orbit[:1])))
                return _cycle(orbit, transient, diag)
    diag["iterations"] = n_max
    diag["last_iterates"] = xs[-min(len(xs), 2 * max_period + persistence):]
    return CycleResult(UNDECIDED, [], n_max, 0, diag)


# --------------------------------------------------------------------------
# finite sets


def detect_cycle_finite(
    M: Callable,
    s0,
    impact_set: Optional[FiniteImpactSet] = None,
    n_max: Optional[int] = None,
) -> CycleResult:
    """Exact cycle detection for a map on a finite set.

    Without ``impact_set``, ``M`` maps hashable members (e.g. indices)
    to members.  With it, ``M`` maps scalars to scalars and every image is
    snapped to the member within half the separation (``SnapError``
    otherwise).  A visited table records the first time each member is
    seen, so the cycle and transient are exact; by pigeonhole this needs at
    most ``|set| + 1`` iterations.
    """
    if impact_set is not None:
        pts = impact_set.points
        start = impact_set.snap(s0)
        step = lambda k: impact_set.snap(M(pts[k]))
        out = lambda ks: [pts[k] for k in ks]
        limit = len(pts) + 1 if n_max is None else n_max
    else:
        start = s0
        step = M
        out = list
        limit = n_max if n_max is not None else 10**6
    seen: Dict[Hashable, int] = {}
    path = []
    cur = start
    for n in range(limit + 1):
        if cur in seen:
            first = seen[cur]
            return _cycle(out(path[first:]), first, {"iterations": n})
        seen[cur] = n
        path.append(cur)
        if n < limit:
            cur = step(cur)
    return CycleResult(UNDECIDED, out(path[-1:]), limit, 0, {"iterations": limit})


# --------------------------------------------------------------------------
# 1-D hybrid systems


ResetSpec = Union[Mapping[float, float], Callable[[float], float]]


def _scalar_field(f) -> VectorField:
    if isinstance(f, VectorField):
        return f
    return VectorField(lambda x: np.array([float(f(x[0]))]), 1)


def _one_d_system(f: VectorField, guard, reset: ResetSpec, fset: Optional[FiniteImpactSet], R):
    if fset is not None:
        pts = np.asarray(fset.points)
        if isinstance(guard, Guard):
            raise TypeError("give either impact points or a Guard, not both")
        g = Guard(lambda x: float(np.prod(x[0] - pts)), direction=EITHER)
    else:
        g = guard
    if isinstance(reset, Mapping):
        table = {float(k): float(v) for k, v in reset.items()}
        keys = np.array(sorted(table))

        def delta(x):
            k = keys[int(np.argmin(np.abs(keys - x[0])))]
            return np.array([table[k]])
    else:
        delta = lambda x: np.array([float(reset(x[0]))])
    a, b = R
    return HybridSystem(f, g, Reset(delta), domain=lambda x: a - 1e-9 <= x[0] <= b + 1e-9, name="1-d hybrid")


def hybrid_1d_run(
    f,
    x0: float,
    reset: ResetSpec,
    R: Tuple[float, float],
    impact_points: Optional[Sequence[float]] = None,
    guard: Optional[Guard] = None,
    fixed_points: Optional[Sequence[float]] = None,
    opts: HybridOptions = HybridOptions(),
    eps: float = 1e-3,
    horizon: float = 1e4,
    n_max: int = 200,
    tol: float = 1e-8,
) -> CycleResult:
    """Run a scalar hybrid system to its limit cycle.

    ``f`` is a scalar callable (or a one-dimensional VectorField).  The
    guard is either a finite set ``impact_points`` with ``reset`` a
    mapping from each point to its image, or a general ``guard`` with a
    callable ``reset``.  ``R`` is a compact interval the flow must not
    leave.

    For a finite set the induced impact map ``s_k -> next impact point``
    is built leg by leg and its cycle found exactly; otherwise the impact
    sequence is classified with the interval-map tolerance.  The result's
    ``orbit`` lists the impact points of the cycle in order;
    ``diagnostics`` carries the cycle's leg times and period, the smallest
    inter-impact time, the separation ``eta`` of reset images from S, the
    speed bound ``xi = sup_R |f|`` and the lower bound ``eta / xi``.
    """
    F = _scalar_field(f)
    fset = FiniteImpactSet(tuple(impact_points)) if impact_points is not None else None
    if fset is None and guard is None:
        raise ValueError("need impact_points or guard")
    sys = _one_d_system(F, guard, reset, fset, R)
    a, b = R
    fps = [float(p) for p in fixed_points] if fixed_points is not None else None

    def near_fp(x):
        return fps is not None and any(abs(x - p) < eps for p in fps)

    def leg(y):
        """Flow from ``y`` to the next impact; returns (duration, impact point, path extremes)."""
        traj = hybrid_flow(sys, np.array([y]), horizon, opts, stop_after=1)
        lo = min(float(np.min(s.states)) for s in traj.segments)
        hi = max(float(np.max(s.states)) for s in traj.segments)
        if traj.termination == "left-domain":
            raise LeftDomain(f"1-D flow from {y} left R = [{a}, {b}]")
        if traj.termination == BLOW_UP:
            raise Unbounded(f"1-D flow from {y} blew up")
        if not traj.impacts:
            if near_fp(traj.x_final[0]):
                raise FixedPointApproach(f"orbit from {y} converges to the equilibrium near {traj.x_final[0]:.6g}")
            raise NoImpact(f"no impact within horizon {horizon} from {y}")
        ev = traj.impacts[0]
        if near_fp(ev.x_minus[0]):
            raise FixedPointApproach(f"impact at {ev.x_minus[0]} lies within eps of an equilibrium")
        return ev.t, float(ev.x_minus[0]), (lo, hi)

    legs: Dict[int, Tuple[float, int]] = {}
    extremes = [x0, x0]

    if fset is not None:
        pts = fset.points
        t_first, s_first, ext = leg(float(x0))
        k0 = fset.snap(s_first)

        def M(k):
            if k not in legs:
                y = float(sys.reset(np.array([pts[k]]))[0])
                tau, s_next, ext = leg(y)
                extremes[0], extremes[1] = min(extremes[0], ext[0]), max(extremes[1], ext[1])
                legs[k] = (tau, fset.snap(s_next))
            return legs[k][1]

        res = detect_cycle_finite(M, k0)
        if not res.is_cycle:
            return res
        cyc_idx = list(res.orbit)
        leg_times = [legs[k][0] for k in cyc_idx]
        orbit = [pts[k] for k in cyc_idx]
        all_gaps = [v[0] for v in legs.values()]
        res = _cycle(orbit, res.transient_length, {"impact_map": {pts[k]: pts[v[1]] for k, v in legs.items()}})
        eta = _eta_finite(sys, fset, fps, eps)
    else:
        seq, times = [], []
        y = float(x0)
        for _ in range(n_max):
            tau, s, ext = leg(y)
            extremes[0], extremes[1] = min(extremes[0], ext[0]), max(extremes[1], ext[1])
            seq.append(s)
            times.append(tau)
            y = float(sys.reset(np.array([s]))[0])
        p, start = classify_sequence(seq, tol, 10, max_period=max(2, n_max // 20))
        if not p:
            return CycleResult(UNDECIDED, [], n_max, 0, {"impacts": seq[-10:]})
        orbit = seq[start + 10 : start + 10 + p]
        # times[i] is the leg that ends at seq[i]; the leg leaving seq[i] is times[i+1]
        leg_times = times[start + 11 : start + 11 + p]
        all_gaps = times[1:]
        res = _cycle(orbit, start, {})
        eta = None

    if extremes[0] < a - 1e-9 or extremes[1] > b + 1e-9:
        raise LeftDomain("orbit left R")
    xi = _sup_speed(F, R)
    d = res.diagnostics
    d["leg_times"] = leg_times
    d["period"] = float(sum(leg_times))
    d["min_inter_impact_time"] = float(min(all_gaps))
    d["xi"] = xi
    if fps is None:
        d["S.2"] = "S.2 unchecked: no fixed points of f supplied"
    else:
        d["S.2"] = "checked"
        d["min_distance_to_fixed_points"] = float(min(abs(v - p) for v in orbit for p in fps)) if fps else math.inf
    if eta is not None:
        d["eta"] = eta
        d["gap_lower_bound"] = eta / xi if xi > 0 else math.inf
    return res


def _eta_finite(sys, fset, fps, eps):
    """``min |Delta(s) - s'|`` over members ``s`` away from fixed points and all members ``s'``."""
    pts = np.asarray(fset.points)
    best = math.inf
    for s in pts:
        if fps and any(abs(s - p) < eps for p in fps):
            continue
        img = float(sys.reset(np.array([s]))[0])
        best = min(best, float(np.min(np.abs(pts - img))))
    return best


def _sup_speed(F: VectorField, R, n: int = 2001) -> float:
    """``sup_R |f|`` on a grid.

    Inter-impact times are bounded below by distance over the largest
    speed, so the supremum is the relevant scale.
    """
    return float(max(abs(F(np.array([x]))[0]) for x in np.linspace(R[0], R[1], n)))


# --------------------------------------------------------------------------
# omega-limit estimates


@dataclass
class OmegaEstimate:
    """Sampled omega-limit set.

    ``cloud`` holds states sampled over the observation window,
    ``crossings`` the impact records ``(t, coordinate, x_minus...)`` in the
    window, ``representatives`` one post-impact state per cycle point (or
    the cluster centre for an equilibrium) and ``period_time`` the
    hybrid period in time units when a cycle was found.
    """

    cloud: np.ndarray
    crossings: np.ndarray
    representatives: np.ndarray
    cycle: CycleResult
    period_time: Optional[float]
    dense: bool

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle.to_dict(),
            "period_time": self.period_time,
            "dense": self.dense,
            "representatives": self.representatives.tolist(),
            "n_cloud": int(len(self.cloud)),
            "n_crossings": int(len(self.crossings)),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def crossings_to_csv(self, path) -> None:
        n = self.crossings.shape[1] - 2 if self.crossings.size else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "coordinate"] + [f"x{i}" for i in range(n)])
            for row in self.crossings:
                w.writerow([format(float(v), ".17g") for v in row])


def _occupancy(values: np.ndarray, interval, bins: int) -> float:
    a, b = interval
    hist, _ = np.histogram(values, bins=bins, range=(a, b))
    return float(np.count_nonzero(hist)) / bins


def omega_estimate(
    sys: Union[HybridSystem, VectorField],
    x0,
    t_transient: float,
    t_window: float,
    opts: HybridOptions = HybridOptions(),
    chart: Optional[SectionChart] = None,
    tol: float = 1e-8,
    max_period: int = 8,
    n_map: int = 300,
    bound: float = 1e8,
    n_cloud: int = 2000,
) -> OmegaEstimate:
    """Estimate the omega-limit set of ``x0``.

    The first ``t_transient`` time units are discarded and the window that
    follows is sampled.  For a hybrid system the impacts in the window are
    recorded in chart coordinates; when a chart is available the
    periodicity is classified by iterating the chart return map from the
    last recorded impact (the interval-map classifier), otherwise from the
    recorded sequence.  Without impacts (or for a plain vector field) the
    cloud of sampled states is clustered: a cloud of diameter below
    ``sqrt(tol)`` is an equilibrium.

    ``dense`` flags crossings that occupy at least 90% of the bins of the
    chart interval without a detected period.
    """
    T = t_transient + t_window
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(sys, VectorField):
        seg = flow(sys, x0, T, opts.integrator)
        if not np.all(np.isfinite(seg.states)) or np.max(np.abs(seg.states)) > bound:
            raise Unbounded("trajectory is unbounded")
        segments, impacts = [seg], []
    else:
        traj = hybrid_flow(sys, x0, T, opts)
        if traj.termination == BLOW_UP:
            raise Unbounded("trajectory blew up")
        segments, impacts = traj.segments, traj.impacts
        if chart is None:
            chart = sys.extras.get("chart")

    ts = np.linspace(t_transient, T, n_cloud)
    cloud = []
    for seg in segments:
        sel = ts[(ts >= seg.t_start) & (ts <= seg.t_end)]
        if len(sel):
            cloud.append(seg(sel) if len(sel) > 1 else np.atleast_2d(seg(sel[0])))
        mask = seg.times >= t_transient
        cloud.append(seg.states[mask])
    cloud = np.vstack([c for c in cloud if len(c)]) if cloud else np.empty((0, len(x0)))
    if np.max(np.abs(cloud), initial=0.0) > bound:
        raise Unbounded("trajectory left the bounding box")

    window = [ev for ev in impacts if ev.t >= t_transient]
    coord = (lambda x: chart.coordinate(x)) if chart is not None else (lambda x: float(x[0]))
    crossings = np.array([[ev.t, coord(ev.x_minus), *ev.x_minus] for ev in window]) if window else np.empty((0, 2 + len(x0)))

    if len(window) < 2:
        spread = float(np.max(np.ptp(cloud, axis=0))) if len(cloud) else math.inf
        if spread < math.sqrt(tol):
            centre = cloud.mean(axis=0)
            cyc = CycleResult(FIXED_POINT, [centre.tolist()], 0, 1, {"cloud_diameter": spread})
            return OmegaEstimate(cloud, crossings, centre[None, :], cyc, 0.0, False)
        cyc = CycleResult(UNDECIDED, [], 0, 0, {"cloud_diameter": spread, "impacts_in_window": len(window)})
        return OmegaEstimate(cloud, crossings, np.empty((0, len(x0))), cyc, None, False)

    seq = crossings[:, 1]
    if chart is not None and sys.dimension == 2:
        from .poincare import chart_map

        a, b = chart.interval
        if not (math.isfinite(a) and math.isfinite(b)):
            a, b = float(seq.min()) - 1e3, float(seq.max()) + 1e3
        dm = DiscreteMap(chart_map(sys, chart, opts), (a, b))
        cyc = _classify_orbit(dm, float(seq[-1]), n_map, tol, max_period)
    else:
        p, start = classify_sequence(seq, tol, 10, max_period)
        cyc = _cycle(list(seq[-p:]), int(start), {}) if p else CycleResult(UNDECIDED, [], len(seq), 0, {})

    interval = chart.interval if chart is not None and all(map(math.isfinite, chart.interval)) else (seq.min(), seq.max())
    bins = int(min(50, max(len(seq) // 10, 1)))
    occ = _occupancy(seq, interval, bins)
    dense = (not cyc.is_cycle) and len(seq) >= 100 and occ >= 0.9
    cyc.diagnostics["occupancy"] = occ
    cyc.diagnostics["dense"] = dense

    period_time, reps = None, np.empty((0, len(x0)))
    if cyc.is_cycle:
        p = cyc.period
        times = crossings[:, 0]
        if len(times) > p:
            period_time = float(times[-1] - times[-1 - p])
        reps = np.array([ev.x_plus for ev in window[-p:]])
        cyc.diagnostics["period_time"] = period_time
    return OmegaEstimate(cloud, crossings, reps, cyc, period_time, dense)


def _classify_orbit(dm: DiscreteMap, s0: float, n_max: int, tol: float, max_period: int) -> CycleResult:
    """Interval-map classification without the global monotonicity scan (too costly for flow maps)."""
    xs = [s0]
    for n in range(n_max):
        try:
            xs.append(dm(xs[-1]))
        except HybridCyclesError as exc:
            return CycleResult(DIVERGENT, [], n, 0, {"reason": str(exc)})
        if (n + 1) % 10 == 0:
            p, start = classify_sequence(xs, tol, 10, max_period)
            if p:
                return _cycle(xs[start + 10 : start + 10 + p], start, {"iterations": n + 1})
    return CycleResult(UNDECIDED, [], n_max, 0, {"iterations": n_max})
