"""Hybrid Poincare return map on the impact surface and its derivative.

The analytic derivative of a planar return map at a fixed point factors as

    P'(x) = Delta'(x) * |f(y)| / |f(x)| * sin(alpha) / sin(theta) * exp(int div f)

with ``y = Delta(x)``, ``theta`` the angle of ``f(x)`` with S, ``alpha``
the angle of ``f(y)`` with ``Delta(S)`` and the integral taken along the
arc from ``y`` back to S.  ``derivative_planar`` evaluates the factors
separately; ``fd_derivative`` is the independent finite-difference check.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import (
    BlowUp,
    ConvergenceError,
    DegenerateAngle,
    HybridCyclesError,
    NoImpact,
    NotAFixedPoint,
    ZenoSuspected,
)
from .guard import curve_frame, frame_at, refine_in_step, scan_step, signed_sine
from .hybrid import HybridOptions, HybridSystem, reset_image_curve
from .ode import ContinuousSegment, SegmentBuilder, divergence_integral, steps
from .section import SectionChart

__all__ = [
    "SectionChart",
    "ReturnMapResult",
    "StabilityReport",
    "time_to_impact",
    "return_map",
    "chart_map",
    "find_fixed_point",
    "derivative_planar",
    "derivative_multi",
    "determinant_test",
    "fd_derivative",
]

STABLE, UNSTABLE, MARGINAL = "stable", "unstable", "marginal"


@dataclass(frozen=True, eq=False)
class ReturnMapResult:
    x_in: np.ndarray
    y: np.ndarray
    tau: float
    x_out: np.ndarray
    segment: ContinuousSegment


def _flow_to_impact(sys: HybridSystem, y, opts: HybridOptions, horizon: float):
    """First admissible crossing of S by the continuous flow from ``y``."""
    f, guard = sys.field, sys.guard
    y = np.asarray(y, dtype=float)
    builder = SegmentBuilder(0.0, y)
    h_prev = guard(y)
    if abs(h_prev) <= opts.H_tol:
        h_prev = None
    try:
        for st in steps(f, y, 0.0, horizon, opts.integrator):
            bracket, h_prev = scan_step(guard, st, h_prev, ignore_below=opts.H_tol)
            if bracket is not None:
                t_star, x_star = refine_in_step(guard, st, bracket, opts.t_tol, opts.H_tol)
                builder.add_partial(st, t_star, x_star)
                if t_star < opts.min_impact_gap:
                    raise ZenoSuspected(f"return time {t_star:.3e} below the minimum impact gap")
                return t_star, x_star, builder.build()
            builder.add(st)
    except BlowUp as exc:
        raise NoImpact(f"flow from {y} blew up before reaching S") from exc
    raise NoImpact(f"no impact within horizon {horizon} from {y}")


def time_to_impact(sys: HybridSystem, y, opts: HybridOptions = HybridOptions(), horizon: float = 1e3):
    """Return time ``tau`` and impact state from a post-reset state ``y``."""
    tau, x_out, _ = _flow_to_impact(sys, y, opts, horizon)
    return tau, x_out


def return_map(sys: HybridSystem, x, opts: HybridOptions = HybridOptions(), horizon: float = 1e3) -> ReturnMapResult:
    """``P(x)``: reset ``x`` then flow to the next impact."""
    x = np.asarray(x, dtype=float)
    if abs(sys.guard(x)) > opts.H_tol:
        raise ValueError(f"return_map needs a point on S, |H(x)| = {abs(sys.guard(x)):.3e}")
    y = sys.reset(x)
    tau, x_out, seg = _flow_to_impact(sys, y, opts, horizon)
    return ReturnMapResult(x, y, tau, x_out, seg)


def chart_map(sys: HybridSystem, chart: SectionChart, opts: HybridOptions = HybridOptions(), n: int = 1, horizon: float = 1e3):
    """The ``n``-fold return map written in chart coordinates."""

    def P(s: float) -> float:
        x = chart(s)
        for _ in range(n):
            x = return_map(sys, x, opts, horizon).x_out
        return chart.coordinate(x)

    return P


def find_fixed_point(
    sys: HybridSystem,
    chart: SectionChart,
    s_guess: float,
    opts: HybridOptions = HybridOptions(),
    n: int = 1,
    tol: float = 1e-10,
    max_iter: int = 100,
    horizon: float = 1e3,
) -> float:
    """Solve ``P^n(s) = s`` in chart coordinates.

    Secant iteration on ``g(s) = P^n(s) - s``; once a sign change of ``g`` is
    seen the iterates are kept inside the bracket, with bisection whenever a
    secant step would leave it or fails to shrink it fast enough.
    """
    P = chart_map(sys, chart, opts, n, horizon)

    def g(s):
        try:
            return P(s) - s
        except HybridCyclesError as exc:
            raise ConvergenceError(f"return map undefined at s={s}: {exc}") from exc

    s0 = float(s_guess)
    g0 = g(s0)
    if abs(g0) <= tol:
        return s0
    s1 = s0 + 1e-4 * max(1.0, abs(s0))
    g1 = g(s1)
    lo = hi = None
    if g0 * g1 < 0:
        lo, hi = (s0, g0), (s1, g1)
    best = min((abs(g0), s0), (abs(g1), s1))
    for _ in range(max_iter):
        if abs(g1) <= tol:
            return s1
        if g1 == g0:
            s2 = math.nan
        else:
            s2 = s1 - g1 * (s1 - s0) / (g1 - g0)
        if lo is not None:
            a, b = sorted((lo[0], hi[0]))
            if not (a < s2 < b) or not math.isfinite(s2):
                s2 = 0.5 * (lo[0] + hi[0])
            if b - a <= 4 * np.finfo(float).eps * max(1.0, abs(a)):
                break
        elif not math.isfinite(s2):
            raise ConvergenceError("secant iteration stalled (flat residual)")
        g2 = g(s2)
        best = min(best, (abs(g2), s2))
        if lo is not None:
            if g2 * lo[1] < 0:
                hi = (s2, g2)
            else:
                lo = (s2, g2)
        elif g2 * g1 < 0:
            lo, hi = (s1, g1), (s2, g2)
        s0, g0, s1, g1 = s1, g1, s2, g2
    if best[0] <= tol:
        return best[1]
    raise ConvergenceError(f"fixed point not found: best residual {best[0]:.3e} at s={best[1]}")


def fd_derivative(
    sys: HybridSystem,
    chart: SectionChart,
    s_star: float,
    h: float = 1e-5,
    opts: HybridOptions = HybridOptions(),
    n: int = 1,
    richardson: bool = False,
) -> float:
    """Central difference of the chart return map at ``s_star``.

    With ``richardson=True`` the steps ``h`` and ``h/2`` are combined to
    cancel the ``h**2`` term.
    """
    P = chart_map(sys, chart, opts, n)

    def central(step):
        return (P(s_star + step) - P(s_star - step)) / (2 * step)

    d = central(h)
    if richardson:
        d2 = central(h / 2)
        return (4 * d2 - d) / 3
    return d


# --------------------------------------------------------------------------
# analytic derivative


@dataclass
class LegFactors:
    """Factors of one flow leg from ``y = Delta(x_start)`` to the next impact."""

    s_start: float
    s_end: float
    reset_derivative: float
    speed_ratio: float
    sin_alpha: float
    sin_theta: float
    sine_ratio: float
    divergence_integral: float
    divergence_factor: float
    duration: float
    orientation: int

    @property
    def product(self) -> float:
        return self.reset_derivative * self.speed_ratio * self.sine_ratio * self.divergence_factor


@dataclass
class StabilityReport:
    """Factorized return-map derivative with its finite-difference check.

    ``sine_ratio`` and ``product`` are magnitudes; ``signed_product`` carries
    the orientation implied by the signed sines and the chart direction.
    """

    reset_derivative: float
    speed_ratio: float
    sine_ratio: float
    divergence_factor: float
    product: float
    signed_product: float
    sin_alpha: float
    sin_theta: float
    divergence_integral: float
    period: float
    fixed_point: List[float]
    verdict: str
    fd_check: Optional[float] = None
    fd_relative_error: Optional[float] = None
    margin: float = 1e-6
    legs: List[LegFactors] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["legs"] = [asdict(leg) | {"product": leg.product} for leg in self.legs]
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _verdict(magnitude: float, margin: float) -> str:
    if magnitude < 1 - margin:
        return STABLE
    if magnitude > 1 + margin:
        return UNSTABLE
    return MARGINAL


def _reset_tangent(sys: HybridSystem, chart: SectionChart, s: float, h: float = 1e-6) -> np.ndarray:
    """``d/ds Delta(chart(s))``."""
    if sys.reset.derivative_along_section is not None:
        return np.asarray(sys.reset.derivative_along_section(chart(s), chart.velocity(s)), dtype=float)
    return (sys.reset(chart(s + h)) - sys.reset(chart(s - h))) / (2 * h)


def _leg(sys, chart, s, opts, horizon, fd_step):
    f = sys.field
    x = chart(s)
    rm = return_map(sys, x, opts, horizon)
    y, x_end = rm.y, rm.x_out
    s_end = chart.coordinate(x_end)

    u = chart.velocity(s)
    frame_x = frame_at(sys.guard, x)
    orient_chart = 1 if float(u @ frame_x.tangent) > 0 else -1
    w = _reset_tangent(sys, chart, s, fd_step)
    frame_y = curve_frame(reset_image_curve(sys, chart), s, tangent_vector=w)
    frame_end = frame_at(sys.guard, x_end)

    fy, fx_end = f(y), f(x_end)
    sin_a = signed_sine(fy, frame_y)
    sin_t = signed_sine(fx_end, frame_end)
    if abs(sin_a) < 1e-8 or abs(sin_t) < 1e-8:
        raise DegenerateAngle(f"flow tangent to S or Delta(S): sin(alpha)={sin_a:.3e}, sin(theta)={sin_t:.3e}")
    div_int = divergence_integral(f, rm.segment)
    orientation = orient_chart * (1 if sin_a * sin_t > 0 else -1)
    return LegFactors(
        s_start=float(s),
        s_end=float(s_end),
        reset_derivative=float(np.linalg.norm(w) / np.linalg.norm(u)),
        speed_ratio=float(np.linalg.norm(fy) / np.linalg.norm(fx_end)),
        sin_alpha=sin_a,
        sin_theta=sin_t,
        sine_ratio=abs(sin_a / sin_t),
        divergence_integral=div_int,
        divergence_factor=math.exp(div_int),
        duration=rm.tau,
        orientation=orientation,
    )


def derivative_multi(
    sys: HybridSystem,
    chart: SectionChart,
    s_points: Sequence[float],
    opts: HybridOptions = HybridOptions(),
    fp_tol: float = 1e-6,
    margin: float = 1e-6,
    with_fd: bool = False,
    fd_step: float = 1e-6,
    horizon: float = 1e3,
    fd_h: float = 1e-5,
) -> StabilityReport:
    """Derivative of ``P^n`` along a cycle hitting S at ``s_points`` (in order).

    Each leg pairs the reset factors at its start point with the angle and
    speed at its end point, so a leg's factor product is that leg's own
    derivative; the cycle product is unchanged by the pairing.
    """
    pts = [float(s) for s in s_points]
    if not pts:
        raise ValueError("need at least one cycle point")
    legs = [_leg(sys, chart, s, opts, horizon, fd_step) for s in pts]
    for i, leg in enumerate(legs):
        target = pts[(i + 1) % len(pts)]
        if abs(leg.s_end - target) > fp_tol:
            raise NotAFixedPoint(abs(leg.s_end - target),
                                 f"cycle broken at leg {i}: P(s)={leg.s_end!r}, expected {target!r}")
    reset_d = math.prod(l.reset_derivative for l in legs)
    speed = math.prod(l.speed_ratio for l in legs)
    sines = math.prod(l.sine_ratio for l in legs)
    div_int = sum(l.divergence_integral for l in legs)
    lam = math.prod(l.divergence_factor for l in legs)
    product = reset_d * speed * sines * lam
    orientation = math.prod(l.orientation for l in legs)
    report = StabilityReport(
        reset_derivative=reset_d,
        speed_ratio=speed,
        sine_ratio=sines,
        divergence_factor=lam,
        product=product,
        signed_product=orientation * product,
        sin_alpha=legs[0].sin_alpha,
        sin_theta=legs[-1].sin_theta,
        divergence_integral=div_int,
        period=sum(l.duration for l in legs),
        fixed_point=pts,
        verdict=_verdict(product, margin),
        margin=margin,
        legs=legs,
    )
    if with_fd:
        fd = fd_derivative(sys, chart, pts[0], h=fd_h, opts=opts, n=len(pts))
        report.fd_check = fd
        report.fd_relative_error = abs(product - abs(fd)) / abs(fd) if fd != 0 else math.inf
    return report


def derivative_planar(
    sys: HybridSystem,
    chart: SectionChart,
    s_star: float,
    opts: HybridOptions = HybridOptions(),
    fp_tol: float = 1e-6,
    margin: float = 1e-6,
    with_fd: bool = True,
    fd_step: float = 1e-6,
    horizon: float = 1e3,
    fd_h: float = 1e-5,
) -> StabilityReport:
    """Factorized derivative of the return map at a fixed point ``s_star``."""
    return derivative_multi(sys, chart, [s_star], opts, fp_tol, margin, with_fd, fd_step, horizon, fd_h)


# --------------------------------------------------------------------------
# n-dimensional determinant bound


def section_basis(normal) -> np.ndarray:
    """Orthonormal basis (columns) of the hyperplane orthogonal to ``normal``."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    _, _, vt = np.linalg.svd(n[None, :])
    return vt[1:].T


def _project_to_surface(guard, x, iters: int = 5):
    for _ in range(iters):
        g = guard.gradient(x)
        x = x - guard(x) * g / (g @ g)
    return x


def determinant_test(
    sys: HybridSystem,
    x_star,
    period: float,
    opts: HybridOptions = HybridOptions(),
    h: float = 1e-6,
    horizon: float = 1e3,
):
    """Magnitude of ``det P'`` at a once-per-period orbit through ``x_star``.

    Returns ``(value, verdict, details)``; a value above 1 means the orbit is
    necessarily unstable, otherwise the test is inconclusive.
    """
    f, guard = sys.field, sys.guard
    x = np.asarray(x_star, dtype=float)
    g = guard.gradient(x)
    nS = g / np.linalg.norm(g)
    E = section_basis(nS)
    cols = []
    for j in range(E.shape[1]):
        xp = _project_to_surface(guard, x + h * E[:, j])
        xm = _project_to_surface(guard, x - h * E[:, j])
        cols.append((sys.reset(xp) - sys.reset(xm)) / (2 * h))
    J = np.array(cols).T
    vol = math.sqrt(max(float(np.linalg.det(J.T @ J)), 0.0))
    U, sv, _ = np.linalg.svd(J)
    n_image = U[:, -1]
    y = sys.reset(x)
    tau, x_end, seg = _flow_to_impact(sys, y, opts, horizon)
    fy, fx = f(y), f(x)
    sin_a = abs(float(n_image @ fy)) / float(np.linalg.norm(fy))
    sin_t = abs(float(nS @ fx)) / float(np.linalg.norm(fx))
    if sin_a < 1e-8 or sin_t < 1e-8:
        raise DegenerateAngle("flow tangent to S or Delta(S)")
    div_int = divergence_integral(f, seg)
    value = vol * (np.linalg.norm(fy) / np.linalg.norm(fx)) * (sin_a / sin_t) * math.exp(div_int)
    verdict = "necessarily unstable" if value > 1 else "inconclusive"
    details = {
        "reset_volume_factor": vol,
        "speed_ratio": float(np.linalg.norm(fy) / np.linalg.norm(fx)),
        "sine_ratio": sin_a / sin_t,
        "divergence_integral": div_int,
        "return_time": tau,
        "period_mismatch": abs(tau - period),
        "closure_error": float(np.linalg.norm(x_end - x)),
    }
    return float(value), verdict, details
