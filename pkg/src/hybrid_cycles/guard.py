"""Impact-surface geometry: crossing detection, root refinement, section frames."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateGuard, RefinementFailure
from .ode import ContinuousSegment, Step, VectorField, _dense_eval, eval_at

RISING = "negative-to-positive"
FALLING = "positive-to-negative"
EITHER = "either"
DIRECTIONS = (RISING, FALLING, EITHER)

#: number of interpolant samples per accepted step used when scanning for sign changes
SCAN_POINTS = 8


class GrazingWarning(UserWarning):
    """Impact accepted with a nearly tangential flow."""


@dataclass(frozen=True)
class Guard:
    """Impact surface ``S = {x : H(x) = 0}``.

    ``direction`` restricts which sign changes of ``H`` along the flow count
    as impacts.
    """

    H: Callable[[np.ndarray], float]
    grad_H: Optional[Callable[[np.ndarray], np.ndarray]] = None
    direction: str = EITHER

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")

    def __call__(self, x) -> float:
        return float(self.H(np.asarray(x, dtype=float)))

    def gradient(self, x, h: float = 1e-7) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad_H is not None:
            return np.asarray(self.grad_H(x), dtype=float)
        g = np.empty_like(x)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = h * max(1.0, abs(x[i]))
            g[i] = (self(x + e) - self(x - e)) / (2 * e[i])
        return g

    def accepts(self, h_before: float, h_after: float) -> bool:
        """Whether a sign change from ``h_before`` to ``h_after`` is an impact."""
        if self.direction == RISING:
            return h_before < 0 < h_after
        if self.direction == FALLING:
            return h_before > 0 > h_after
        return h_before * h_after < 0

    def matches_flow(self, rate: float) -> bool:
        """Whether a state on S moving with ``dH/dt = rate`` would trigger."""
        if self.direction == RISING:
            return rate > 0
        if self.direction == FALLING:
            return rate < 0
        return rate != 0


@dataclass(frozen=True)
class CrossingBracket:
    t_lo: float
    t_hi: float
    sign_lo: int
    sign_hi: int

    def __post_init__(self):
        if not (self.t_lo < self.t_hi and self.sign_lo * self.sign_hi < 0):
            raise ValueError("invalid crossing bracket")


@dataclass(frozen=True)
class SectionFrame:
    point: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray


def _sign(v: float) -> int:
    return (v > 0) - (v < 0)


def _scan_samples(guard, t_start, ts, xs, h_prev, ignore_below):
    found = []
    t_prev = t_start
    for t, x in zip(ts, xs):
        hv = guard(x)
        if hv == 0.0 or (h_prev is None and abs(hv) <= ignore_below):
            t_prev = t
            continue
        if h_prev is not None and h_prev * hv < 0 and guard.accepts(h_prev, hv):
            found.append(CrossingBracket(float(t_prev), float(t), _sign(h_prev), _sign(hv)))
        h_prev = hv
        t_prev = t
    return found, h_prev


def _step_samples(step: Step):
    ts = np.linspace(step.t0, step.t1, SCAN_POINTS + 1)[1:]
    xs = _dense_eval(step.rcont, step.t0, step.h, ts)
    xs[-1] = step.x1
    return ts, xs


def scan_step(guard: Guard, step: Step, h_prev: Optional[float], ignore_below: float = 0.0):
    """Scan one accepted step for the first admissible sign change.

    ``h_prev`` is the last significant value of H before the step (None if
    the trajectory has so far stayed within ``ignore_below`` of S, e.g.
    right after a reset onto S).  Returns ``(bracket or None, h_last)``.
    """
    ts, xs = _step_samples(step)
    found, h_last = _scan_samples(guard, step.t0, ts, xs, h_prev, ignore_below)
    return (found[0] if found else None), h_last


def scan_crossings(guard: Guard, seg: ContinuousSegment, ignore_below: float = 0.0) -> List[CrossingBracket]:
    """All admissible sign changes of H along ``seg``.

    Each step is subdivided into ``SCAN_POINTS`` interpolant samples.  A
    tangential touch without a sign change is not reported.
    """
    out = []
    h_prev = guard(seg.x_start)
    if h_prev == 0.0 or abs(h_prev) <= ignore_below:
        h_prev = None
    for k in range(seg.n_steps):
        st = seg.step(k)
        if st.t1 <= st.t0:
            continue
        ts, xs = _step_samples(st)
        found, h_prev = _scan_samples(guard, st.t0, ts, xs, h_prev, ignore_below)
        out.extend(found)
    return out


def refine_in_step(guard: Guard, step: Step, bracket: CrossingBracket, t_tol: float = 1e-14, H_tol: float = 1e-9):
    """Brent refinement of a crossing on a single step's interpolant."""
    def state(t):
        if t == step.t1:
            return step.x1
        return _dense_eval(step.rcont, step.t0, step.h, t)

    return _refine(guard, state, bracket, t_tol, H_tol)


def refine_crossing(
    f: VectorField,
    guard: Guard,
    seg: ContinuousSegment,
    b: CrossingBracket,
    t_tol: float = 1e-14,
    H_tol: float = 1e-9,
):
    """Locate ``t*`` in the bracket with ``H(seg(t*)) = 0``.

    Returns ``(t_star, x_star)`` with ``x_star = eval_at(seg, t_star)``.
    ``f`` is used only for the grazing diagnostic.
    """
    t_star, x_star = _refine(guard, lambda t: eval_at(seg, t), b, t_tol, H_tol)
    _check_grazing(f, guard, x_star)
    return t_star, x_star


def _refine(guard, state, b, t_tol, H_tol):
    g = lambda t: guard(state(t))
    g_lo, g_hi = g(b.t_lo), g(b.t_hi)
    if g_lo == 0.0:
        return b.t_lo, state(b.t_lo)
    if g_hi == 0.0:
        return b.t_hi, state(b.t_hi)
    try:
        t_star = brentq(g, b.t_lo, b.t_hi, xtol=t_tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (RuntimeError, ValueError) as exc:
        raise RefinementFailure(f"crossing refinement failed: {exc}") from exc
    x_star = state(t_star)
    if abs(guard(x_star)) > H_tol:
        raise RefinementFailure(
            f"|H| = {abs(guard(x_star)):.3e} exceeds H_tol after refinement (degenerate guard?)"
        )
    return float(t_star), np.asarray(x_star, dtype=float)


def _check_grazing(f, guard, x):
    fx = f(x)
    g = guard.gradient(x)
    val = float(g @ fx)
    if abs(val) < 1e-6 * np.linalg.norm(fx) * np.linalg.norm(g):
        warnings.warn(f"near-grazing impact at {x}: <grad H, f> = {val:.3e}", GrazingWarning)
    return val


def _rot90(v):
    return np.array([-v[1], v[0]])


def frame_at(guard: Guard, x) -> SectionFrame:
    """Unit normal ``grad H / |grad H|`` and tangent (normal rotated by +pi/2)."""
    x = np.asarray(x, dtype=float)
    g = guard.gradient(x)
    ng = float(np.linalg.norm(g))
    if not ng > 0 or not math.isfinite(ng):
        raise DegenerateGuard(f"vanishing guard gradient at {x}")
    normal = g / ng
    if len(x) != 2:
        raise ValueError("frame_at is planar; use poincare.section_basis in n dimensions")
    return SectionFrame(x, _rot90(normal), normal)


def curve_frame(curve: Callable[[float], np.ndarray], s: float, h: float = 1e-6, tangent_vector=None) -> SectionFrame:
    """Frame of a planar parametrized curve; tangent follows increasing ``s``.

    ``tangent_vector`` may supply the (unnormalized) derivative directly.
    """
    point = np.asarray(curve(s), dtype=float)
    if tangent_vector is None:
        tangent_vector = (np.asarray(curve(s + h)) - np.asarray(curve(s - h))) / (2 * h)
    tangent_vector = np.asarray(tangent_vector, dtype=float)
    nt = float(np.linalg.norm(tangent_vector))
    if not nt > 0:
        raise DegenerateGuard(f"curve has zero tangent at s={s}")
    tangent = tangent_vector / nt
    normal = np.array([tangent[1], -tangent[0]])
    return SectionFrame(point, tangent, normal)


def signed_sine(v, frame: SectionFrame) -> float:
    """Sine of the angle between ``frame.tangent`` and ``v``.

    Signed so that ``v = frame.normal`` gives +1, i.e. the z component of
    ``v x tangent`` over ``|v|``.
    """
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise DegenerateGuard("signed_sine of the zero vector")
    t = frame.tangent
    return float(v[0] * t[1] - v[1] * t[0]) / nv


def transversality(f: VectorField, guard: Guard, x) -> float:
    """``<grad H(x), f(x)>``; near zero means the flow grazes S."""
    return float(guard.gradient(x) @ f(x))
