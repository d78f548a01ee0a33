"""Adaptive Dormand-Prince 5(4) integration with dense output.

The integrator is written out by hand rather than delegated to
``scipy.integrate`` because the hybrid engine needs direct access to every
accepted step (for guard scanning) and to the step-local interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import BlowUp, OutOfSegment, StepLimitExceeded, StepUnderflow

__all__ = [
    "VectorField",
    "IntegratorOptions",
    "ContinuousSegment",
    "flow",
    "flow_map",
    "eval_at",
    "divergence_at",
    "divergence_integral",
]


# Dormand-Prince tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# continuous extension (Hairer, Norsett & Wanner, DOPRI5 dense output)
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

_A = np.array(
    [
        [0, 0, 0, 0, 0, 0],
        [A21, 0, 0, 0, 0, 0],
        [A31, A32, 0, 0, 0, 0],
        [A41, A42, A43, 0, 0, 0],
        [A51, A52, A53, A54, 0, 0],
        [A61, A62, A63, A64, A65, 0],
        [A71, 0, A73, A74, A75, A76],
    ]
)
_E = np.array([E1, 0, E3, E4, E5, E6, E7])
_D = np.array([D1, 0, D3, D4, D5, D6, D7])

_SAFE, _FAC_MIN, _FAC_MAX, _BETA = 0.9, 0.2, 10.0, 0.04
_EXPO = 0.2 - _BETA * 0.75


@dataclass(frozen=True)
class VectorField:
    """Autonomous vector field ``x' = f(x)`` with optional analytic extras.

    ``divergence`` and ``jacobian`` are used when given; otherwise central
    differences stand in for them.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    dimension: int
    divergence: Optional[Callable[[np.ndarray], float]] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    h_init: Optional[float] = None
    h_min: float = 1e-12
    h_max: float = math.inf
    max_steps: int = 10**7

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.h_min <= self.h_max):
            raise ValueError("need 0 < h_min <= h_max")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def replace(self, **changes) -> "IntegratorOptions":
        return replace(self, **changes)


@dataclass(frozen=True)
class Step:
    """One accepted step together with its interpolation coefficients."""

    t0: float
    t1: float
    x0: np.ndarray
    x1: np.ndarray
    rcont: np.ndarray  # (5, n)
    h: float  # interpolant length; exceeds t1 - t0 for a truncated step

    def __call__(self, t):
        return _dense_eval(self.rcont, self.t0, self.h, t)


def _dense_eval(rcont, t0, h, t):
    th = (np.asarray(t, dtype=float) - t0) / h
    th1 = 1.0 - th
    if th.ndim:
        th = th[:, None]
        th1 = th1[:, None]
    r1, r2, r3, r4, r5 = rcont
    return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))


@dataclass(frozen=True, eq=False)
class ContinuousSegment:
    """Solution of ``x' = f(x)`` on ``[t_start, t_end]``.

    ``times``/``states`` hold the accepted-step nodes; ``rcont[k]`` and
    ``h[k]`` describe the interpolant on ``[times[k], times[k] + h[k]]``.
    The last interval may be cut short (a segment truncated at an impact),
    in which case ``times[-1] < times[-2] + h[-1]``.
    """

    times: np.ndarray
    states: np.ndarray
    rcont: np.ndarray
    h: np.ndarray
    n_rejected: int = 0

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def x_start(self) -> np.ndarray:
        return self.states[0]

    @property
    def x_end(self) -> np.ndarray:
        return self.states[-1]

    @property
    def n_steps(self) -> int:
        return len(self.h)

    def __call__(self, t):
        return eval_at(self, t)

    def step(self, k: int) -> Step:
        return Step(
            float(self.times[k]),
            float(self.times[k + 1]),
            self.states[k],
            self.states[k + 1],
            self.rcont[k],
            float(self.h[k]),
        )


def eval_at(seg: ContinuousSegment, t):
    """State of the segment at time ``t`` (scalar or 1-D array of times)."""
    t_arr = np.asarray(t, dtype=float)
    span = seg.t_end - seg.t_start
    slack = 4 * np.finfo(float).eps * max(1.0, abs(seg.t_start), abs(seg.t_end))
    if np.any(t_arr < seg.t_start - slack) or np.any(t_arr > seg.t_end + slack):
        raise OutOfSegment(
            f"t outside segment [{seg.t_start}, {seg.t_end}] (span {span})"
        )
    if t_arr.ndim == 0:
        return _eval_scalar(seg, float(t_arr))
    return np.array([_eval_scalar(seg, float(ti)) for ti in t_arr])


def _eval_scalar(seg, t):
    times = seg.times
    k = int(np.searchsorted(times, t, side="left"))
    if k < len(times) and times[k] == t:
        return seg.states[k].copy()
    if len(seg.h) == 0:
        return seg.states[0].copy()
    k = min(max(k - 1, 0), len(seg.h) - 1)
    return _dense_eval(seg.rcont[k], times[k], seg.h[k], t)


def _initial_step(f, t0, x0, f0, direction_span, opts):
    # Hairer's starting step heuristic (order 5)
    sk = opts.abs_tol + opts.rel_tol * np.abs(x0)
    d0 = np.sqrt(np.mean((x0 / sk) ** 2))
    d1 = np.sqrt(np.mean((f0 / sk) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    x1 = x0 + h0 * f0
    f1 = f(x1)
    d2 = np.sqrt(np.mean(((f1 - f0) / sk) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, direction_span)


def steps(
    f: VectorField,
    x0,
    t0: float,
    t_end: float,
    opts: IntegratorOptions = IntegratorOptions(),
) -> Iterator[Step]:
    """Yield accepted steps from ``t0`` until ``t_end``.

    Consumers may stop iterating at any point; this is how the hybrid
    engine truncates a segment at an impact.
    """
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise BlowUp(f"non-finite initial state {x}")
    t = float(t0)
    span = float(t_end) - t
    k1 = f(x)
    if not np.all(np.isfinite(k1)):
        raise BlowUp(f"non-finite derivative at the initial state {x}")
    h = opts.h_init if opts.h_init is not None else _initial_step(f, t, x, k1, span, opts)
    h = min(h, opts.h_max)
    facold = 1e-4
    rtol, atol = opts.rel_tol, opts.abs_tol
    n_steps = 0
    n = len(x)
    K = np.empty((7, n))
    last = False
    while not last:
        if n_steps >= opts.max_steps:
            raise StepLimitExceeded(f"more than {opts.max_steps} steps at t={t}")
        remaining = t_end - t
        if h >= remaining * (1 - 1e-12):
            h = remaining
            last = True
        elif h < opts.h_min:
            raise StepUnderflow(f"step {h:.3e} below h_min at t={t}")
        K[0] = k1
        for i in range(1, 6):
            K[i] = f(x + h * (_A[i, :i] @ K[:i]))
        x_new = x + h * (_A[6, :6] @ K[:6])
        k7 = K[6] = f(x_new)
        n_steps += 1
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(k7))):
            if 0.25 * h < opts.h_min:
                raise BlowUp(f"non-finite state near t={t}")
            h *= 0.25
            last = False
            continue
        err_vec = h * (_E @ K)
        sk = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        q = err_vec / sk
        err = math.sqrt(float(q @ q) / n)
        fac11 = err**_EXPO
        if err <= 1.0:
            fac = fac11 / facold**_BETA
            fac = max(1 / _FAC_MAX, min(1 / _FAC_MIN, fac / _SAFE))
            facold = max(err, 1e-4)
            r2 = x_new - x
            rcont = np.stack(
                (
                    x,
                    r2,
                    h * k1 - r2,
                    r2 - h * k7 - (h * k1 - r2),
                    h * (_D @ K),
                )
            )
            t_new = t_end if last else t + h
            yield Step(t, t_new, x, x_new, rcont, t_new - t)
            t, x, k1 = t_new, x_new, k7
            h = min(h / fac, opts.h_max)
        else:
            last = False
            h = h / min(1 / _FAC_MIN, fac11 / _SAFE)


class SegmentBuilder:
    """Accumulates steps into a :class:`ContinuousSegment`."""

    def __init__(self, t0, x0):
        self.times = [float(t0)]
        self.states = [np.array(x0, dtype=float)]
        self.rconts = []
        self.hs = []

    def add(self, step: Step):
        self.times.append(step.t1)
        self.states.append(step.x1)
        self.rconts.append(step.rcont)
        self.hs.append(step.h)

    def add_partial(self, step: Step, t_cut: float, x_cut):
        """Add ``step`` but end the segment at ``t_cut`` inside it."""
        self.times.append(float(t_cut))
        self.states.append(np.array(x_cut, dtype=float))
        self.rconts.append(step.rcont)
        self.hs.append(step.h)

    def build(self) -> ContinuousSegment:
        n = len(self.states[0])
        rc = np.array(self.rconts) if self.rconts else np.zeros((0, 5, n))
        return ContinuousSegment(
            np.array(self.times), np.array(self.states), rc, np.array(self.hs)
        )


def flow(f: VectorField, x0, T: float, opts: IntegratorOptions = IntegratorOptions(), t0: float = 0.0) -> ContinuousSegment:
    """Integrate ``x' = f(x)`` from ``x0`` over ``[t0, t0 + T]``."""
    if not T > 0:
        raise ValueError("T must be positive")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (f.dimension,):
        raise ValueError(f"state has shape {x0.shape}, field dimension is {f.dimension}")
    builder = SegmentBuilder(t0, x0)
    for st in steps(f, x0, t0, t0 + T, opts):
        builder.add(st)
    return builder.build()


def flow_map(f: VectorField, x0, T: float, opts: IntegratorOptions = IntegratorOptions()) -> np.ndarray:
    """Final state of the time-``T`` flow; no segment is kept."""
    x = np.asarray(x0, dtype=float)
    for st in steps(f, x, 0.0, T, opts):
        x = st.x1
    return x.copy()


def divergence_at(f: VectorField, x, h: Optional[float] = None) -> float:
    """Divergence of ``f`` at ``x``, analytic if available else central differences."""
    x = np.asarray(x, dtype=float)
    if f.divergence is not None:
        val = float(f.divergence(x))
    else:
        if h is None:
            h = max(1e-6, 1e-6 * float(np.linalg.norm(x)))
        val = 0.0
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = h
            val += (f(x + e)[i] - f(x - e)[i]) / (2 * h)
    if not math.isfinite(val):
        raise BlowUp(f"non-finite divergence at {x}")
    return val


def _trapezoid_on_grid(f, seg, level):
    """Trapezoid rule with each step split into ``2**level`` pieces."""
    m = 2**level
    total = 0.0
    for k in range(seg.n_steps):
        ta, tb = seg.times[k], seg.times[k + 1]
        if tb <= ta:
            continue
        ts = np.linspace(ta, tb, m + 1)
        xs = _dense_eval(seg.rcont[k], ta, seg.h[k], ts)
        xs[0], xs[-1] = seg.states[k], seg.states[k + 1]
        vals = np.array([divergence_at(f, xi) for xi in xs])
        total += float(np.trapezoid(vals, ts))
    return total


def divergence_integral(f: VectorField, seg: ContinuousSegment, rtol: float = 1e-8, atol: float = 1e-12, max_level: int = 8) -> float:
    """Integral of the divergence of ``f`` along ``seg``.

    Trapezoid rule on the node grid, refined by halving every step via the
    interpolant until two successive levels agree to ``rtol``.
    """
    prev = _trapezoid_on_grid(f, seg, 0)
    for level in range(1, max_level + 1):
        cur = _trapezoid_on_grid(f, seg, level)
        # Richardson on the O(h^2) trapezoid error
        extrap = cur + (cur - prev) / 3.0
        if abs(cur - prev) / 3.0 <= rtol * abs(extrap) + atol:
            return extrap
        prev = cur
    return extrap
