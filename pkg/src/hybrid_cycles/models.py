"""Built-in hybrid models with analytic extras, and rimless-wheel energetics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .guard import FALLING, RISING, Guard
from .hybrid import HybridOptions, HybridSystem, Reset
from .ode import VectorField
from .section import SectionChart

__all__ = [
    "VdpHybridParams",
    "PolarParams",
    "RimlessWheelParams",
    "make_vdp_hybrid",
    "make_vdp_continuous",
    "make_polar",
    "make_polar_3d",
    "make_rimless_wheel",
    "make_noninvariance",
    "make_annulus",
    "make_logistic_line",
    "make_counterexamples",
    "energy_gain",
    "energy_loss",
    "existence_inequality",
    "rimless_step_oracle",
    "rimless_fixed_speed",
    "vdp_reference_impacts",
    "MODELS",
    "make_model",
]


# --------------------------------------------------------------------------
# Van der Pol with an impact on x = 1


@dataclass(frozen=True)
class VdpHybridParams:
    """Van der Pol hybrid model on the section ``x = 1``.

    With ``m`` unset the reset is ``(x, y) -> (x, scale * y)``.  With ``m``
    set it is ``(1, y) -> (1, m (y - A) + B)``, where ``A, B`` default to the
    converged pre/post impact values of the ``scale`` reset, so the periodic
    orbit is unchanged while the reset slope becomes ``m``.
    """

    mu: float = 1.0
    scale: float = -1.5
    m: Optional[float] = None
    A: Optional[float] = None
    B: Optional[float] = None


def _vdp_field(mu: float) -> VectorField:
    def f(z):
        x, y = z
        return np.array([y, mu * (1.0 - x * x) * y - x])

    def jac(z):
        x, y = z
        return np.array([[0.0, 1.0], [-2.0 * mu * x * y - 1.0, mu * (1.0 - x * x)]])

    return VectorField(f, 2, divergence=lambda z: mu * (1.0 - z[0] ** 2), jacobian=jac)


_VDP_GUARD = Guard(lambda z: z[0] - 1.0, lambda z: np.array([1.0, 0.0]), FALLING)
VDP_CHART = SectionChart.line((1.0, 0.0), (0.0, 1.0), interval=(-2.0, -0.5), name="y on x=1")


@lru_cache(maxsize=None)
def vdp_reference_impacts(mu: float = 1.0, scale: float = -1.5, rel_tol: float = 1e-11) -> Tuple[float, float]:
    """Converged ``(y-, y+)`` of the scale-reset model, solved as a fixed point."""
    from .poincare import find_fixed_point

    sys = make_vdp_hybrid(VdpHybridParams(mu=mu, scale=scale))
    opts = HybridOptions().with_tolerance(rel_tol)
    guess = -1.05 if (mu, scale) == (1.0, -1.5) else -1.0
    y_minus = find_fixed_point(sys, VDP_CHART, guess, opts, tol=1e-12)
    return y_minus, scale * y_minus


def make_vdp_hybrid(p: VdpHybridParams = VdpHybridParams()) -> HybridSystem:
    f = _vdp_field(p.mu)
    if p.m is None:
        c = p.scale
        reset = Reset(lambda z: np.array([z[0], c * z[1]]), lambda z, u: np.array([u[0], c * u[1]]))
        label = f"scale {c}"
    else:
        A, B = p.A, p.B
        if A is None or B is None:
            A0, B0 = vdp_reference_impacts(p.mu, p.scale)
            A = A0 if A is None else A
            B = B0 if B is None else B
        m = p.m
        reset = Reset(lambda z: np.array([1.0, m * (z[1] - A) + B]), lambda z, u: np.array([0.0, m * u[1]]))
        label = f"linear m={m}, A={A:.6f}, B={B:.6f}"
    return HybridSystem(
        f,
        _VDP_GUARD,
        reset,
        fixed_points=[np.zeros(2)],
        name=f"vdp(mu={p.mu}, {label})",
        extras={"chart": VDP_CHART, "x0": np.array([1.0, 3.0])},
    )


def make_vdp_continuous(mu: float = 1.0, point=None, rel_tol: float = 1e-11):
    """Reset-free Van der Pol with an identity reset on a line normal to the cycle.

    ``point`` is a point of the limit cycle; by default one is found by
    integrating from (1, 3).  Returns ``(system, chart)`` with the chart
    coordinate measured along the section line from that point.
    """
    from .ode import IntegratorOptions, flow_map

    f = _vdp_field(mu)
    if point is None:
        point = flow_map(f, [1.0, 3.0], 60.0, IntegratorOptions(rel_tol=rel_tol, abs_tol=rel_tol * 1e-2))
    point = np.asarray(point, dtype=float)
    n = f(point)
    n = n / np.linalg.norm(n)
    tangent = np.array([-n[1], n[0]])
    guard = Guard(lambda z: float(n @ (z - point)), lambda z: n, RISING)
    sys = HybridSystem(
        f,
        guard,
        Reset(lambda z: np.array(z, dtype=float), lambda z, u: np.asarray(u, dtype=float)),
        fixed_points=[np.zeros(2)],
        name=f"vdp continuous (mu={mu})",
    )
    chart = SectionChart.line(point, tangent, interval=(-0.5, 0.5), name="normal section")
    return sys, chart


# --------------------------------------------------------------------------
# analytic polar example


@dataclass(frozen=True)
class PolarParams:
    alpha: float = math.pi
    beta: float = 2.0
    gamma: float = 0.0

    def __post_init__(self):
        if not (0 <= self.gamma < self.alpha <= 2 * math.pi):
            raise ValueError("need 0 <= gamma < alpha <= 2 pi")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def contraction(self) -> float:
        """``beta * exp(gamma - alpha)``, the return-map slope."""
        return self.beta * math.exp(self.gamma - self.alpha)

    @property
    def fixed_radius(self) -> Optional[float]:
        """Pre-impact radius of the periodic orbit, None when there is none."""
        e = math.exp(self.gamma - self.alpha)
        if self.beta * e >= 1.0:
            return None
        return (1.0 - e) / (1.0 - self.beta * e)

    def return_map(self, r: float) -> float:
        """Pre-impact radius after one return, starting from radius ``r`` on S."""
        return (self.beta * r - 1.0) * math.exp(self.gamma - self.alpha) + 1.0


def polar_flow(r0: float, theta0: float, t: float) -> Tuple[float, float]:
    """Closed-form flow of ``r' = 1 - r, theta' = 1``."""
    return (r0 - 1.0) * math.exp(-t) + 1.0, theta0 + t


def _polar_cartesian_field(extra_z: bool = False) -> VectorField:
    def f(z):
        x, y = z[0], z[1]
        r = math.hypot(x, y)
        k = (1.0 - r) / r
        if extra_z:
            return np.array([k * x - y, k * y + x, -z[2]])
        return np.array([k * x - y, k * y + x])

    def div(z):
        r = math.hypot(z[0], z[1])
        return 1.0 / r - 2.0 - (1.0 if extra_z else 0.0)

    return VectorField(f, 3 if extra_z else 2, divergence=div)


def make_polar(p: PolarParams = PolarParams(), coords: str = "cartesian") -> HybridSystem:
    """The ``r' = 1 - r, theta' = 1`` system with reset ``(r, alpha) -> (beta r, gamma)``.

    ``coords="cartesian"`` realizes it in the plane (guard on the ray at
    angle alpha); ``coords="polar"`` integrates the ``(r, theta)`` equations
    directly, where the divergence is identically -1.
    """
    a, b, g = p.alpha, p.beta, p.gamma
    ea = np.array([math.cos(a), math.sin(a)])
    eg = np.array([math.cos(g), math.sin(g)])
    extras = {"params": p, "closed_form_flow": polar_flow, "polar_divergence": -1.0}
    if coords == "polar":
        f = VectorField(lambda z: np.array([1.0 - z[0], 1.0]), 2, divergence=lambda z: -1.0)
        guard = Guard(lambda z: z[1] - a, lambda z: np.array([0.0, 1.0]), RISING)
        reset = Reset(lambda z: np.array([b * z[0], g]), lambda z, u: np.array([b * u[0], 0.0]))
        chart = SectionChart.line((0.0, a), (1.0, 0.0), interval=(0.05, 5.0), name="r on theta=alpha")
    elif coords == "cartesian":
        f = _polar_cartesian_field()
        nrm = np.array([-math.sin(a), math.cos(a)])
        guard = Guard(lambda z: float(nrm @ z), lambda z: nrm, RISING)
        reset = Reset(lambda z: b * float(ea @ z) * eg, lambda z, u: b * float(ea @ u) * eg)
        chart = SectionChart.line((0.0, 0.0), ea, interval=(0.05, 5.0), name="radius on ray alpha")
    else:
        raise ValueError("coords must be 'cartesian' or 'polar'")
    extras["chart"] = chart
    return HybridSystem(f, guard, reset, name=f"polar({coords}, a={a:.4g}, b={b:.4g}, g={g:.4g})", extras=extras)


def make_polar_3d(p: PolarParams = PolarParams()) -> HybridSystem:
    """Cartesian polar model extruded by a decoupled ``z' = -z``."""
    a, b, g = p.alpha, p.beta, p.gamma
    ea = np.array([math.cos(a), math.sin(a)])
    eg = np.array([math.cos(g), math.sin(g)])
    nrm = np.array([-math.sin(a), math.cos(a), 0.0])

    def delta(z):
        r = float(ea @ z[:2])
        return np.array([b * r * eg[0], b * r * eg[1], z[2]])

    return HybridSystem(
        _polar_cartesian_field(extra_z=True),
        Guard(lambda z: float(nrm @ z), lambda z: nrm, RISING),
        Reset(delta),
        name="polar 3d",
        extras={"params": p},
    )


# --------------------------------------------------------------------------
# rimless wheel


@dataclass(frozen=True)
class RimlessWheelParams:
    """Rimless wheel on a slope.

    ``delta`` half inter-leg angle, ``alpha`` slope, ``zeta = g / ell``.
    Energies are per unit mass unless ``mass`` is given.
    """

    delta: float = math.pi / 10
    alpha: float = math.pi / 30
    zeta: float = 9.8
    ell: float = 1.0
    g: Optional[float] = None
    mass: float = 1.0

    def __post_init__(self):
        if not (0 < self.delta < math.pi / 4):
            raise ValueError("need 0 < delta < pi/4")
        if not (0 < self.alpha < math.pi / 2):
            raise ValueError("need 0 < alpha < pi/2")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")

    @property
    def gravity(self) -> float:
        return self.g if self.g is not None else self.zeta * self.ell


def make_rimless_wheel(p: RimlessWheelParams = RimlessWheelParams()) -> HybridSystem:
    """State ``(theta, theta_dot)``; impact when the stance angle reaches ``-delta - alpha``.

    The wheel rolls forward with negative angular velocity, so the guard is
    crossed with ``theta`` decreasing.
    """
    d, a, z = p.delta, p.alpha, p.zeta
    c = math.cos(2 * d)
    f = VectorField(
        lambda x: np.array([x[1], z * math.sin(x[0])]),
        2,
        divergence=lambda x: 0.0,
        jacobian=lambda x: np.array([[0.0, 1.0], [z * math.cos(x[0]), 0.0]]),
    )
    guard = Guard(lambda x: x[0] + d + a, lambda x: np.array([1.0, 0.0]), FALLING)
    reset = Reset(lambda x: np.array([d - a, c * x[1]]), lambda x, u: np.array([0.0, c * u[1]]))
    chart = SectionChart.line((-d - a, 0.0), (0.0, 1.0), interval=(-6.0, -0.3), name="theta_dot at impact")
    lo, hi = -d - a - 1e-6, d - a + 1e-6
    return HybridSystem(
        f,
        guard,
        reset,
        fixed_points=[np.zeros(2), np.array([math.pi, 0.0]), np.array([-math.pi, 0.0])],
        # rolling back past the post-impact stance angle means the wheel failed to vault
        domain=lambda x: lo <= x[0] <= hi,
        name=f"rimless wheel (delta={d:.4g}, alpha={a:.4g}, zeta={z:.4g})",
        extras={"chart": chart, "params": p, "x0": np.array([d - a, -1.2])},
    )


def energy_gain(p: RimlessWheelParams) -> float:
    """Potential energy gained over one swing, ``2 ell g sin(delta) sin(alpha)``."""
    return p.mass * 2.0 * p.ell * p.gravity * math.sin(p.delta) * math.sin(p.alpha)


def energy_loss(p: RimlessWheelParams, x2_minus: float) -> float:
    """Kinetic energy lost at an impact with pre-impact rate ``x2_minus``."""
    return p.mass * 0.5 * (p.ell * x2_minus) ** 2 * (1.0 - math.cos(2 * p.delta) ** 2)


def existence_inequality(p: RimlessWheelParams) -> Tuple[float, float, bool]:
    """``(lhs, rhs, holds)`` of the sufficient condition for a walking cycle."""
    d, a = p.delta, p.alpha
    lhs = 2.0 * math.sin(d) * math.sin(a)
    c2 = math.cos(2 * d) ** 2
    if c2 < 1e-300:
        return lhs, math.inf, False
    rhs = (1.0 - c2) * (1.0 - math.cos(d - a)) / c2
    return lhs, rhs, bool(d > a and lhs > rhs)


def rimless_step_oracle(p: RimlessWheelParams, x2_minus: float) -> Optional[float]:
    """Next pre-impact rate from energy conservation between impacts.

    Returns None when the post-impact rate is too small to vault over the
    upright position (the wheel falls back).
    """
    d, a, z = p.delta, p.alpha, p.zeta
    c = math.cos(2 * d)
    post_sq = (c * x2_minus) ** 2
    if post_sq <= 2 * z * (1 - math.cos(d - a)):
        return None
    return -math.sqrt(post_sq + 2 * z * (math.cos(d - a) - math.cos(d + a)))


def rimless_fixed_speed(p: RimlessWheelParams) -> float:
    """Pre-impact rate of the period-one gait (negative: forward rolling)."""
    d, a, z = p.delta, p.alpha, p.zeta
    c2 = math.cos(2 * d) ** 2
    return -math.sqrt(2 * z * (math.cos(d - a) - math.cos(d + a)) / (1 - c2))


# --------------------------------------------------------------------------
# counterexamples


def make_noninvariance() -> HybridSystem:
    """``x' = 1, y' = -y^2`` on ``[0, 1] x R`` with a reset that is discontinuous at y = 0."""

    def delta(z):
        y = z[1]
        return np.array([0.0, y if y > 0 else y - 1.0])

    return HybridSystem(
        VectorField(lambda z: np.array([1.0, -z[1] ** 2]), 2, divergence=lambda z: -2.0 * z[1]),
        Guard(lambda z: z[0] - 1.0, lambda z: np.array([1.0, 0.0]), RISING),
        Reset(delta),
        domain=lambda z: -1e-9 <= z[0] <= 1.0 + 1e-6,
        name="noninvariance",
        extras={
            "chart": SectionChart.line((1.0, 0.0), (0.0, 1.0), interval=(0.01, 2.0)),
            "x0": np.array([0.0, 1.0]),
        },
    )


def make_annulus() -> HybridSystem:
    """``r' = theta' = 1`` with impact on ``r = 2`` and reset ``x -> x / 2``."""

    def f(z):
        r = math.hypot(z[0], z[1])
        return np.array([z[0] / r - z[1], z[1] / r + z[0]])

    return HybridSystem(
        VectorField(f, 2, divergence=lambda z: 1.0 / math.hypot(z[0], z[1])),
        Guard(lambda z: z[0] ** 2 + z[1] ** 2 - 4.0, lambda z: 2.0 * np.asarray(z), RISING),
        Reset(lambda z: 0.5 * np.asarray(z), lambda z, u: 0.5 * np.asarray(u)),
        name="annulus",
        extras={"chart": SectionChart.circle(2.0, name="angle on r=2"), "x0": np.array([1.5, 0.0])},
    )


def make_logistic_line() -> HybridSystem:
    """``x' = 1, y' = 0`` with impact on ``x = 2`` and reset ``(2, y) -> (y, 4y(1-y))``."""
    return HybridSystem(
        VectorField(lambda z: np.array([1.0, 0.0]), 2, divergence=lambda z: 0.0),
        Guard(lambda z: z[0] - 2.0, lambda z: np.array([1.0, 0.0]), RISING),
        Reset(lambda z: np.array([z[1], 4.0 * z[1] * (1.0 - z[1])])),
        name="logistic line",
        extras={
            "chart": SectionChart.line((2.0, 0.0), (0.0, 1.0), interval=(0.0, 1.0), name="y on x=2"),
            "x0": np.array([0.0, 0.3]),
        },
    )


def make_counterexamples() -> Dict[str, HybridSystem]:
    return {
        "noninvariance": make_noninvariance(),
        "annulus": make_annulus(),
        "logistic_line": make_logistic_line(),
    }


# --------------------------------------------------------------------------
# registry


def _vdp_from(params):
    return make_vdp_hybrid(VdpHybridParams(**params))


def _polar_from(params):
    params = dict(params)
    coords = params.pop("coords", "cartesian")
    return make_polar(PolarParams(**params), coords=coords)


def _wheel_from(params):
    return make_rimless_wheel(RimlessWheelParams(**params))


def _no_params(factory):
    def build(params):
        if params:
            raise TypeError(f"model takes no parameters, got {sorted(params)}")
        return factory()

    return build


MODELS: Dict[str, Callable[[dict], HybridSystem]] = {
    "vdp": _vdp_from,
    "polar": _polar_from,
    "rimless_wheel": _wheel_from,
    "noninvariance": _no_params(make_noninvariance),
    "annulus": _no_params(make_annulus),
    "logistic_line": _no_params(make_logistic_line),
}


def make_model(name: str, params: Optional[dict] = None) -> HybridSystem:
    try:
        factory = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(params or {})
