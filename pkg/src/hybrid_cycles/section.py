"""Scalar coordinate charts on planar impact surfaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class SectionChart:
    """Invertible map between a scalar ``s`` and states on S.

    ``inverse`` is expected to act as a projection for states near S, so
    that ``inverse(Delta(chart(s)))`` measures where the reset sends a
    section point in the same coordinate (used by the injectivity proxy).
    """

    chart: Callable[[float], np.ndarray]
    inverse: Callable[[np.ndarray], float]
    interval: Tuple[float, float] = (-np.inf, np.inf)
    derivative: Optional[Callable[[float], np.ndarray]] = None
    name: str = ""

    def __call__(self, s: float) -> np.ndarray:
        return np.asarray(self.chart(float(s)), dtype=float)

    def coordinate(self, x) -> float:
        return float(self.inverse(np.asarray(x, dtype=float)))

    def velocity(self, s: float, h: float = 1e-6) -> np.ndarray:
        """``d chart / ds``."""
        if self.derivative is not None:
            return np.asarray(self.derivative(float(s)), dtype=float)
        return (self(s + h) - self(s - h)) / (2 * h)

    def samples(self, n: int, interval: Optional[Tuple[float, float]] = None) -> np.ndarray:
        a, b = interval if interval is not None else self.interval
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ValueError("sampling needs a finite chart interval")
        return np.linspace(a, b, n)

    def is_closed(self, tol: float = 1e-9) -> bool:
        """Whether the chart interval wraps around to its starting point."""
        a, b = self.interval
        if not (np.isfinite(a) and np.isfinite(b)):
            return False
        return float(np.linalg.norm(self(a) - self(b))) <= tol * max(1.0, float(np.linalg.norm(self(a))))

    @classmethod
    def line(cls, point, direction, interval=(-np.inf, np.inf), name: str = "") -> "SectionChart":
        """Affine chart ``s -> point + s * direction`` with projection inverse."""
        p = np.asarray(point, dtype=float)
        d = np.asarray(direction, dtype=float)
        dd = float(d @ d)
        return cls(
            chart=lambda s: p + s * d,
            inverse=lambda x: float((np.asarray(x) - p) @ d) / dd,
            interval=interval,
            derivative=lambda s: d,
            name=name,
        )

    @classmethod
    def circle(cls, radius: float, center=(0.0, 0.0), interval=(0.0, 2 * np.pi), name: str = "") -> "SectionChart":
        """Angle chart on a circle; the inverse is the polar angle in ``[a, a + 2 pi)``."""
        c = np.asarray(center, dtype=float)
        a0 = interval[0]

        def inv(x):
            d = np.asarray(x) - c
            return a0 + float(np.mod(np.arctan2(d[1], d[0]) - a0, 2 * np.pi))

        return cls(
            chart=lambda s: c + radius * np.array([np.cos(s), np.sin(s)]),
            inverse=inv,
            interval=interval,
            derivative=lambda s: radius * np.array([-np.sin(s), np.cos(s)]),
            name=name,
        )
