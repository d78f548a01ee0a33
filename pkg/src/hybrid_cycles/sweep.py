"""Rimless-wheel parameter sweeps over (alpha, delta) grids."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, HybridCyclesError
from .hybrid import HybridOptions, hybrid_flow
from .models import RimlessWheelParams, existence_inequality, make_rimless_wheel, rimless_fixed_speed
from .poincare import derivative_planar, find_fixed_point

INEQUALITY = "inequality"
SIMULATE = "simulate"
TASKS = (INEQUALITY, SIMULATE)

COLUMNS = ["alpha", "delta", "lhs", "rhs", "holds", "classification", "abs_dP"]


@dataclass(frozen=True)
class Axis:
    """A grid axis of ``count`` values from ``lo`` to ``hi``.

    ``lo`` may name the other axis, making this axis's range depend on the
    other coordinate (e.g. ``delta`` in ``(alpha, pi/4)``).  Open ends are
    excluded by spacing ``count`` interior points.
    """

    name: str
    lo: Union[float, str]
    hi: float
    count: int
    open_lo: bool = False
    open_hi: bool = False

    def __post_init__(self):
        if self.count < 2:
            raise ConfigError(f"axis {self.name!r}: count must be at least 2")
        if not math.isfinite(self.hi) or (not isinstance(self.lo, str) and not math.isfinite(self.lo)):
            raise ConfigError(f"axis {self.name!r}: range must be finite")

    def values(self, lo: Optional[float] = None) -> np.ndarray:
        lo = self.lo if lo is None else lo
        n = self.count + int(self.open_lo) + int(self.open_hi)
        v = np.linspace(lo, self.hi, n)
        return v[int(self.open_lo) : n - int(self.open_hi)]


@dataclass(frozen=True)
class SweepSpec:
    alpha: Axis
    delta: Axis
    task: str = INEQUALITY
    zeta: float = 9.8
    workers: int = 1
    rel_tol: float = 1e-10
    n_impacts: int = 30

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if isinstance(self.alpha.lo, str):
            raise ConfigError("the alpha axis cannot depend on delta")
        if isinstance(self.delta.lo, str) and self.delta.lo != "alpha":
            raise ConfigError("delta.lo may only refer to 'alpha'")

    def cells(self) -> List[Tuple[float, float]]:
        """Grid points in deterministic order: alpha outer, delta inner."""
        out = []
        for a in self.alpha.values():
            lo = a if self.delta.lo == "alpha" else None
            out.extend((float(a), float(d)) for d in self.delta.values(lo))
        return out


@dataclass
class CellResult:
    alpha: float
    delta: float
    lhs: float
    rhs: float
    holds: bool
    classification: str = ""
    abs_dP: Optional[float] = None

    def row(self) -> List[str]:
        return [
            _fmt(self.alpha),
            _fmt(self.delta),
            _fmt(self.lhs),
            _fmt(self.rhs),
            "true" if self.holds else "false",
            self.classification,
            "" if self.abs_dP is None else _fmt(self.abs_dP),
        ]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def classify_gait(p: RimlessWheelParams, opts: HybridOptions, n_impacts: int = 30, leg_horizon: float = 50.0):
    """Simulate-and-classify one parameter point.

    Starts at twice the period-one speed, lets ``n_impacts`` impacts pass,
    then solves for the fixed point and evaluates ``|P'|``.  Returns
    ``(label, |P'| or None)`` with label ``stable period-1``,
    ``unstable period-1`` or ``no-gait``.
    """
    sys = make_rimless_wheel(p)
    chart = sys.extras["chart"]
    v0 = 2.0 * rimless_fixed_speed(p)
    x0 = np.array([p.delta - p.alpha, v0])
    traj = hybrid_flow(sys, x0, leg_horizon * (n_impacts + 1), opts, stop_after=n_impacts, record=False)
    if len(traj.impacts) < n_impacts:
        return "no-gait", None
    s_guess = chart.coordinate(traj.impacts[-1].x_minus)
    try:
        s_star = find_fixed_point(sys, chart, s_guess, opts, tol=1e-10, horizon=leg_horizon)
        rep = derivative_planar(sys, chart, s_star, opts, with_fd=False, horizon=leg_horizon)
    except HybridCyclesError:
        return "no-gait", None
    label = "stable period-1" if rep.product < 1 else "unstable period-1"
    return label, rep.product


def _run_cell(args) -> CellResult:
    alpha, delta, task, zeta, rel_tol, n_impacts = args
    p = RimlessWheelParams(delta=delta, alpha=alpha, zeta=zeta)
    lhs, rhs, holds = existence_inequality(p)
    res = CellResult(alpha, delta, lhs, rhs, holds)
    if task == SIMULATE:
        opts = HybridOptions().with_tolerance(rel_tol)
        res.classification, res.abs_dP = classify_gait(p, opts, n_impacts)
    return res


def run_sweep(spec: SweepSpec) -> List[CellResult]:
    """Evaluate every cell; results are returned in grid order for any worker count."""
    args = [(a, d, spec.task, spec.zeta, spec.rel_tol, spec.n_impacts) for a, d in spec.cells()]
    if spec.workers == 1:
        return [_run_cell(a) for a in args]
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        return list(pool.map(_run_cell, args, chunksize=max(1, len(args) // (4 * spec.workers))))


def sweep_csv(results: Sequence[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()


def write_sweep_csv(results: Sequence[CellResult], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(sweep_csv(results))


def spec_from_dict(d: dict) -> SweepSpec:
    try:
        axes = d["axes"]
        alpha = Axis("alpha", **axes["alpha"])
        delta = Axis("delta", **axes["delta"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad sweep axes: {exc}") from exc
    rest = {k: d[k] for k in ("task", "zeta", "workers", "rel_tol", "n_impacts") if k in d}
    return SweepSpec(alpha, delta, **rest)
