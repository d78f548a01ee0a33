"""Simulation and stability analysis of limit cycles in hybrid dynamical systems.

A hybrid system flows along ``x' = f(x)`` until it reaches the impact
surface ``S = {H = 0}``, where the reset ``Delta`` is applied.  The package
provides the integrator and event machinery (``ode``, ``guard``,
``hybrid``), the Poincare return map with its factorized derivative
(``poincare``), limit-set classifiers (``limits``), built-in models
(``models``) and a command-line front end (``cli``).
"""

from .errors import HybridCyclesError
from .guard import EITHER, FALLING, RISING, Guard
from .hybrid import (
    HybridOptions,
    HybridSystem,
    HybridTrajectory,
    ImpactEvent,
    Reset,
    check_hypotheses,
    hybrid_flow,
    impact_sequence,
)
from .limits import (
    CycleResult,
    DiscreteMap,
    FiniteImpactSet,
    classify_interval_map,
    detect_cycle_finite,
    hybrid_1d_run,
    omega_estimate,
)
from .ode import IntegratorOptions, VectorField, divergence_integral, flow, flow_map
from .poincare import (
    StabilityReport,
    derivative_multi,
    derivative_planar,
    determinant_test,
    fd_derivative,
    find_fixed_point,
    return_map,
    time_to_impact,
)
from .section import SectionChart

__version__ = "0.1.0"
