"""Exception hierarchy shared by every module of the package."""


class HybridCyclesError(Exception):
    """Base class for all errors raised by hybrid_cycles."""

    #: process exit code used by the command line front end
    exit_code = 3


class IntegrationError(HybridCyclesError):
    """The continuous integrator could not advance the state."""


class StepLimitExceeded(IntegrationError):
    pass


class StepUnderflow(IntegrationError):
    """Step size fell below ``h_min``; usually stiffness or a singularity."""


class BlowUp(IntegrationError):
    """A non-finite state was produced."""


class OutOfSegment(HybridCyclesError, ValueError):
    pass


class GuardError(HybridCyclesError):
    pass


class RefinementFailure(GuardError):
    pass


class DegenerateGuard(GuardError):
    """Vanishing guard gradient, or a zero vector where a direction is needed."""

    exit_code = 4


class ZenoSuspected(HybridCyclesError):
    exit_code = 4


class NoImpact(HybridCyclesError):
    """The flow did not reach the impact surface within the horizon."""


class LeftDomain(HybridCyclesError):
    pass


class NotAFixedPoint(HybridCyclesError):
    def __init__(self, residual, message=None):
        self.residual = residual
        super().__init__(message or f"not a fixed point: |P(s) - s| = {residual:.3e}")


class DegenerateAngle(HybridCyclesError):
    """The flow is (numerically) tangent to S or to Delta(S)."""

    exit_code = 4


class ConvergenceError(HybridCyclesError):
    pass


class SnapError(HybridCyclesError):
    """An image does not land within half the separation of any set member."""

    exit_code = 4


class ConfigError(HybridCyclesError, ValueError):
    exit_code = 2


class FixedPointApproach(HybridCyclesError):
    """The orbit converges to an equilibrium of f, so no cycle is claimed."""


class Unbounded(HybridCyclesError):
    """A trajectory escaped every bounded set within the requested time."""
