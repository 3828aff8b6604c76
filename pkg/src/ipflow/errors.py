"""Exception hierarchy for the solver library."""


class IpflowError(Exception):
    """Base class for all library errors."""


class DegenerateDomain(IpflowError):
    """Coordinate domain is empty, a singleton, or the whole real line."""


class OutOfDomain(IpflowError):
    """Barrier evaluated outside the open interval (or inside the boundary guard)."""


class SingularSystem(IpflowError):
    """Normal-equation matrix is rank deficient beyond tolerance."""


class NoConvergence(IpflowError):
    """Iterative routine exceeded its iteration cap."""


class InvalidShape(IpflowError):
    """Dimension mismatch or out-of-range size parameter."""


class StepLeftDomain(IpflowError):
    """A proposed x-step would exit the open feasible box."""


class CenteringStalled(IpflowError):
    """Centrality failed to decrease over repeated centering calls."""


class RepairHypothesisViolated(IpflowError):
    """Feasibility repair called with infeasibility above its admissible level."""


class InfeasibleStart(IpflowError):
    """Supplied start point is not interior or violates the equality constraints."""


class IterationBudgetExceeded(IpflowError):
    """Solve aborted after reaching the configured iteration cap."""


class PaperInvariantViolation(IpflowError):
    """A tracked invariant failed during a strict paper-mode run."""


class Disconnected(IpflowError):
    """Flow network is not connected."""


class MalformedNetwork(IpflowError):
    """Flow network violates a structural requirement (self-loop, bad capacity...)."""


class BadTarget(IpflowError):
    """Requested flow target outside the representable range."""


class TargetInfeasible(IpflowError):
    """Requested flow value exceeds the maximum deliverable flow."""


class RoundingFailed(IpflowError):
    """Integral rounding could not restore flow conservation."""


class MinEps(IpflowError):
    """Requested tolerance too small for double precision in practical mode."""


class ParseError(IpflowError):
    """Input file is malformed; carries a line number when available."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFeature(ParseError):
    """Input uses a documented-but-unsupported feature (e.g. nonzero lower arcs)."""


class ShapeMismatch(ParseError):
    """Array lengths in an input file disagree with the declared sizes."""
