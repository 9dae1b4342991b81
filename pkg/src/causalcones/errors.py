"""Exception hierarchy for the causalcones package."""


class CausalConesError(Exception):
    """Base class for all package-specific errors."""


class LabelCollision(CausalConesError):
    """Two operands share a system label that must be distinct."""


class UnknownSystem(CausalConesError):
    """A referenced system label is not part of the operator's space."""


class DimensionMismatch(CausalConesError):
    """Dimensions of source and target systems are incompatible."""


class SpaceMismatch(CausalConesError):
    """Two operators (or an operator and a spec) live on different spaces."""


class NotNormalized(CausalConesError):
    """An operator does not carry the required trace normalization."""


class OverlappingBlocks(CausalConesError):
    """Blocks of a causal-order specification are not pairwise disjoint."""


class UnsupportedDimension(CausalConesError):
    """An operation requires dimensions this routine does not support."""


class WrongPartyCount(CausalConesError):
    """A cone constructor received a scenario with the wrong number of parties."""


class NoMatchingScenario(CausalConesError):
    """No restricted-scenario cone matches the given trivial-dimension pattern."""


class RecursionDepth(CausalConesError):
    """The requested recursive cone construction exceeds the configured depth cap."""


class FactorialBlowup(CausalConesError):
    """The requested cone has too many permutation blocks for the configured cap."""


class SolverFailure(CausalConesError):
    """The conic solver failed to reach the requested accuracy."""


class NumericalBreakdown(SolverFailure):
    """A matrix factorization inside the solver failed."""


class NonCertifying(SolverFailure):
    """Dual residuals are too large for the extracted witness to certify anything."""


class InvalidProcess(CausalConesError):
    """The input operator is not a valid normalized process matrix."""


class BadParams(CausalConesError):
    """Malformed parameters passed to a model constructor."""
