"""Exception hierarchy.

Two families: ``ValidationError`` for bad inputs (CLI exit code 2) and
``NumericalError`` for failures of a numerical procedure (exit code 3).
"""


class GraphHeatError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 3

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self)}


class ValidationError(GraphHeatError):
    exit_code = 2


class NumericalError(GraphHeatError):
    exit_code = 3


# metric_graph
class GraphSpecError(ValidationError):
    pass


class NonPositiveLength(ValidationError):
    pass


class DisconnectedGraph(ValidationError):
    pass


class IllegalConditionPlacement(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


# spectral
class PoleProximity(NumericalError):
    pass


class UnsupportedKind(ValidationError):
    pass


class RootIsolationFailure(NumericalError):
    pass


class MultiplicityDetected(ValidationError):
    pass


class MeshTooCoarse(ValidationError):
    pass


class EigensolverFailure(NumericalError):
    pass


class InsufficientSpectrum(ValidationError):
    pass


class TruncationInsufficient(ValidationError):
    pass


# control_op
class IndexOutOfRange(ValidationError):
    pass


class FirstCouplingZero(NumericalError):
    pass


# moment
class DegenerateSpectrum(ValidationError):
    pass


class IllConditioned(NumericalError):
    pass


class ResidualTooLarge(NumericalError):
    pass


class ZeroCoupling(NumericalError):
    pass


# simulate
class StepTooLarge(ValidationError):
    pass


class NonFiniteState(NumericalError):
    pass


# steer
class OutsideBasin(ValidationError):
    pass


class Diverged(NumericalError):
    pass


class WaitTimeExceeded(NumericalError):
    pass


# filtering
class UnequalLengths(ValidationError):
    pass


class NotInvariant(ValidationError):
    pass
