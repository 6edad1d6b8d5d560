"""Exception hierarchy shared by all graphot modules."""


class GraphotError(Exception):
    """Base class for every error raised by the package."""


class GraphError(GraphotError, ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class NonPositiveLength(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdgeId(GraphError):
    pass


class PointNotOnGraph(GraphError):
    pass


class ParameterOutOfRange(GraphotError, ValueError):
    pass


class NotProbability(GraphotError, ValueError):
    pass


class AsymmetricKernel(GraphotError, ValueError):
    pass


class EpsilonTooLarge(GraphotError, ValueError):
    pass


class UnbalancedMasses(GraphotError, ValueError):
    pass


class PlanMarginalMismatch(GraphotError, ValueError):
    pass


class NegativeTime(GraphotError, ValueError):
    pass


class AtomPresent(GraphotError, ValueError):
    pass


class GridMismatch(GraphotError, ValueError):
    pass


class NotConverged(GraphotError, RuntimeError):
    """Iterative solver hit its iteration cap.

    ``residuals`` holds the last monitored quantities so callers can decide
    whether the iterate is still usable.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = dict(residuals or {})


class InfiniteDissipation(GraphotError, ValueError):
    pass


class InfiniteEnergy(GraphotError, ValueError):
    pass


class SingularSystem(GraphotError, RuntimeError):
    pass


class NonPositiveDt(GraphotError, ValueError):
    pass


class GridMisaligned(GraphotError, ValueError):
    pass


class ConfigInvalid(GraphotError, ValueError):
    pass


class SubcommandUnknown(GraphotError, ValueError):
    pass
