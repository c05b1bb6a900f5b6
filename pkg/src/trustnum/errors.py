"""Exception hierarchy shared across the package."""


class TrustNumError(Exception):
    pass


class TopologyError(TrustNumError, ValueError):
    """Malformed network, flow or path."""


class NonContiguous(TopologyError):
    pass


class LoopDetected(TopologyError):
    pass


class UnknownLink(TopologyError):
    pass


class EndpointMismatch(TopologyError):
    pass


class LinkNotOnPath(TopologyError):
    pass


class ValueOutOfRange(TrustNumError, ValueError):
    pass


class TooLarge(TrustNumError):
    """Instance exceeds the size an exhaustive routine accepts."""


class NonPositiveRate(TrustNumError, ValueError):
    pass


class Infeasible(TrustNumError):
    pass


class NoFeasiblePoint(TrustNumError):
    pass


class NoConvergence(TrustNumError):
    """Solver hit its iteration budget.

    The last iterate is attached as ``solution`` so callers can still
    inspect or record it.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class ScenarioError(TrustNumError):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class IoError(TrustNumError, OSError):
    """Output could not be written."""
