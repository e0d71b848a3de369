"""Exception types raised by carpet_dyn."""


class CarpetDynError(Exception):
    """Base class for all library errors."""


class DegreeError(CarpetDynError, ValueError):
    """A map has too small a degree for the requested operation."""


class NotCoprimeError(CarpetDynError, ValueError):
    pass


class RootFindingError(CarpetDynError):
    """Simultaneous iteration did not reach the residual tolerance."""

    def __init__(self, message, worst_residual):
        super().__init__(f"{message} (worst residual {worst_residual:.3e})")
        self.worst_residual = worst_residual


class NotCycleError(CarpetDynError, ValueError):
    pass


class NotSubhyperbolicError(CarpetDynError):
    """No attracting cycle could be found for the map."""


class TracingError(CarpetDynError):
    pass


class GeometryError(CarpetDynError, ValueError):
    pass


class ElevatorError(CarpetDynError):
    pass


class BasepointError(CarpetDynError):
    """Zero or several candidate basepoints inside a component's pixels."""


class PreconditionError(CarpetDynError, ValueError):
    pass
