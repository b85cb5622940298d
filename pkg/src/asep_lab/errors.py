"""Exception hierarchy shared by all modules."""


class AsepLabError(Exception):
    pass


class DomainError(AsepLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularKernelError(AsepLabError):
    pass


class NumericalDegeneracyError(AsepLabError):
    """An LU pivot collapsed below the working threshold."""


class ConvergenceError(AsepLabError):
    """Quadrature did not reach tolerance before the node cap."""


class ConsistencyError(AsepLabError):
    """A quantity that must be real came back with a large imaginary part."""


class UnsupportedError(AsepLabError):
    pass


class PrecisionError(AsepLabError):
    pass


class DegeneratePointError(AsepLabError):
    """A sampled rational point hits a zero denominator; resample."""


class BoundaryViolationError(AsepLabError):
    """A particle reached the edge of the truncated simulation window."""


class RangeError(AsepLabError, ValueError):
    pass
