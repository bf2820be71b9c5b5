"""Exception hierarchy shared by all modules."""


class BilliardError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(BilliardError):
    pass


class NotOnSurface(GeometryError):
    pass


class DegenerateGradient(GeometryError):
    pass


class NotStrictlyConvex(GeometryError):
    pass


class GrazingRay(GeometryError):
    """Ray direction is (numerically) tangent to the surface."""

    def __init__(self, message, bounce=None):
        super().__init__(message)
        self.bounce = bounce


class NoConvergence(BilliardError):
    def __init__(self, message, bounce=None):
        super().__init__(message)
        self.bounce = bounce


class OutOfChart(GeometryError):
    pass


class AmbientDimension(BilliardError):
    pass


class InvalidConfiguration(BilliardError):
    pass


class SeedCollapsed(BilliardError):
    """Adjacent bounce points merged while iterating from a seed."""


class NotCritical(BilliardError):
    pass


class NonUnitTwist(BilliardError):
    pass


class EigenFailure(BilliardError):
    pass


class TransferSingular(BilliardError):
    pass


class DomainError(BilliardError):
    pass


class AdjacencyViolation(BilliardError):
    def __init__(self, message, junction=None):
        super().__init__(message)
        self.junction = junction
