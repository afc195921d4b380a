"""Exception hierarchy shared by all modules."""


class IsochronError(Exception):
    """Base class for numerical failures raised by the package."""


class DomainError(IsochronError, ValueError):
    pass


class MultipleEquilibria(IsochronError):
    def __init__(self, roots, message=None):
        self.roots = list(roots)
        super().__init__(message or f"found {len(self.roots)} equilibria: {self.roots}")


class NoTurningPoint(IsochronError):
    pass


class SingularQuadratureFailure(IsochronError):
    pass


class NotACenter(IsochronError):
    pass


class NotACenteredWell(IsochronError):
    pass


class BoundViolation(IsochronError):
    pass


class InsufficientSamples(IsochronError):
    pass


class DomainExceeded(IsochronError):
    pass


class StepCollapse(IsochronError):
    pass


class NotAttractiveHere(IsochronError):
    pass


class CollisionApproach(IsochronError):
    pass


class StepFailure(IsochronError):
    pass


class DomainEscape(IsochronError):
    pass
