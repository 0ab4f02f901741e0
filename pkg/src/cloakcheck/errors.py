"""Exception hierarchy shared across the package."""


class CloakCheckError(Exception):
    """Base class for all package errors."""


class NonInvertibleMetric(CloakCheckError, ValueError):
    pass


class SingularConductivity(CloakCheckError, ValueError):
    pass


class CoordinateSingularity(CloakCheckError, ValueError):
    pass


class DimensionError(CloakCheckError, ValueError):
    pass


class OutsideDomain(CloakCheckError, ValueError):
    pass


class OutsideCodomain(CloakCheckError, ValueError):
    pass


class DegenerateJacobian(CloakCheckError, ValueError):
    pass


class InvalidEpsilon(CloakCheckError, ValueError):
    pass


class NoBoundedBranch(CloakCheckError, ArithmeticError):
    pass


class ToleranceNotMet(CloakCheckError, ArithmeticError):
    pass


class DegreeMismatch(CloakCheckError, ValueError):
    pass


class NonPDTensor(CloakCheckError, ValueError):
    pass


class SingularSystem(CloakCheckError, ArithmeticError):
    pass


class NonConvergence(CloakCheckError, RuntimeError):
    pass


class ConfigInvalid(CloakCheckError, ValueError):
    """Raised when a run configuration fails schema validation.

    ``path`` names the offending field, e.g. ``parameters.epsilon[0]``.
    """

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
