"""Exception types raised by the solver components."""


class STHDGError(Exception):
    """Base class for all package errors."""


class MeshFormatError(STHDGError):
    """Mesh file or mesh data fails validation."""


class NonPositiveJacobianError(STHDGError):
    """A space-time element map has non-positive Jacobian determinant."""

    def __init__(self, element, point, value):
        self.element = int(element)
        self.point = tuple(float(c) for c in point)
        self.value = float(value)
        super().__init__(
            f"non-positive Jacobian determinant {self.value:.3e} in element "
            f"{self.element} at reference point {self.point}"
        )


class UnsupportedDegreeError(STHDGError):
    """Polynomial degree outside the supported range."""


class SingularMassError(STHDGError):
    """A local mass (Gram) matrix could not be factorized."""


class SingularLocalBlockError(STHDGError):
    """An element block A_uu is singular or numerically unusable."""


class SolveFailureError(STHDGError):
    """The condensed linear solve missed the residual tolerance."""

    def __init__(self, residual, tol):
        self.residual = float(residual)
        self.tol = float(tol)
        super().__init__(
            f"linear solve residual {self.residual:.3e} exceeds tolerance {self.tol:.3e}"
        )


class EigSolveFailureError(STHDGError):
    """A generalized eigenvalue problem for constant estimation failed."""


class UnknownProblemError(STHDGError):
    """Requested built-in problem id does not exist."""


class ConfigError(STHDGError):
    """Run configuration is invalid; the message names the offending field."""
