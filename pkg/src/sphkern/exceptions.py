"""Exception hierarchy shared by all sphkern modules."""


class SphKernError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SphKernError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NotApplicableError(SphKernError, ValueError):
    """A certificate or construction was asked for on a scheme it does not cover."""


class DivergentTailError(DomainError):
    """A declared tail does not give an absolutely summable expansion."""


class InsufficientQuadratureError(SphKernError, ValueError):
    """The quadrature rule is not exact enough for the requested integral."""


class DuplicatePointsError(SphKernError, ValueError):
    """Two data sites coincide (up to the distinctness threshold)."""

    def __init__(self, i, j, distance):
        self.pair = (i, j)
        self.distance = distance
        super().__init__(
            f"points {i} and {j} are not distinct (geodesic distance {distance:.3e})"
        )


class SingularGramError(SphKernError, ArithmeticError):
    """The Gram matrix is numerically singular; carries a null-vector witness."""

    def __init__(self, lambda_min, witness):
        self.lambda_min = lambda_min
        self.witness = witness
        super().__init__(
            f"Gram matrix is numerically singular (lambda_min={lambda_min:.3e})"
        )


class SpecFileError(SphKernError, ValueError):
    """A kernel spec or points file failed validation."""
