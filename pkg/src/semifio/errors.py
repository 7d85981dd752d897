"""Exception hierarchy shared by all modules."""


class SemifioError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(SemifioError, ValueError):
    """Non-finite entries, bad shapes or out-of-range parameters."""


class InvalidSpreadingError(InvalidInputError):
    """Spreading matrix is not complex symmetric with positive definite real part."""

    def __init__(self, message="admissible spreading violated"):
        super().__init__(message)


class NumericalDegeneracyError(SemifioError, ArithmeticError):
    """A matrix that should be well conditioned is (numerically) singular."""


class StepTooLargeError(SemifioError):
    """Determinant argument jumped by pi/2 or more within one accepted step."""


class IntegrationAccuracyError(SemifioError):
    """Energy or symplectic drift beyond the configured tolerance."""


class GridMismatchError(InvalidInputError):
    """Two wavefunctions or a lattice and a quadrature spec do not line up."""


class BoxTooSmallError(SemifioError):
    """Wavefunction mass reached the edge of the periodic box."""


class ConfigurationError(SemifioError, ValueError):
    """Experiment configuration is malformed or violates a precondition."""
