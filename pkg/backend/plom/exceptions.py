"""Error hierarchy shared by the services and the CLI"""

from typing import Any

# Exit codes
EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NUMERICAL_ERROR = 2


class PlomError(Exception):
    """Base class for every error the library raises on purpose"""

    exit_code = EXIT_NUMERICAL_ERROR
    kind = "plom-error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details
        self.stage: str | None = None

    def to_record(self, stage: str | None = None) -> dict[str, Any]:
        """Machine-readable error record written next to the run artifacts"""
        return {
            "kind": self.kind,
            "message": self.message,
            "exit_code": self.exit_code,
            "stage": stage or self.stage,
            "details": {key: str(value) for key, value in sorted(self.details.items())},
        }


class InputError(PlomError):
    """Unreadable input, malformed matrix or invalid configuration"""

    exit_code = EXIT_INPUT_ERROR
    kind = "input-error"


class ShapeMismatch(InputError):
    kind = "shape-mismatch"


class DimensionMismatch(InputError):
    kind = "dimension-mismatch"


class NumericalError(PlomError):
    """A computation could not produce a meaningful result"""

    exit_code = EXIT_NUMERICAL_ERROR
    kind = "numerical-failure"


class DegenerateData(NumericalError):
    kind = "degenerate-data"


class RankDeficient(NumericalError):
    kind = "rank-deficient"


class NonFinite(NumericalError):
    kind = "non-finite"


class DegenerateSigma(NumericalError):
    kind = "degenerate-sigma"


class SingularGram(NumericalError):
    kind = "singular-gram"


class SingularCovariance(NumericalError):
    kind = "singular-covariance"


class Diverged(NumericalError):
    kind = "diverged"


class NonPositiveDenominator(NumericalError):
    kind = "non-positive-denominator"


class DegenerateEquation(NumericalError):
    kind = "degenerate-equation"


class EmptyAdmissibleSet(NumericalError):
    kind = "empty-admissible-set"


class NoEpsilonFound(NumericalError):
    kind = "no-epsilon-found"


class InternalError(PlomError):
    """Wraps an unexpected exception so the CLI can still leave an error record"""

    kind = "internal-error"
