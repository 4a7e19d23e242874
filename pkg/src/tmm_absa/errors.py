"""Exception hierarchy shared across the package.

Two families matter to the CLI: validation failures (bad data, bad
shapes, bad config) exit with code 1, numerical failures (divergence,
non-finite values, failed gradient checks) exit with code 2.
"""


class TmmError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(TmmError):
    """Bad input data, shapes, or configuration (CLI exit code 1)."""


class NumericalError(TmmError):
    """Numerical breakdown during computation (CLI exit code 2)."""


# --- numerics ---------------------------------------------------------------

class ShapeMismatch(ValidationError):
    pass


class IdOutOfRange(ValidationError):
    pass


class NonFiniteInput(NumericalError):
    pass


class NonFiniteGradient(NumericalError):
    pass


class NonDeterministicFunction(NumericalError):
    pass


# --- tokenizer / encoding ---------------------------------------------------

class EmptyCorpus(ValidationError):
    pass


class OverlappingSpans(ValidationError):
    pass


class SpanOutOfRange(ValidationError):
    pass


class UnknownCategory(ValidationError):
    pass


class DuplicateCategory(ValidationError):
    pass


class AspectIndexOutOfRange(ValidationError):
    pass


class SequenceTooLong(ValidationError):
    pass


# --- model / heads ----------------------------------------------------------

class AnchorOutOfRange(ValidationError):
    pass


class LayerOutOfRange(ValidationError):
    pass


class EmptyBatch(ValidationError):
    pass


# --- data -------------------------------------------------------------------

class ParseError(ValidationError):
    pass


class SpanMismatch(ValidationError):
    pass


class InfeasibleSpec(ValidationError):
    pass


class UnlabeledAspect(ValidationError):
    pass


class TaskMismatch(ValidationError):
    pass


# --- metrics ----------------------------------------------------------------

class LengthMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


# --- training / cli ---------------------------------------------------------

class ConfigError(ValidationError):
    pass


class DivergenceDetected(NumericalError):
    pass


class ProbabilityUnderflow(UserWarning):
    """Emitted when a predicted probability had to be clipped before log."""
