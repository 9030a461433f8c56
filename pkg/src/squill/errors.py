"""Exception types shared across the engine."""


class SquillError(Exception):
    """Base class for all engine errors."""


class CorpusError(SquillError):
    """Corpus or overlay file failed to parse or validate."""


class SchemaError(SquillError):
    """Database schema violates a structural invariant."""


class TransportError(SquillError):
    """A remote call failed after exhausting retries."""

    def __init__(self, message, attempts=0):
        super().__init__(message)
        self.attempts = attempts


class ContractError(SquillError):
    """A remote service returned data violating the agreed shape."""


class DegenerateVectorError(ValueError, SquillError):
    """A zero vector cannot be normalized."""


class FormatError(SquillError):
    """An on-disk artifact has a bad magic, version, or checksum."""


class GenerationError(SquillError):
    """SQL generation failed."""


class ScriptExhaustedError(GenerationError):
    """A scripted generator ran out of responses."""


class TrainingError(SquillError):
    """Training diverged or hit a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GoldExecutionError(SquillError):
    """The ground-truth SQL for an instance does not execute."""
