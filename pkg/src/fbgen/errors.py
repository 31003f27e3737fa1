"""Exception types shared across the package."""


class FbgenError(Exception):
    """Base class for all package-specific errors."""


class MalformedStoryline(FbgenError):
    """A storyline string or token sequence violates the serialization grammar."""


class NoEventFound(FbgenError):
    """No verb candidate was found in a sentence."""


class SchemaError(FbgenError):
    """A JSONL record does not conform to its schema."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyVotes(FbgenError):
    """Consensus was requested over an empty vote list."""


class LengthMismatch(FbgenError):
    """Two aligned sequences have different lengths."""


class EmptyCorpus(FbgenError):
    """An operation requiring a non-empty corpus received nothing."""


class EmptyInput(FbgenError):
    """An operation requiring non-empty input received nothing."""


class SequenceTooLong(FbgenError):
    """A tokenized sequence exceeds the model's configured max length."""


class DivergedLoss(FbgenError):
    """Training produced a non-finite loss."""


class NonFiniteReward(FbgenError):
    """A policy-gradient step received a non-finite reward."""


class ZeroVariance(FbgenError):
    """Pearson correlation is undefined for a constant sequence."""


class RankDeficient(FbgenError):
    """The regression design matrix does not have full column rank."""


class NoAfterPrompts(FbgenError):
    """Prompt accuracy is undefined when no AFTER prompts are present."""


class NoScorer(FbgenError):
    """Generated-text perplexity was requested without a scorer."""


class CheckpointError(FbgenError):
    """A checkpoint file is missing, corrupt, or incompatible."""
