"""Exception hierarchy shared by all tgqa modules."""


class TgqaError(Exception):
    """Base class for all tgqa errors."""


class InvalidTableError(TgqaError):
    """A table violates its structural invariants (ragged rows, zero size, ...)."""


class InvalidSelectionError(TgqaError):
    """An answer selection references out-of-range or duplicate indexes."""


class InvalidExampleError(TgqaError):
    """A training/eval example cannot be used (e.g. empty target)."""


class ShapeError(TgqaError):
    """Tensor operation received incompatible shapes."""


class GraphStateError(TgqaError):
    """Misuse of the compute graph (repeated backward, non-scalar loss, ...)."""


class ConfigError(TgqaError):
    """A configuration file or value is invalid."""


class CheckpointError(TgqaError):
    """A checkpoint file is corrupt, truncated, or of the wrong version."""


class TrainingError(TgqaError):
    """The optimizer or schedule hit an invalid state (NaN gradients, ...)."""


class DataFormatError(TgqaError):
    """An input dataset file cannot be parsed."""


class EvaluationError(TgqaError):
    """Evaluation inputs are incomplete or inconsistent."""


class SessionError(TgqaError):
    """A server session operation failed (unknown session, bad request)."""
