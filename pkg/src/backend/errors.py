class IntentionNavError(Exception):
    """Base class for every error raised by this package."""


class WorldGenerationError(IntentionNavError, ValueError):
    pass


class NodeNotFoundError(IntentionNavError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NoPathError(IntentionNavError, ValueError):
    pass


class IllegalMoveError(IntentionNavError, ValueError):
    pass


class FrequencyTableError(IntentionNavError, ValueError):
    pass


class TaskSamplingError(IntentionNavError, RuntimeError):
    pass


class SplitError(IntentionNavError, ValueError):
    pass


class UnknownTokenError(IntentionNavError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EpisodeTerminatedError(IntentionNavError, RuntimeError):
    pass


class UnavailableActionError(IntentionNavError, ValueError):
    pass


class StackError(IntentionNavError, ValueError):
    pass


class NoAvailableActionError(IntentionNavError, ValueError):
    pass


class TrainingDivergedError(IntentionNavError, RuntimeError):
    def __init__(self, message: str, iteration: int = -1, offending=()):
        super().__init__(message)
        self.iteration = iteration
        self.offending = list(offending)


class CheckpointError(IntentionNavError, RuntimeError):
    pass


class SchemaError(IntentionNavError, ValueError):
    pass
