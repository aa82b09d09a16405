class CrashSurrogateError(Exception):
    """Base class of every error raised on purpose by this package"""


class ShapeError(CrashSurrogateError, ValueError):
    pass


class ConfigError(CrashSurrogateError, ValueError):
    pass


class ContainerFormatError(CrashSurrogateError, ValueError):
    pass


class StabilityError(CrashSurrogateError, ValueError):
    pass


class NotFittedError(CrashSurrogateError, RuntimeError):
    pass


class RolloutDivergedError(CrashSurrogateError, RuntimeError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f'Non-finite state at rollout step {step}')


class TrainingDivergedError(CrashSurrogateError, RuntimeError):
    def __init__(self, epoch, step, message=None):
        self.epoch = epoch
        self.step = step
        super().__init__(message or f'Loss became non-finite in epoch {epoch}, optimisation step {step}')


class SplitError(CrashSurrogateError, RuntimeError):
    def __init__(self, message, best_report=None):
        self.best_report = best_report
        super().__init__(message)


class GradientError(CrashSurrogateError, RuntimeError):
    pass
