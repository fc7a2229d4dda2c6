import structlog

logger = structlog.get_logger("augsched")


class AugschedError(Exception):
    """Base error class"""
    def __init__(
        self,
        detail: str,
        error_code: str = None,
        log_level: str = "error"
    ):
        super().__init__(detail)
        self.detail = detail
        self.error_code = error_code or "augsched_error"
        # Log the error
        log_method = getattr(logger, log_level)
        log_method(
            "augsched error",
            detail=detail,
            error_code=self.error_code
        )


class ShapeError(AugschedError):
    """Shape or dimension mismatch, including invalid network specs"""
    def __init__(self, detail: str = "Shape mismatch", error_code: str = "shape_error"):
        super().__init__(detail=detail, error_code=error_code)


class NumericalError(AugschedError):
    """Non-finite value in a tensor, gradient, loss or metric"""
    def __init__(self, detail: str = "Non-finite value", error_code: str = "numerical_error"):
        super().__init__(detail=detail, error_code=error_code)


class GraphError(AugschedError):
    """Loss not connected to the recorded computation"""
    def __init__(self, detail: str = "Loss is not connected to the graph", error_code: str = "graph_error"):
        super().__init__(detail=detail, error_code=error_code)


class CheckpointError(AugschedError):
    """Unreadable, corrupt or mismatched checkpoint"""
    def __init__(self, detail: str = "Checkpoint error", error_code: str = "checkpoint_error"):
        super().__init__(detail=detail, error_code=error_code)


class ConfigError(AugschedError):
    """Configuration parse or validation error"""
    def __init__(self, detail: str = "Configuration error", error_code: str = "config_error"):
        super().__init__(detail=detail, error_code=error_code)


class EnvError(AugschedError):
    """Invalid environment usage"""
    def __init__(self, detail: str = "Environment error", error_code: str = "env_error"):
        super().__init__(detail=detail, error_code=error_code)


class AugmentationError(AugschedError):
    """Invalid augmentation parameters or augmentation set"""
    def __init__(self, detail: str = "Augmentation error", error_code: str = "augmentation_error"):
        super().__init__(detail=detail, error_code=error_code)


class ScheduleError(AugschedError):
    """Invalid training schedule or bandit arm set"""
    def __init__(self, detail: str = "Schedule error", error_code: str = "schedule_error"):
        super().__init__(detail=detail, error_code=error_code)


class ReportError(AugschedError):
    """Report cannot be produced"""
    def __init__(self, detail: str = "Report error", error_code: str = "report_error"):
        super().__init__(detail=detail, error_code=error_code, log_level="warning")
