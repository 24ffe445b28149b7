"""Exception hierarchy shared by every module of the package."""


class CollabQoEError(Exception):
    """Base class for all errors raised by collabqoe."""


class ConfigurationError(CollabQoEError, ValueError):
    pass


class ShapeError(CollabQoEError, ValueError):
    pass


class DataError(CollabQoEError, ValueError):
    pass


class SchemaError(DataError):
    pass


class PartitionError(DataError):
    pass


class UndefinedMetricError(CollabQoEError, ValueError):
    """Raised when a metric needs both classes but only one is present."""


class DivergenceError(CollabQoEError, ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class UnsupportedModelError(CollabQoEError, TypeError):
    pass


class EncodeError(CollabQoEError, ValueError):
    pass


class FormatError(CollabQoEError, ValueError):
    pass


class LengthError(FormatError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"payload length mismatch: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class PayloadValueError(FormatError):
    pass


class TransportError(CollabQoEError, RuntimeError):
    pass


class WorkerLostError(CollabQoEError, RuntimeError):
    def __init__(self, worker: int, reason: str = ""):
        msg = f"worker {worker} lost"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.worker = worker
