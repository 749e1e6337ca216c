"""
Error handling utilities for the evgraph engine.
Maps failures onto CLI exit codes and keeps non-fatal anomalies countable.
"""

import functools
from typing import Callable, Optional

import config
from logger import get_logger

logger = get_logger(__name__)


class EvGraphError(Exception):
    """Base exception; exit_code is what the CLI returns for it"""
    exit_code = config.EXIT_UNEXPECTED


class InputError(EvGraphError):
    """Custom exception for malformed or out-of-range input data"""
    exit_code = config.EXIT_INPUT_ERROR


class EventFormatError(InputError):
    """Malformed event record; byte_offset locates it in the source"""

    def __init__(self, message: str, byte_offset: Optional[int] = None):
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class TimestampRegressionError(InputError):
    """Timestamp went backwards; record_index is the offending record"""

    def __init__(self, message: str, record_index: Optional[int] = None):
        if record_index is not None:
            message = f"{message} (record {record_index})"
        super().__init__(message)
        self.record_index = record_index


class EventBoundsError(InputError):
    """Event coordinate outside the sensor resolution"""
    pass


class ModelError(EvGraphError):
    """Custom exception for model, config and weight problems"""
    exit_code = config.EXIT_MODEL_ERROR


class ModelConfigError(ModelError):
    pass


class WeightFileError(ModelError):
    pass


class DimensionMismatchError(ModelError):
    pass


class SliceMismatchError(ModelError):
    pass


class PoolingError(ModelError):
    pass


class PlanningError(EvGraphError):
    """No multiplier count satisfies the per-layer throughput bound"""
    exit_code = config.EXIT_PLANNING_ERROR


def exit_code_for(error: BaseException) -> int:
    """Exit code for an exception (1 for anything outside the hierarchy)"""
    if isinstance(error, EvGraphError):
        return error.exit_code
    return config.EXIT_UNEXPECTED


def handle_cli_errors(operation_name: str):
    """
    Decorator turning exceptions of a CLI command into logged errors and exit codes.

    Args:
        operation_name: Name of the operation for error messages

    Usage:
        @handle_cli_errors("convert events")
        def cmd_convert(args):
            ...
            return config.EXIT_OK
    """
    def decorator(func: Callable[..., int]) -> Callable[..., int]:
        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> int:
            try:
                result = func(*args, **kwargs)
                return config.EXIT_OK if result is None else result
            except EvGraphError as e:
                logger.error(f"Failed to {operation_name}: {e}")
                logger.debug("Traceback", exc_info=True)
                return e.exit_code
            except OSError as e:
                logger.error(f"I/O error while trying to {operation_name}: {e}")
                return config.EXIT_INPUT_ERROR
            except Exception as e:
                logger.error(f"Unexpected error in {operation_name}: {e}", exc_info=True)
                return config.EXIT_UNEXPECTED
        return wrapper
    return decorator
