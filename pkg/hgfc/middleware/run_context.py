"""
Run context for trials
"""
import time
import uuid
from typing import Any, Callable, TypeVar

import structlog

logger = structlog.get_logger()

T = TypeVar("T")


def new_run_id() -> str:
    return str(uuid.uuid4())


def run_with_context(
    run_id: str,
    instance_id: str,
    trial: int,
    handler: Callable[..., T],
    *args: Any,
    **kwargs: Any
) -> T:
    """Bind run_id, instance_id and trial into every log line of one trial"""
    start_time = time.time()

    with structlog.contextvars.bound_contextvars(run_id=run_id, instance_id=instance_id, trial=trial):
        try:
            result = handler(*args, **kwargs)
            duration = time.time() - start_time

            logger.info(
                "trial_completed",
                duration_ms=round(duration * 1000, 2)
            )

            return result
        except Exception as e:
            duration = time.time() - start_time
            logger.error(
                "trial_error",
                error=str(e),
                duration_ms=round(duration * 1000, 2),
                exc_info=True
            )
            raise
