"""
Trial pool
Runs independent trials on worker processes and merges them by index
"""
import asyncio
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import structlog

from hgfc.config import settings
from hgfc.middleware.run_context import new_run_id, run_with_context

logger = structlog.get_logger()


def _now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class TrialFailure:
    """Failure shipped back from a worker process as plain data"""

    code: str
    message: str

    @classmethod
    def of(cls, error: BaseException) -> "TrialFailure":
        return cls(code=getattr(error, "code", "internal_error"), message=str(error))


class Trial:
    """Represents one queued trial"""

    def __init__(self, index: int, instance_id: str, kind: str, args: Dict[str, Any]):
        self.index = index
        self.instance_id = instance_id
        self.kind = kind
        self.args = args
        self.status = "queued"  # queued, running, succeeded, failed
        self.output: Any = None
        self.error: Optional[str] = None
        self.error_code: Optional[str] = None
        self.created_at = _now()
        self.started_at: Optional[datetime] = None
        self.completed_at: Optional[datetime] = None


class TrialPool:
    """
    Worker pool for trials

    One worker runs trials inline; more workers use a process pool driven
    from asyncio. Handlers must be module-level functions so they pickle.
    """

    def __init__(self, workers: Optional[int] = None, run_id: Optional[str] = None):
        self.workers = max(1, workers if workers is not None else settings.workers)
        self.run_id = run_id or new_run_id()
        self.handlers: Dict[str, Callable[..., Any]] = {}
        self.trials: List[Trial] = []

    def register_handler(self, kind: str, handler: Callable[..., Any]) -> None:
        """Register a handler for a trial kind"""
        self.handlers[kind] = handler
        logger.info("trial_handler_registered", kind=kind)

    def _handler(self, kind: str) -> Callable[..., Any]:
        handler = self.handlers.get(kind)
        if handler is None:
            raise ValueError(f"No handler for trial kind: {kind}")
        return handler

    def _finish(self, trial: Trial, output: Any = None, failure: Optional[TrialFailure] = None) -> None:
        trial.completed_at = _now()
        if failure is None:
            trial.status = "succeeded"
            trial.output = output
            return
        trial.status = "failed"
        trial.error = failure.message
        trial.error_code = failure.code
        logger.error("trial_failed", run_id=self.run_id, trial=trial.index, error_code=failure.code, error=failure.message)

    async def run(self, kind: str, items: Sequence[Tuple[str, Dict[str, Any]]]) -> List[Trial]:
        """
        Run one trial per (instance_id, args) item

        Returns:
            Trials in item order, whatever order they finished in
        """
        handler = self._handler(kind)
        trials = [Trial(i, ident, kind, args) for i, (ident, args) in enumerate(items)]
        self.trials = trials
        logger.info("trials_enqueued", run_id=self.run_id, kind=kind, trials=len(trials), workers=self.workers)

        if self.workers == 1:
            for trial in trials:
                trial.status = "running"
                trial.started_at = _now()
                try:
                    output = run_with_context(self.run_id, trial.instance_id, trial.index, handler, **trial.args)
                except Exception as e:
                    self._finish(trial, failure=TrialFailure.of(e))
                else:
                    self._finish(trial, output)
            return trials

        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures = []
            for trial in trials:
                trial.status = "running"
                trial.started_at = _now()
                futures.append(loop.run_in_executor(
                    pool,
                    _call,
                    self.run_id,
                    trial.instance_id,
                    trial.index,
                    handler,
                    trial.args
                ))
            results = await asyncio.gather(*futures, return_exceptions=True)

        for trial, result in zip(trials, results):
            if isinstance(result, BaseException):
                self._finish(trial, failure=TrialFailure.of(result))
            elif isinstance(result, TrialFailure):
                self._finish(trial, failure=result)
            else:
                self._finish(trial, result)
        return trials

    def run_sync(self, kind: str, items: Sequence[Tuple[str, Dict[str, Any]]]) -> List[Trial]:
        return asyncio.run(self.run(kind, items))

    def to_dict(self, trial: Trial) -> Dict[str, Any]:
        """Convert trial to dictionary"""
        return {
            "index": trial.index,
            "instance_id": trial.instance_id,
            "kind": trial.kind,
            "status": trial.status,
            "error": trial.error,
            "error_code": trial.error_code,
            "created_at": trial.created_at.isoformat() if trial.created_at else None,
            "started_at": trial.started_at.isoformat() if trial.started_at else None,
            "completed_at": trial.completed_at.isoformat() if trial.completed_at else None
        }


def _call(run_id: str, instance_id: str, index: int, handler: Callable[..., Any], args: Dict[str, Any]) -> Any:
    # domain exceptions take custom constructor arguments and do not unpickle
    try:
        return run_with_context(run_id, instance_id, index, handler, **args)
    except Exception as e:
        return TrialFailure.of(e)
