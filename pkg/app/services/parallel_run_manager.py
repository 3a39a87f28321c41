import logging
import time
from concurrent.futures import Future, ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from app.core.exceptions import UltraStarError

logger = logging.getLogger(__name__)


@dataclass
class RunTask:
    """스윕 하위 실행 하나"""

    key: str
    payload: Dict[str, Any]


@dataclass
class RunOutcome:
    """하위 실행 결과"""

    key: str
    ok: bool
    result: Optional[Dict[str, Any]] = None
    error: Dict[str, Any] = field(default_factory=dict)
    elapsed_s: float = 0.0


def _timed(fn: Callable[[Dict[str, Any]], Dict[str, Any]], task: RunTask) -> RunOutcome:
    started = time.perf_counter()
    try:
        result = fn(task.payload)
        return RunOutcome(key=task.key, ok=True, result=result, elapsed_s=time.perf_counter() - started)
    except UltraStarError as e:
        return RunOutcome(key=task.key, ok=False, error=e.to_payload(), elapsed_s=time.perf_counter() - started)
    except Exception as e:  # noqa: BLE001 - 하위 실행 실패는 결과로 보고
        logger.exception(f"하위 실행 {task.key} 실패")
        return RunOutcome(
            key=task.key,
            ok=False,
            error={"error": "runtime_error", "message": str(e), "details": {}, "exit_code": 2},
            elapsed_s=time.perf_counter() - started,
        )


class ParallelRunManager:
    """
    독립적인 하위 실행을 프로세스 풀에서 실행하고 작업 순서대로 결과를 돌려줌.
    workers=1이면 현재 프로세스에서 순차 실행.
    """

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))

    def run(
        self,
        tasks: Sequence[RunTask],
        fn: Callable[[Dict[str, Any]], Dict[str, Any]],
        stop_on_failure: bool = True,
    ) -> List[RunOutcome]:
        if self.workers == 1:
            return self._run_serial(tasks, fn, stop_on_failure)
        return self._run_pool(tasks, fn)

    def _run_serial(
        self, tasks: Sequence[RunTask], fn: Callable[[Dict[str, Any]], Dict[str, Any]], stop_on_failure: bool
    ) -> List[RunOutcome]:
        outcomes: List[RunOutcome] = []
        for i, task in enumerate(tasks):
            outcome = _timed(fn, task)
            outcomes.append(outcome)
            self._log(outcome, i, len(tasks))
            if not outcome.ok and stop_on_failure:
                break
        return outcomes

    def _run_pool(
        self, tasks: Sequence[RunTask], fn: Callable[[Dict[str, Any]], Dict[str, Any]]
    ) -> List[RunOutcome]:
        logger.info(f"프로세스 {self.workers}개로 하위 실행 {len(tasks)}개 시작")
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures: List[Future] = [pool.submit(_timed, fn, task) for task in tasks]
            # 완료 순서와 무관하게 작업 순서로 수집
            outcomes = [f.result() for f in futures]
        for i, outcome in enumerate(outcomes):
            self._log(outcome, i, len(tasks))
        return outcomes

    @staticmethod
    def _log(outcome: RunOutcome, index: int, total: int) -> None:
        if outcome.ok:
            logger.info(f"[{index + 1}/{total}] {outcome.key} 완료 ({outcome.elapsed_s:.1f}s)")
        else:
            logger.warning(f"[{index + 1}/{total}] {outcome.key} 실패: {outcome.error.get('message')}")
