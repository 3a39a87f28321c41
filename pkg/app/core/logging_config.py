"""
CLI 프로세스 로깅 구성

structlog 처리기를 표준 logging 핸들러에 연결함.
콘솔은 stderr (개발: 컬러 콘솔, 그 외: JSON), 파일은 항상 JSON 한 줄씩.
"""

import logging
import logging.config
import os
import sys
from typing import Any, Dict, List, Optional

import structlog
from structlog.types import Processor

from app.core.config import settings

# 스텝/원소 단위로 많이 찍는 모듈은 설정 레벨과 무관하게 하한을 둠
QUIET_LOGGERS: Dict[str, str] = {
    "app.autograd": "INFO",
    "app.db.scan_store": "INFO",
    "py.warnings": "WARNING",
}
# 실행 진행 상황 (에폭, 스윕 셀)
RUN_LOGGERS = (
    "app.services.training_service",
    "app.services.evaluation_service",
    "app.services.experiment_service",
    "app.services.parallel_run_manager",
)

_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _stricter(a: str, b: str) -> str:
    return a if _LEVELS.index(a) >= _LEVELS.index(b) else b


def shared_processors() -> List[Processor]:
    return [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        structlog.processors.TimeStamper(fmt="iso"),
    ]


def _formatter(renderer: Processor, pre_chain: List[Processor]) -> Dict[str, Any]:
    return {
        "()": structlog.stdlib.ProcessorFormatter,
        "processors": [structlog.stdlib.ProcessorFormatter.remove_processors_meta, renderer],
        "foreign_pre_chain": pre_chain,
    }


def build_logging_config(log_path: str, level: str) -> Dict[str, Any]:
    """dictConfig용 설정 사전"""
    pre_chain = shared_processors()
    if settings.ENVIRONMENT == "development":
        console_renderer: Processor = structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())
    else:
        console_renderer = structlog.processors.JSONRenderer()

    handlers = ["console", "file"]
    loggers: Dict[str, Any] = {"": {"handlers": handlers, "level": level, "propagate": False}}
    for name in RUN_LOGGERS:
        loggers[name] = {"handlers": handlers, "level": level, "propagate": False}
    for name, floor in QUIET_LOGGERS.items():
        loggers[name] = {"handlers": handlers, "level": _stricter(floor, level), "propagate": False}

    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "console": _formatter(console_renderer, pre_chain),
            "file": _formatter(structlog.processors.JSONRenderer(), pre_chain),
        },
        "handlers": {
            "console": {
                "level": level,
                "class": "logging.StreamHandler",
                "formatter": "console",
                # 호출 시점의 stderr (테스트 캡처 포함)
                "stream": sys.stderr,
            },
            "file": {
                "level": level,
                "class": "logging.handlers.TimedRotatingFileHandler",
                "filename": log_path,
                "when": settings.LOG_ROTATION_WHEN,
                "interval": settings.LOG_ROTATION_INTERVAL,
                "backupCount": settings.LOG_ROTATION_BACKUP_COUNT,
                "formatter": "file",
                "encoding": "utf8",
                "utc": True,
            },
        },
        "loggers": loggers,
    }


def configure_logging(log_file: Optional[str] = None, level: Optional[str] = None) -> None:
    """
    CLI 프로세스의 로깅 시스템을 구성함.

    - stdout은 결과 JSON 전용이므로 콘솔 로그는 stderr로 보냄.
    - 실행 로거(학습, 평가, 스윕)는 설정 레벨을 따르고, 수치 내부 모듈은 INFO 이상만 기록.
    """
    log_path = log_file or settings.LOG_FILE_PATH
    log_dir = os.path.dirname(log_path)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)

    resolved = (level or settings.effective_log_level).upper()
    logging.config.dictConfig(build_logging_config(log_path, resolved))
    logging.captureWarnings(True)

    structlog.configure(
        processors=shared_processors() + [structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
