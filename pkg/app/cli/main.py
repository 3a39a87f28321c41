"""
ustar 명령행 인터페이스

    ustar simulate | split | train | eval | retrieve | scale-curve | ablate | inspect-sampling

설정 우선순위: 플래그 > --set key=value > --config 파일 > 기본값.
성공하면 stdout에 결과 JSON 한 줄, 실패하면 stderr에 오류 JSON 한 줄을 출력하고
검증 오류는 1, 실행 실패는 2로 종료함.
"""

import argparse
import json
import logging
import sys
from typing import Any, Callable, Dict, List, Optional

from pydantic import ValidationError

from app.cli import commands
from app.core.config import settings
from app.core.exceptions import UltraStarError
from app.core.logging_config import configure_logging
from app.core.run_config import build_run_config

logger = logging.getLogger(__name__)

VERBS: Dict[str, Callable[..., Dict[str, Any]]] = {
    "simulate": commands.cmd_simulate,
    "split": commands.cmd_split,
    "train": commands.cmd_train,
    "eval": commands.cmd_eval,
    "retrieve": commands.cmd_retrieve,
    "scale-curve": commands.cmd_scale_curve,
    "ablate": commands.cmd_ablate,
    "inspect-sampling": commands.cmd_inspect_sampling,
}
CHECKPOINT_VERBS = ("eval", "retrieve")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="키-값 설정 파일 경로")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="설정 키 오버라이드 (여러 번 사용 가능)")
    parser.add_argument("--seed", type=int, help="simulate: sim.seed, 그 외: train.seed와 sampler.seed")
    parser.add_argument("--out", help="출력 디렉터리 (simulate에서는 코퍼스 디렉터리)")
    parser.add_argument("--corpus", help="코퍼스 디렉터리")
    parser.add_argument("--split", help="split 파일 경로")
    parser.add_argument("--model", choices=["star", "chain", "fc", "single"], help="헤드 종류")
    parser.add_argument("--sampler", choices=["segmental", "semantic", "uniform"], help="앵커 샘플링 전략")
    parser.add_argument("--L", type=int, dest="L", help="그래프 크기 L")
    parser.add_argument("--workers", type=int, help="스윕 하위 실행 프로세스 수")
    parser.add_argument("--log-file", help=f"로그 파일 (기본: {settings.LOG_FILE_PATH})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ustar", description=f"{settings.PROJECT_NAME} v{settings.app_version}")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        _common(p)
        if verb in CHECKPOINT_VERBS:
            p.add_argument("--checkpoint", help="체크포인트 경로 (기본: out/model.ckpt)")
            p.add_argument("--subset", choices=["val", "train"], default="val", help="평가할 분할")
    return parser


def flags_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """argparse 결과를 점 표기 설정 키로 변환"""
    flags: Dict[str, Any] = {
        "paths.corpus": args.corpus,
        "paths.split": args.split,
        "model.kind": args.model,
        "sampler.strategy": args.sampler,
        "model.L": args.L,
        "sweep.workers": args.workers,
        "paths.checkpoint": getattr(args, "checkpoint", None),
    }
    if args.verb == "simulate":
        flags["sim.seed"] = args.seed
        if args.out is not None:
            flags["paths.corpus"] = args.out
    else:
        flags["train.seed"] = args.seed
        flags["sampler.seed"] = args.seed
        flags["paths.out"] = args.out
    return flags


def _emit_error(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, ensure_ascii=False, default=str), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_file)

    try:
        config = build_run_config(args.config, args.overrides, flags_from_args(args))
        handler = VERBS[args.verb]
        if args.verb in CHECKPOINT_VERBS:
            result = handler(config, checkpoint=args.checkpoint, subset=args.subset)
        else:
            result = handler(config)
    except UltraStarError as e:
        logger.error(f"{args.verb} 실패: {e.message}")
        _emit_error(e.to_payload())
        return e.exit_code
    except ValidationError as e:
        _emit_error(
            {"error": "validation_error", "message": f"설정 검증 실패: {e.error_count()}개 오류",
             "details": {"errors": e.errors(include_url=False)}, "exit_code": 1}
        )
        return 1
    except Exception as e:  # noqa: BLE001
        logger.exception(f"{args.verb} 처리 중 예기치 않은 오류")
        _emit_error({"error": "runtime_error", "message": str(e), "details": {}, "exit_code": 2})
        return 2

    print(json.dumps(result, ensure_ascii=False, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
