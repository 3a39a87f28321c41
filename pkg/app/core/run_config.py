"""
키-값 설정 파일 파싱과 RunConfig 조립

설정 파일 형식:
    # 주석
    model.kind = star
    sampler.exclude.trans_mm = 5
    sweep.L_list = 2, 4, 8, 16

우선순위: 플래그 > --set > 설정 파일 > Settings 기본값 > 모델 기본값
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ValidationError

from app.core.exceptions import ConfigError
from app.models.config_models import RunConfig

logger = logging.getLogger(__name__)

# 호환용 별칭: exclusion.* 는 sampler.exclude.* 로 매핑
KEY_ALIASES = {"exclusion": "sampler.exclude"}


def normalize_key(key: str) -> str:
    key = key.strip()
    head, _, rest = key.partition(".")
    if head in KEY_ALIASES:
        return f"{KEY_ALIASES[head]}.{rest}" if rest else KEY_ALIASES[head]
    return key


def validate_key(key: str, model: type = RunConfig) -> None:
    """점 표기 키가 RunConfig 트리의 말단 필드를 가리키는지 확인"""
    current: Any = model
    parts = key.split(".")
    for i, part in enumerate(parts):
        if not (isinstance(current, type) and issubclass(current, BaseModel)):
            raise ConfigError(f"알 수 없는 설정 키: {key}", details={"key": key})
        field = current.model_fields.get(part)
        if field is None:
            raise ConfigError(f"알 수 없는 설정 키: {key}", details={"key": key})
        annotation = field.annotation
        is_section = isinstance(annotation, type) and issubclass(annotation, BaseModel)
        last = i == len(parts) - 1
        if last and is_section:
            raise ConfigError(f"설정 키가 섹션을 가리킴: {key}", details={"key": key})
        current = annotation


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """설정 파일 본문 → {정규화된 키: 문자열 값}"""
    entries: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{lineno}: 'key = value' 형식이 아님",
                details={"path": source, "line": lineno},
            )
        key, _, value = line.partition("=")
        key = normalize_key(key)
        value = value.split(" #", 1)[0].strip()
        try:
            validate_key(key)
        except ConfigError as e:
            raise ConfigError(
                f"{source}:{lineno}: {e.message}",
                details={"path": source, "line": lineno, "key": key},
            ) from e
        entries[key] = value
    return entries


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"설정 파일이 없음: {path}", details={"path": str(path)})
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """--set key=value 목록 파싱"""
    entries: Dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set 값은 key=value 형식이어야 함: {item}")
        key, _, value = item.partition("=")
        key = normalize_key(key)
        validate_key(key)
        entries[key] = value.strip()
    return entries


def _assign(tree: Dict[str, Any], key: str, value: Any) -> None:
    node = tree
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def build_run_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[List[str]] = None,
    flags: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    설정 계층을 합쳐 RunConfig 생성.
    flags는 이미 점 표기 키로 매핑된 값 (None은 무시).
    """
    layers: List[Tuple[str, Dict[str, Any]]] = []
    if config_file:
        layers.append(("file", load_config_file(config_file)))
    if overrides:
        layers.append(("set", parse_overrides(overrides)))
    if flags:
        flag_entries = {normalize_key(k): v for k, v in flags.items() if v is not None}
        for key in flag_entries:
            validate_key(key)
        layers.append(("flag", flag_entries))

    tree: Dict[str, Any] = RunConfig().model_dump(mode="json")
    for name, entries in layers:
        for key, value in entries.items():
            _assign(tree, key, value)
        if entries:
            logger.debug(f"설정 계층 적용: {name} ({len(entries)}개 키)")

    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigError(f"설정 검증 실패: {e.error_count()}개 오류", details={"errors": _errors(e)}) from e


def _errors(e: ValidationError) -> List[Dict[str, Any]]:
    return [
        {"key": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
        for err in e.errors(include_url=False)
    ]
