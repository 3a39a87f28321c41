"""
스캔 파일, 코퍼스 manifest, split 파일의 디스크 입출력

스캔 파일은 UTF-8 JSON-lines:
    1행: {"format":"ustar-scan/1","subject":…,"scan":…,"C":…,"annotations":{"0":t,…,"9":t}}
    이후: {"t":int,"pos_mm":[3],"rot_deg":[3],"feat":[C],"viewdist":[10]}
실수는 repr(최단 왕복 정밀도)로 기록되어 비트 단위로 복원됨.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from app.core.exceptions import ConfigError, ScanFormatError
from app.models.scan_models import ScanTrajectory
from app.models.schemas import (
    NUM_VIEWS,
    SCAN_FORMAT,
    CorpusEntry,
    CorpusManifest,
    FrameRecord,
    ScanHeaderRecord,
    SplitFile,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

PathLike = Union[str, Path]


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


# ---------------------------------------------------------------------------
# 스캔 파일
# ---------------------------------------------------------------------------


def write_scan(trajectory: ScanTrajectory, path: PathLike) -> Path:
    """궤적을 JSON-lines 스캔 파일로 기록"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": SCAN_FORMAT,
        "subject": int(trajectory.subject),
        "scan": int(trajectory.scan),
        "C": trajectory.feature_dim,
        "annotations": {str(k): int(trajectory.t[trajectory.annotations[k]]) for k in range(NUM_VIEWS)},
    }
    lines = [_dumps(header)]
    for i in range(trajectory.n_frames):
        lines.append(
            _dumps(
                {
                    "t": int(trajectory.t[i]),
                    "pos_mm": trajectory.pos[i].tolist(),
                    "rot_deg": trajectory.rot[i].tolist(),
                    "feat": trajectory.feat[i].tolist(),
                    "viewdist": trajectory.viewdist[i].tolist(),
                }
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _first_error_field(e: ValidationError) -> Optional[str]:
    errors = e.errors(include_url=False)
    if not errors or not errors[0]["loc"]:
        return None
    return str(errors[0]["loc"][0])


def _parse_line(raw: str, path: Path, lineno: int, model: type) -> BaseModel:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ScanFormatError(f"JSON 파싱 실패: {e.msg}", path=str(path), line=lineno) from e
    if not isinstance(obj, dict):
        raise ScanFormatError("JSON 객체가 아님", path=str(path), line=lineno)
    try:
        return model.model_validate(obj)
    except ValidationError as e:
        first = e.errors(include_url=False)[0]
        raise ScanFormatError(first["msg"], path=str(path), line=lineno, field=_first_error_field(e)) from e


def read_scan(path: PathLike) -> ScanTrajectory:
    """스캔 파일을 읽고 검증. 형식 오류는 줄 번호와 필드를 담은 ScanFormatError."""
    path = Path(path)
    if not path.is_file():
        raise ScanFormatError("스캔 파일이 없음", path=str(path))

    with path.open("r", encoding="utf-8") as f:
        raw_lines = f.read().split("\n")
    while raw_lines and raw_lines[-1] == "":
        raw_lines.pop()
    if not raw_lines:
        raise ScanFormatError("빈 스캔 파일", path=str(path), line=1)

    header = _parse_line(raw_lines[0], path, 1, ScanHeaderRecord)
    assert isinstance(header, ScanHeaderRecord)

    n = len(raw_lines) - 1
    if n < 1:
        raise ScanFormatError("프레임이 없음", path=str(path), line=2)
    t = np.empty(n, dtype=np.int64)
    pos = np.empty((n, 3))
    rot = np.empty((n, 3))
    feat = np.empty((n, header.C))
    viewdist = np.empty((n, NUM_VIEWS))

    for i, raw in enumerate(raw_lines[1:]):
        lineno = i + 2
        frame = _parse_line(raw, path, lineno, FrameRecord)
        assert isinstance(frame, FrameRecord)
        if len(frame.feat) != header.C:
            raise ScanFormatError(
                f"특징 길이 {len(frame.feat)} != C {header.C}", path=str(path), line=lineno, field="feat"
            )
        if i == 0 and frame.t != 0:
            raise ScanFormatError("첫 프레임의 t는 0이어야 함", path=str(path), line=lineno, field="t")
        if i > 0 and frame.t <= t[i - 1]:
            raise ScanFormatError("t가 순증가하지 않음", path=str(path), line=lineno, field="t")
        t[i] = frame.t
        pos[i] = frame.pos_mm
        rot[i] = frame.rot_deg
        feat[i] = frame.feat
        viewdist[i] = frame.viewdist

    index_of = {int(ts): i for i, ts in enumerate(t)}
    annotations: Dict[int, int] = {}
    for key, ts in header.annotations.items():
        if ts not in index_of:
            raise ScanFormatError(
                f"뷰 {key}의 주석 타임스탬프 {ts}에 해당하는 프레임이 없음", path=str(path), line=1, field="annotations"
            )
        annotations[int(key)] = index_of[ts]

    return ScanTrajectory(
        subject=header.subject,
        scan=header.scan,
        t=t,
        pos=pos,
        rot=rot,
        feat=feat,
        viewdist=viewdist,
        annotations=dict(sorted(annotations.items())),
    )


def file_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# 코퍼스 manifest
# ---------------------------------------------------------------------------


def scan_filename(subject: int, scan: int) -> str:
    return f"scans/S{subject:03d}-{scan}.jsonl"


def write_manifest(corpus_dir: PathLike, manifest: CorpusManifest) -> Path:
    path = Path(corpus_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def read_manifest(corpus_dir: PathLike) -> CorpusManifest:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.is_file():
        raise ConfigError(f"코퍼스 manifest가 없음: {path}", details={"path": str(path)})
    try:
        return CorpusManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"manifest 형식 오류: {path}: {e.error_count()}개 오류") from e


class CorpusStore:
    """코퍼스 디렉터리 하나에 대한 읽기 접근"""

    def __init__(self, corpus_dir: PathLike):
        self.root = Path(corpus_dir)
        self.manifest = read_manifest(self.root)
        self._cache: Dict[str, ScanTrajectory] = {}

    @property
    def feature_dim(self) -> Optional[int]:
        return self.manifest.C

    def entries_for(self, subjects: Optional[List[int]] = None) -> List[CorpusEntry]:
        wanted = None if subjects is None else set(subjects)
        return [e for e in self.manifest.scans if wanted is None or e.subject in wanted]

    def load(self, entry: CorpusEntry) -> ScanTrajectory:
        if entry.path not in self._cache:
            self._cache[entry.path] = read_scan(self.root / entry.path)
        return self._cache[entry.path]

    def iter_scans(self, subjects: Optional[List[int]] = None) -> Iterator[ScanTrajectory]:
        for entry in self.entries_for(subjects):
            yield self.load(entry)

    def digest(self) -> str:
        """manifest와 모든 스캔 파일 내용의 sha256"""
        h = hashlib.sha256((self.root / MANIFEST_NAME).read_bytes())
        for entry in self.manifest.scans:
            h.update(file_digest(self.root / entry.path).encode("ascii"))
        return h.hexdigest()


# ---------------------------------------------------------------------------
# split 파일
# ---------------------------------------------------------------------------


def write_split(path: PathLike, split: SplitFile) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(split.model_dump(mode="json"), sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"split 저장: {path} (train {len(split.train)}명, val {len(split.val)}명)")
    return path


def read_split(path: PathLike) -> SplitFile:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"split 파일이 없음: {path}", details={"path": str(path)})
    try:
        split = SplitFile.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"split 파일 형식 오류: {path}: {e.error_count()}개 오류") from e
    overlap = set(split.train) & set(split.val)
    if overlap:
        raise ConfigError(f"split의 train/val 피험자가 겹침: {sorted(overlap)}")
    return split
