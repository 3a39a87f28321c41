"""
코퍼스 생성과 분할 준비

simulate: 피험자 N명 × 스캔 M개를 scans/ 아래에 쓰고 manifest.json을 기록.
분할 파일이 없으면 manifest의 피험자로 새로 만듦.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

from app.core.exceptions import ConfigError
from app.db.scan_store import CorpusStore, read_split, scan_filename, write_manifest, write_scan, write_split
from app.models.config_models import RunConfig, SimConfig
from app.models.scan_models import ScanTrajectory
from app.models.schemas import CorpusEntry, CorpusManifest, SplitFile
from app.services.dataset_service import split_by_subject
from app.services.scan_simulator import ScanSimulator

logger = logging.getLogger(__name__)


def sim_digest(config: SimConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CorpusService:
    def __init__(self, config: RunConfig):
        self.config = config

    def simulate(self, corpus_dir: Optional[Union[str, Path]] = None) -> CorpusManifest:
        """결정적 합성 코퍼스 생성. 같은 설정이면 바이트 단위로 같은 파일."""
        sim = self.config.sim
        root = Path(corpus_dir or self.config.paths.corpus)
        try:
            root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"코퍼스 디렉터리를 만들 수 없음: {root}", details={"path": str(root)}) from e

        simulator = ScanSimulator(sim)
        entries: List[CorpusEntry] = []
        for subject in range(sim.subjects):
            for scan in range(sim.scans_per_subject):
                trajectory = simulator.scan(subject, scan)
                rel = scan_filename(subject, scan)
                write_scan(trajectory, root / rel)
                entries.append(CorpusEntry(path=rel, subject=subject))

        manifest = CorpusManifest(scans=entries, C=sim.feature_dim, sim_digest=sim_digest(sim))
        write_manifest(root, manifest)
        logger.info(f"코퍼스 생성 완료: {root} (스캔 {len(entries)}개, 피험자 {sim.subjects}명)")
        return manifest

    def open_store(self) -> CorpusStore:
        return CorpusStore(self.config.paths.corpus)

    def make_split(self, store: CorpusStore) -> SplitFile:
        ds = self.config.dataset
        split = split_by_subject(store.manifest, ds.val_fraction, ds.split_seed)
        write_split(self.config.split_path, split)
        return split

    def ensure_split(self, store: CorpusStore) -> SplitFile:
        """split 파일을 읽고, 없으면 생성. 코퍼스 피험자와 정확히 일치하지 않으면 오류."""
        path = Path(self.config.split_path)
        split = read_split(path) if path.is_file() else self.make_split(store)
        listed = set(split.train) | set(split.val)
        corpus = set(store.manifest.subjects)
        unknown = listed - corpus
        if unknown:
            raise ConfigError(f"split에 코퍼스에 없는 피험자가 있음: {sorted(unknown)}")
        missing = corpus - listed
        if missing:
            raise ConfigError(
                f"split에 빠진 피험자가 있음: {sorted(missing)}", details={"missing": sorted(missing), "split": str(path)}
            )
        return split

    def load_split_scans(
        self, store: Optional[CorpusStore] = None
    ) -> Tuple[SplitFile, List[ScanTrajectory], List[ScanTrajectory]]:
        store = store or self.open_store()
        split = self.ensure_split(store)
        train = list(store.iter_scans(split.train))
        val = list(store.iter_scans(split.val))
        return split, train, val
