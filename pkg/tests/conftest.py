"""
공용 픽스처: 작은 시뮬레이터 설정, 스캔, 코퍼스, 실행 설정
"""

import numpy as np
import pytest

from app.models.config_models import RunConfig, SimConfig
from app.services.corpus_service import CorpusService
from app.services.scan_simulator import ScanSimulator


def tiny_sim_config(**updates) -> SimConfig:
    base = dict(subjects=3, scans_per_subject=1, frames=1200, feature_dim=8, fourier_features=8, seed=7)
    base.update(updates)
    return SimConfig(**base)


def tiny_run_config(tmp_dir, **sections) -> RunConfig:
    """C=8, 2헤드, L=4, 64비트의 빠른 실행 설정"""
    data = {
        "paths": {"corpus": str(tmp_dir / "corpus"), "out": str(tmp_dir / "out")},
        "sim": tiny_sim_config().model_dump(mode="json"),
        "model": {"kind": "star", "L": 4, "feature_dim": 8, "heads": 2, "depth": 1},
        "sampler": {"strategy": "semantic", "K": 8, "seed": 3},
        "train": {"batch_size": 32, "epochs": 1, "precision": "float64", "learning_rate": 1e-3, "seed": 5},
        "dataset": {"frame_stride": 20, "eval_stride": 40, "val_fraction": 0.34, "split_seed": 1},
    }
    for section, values in sections.items():
        data.setdefault(section, {}).update(values)
    return RunConfig.model_validate(data)


@pytest.fixture(scope="session")
def sim_config() -> SimConfig:
    return tiny_sim_config()


@pytest.fixture(scope="session")
def simulator(sim_config) -> ScanSimulator:
    return ScanSimulator(sim_config)


@pytest.fixture(scope="session")
def anatomy(simulator):
    return simulator.anatomy(0)


@pytest.fixture(scope="session")
def scan(simulator):
    return simulator.scan(0, 0)


@pytest.fixture(scope="session")
def corpus_config(tmp_path_factory) -> RunConfig:
    """세션당 한 번 생성하는 3명 × 1스캔 코퍼스"""
    root = tmp_path_factory.mktemp("session")
    config = tiny_run_config(root)
    CorpusService(config).simulate()
    return config


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
