"""
데스크 규모 수용 기준: 기본 합성 코퍼스에서의 모델/샘플러 순서와 스케일 추세.
`pytest -m slow` 로 실행.
"""

import csv
from pathlib import Path

import pytest

from app.core.run_config import build_run_config
from app.services.corpus_service import CorpusService
from app.services.experiment_service import ExperimentService

pytestmark = pytest.mark.slow

DESK_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk_scale.cfg"


@pytest.fixture(scope="module")
def desk_config(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    config = build_run_config(
        DESK_CONFIG, flags={"paths.corpus": str(root / "corpus"), "paths.out": str(root / "out"), "sweep.workers": 4}
    )
    CorpusService(config).simulate()
    return config


def _read(path):
    with Path(path).open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def test_star_beats_baselines(desk_config):
    config = desk_config.with_updates(sweep={"ablate_samplers": ["semantic"]}, paths={"out": f"{desk_config.paths.out}/table"})
    rows = {r["model"]: float(r["trans_mae_mean"]) for r in _read(ExperimentService(config).ablate())}
    assert rows["star"] <= 0.8 * rows["single"]
    assert rows["star"] <= rows["chain"]
    assert rows["star"] <= rows["fc"]


def test_longer_history_helps(desk_config):
    config = desk_config.with_updates(paths={"out": f"{desk_config.paths.out}/scale"})
    csv_path, _ = ExperimentService(config).scale_curve([2, 4, 8, 16])
    rows = sorted(_read(csv_path), key=lambda r: int(r["L"]))
    trans = [float(r["trans_mae_mm"]) for r in rows]
    rot = [float(r["rot_mae_deg"]) for r in rows]
    assert trans[-1] < trans[0] and rot[-1] < rot[0]
    for series in (trans, rot):
        assert all(b <= 1.05 * a for a, b in zip(series, series[1:]))


def test_semantic_sampling_not_worse(desk_config):
    config = desk_config.with_updates(
        sweep={"ablate_models": ["star"], "ablate_samplers": ["segmental", "semantic"]},
        paths={"out": f"{desk_config.paths.out}/sampling"},
    )
    rows = {r["sampler"]: float(r["trans_mae_mean"]) for r in _read(ExperimentService(config).ablate())}
    assert rows["semantic"] <= rows["segmental"]
