"""
CLI 종료 코드와 stdout/stderr JSON 테스트
"""

import json
import logging

import pytest

from app.cli import main
from app.core.logging_config import QUIET_LOGGERS, RUN_LOGGERS

TINY_SIM = """\
sim.seed = 7
sim.subjects = 2
sim.scans_per_subject = 1
sim.frames = 1200
sim.feature_dim = 8
sim.fourier_features = 8
"""

TINY_TRAIN = """\
model.L = 4
model.feature_dim = 8
model.heads = 2
model.depth = 1
sampler.K = 8
train.batch_size = 32
train.epochs = 1
train.precision = float64
train.learning_rate = 1e-3
dataset.frame_stride = 20
dataset.eval_stride = 40
dataset.val_fraction = 0.34
dataset.split_seed = 1
"""


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    for name in ["", *RUN_LOGGERS, *QUIET_LOGGERS]:
        logger = logging.getLogger(name)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()


def _run(capsys, tmp_path, *argv):
    code = main([*argv, "--log-file", str(tmp_path / "logs" / "ustar.log")])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _stdout_json(out):
    lines = [line for line in out.splitlines() if line.strip()]
    return json.loads(lines[-1])


def _stderr_json(err):
    lines = [line for line in err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_simulate(capsys, tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(TINY_SIM, encoding="utf-8")
    code, out, _ = _run(capsys, tmp_path, "simulate", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / "c"))
    assert code == 0
    payload = _stdout_json(out)
    assert payload["scans"] == 2 and payload["C"] == 8
    assert (tmp_path / "c" / "manifest.json").is_file()


def test_train_then_eval(capsys, tmp_path, corpus_config):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_TRAIN, encoding="utf-8")
    common = ["--config", str(cfg), "--corpus", corpus_config.paths.corpus, "--out", str(tmp_path / "out")]

    code, out, _ = _run(capsys, tmp_path, "train", *common, "--seed", "5")
    assert code == 0
    trained = _stdout_json(out)
    assert trained["steps"] >= 1
    assert (tmp_path / "out" / "model.ckpt").is_file()

    code, out, _ = _run(capsys, tmp_path, "eval", *common)
    assert code == 0
    metrics = _stdout_json(out)
    assert metrics["subset"] == "val" and metrics["samples"] > 0
    assert (tmp_path / "out" / "metrics.json").is_file()

    code, out, _ = _run(capsys, tmp_path, "retrieve", *common, "--subset", "train")
    assert code == 0
    assert _stdout_json(out)["queries"] % 10 == 0


def test_unknown_key_is_validation_error(capsys, tmp_path):
    code, out, err = _run(capsys, tmp_path, "train", "--set", "model.nope=1")
    assert code == 1
    assert out.strip() == ""
    payload = _stderr_json(err)
    assert payload["error"] == "config_error" and payload["exit_code"] == 1


def test_invalid_value_is_validation_error(capsys, tmp_path):
    code, _, err = _run(capsys, tmp_path, "split", "--set", "model.heads=3")
    assert code == 1
    assert _stderr_json(err)["error"] == "config_error"


def test_missing_checkpoint_is_runtime_failure(capsys, tmp_path, corpus_config):
    code, _, err = _run(
        capsys, tmp_path, "eval", "--corpus", corpus_config.paths.corpus, "--checkpoint", str(tmp_path / "none.ckpt")
    )
    assert code == 2
    assert _stderr_json(err)["error"] == "checkpoint_error"


def test_missing_corpus(capsys, tmp_path):
    code, _, err = _run(capsys, tmp_path, "split", "--corpus", str(tmp_path / "empty"))
    assert code == 1
    assert _stderr_json(err)["error"] == "config_error"


def test_bad_choice_exits_via_argparse(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--model", "tree"])
    assert exc.value.code == 2


def test_repeated_runs_are_byte_identical(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_SIM + TINY_TRAIN + "dataset.val_fraction = 0.5\n", encoding="utf-8")
    outputs = []
    for name in ("a", "b"):
        root = tmp_path / name
        corpus = ["--corpus", str(root / "corpus")]
        assert _run(capsys, tmp_path, "simulate", "--config", str(cfg), "--out", str(root / "corpus"))[0] == 0
        for verb in ("train", "eval"):
            code, _, _ = _run(capsys, tmp_path, verb, "--config", str(cfg), *corpus, "--out", str(root / "out"))
            assert code == 0
        outputs.append(root)

    a, b = outputs
    for rel in ("corpus/manifest.json", "corpus/scans/S000-0.jsonl", "corpus/scans/S001-0.jsonl",
                "corpus/split.json", "out/loss_log.csv", "out/metrics.csv", "out/model.ckpt"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
