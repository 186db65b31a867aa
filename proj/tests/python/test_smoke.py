# SPDX-License-Identifier: Apache-2.0
from pathlib import Path

import numpy as np
import pytest

import unlearnlab as ul

ROOT = Path(__file__).resolve().parents[2]
MINIMAL = ROOT / "configs" / "minimal.cfg"


def test_config_round_trip():
    cfg = ul.load_config(MINIMAL)
    again = ul.parse_config(cfg.serialize())
    assert again.to_dict() == cfg.to_dict()
    cfg.set("mask.q", "0.25")
    assert cfg.get("mask.q") == "0.25"
    assert "loss.xi" in ul.config_keys()


def test_config_errors():
    with pytest.raises(ValueError, match="mask.qq"):
        ul.parse_config("mask.qq = 1\n")
    with pytest.raises(ValueError):
        ul.load_config("/nonexistent/run.cfg")


def test_mask_example():
    m = ul.build_mask([0.5, -2.0, 0.1], gamma=1.0)
    assert m["bits"] == [0, 1, 0]
    assert m["density"] == pytest.approx(1 / 3)
    q = ul.build_mask(list(np.linspace(-1, 1, 100)), q=0.5)
    assert q["density"] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ul.build_mask([1.0])


def test_metrics_against_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(500, 2))
    b = a + np.array([1.0, 0.0])
    assert ul.frechet_proxy(a, b) == pytest.approx(1.0, rel=1e-8)
    assert ul.frechet_gaussian([0, 0], [1, 0, 0, 1], [0, 0], [1, 0, 0, 1]) == pytest.approx(0.0, abs=1e-12)
    data = ul.make_mixture(4, "ring", 2.0, 50, 1)
    assert data["samples"].shape == (200, 2)
    probs, argmax = ul.bayes_classify(np.array(data["means"]), 4)
    assert list(argmax) == [0, 1, 2, 3]
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_end_to_end(tmp_path):
    cfg = ul.load_config(MINIMAL)
    teacher = ul.pretrain(cfg, out=tmp_path / "teacher")
    assert Path(teacher["checkpoint"]).exists()
    run = ul.unlearn(cfg, method="sfd", teacher=teacher["checkpoint"], out=tmp_path / "sfd")
    rows = ul.read_metrics(run["metrics"])
    assert [r["step"] for r in rows] == [0, 10, 20]
    assert all(r["mask_density"] == 1.0 for r in rows)
    assert rows[-1] == run["final"]
    ev = ul.evaluate(run["checkpoint"], n=50, seed=1, out_file=tmp_path / "eval.txt")
    assert ev["sampler"] == "generator"
    assert (tmp_path / "eval.txt").read_text() == ev["text"]
    with pytest.raises(ValueError):
        ul.evaluate(run["checkpoint"], n=0)


def test_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ul.CheckpointError):
        ul.evaluate(bad)


def test_sweep(tmp_path):
    cfg = ul.load_config(MINIMAL)
    out = ul.sweep(cfg, [("mask.q", ["0.2", "1.0"])], out=tmp_path / "sweep", jobs=1)
    assert len(out["runs"]) == 2
    assert Path(out["aggregate"]).read_text().count("\n") == 3
