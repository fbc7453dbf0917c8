"""Training loop tests on tiny datasets (fast smoke coverage)."""

import json
import os

import numpy as np
import pytest

from adacof.datagen import load_triplet, read_manifest, write_dataset
from adacof.model import load_checkpoint
from adacof.train import TrainConfig, evaluate, infer, train
from adacof.warp import WarpMode


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny"
    write_dataset(path, 10, 16, 2.0, seed=0)
    return str(path)


def _tiny_config(dataset_dir, **kw):
    base = dict(dataset_dir=dataset_dir, kernel_size=3, dilation=1, depth=1,
                widths=(6,), lr=0.002, batch=2, epochs=2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_train_writes_metrics_and_checkpoints(tiny_dataset, tmp_path):
    out = tmp_path / "run"
    model, history = train(_tiny_config(tiny_dataset), str(out))
    assert len(history) == 2
    lines = (out / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == "epoch,phase,loss,val_psnr,val_ssim"
    assert len(lines) == 3
    assert lines[1].startswith("0,distortion,")
    assert (out / "ckpt_final.ackp").exists()
    assert (out / "ckpt_epoch000.ackp").exists()
    assert all(len(row["quarter_losses"]) == 4 for row in history)
    assert all(np.isfinite(row["quarter_losses"]).all() for row in history)


def test_final_checkpoint_reproduces_model(tiny_dataset, tmp_path):
    out = tmp_path / "run"
    model, _ = train(_tiny_config(tiny_dataset), str(out))
    back, extra = load_checkpoint(out / "ckpt_final.ackp")
    assert extra["warp_mode"] == "adacof"
    assert extra["occlusion_enabled"] is True
    t = load_triplet(os.path.join(tiny_dataset, "0000"))
    a, _, _, _ = infer(model, t.first.pixels, t.last.pixels)
    b, _, _, _ = infer(back, t.first.pixels, t.last.pixels)
    # checkpoints store float32 parameters
    assert np.abs(a - b).max() < 1e-5


def test_training_is_seeded_deterministic(tiny_dataset, tmp_path):
    _, h1 = train(_tiny_config(tiny_dataset, epochs=1), str(tmp_path / "a"))
    _, h2 = train(_tiny_config(tiny_dataset, epochs=1), str(tmp_path / "b"))
    assert h1[0]["loss"] == h2[0]["loss"]
    assert h1[0]["val_psnr"] == h2[0]["val_psnr"]


def test_zero_lr_keeps_untrained_baseline(tiny_dataset, tmp_path):
    cfg = _tiny_config(tiny_dataset, lr=0.0, epochs=1)
    model, history = train(cfg, str(tmp_path / "run"))
    # heads are zero-initialized and lr=0 keeps them there: uniform
    # weights, zero offsets, v=0.5 everywhere
    t = load_triplet(os.path.join(tiny_dataset, "0000"))
    out, pf, pb, v = infer(model, t.first.pixels, t.last.pixels)
    np.testing.assert_allclose(v, 0.5, atol=1e-12)
    np.testing.assert_allclose(pf.alpha, 0.0, atol=1e-12)
    np.testing.assert_allclose(pf.weights, 1.0 / 9.0, atol=1e-12)


def test_flow_only_mode_forces_single_tap(tiny_dataset, tmp_path):
    cfg = _tiny_config(tiny_dataset, warp_mode="fb", epochs=1)
    wmode, occ_on, model_cfg = cfg.resolve()
    assert wmode is WarpMode.FLOW_ONLY
    assert model_cfg.kernel_size == 1 and model_cfg.dilation == 0
    model, _ = train(cfg, str(tmp_path / "run"))
    back, extra = load_checkpoint(tmp_path / "run" / "ckpt_final.ackp")
    assert extra["warp_mode"] == "fb"
    assert back.config.kernel_size == 1


@pytest.mark.parametrize("mode", ["kb", "ws", "sdc"])
def test_constrained_modes_train(tiny_dataset, tmp_path, mode):
    cfg = _tiny_config(tiny_dataset, warp_mode=mode, epochs=1)
    _, history = train(cfg, str(tmp_path / mode))
    assert np.isfinite(history[-1]["loss"])


def test_woocc_mode_disables_blending(tiny_dataset):
    cfg = _tiny_config(tiny_dataset, warp_mode="woocc")
    wmode, occ_on, _ = cfg.resolve()
    assert wmode is WarpMode.ADACOF and occ_on is False


def test_perception_phase_runs(tiny_dataset, tmp_path):
    cfg = _tiny_config(tiny_dataset, mode="perception", epochs=1, adv_epochs=1)
    _, history = train(cfg, str(tmp_path / "run"))
    assert [row["phase"] for row in history] == ["distortion", "perception"]
    assert np.isfinite(history[-1]["loss"])


def test_config_json_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dataset_dir": "x", "F": 5, "d": 2,
                                "widths": [4, 8], "depth": 2, "lr": 0.01}))
    cfg = TrainConfig.from_json(path)
    assert cfg.kernel_size == 5 and cfg.dilation == 2
    assert cfg.widths == (4, 8) and cfg.lr == 0.01


def test_evaluate_reports_sane_metrics(tiny_dataset, tmp_path):
    model, _ = train(_tiny_config(tiny_dataset, epochs=1), str(tmp_path / "run"))
    names = read_manifest(tiny_dataset)
    triplets = [load_triplet(os.path.join(tiny_dataset, n)) for n in names[:3]]
    p, s = evaluate(model, triplets)
    assert 10.0 < p <= 100.0
    assert 0.0 < s <= 1.0
