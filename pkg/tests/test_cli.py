import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from diffinpaint.cli import EXIT_DATA, EXIT_DIVERGENCE, EXIT_OK, EXIT_USAGE, main
from diffinpaint.io import load_tensor

from helpers import write_corpus, write_tiny_checkpoint


@pytest.fixture
def ckpt(tmp_path):
    return str(write_tiny_checkpoint(tmp_path / "m.dpnt"))


def run(*args):
    return main([str(a) for a in args])


def test_help(capsys):
    assert run("--help") == EXIT_OK
    out = capsys.readouterr().out
    for cmd in ("train", "sample", "inpaint", "eval", "make-cd-dataset", "synth-data"):
        assert cmd in out


def test_usage_errors(tmp_path, ckpt, monkeypatch):
    monkeypatch.delenv("DIFFINPAINT_DATA_DIR", raising=False)
    assert run("bogus") == EXIT_USAGE
    assert run("inpaint", "--image", "x.png") == EXIT_USAGE
    assert run("--out", tmp_path, "eval", "--checkpoint", ckpt) == EXIT_USAGE
    assert run("inpaint", "--image", "a", "--mask", "b", "--checkpoint", ckpt, "--variant", "other") == EXIT_USAGE
    bad = tmp_path / "c.json"
    bad.write_text('{"epochs": 0}')
    data = tmp_path / "d"
    assert run("--out", data, "synth-data", "--count", 4, "--size", 8) == EXIT_OK
    assert run("--config", bad, "--out", tmp_path / "t", "train", "--data", data) == EXIT_USAGE


def test_synth_formats(tmp_path):
    assert run("--out", tmp_path / "p", "--seed", 3, "synth-data", "--count", 5, "--size", 8) == EXIT_OK
    assert len(list((tmp_path / "p").glob("*.png"))) == 5
    assert run("--out", tmp_path / "t", "synth-data", "--count", 5, "--size", 8, "--format", "tensor",
               "--kind", "gmm-pixels", "--channels", 1) == EXIT_OK
    assert load_tensor(tmp_path / "t" / "data.tnsr").shape == (5, 1, 8, 8)


def test_train_sample_eval(tmp_path):
    data = tmp_path / "data"
    assert run("--out", data, "synth-data", "--count", 8, "--size", 16, "--format", "tensor") == EXIT_OK
    m = tmp_path / "m"
    assert run("--out", m, "--seed", 1, "train", "--data", data / "data.tnsr", "--epochs", 1, "--batch-size", 4,
               "--steps", 6, "--base-channels", 4, "--multipliers", "1,2") == EXIT_OK
    assert (m / "loss.csv").read_text().startswith("step,epoch,loss")
    assert json.loads((m / "train_config.json").read_text())["T"] == 6
    assert run("--out", tmp_path / "s", "--seed", 2, "sample", "--checkpoint", m / "model.dpnt", "--count", 2,
               "--size", 8) == EXIT_OK
    assert len(list((tmp_path / "s").glob("sample_*.png"))) == 2
    assert run("--out", tmp_path / "e", "eval", "--data", data / "data.tnsr", "--checkpoint", m / "model.dpnt",
               "--count", 3) == EXIT_OK
    report = json.loads((tmp_path / "e" / "report.json").read_text())
    assert len(report["items"]) == 3 and report["config"]["clip_x0"] == 1.0
    assert run("--out", tmp_path / "e", "eval", "--data", data / "data.tnsr", "--checkpoint", m / "model.dpnt",
               "--count", 1, "--size", 8) == EXIT_USAGE
    # v-output models refuse a different chain length
    assert run("--out", tmp_path / "s", "sample", "--checkpoint", m / "model.dpnt", "--steps", 9) == EXIT_USAGE


def test_train_conditional_from_config(tmp_path):
    data = tmp_path / "data"
    run("--out", data, "synth-data", "--count", 4, "--size", 8)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 1, "batch_size": 4, "T": 5}))
    assert run("--config", cfg, "--out", tmp_path / "m", "train", "--data", data, "--conditional",
               "--base-channels", 4, "--multipliers", "1", "--output", "epsilon") == EXIT_OK


def test_inpaint_deterministic(tmp_path, ckpt):
    src = write_corpus(tmp_path / "in", n=1)
    img, mask = src / "scene0" / "image.png", src / "scene0" / "mask.png"
    for out in ("a", "b"):
        assert run("--out", tmp_path / out, "inpaint", "--image", img, "--mask", mask, "--checkpoint", ckpt,
                   "--seed", 7) == EXIT_OK
    a = (tmp_path / "a" / "inpainted.png").read_bytes()
    assert a == (tmp_path / "b" / "inpainted.png").read_bytes()
    res = np.asarray(Image.open(tmp_path / "a" / "inpainted.png"))
    orig = np.asarray(Image.open(img))
    keep = np.asarray(Image.open(mask)) < 128
    np.testing.assert_array_equal(res[keep], orig[keep])
    assert run("--out", tmp_path / "c", "inpaint", "--image", img, "--mask", mask, "--checkpoint", ckpt,
               "--variant", "concat") == EXIT_USAGE


def test_data_errors(tmp_path, ckpt):
    src = write_corpus(tmp_path / "in", n=1)
    img = src / "scene0" / "image.png"
    small = tmp_path / "small.png"
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(small)
    assert run("--out", tmp_path / "o", "inpaint", "--image", img, "--mask", small, "--checkpoint", ckpt) == EXIT_DATA
    assert run("--out", tmp_path / "o", "inpaint", "--image", img, "--mask", small,
               "--checkpoint", tmp_path / "missing.dpnt") == EXIT_DATA
    assert run("--out", tmp_path / "o", "eval", "--data", tmp_path / "nothing", "--checkpoint", ckpt) == EXIT_DATA
    junk = tmp_path / "junk.json"
    junk.write_text("{")
    assert run("--config", junk, "synth-data") == EXIT_DATA


def test_divergence_exit_code(tmp_path):
    import torch
    from diffinpaint.denoiser import load_checkpoint, save_checkpoint
    path = write_tiny_checkpoint(tmp_path / "m.dpnt")
    d = load_checkpoint(path)
    with torch.no_grad():
        d.module.conv_out.bias.fill_(float("inf"))
    save_checkpoint(d, path)
    assert run("--out", tmp_path / "s", "sample", "--checkpoint", path, "--count", 1, "--size", 8) == EXIT_DIVERGENCE


def test_make_cd_dataset_env_default(tmp_path, ckpt, monkeypatch):
    src = write_corpus(tmp_path / "in")
    monkeypatch.setenv("DIFFINPAINT_DATA_DIR", str(src))
    assert run("--out", tmp_path / "cd", "--seed", 5, "make-cd-dataset", "--checkpoint", ckpt) == EXIT_OK
    man = json.loads((tmp_path / "cd" / "manifest.json").read_text())
    assert len(man["pairs"]) == 3 and man["config"]["seed"] == 5


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "diffinpaint", "--out", str(tmp_path), "synth-data", "--count", "2",
                           "--size", "8"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "diffinpaint", "eval", "--checkpoint", "x"], capture_output=True,
                          text=True, env={"PATH": "/usr/bin:/bin"})
    assert proc.returncode == 1
