"""Acceptance criteria 1-12.

Each test records one ``criterion N: PASS|FAIL`` line; the lines are printed
as they happen (visible with ``-s``) and again in the terminal summary.
Running this file directly (``python tests/test_acceptance.py``) executes
the suite and prints the same lines.
"""
import json
import math
import sys
import time

import numpy as np
import pytest
import torch

from diffinpaint import (build_schedule, forward_diffuse, forward_kernel_step, repaint_inpaint, reverse_step,
                         sample_unconditional)
from diffinpaint.changedet import build_cd_dataset
from diffinpaint.denoiser import (DenoiserSpec, GaussianMixture, equicorrelated_gaussian, gmm_posterior_mean_x0,
                                  make_gmm_oracle, make_trainable_denoiser)
from diffinpaint.metrics import evaluate_inpainting, moment_report, psnr, ssim
from diffinpaint.training import (TrainConfig, epsilon_loss, extract_patches, make_synthetic_dataset, patch_origins,
                                  train)

from helpers import write_corpus, write_tiny_checkpoint
from test_denoiser import brute_force_posterior_mean

RESULTS = []


def record(n, ok, detail, elapsed=None):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    if elapsed is not None:
        line += f"  [{elapsed:.2f} s]"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_forward_marginal():
    t0 = time.perf_counter()
    s = build_schedule("linear", 50)
    rng = np.random.default_rng(1)
    n = 20000
    x = np.full(n, 0.7)
    for t in range(1, 51):
        x = forward_kernel_step(x, t, rng.standard_normal(n), s)
    ab = s.alpha_bar_at(50)
    mean_target, var_target = np.sqrt(ab) * 0.7, 1 - ab
    se = np.sqrt(var_target / n)
    z = abs(x.mean() - mean_target) / se
    var_err = abs(x.var() - var_target) / var_target
    elapsed = time.perf_counter() - t0
    record(1, z < 4 and var_err < 0.05 and elapsed < 10,
           f"mean off by {z:.2f} SE (<4), variance off by {100 * var_err:.2f}% (<5%)", elapsed)


def test_criterion_02_single_step_inversion():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        beta = rng.uniform(1e-4, 0.999)
        s = build_schedule("linear", 1, beta, beta)
        x0, eps = rng.standard_normal((2, 8, 8))
        x1 = forward_diffuse(x0, 1, eps, s)
        worst = max(worst, np.max(np.abs(reverse_step(x1, 1, eps, np.zeros_like(x0), s) - x0)))
    elapsed = time.perf_counter() - t0
    record(2, worst < 1e-6 and elapsed < 1, f"max abs error {worst:.2e} (<1e-6)", elapsed)


def test_criterion_03_oracle_vs_brute_force():
    t0 = time.perf_counter()
    gmm = GaussianMixture([0.3, 0.7], [-1.5, 1.5], [0.3, 0.3])
    s = build_schedule("linear", 200)
    xs = np.linspace(-4, 4, 20)
    worst = 0.0
    for t in np.linspace(1, 200, 10).astype(int):
        got = gmm_posterior_mean_x0(gmm, xs, int(t), s)
        ref = np.array([brute_force_posterior_mean(gmm, x, s.alpha_bar_at(int(t))) for x in xs])
        worst = max(worst, np.max(np.abs(got - ref)))
    elapsed = time.perf_counter() - t0
    record(3, worst < 1e-4 and elapsed < 5, f"max abs deviation {worst:.2e} (<1e-4)", elapsed)


def test_criterion_04_oracle_sampling():
    t0 = time.perf_counter()
    gmm = GaussianMixture([0.3, 0.7], [-1.5, 1.5], [0.3, 0.3])
    s = build_schedule("linear", 200)
    x = sample_unconditional(make_gmm_oracle(gmm, s), s, (20000, 1, 1, 1), 4)
    rep = moment_report(x, gmm)
    dw = np.max(np.abs(rep.weight_dev))
    dm = np.max(np.abs(rep.means - gmm.means[:, 0]))
    ds = np.max(np.abs(rep.std_dev))
    elapsed = time.perf_counter() - t0
    record(4, dw <= 0.03 and dm <= 0.05 and ds <= 0.05 and elapsed < 120,
           f"weights {np.round(rep.weights, 3).tolist()} means {np.round(rep.means, 3).tolist()} "
           f"stds {np.round(rep.stds, 3).tolist()}; max dev w {dw:.3f} mu {dm:.3f} sd {ds:.3f}", elapsed)


def test_criterion_05_repaint_exactness():
    t0 = time.perf_counter()
    s = build_schedule("linear", 50)
    oracle = make_gmm_oracle(GaussianMixture([0.3, 0.7], [-0.5, 0.5], [0.2, 0.2]), s)
    rng = np.random.default_rng(5)
    xk = rng.uniform(-1, 1, (16, 1, 8, 8)).astype(np.float32)
    masks = (rng.random((16, 8, 8)) < 0.5).astype(np.float32)
    out = repaint_inpaint(xk, masks, oracle, s, 5)
    known_err = float(np.max(np.abs(out - xk)[masks[:, None] == 1]))
    ones = repaint_inpaint(xk, np.ones((8, 8)), oracle, s, 6)
    zeros = repaint_inpaint(xk, np.zeros((8, 8)), oracle, s, 7)
    uncond = sample_unconditional(oracle, s, xk.shape, 7)
    ok_ones, ok_zeros = np.array_equal(ones, xk), np.array_equal(zeros, uncond)
    elapsed = time.perf_counter() - t0
    record(5, known_err < 1e-6 and ok_ones and ok_zeros and elapsed < 30,
           f"known-pixel max error {known_err:.1e}; all-ones == x_known: {ok_ones}; "
           f"all-zeros == unconditional bit-for-bit: {ok_zeros}", elapsed)


def test_criterion_06_posterior_pull():
    t0 = time.perf_counter()
    s = build_schedule("linear", 200)
    gmm = equicorrelated_gaussian(2, 0.9)
    oracle = make_gmm_oracle(gmm, s)
    n = 5000
    xk = np.zeros((n, 1, 1, 2), np.float32)
    xk[..., 0] = 1.0
    mask = np.array([[1.0, 0.0]])
    out = repaint_inpaint(xk, mask, oracle, s, 6)
    px2 = out[:, 0, 0, 1].astype(np.float64)
    mean, se = px2.mean(), px2.std(ddof=1) / np.sqrt(n)
    # closer to 0.9 than to 0 <=> mean > 0.45; one-sided 95% bound
    lower = mean - 1.645 * se
    elapsed = time.perf_counter() - t0
    record(6, abs(mean - 0.9) < abs(mean) and lower > 0.45 and np.all(out[:, 0, 0, 0] == 1.0) and elapsed < 120,
           f"pixel-2 mean {mean:.3f} (95% lower bound {lower:.3f} > 0.45), "
           f"|mean-0.9| {abs(mean - 0.9):.3f} < |mean-0| {abs(mean):.3f}", elapsed)


@pytest.mark.slow
def test_criterion_07_training_sanity():
    t0 = time.perf_counter()
    s = build_schedule("linear", 200)
    data = make_synthetic_dataset("gaussian-blob-textures", {"shape": (3, 16, 16)}, 200, 7)
    spec = DenoiserSpec(3, 16, (1, 2, 2))
    d = make_trainable_denoiser(spec, 0)
    rng = np.random.default_rng(70)
    x = rng.standard_normal((4, 3, 32, 32)).astype(np.float32)  # 12,288 elements
    eps = rng.standard_normal(x.shape)
    zero_loss = epsilon_loss(d.predict_epsilon(x, 100), eps)
    _, curve = train(d, data, TrainConfig(epochs=30, batch_size=32, T=200, seed=7), s)
    first, last = curve.epoch_means[0], curve.epoch_means[-1]
    elapsed = time.perf_counter() - t0
    record(7, last < 0.8 * first and abs(zero_loss - 1.0) <= 0.05 and elapsed < 900,
           f"epoch loss {first:.3f} -> {last:.3f} (ratio {last / first:.3f} < 0.8); "
           f"zero-init baseline {zero_loss:.4f} (1 +- 0.05)", elapsed)


def test_criterion_08_gradient_check():
    t0 = time.perf_counter()
    spec = DenoiserSpec(1, 2, (1, 1), norm_groups=1, time_embed_dim=4, zero_init_output=False)
    module = make_trainable_denoiser(spec, 8).module.double()
    params = list(module.parameters())
    n_params = sum(p.numel() for p in params)
    rng = np.random.default_rng(8)
    x = torch.from_numpy(rng.standard_normal((2, 1, 4, 4)))
    t = torch.tensor([5.0, 150.0], dtype=torch.float64)
    eps = torch.from_numpy(rng.standard_normal((2, 1, 4, 4)))

    def loss():
        return torch.mean((module(x, t) - eps) ** 2)

    module.zero_grad()
    loss().backward()
    analytic = torch.cat([p.grad.flatten() for p in params]).numpy()
    numeric, h = [], 1e-3
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss().item()
                flat[i] = orig - h
                down = loss().item()
                flat[i] = orig
                numeric.append((up - down) / (2 * h))
    numeric = np.array(numeric)
    rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    elapsed = time.perf_counter() - t0
    record(8, n_params <= 1000 and rel.max() < 1e-3,
           f"{n_params} parameters, max relative error {rel.max():.2e} (<1e-3)", elapsed)


@pytest.mark.slow
def test_criterion_09_conditional_utility():
    t0 = time.perf_counter()
    s = build_schedule("linear", 200)
    data = make_synthetic_dataset("gaussian-blob-textures", {"shape": (3, 16, 16)}, 1050, 9)
    train_set, held_out = data[:1000], data[1000:]
    spec = DenoiserSpec(3, 16, (1, 2, 2), conditional=True, output="v", schedule=s.to_dict())
    d = make_trainable_denoiser(spec, 0)
    train(d, train_set, TrainConfig(epochs=20, batch_size=32, T=200, learning_rate=2e-3, seed=9), s)
    rep = evaluate_inpainting(d, held_out, s, mask_kind="rectangles", coverage=0.25, variant="concat", rng=90,
                              clip_x0=1.0)
    gain = rep.masked_psnr_mean - rep.baseline_masked_psnr_mean
    elapsed = time.perf_counter() - t0
    record(9, len(held_out) == 50 and gain >= 1.0,
           f"masked PSNR {rep.masked_psnr_mean:.2f} dB vs mean-fill {rep.baseline_masked_psnr_mean:.2f} dB "
           f"(gain {gain:+.2f} dB >= 1); full-image SSIM {rep.ssim_mean:.3f}", elapsed)


def test_criterion_10_metric_truths():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    a = rng.random((3, 16, 16))
    p = psnr(a, a + 0.1, 1.0)
    self_ssim = ssim(a, a)
    sym = max(abs(ssim(x, y) - ssim(y, x)) for x, y in (rng.random((2, 16, 16)) for _ in range(100)))
    c1 = 0.01 ** 2
    closed = (2 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1)
    const = ssim(np.full((16, 16), 0.5), np.full((16, 16), 0.6))
    ok = abs(p - 20.0) <= 1e-6 and self_ssim == 1.0 and sym <= 1e-12 and abs(const - closed) <= 1e-6
    record(10, ok, f"PSNR {p:.9f} dB; ssim(a,a) {self_ssim}; max asymmetry {sym:.1e}; "
                   f"constant SSIM {const:.9f} vs {closed:.9f}", time.perf_counter() - t0)


def test_criterion_11_patches():
    t0 = time.perf_counter()
    n9 = len(extract_patches(np.zeros((3, 128, 128)), 64, 0.5))
    rng = np.random.default_rng(11)
    covered = 0
    for _ in range(100):
        h, w = rng.integers(8, 200, 2)
        size = int(rng.integers(1, min(h, w) + 1))
        overlap = float(rng.uniform(0, 0.9))
        stride = max(1, int(round(size * (1 - overlap))))
        hit = np.zeros((h, w), bool)
        for i in patch_origins(h, size, stride):
            for j in patch_origins(w, size, stride):
                hit[i:i + size, j:j + size] = True
        covered += bool(hit.all())
    record(11, n9 == 9 and covered == 100, f"{n9} patches from 128x128; full coverage on {covered}/100 random sizes",
           time.perf_counter() - t0)


def test_criterion_12_dataset_factory(tmp_path):
    from PIL import Image
    t0 = time.perf_counter()
    src = write_corpus(tmp_path / "in", n=3, size=16)
    ckpt = write_tiny_checkpoint(tmp_path / "m.dpnt", T=8)
    cfg = {"seed": 12, "checkpoint": str(ckpt)}
    man = build_cd_dataset(src, tmp_path / "out1", cfg)
    outside_ok = True
    for rec in man["pairs"]:
        a = np.asarray(Image.open(tmp_path / "out1" / rec["a"]))
        b = np.asarray(Image.open(tmp_path / "out1" / rec["b"]))
        change = np.asarray(Image.open(tmp_path / "out1" / rec["mask"])) >= 128
        outside_ok &= np.array_equal(a[~change], b[~change])
    build_cd_dataset(src, tmp_path / "out2", cfg)
    files = sorted(p.relative_to(tmp_path / "out1") for p in (tmp_path / "out1").rglob("*") if p.is_file())
    identical = all((tmp_path / "out1" / f).read_bytes() == (tmp_path / "out2" / f).read_bytes() for f in files)
    record(12, len(man["pairs"]) == 3 and outside_ok and identical,
           f"{len(man['pairs'])} pairs; outside-region bit-identical: {outside_ok}; "
           f"rerun byte-identical over {len(files)} files: {identical}", time.perf_counter() - t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
