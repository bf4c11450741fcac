"""Acceptance gate: nine pipeline-level criteria at pinned tolerances.

Each test prints one `[criterion N] PASS/FAIL` line with its measurements.
Criteria 4-6 share one desk-scale trained audio->motion model (module-scoped
fixture); criterion 8 trains the renderer at full frame size and is the
longest test in the suite.
"""

import time

import numpy as np
import pytest
import torch
from scipy.stats import spearmanr
from torch.func import functional_call

from stylefuse import data, face_model, lsf, render, style


def _line(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")


# ---------------------------------------------------------------------------
# 1. affine face model exactness


def test_criterion_1_affine_model_exactness(small_basis):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    mean = small_basis.mean_shape.astype(np.float64)
    idb = small_basis.id_basis.astype(np.float64)
    expb = small_basis.exp_basis.astype(np.float64)

    worst = 0.0
    prev = None
    for k in range(1000):
        alpha = rng.normal(0.0, 1.0, size=80)
        beta = rng.normal(0.0, 1.0, size=64)
        got = face_model.reconstruct_shape(small_basis, alpha, beta)
        want = (
            mean
            + np.tensordot(idb, alpha, axes=([2], [0]))
            + np.tensordot(expb, beta, axes=([2], [0]))
        )
        worst = max(worst, float(np.max(np.abs(got - want))))
        if prev is not None and k % 10 == 0:
            p_alpha, p_beta, p_shape = prev
            joint = face_model.reconstruct_shape(small_basis, alpha + p_alpha, beta + p_beta)
            worst = max(worst, float(np.max(np.abs(joint - (got + p_shape - mean)))))
        prev = (alpha, beta, got)
    dt = time.perf_counter() - t0

    ok = worst < 1e-6 and dt < 10.0
    _line(1, ok, f"max abs error {worst:.2e} (<1e-6) over 1000 draws in {dt:.1f}s (<10s)")
    assert worst < 1e-6
    assert dt < 10.0


# ---------------------------------------------------------------------------
# 2. bilinear UV sampling, bit-for-bit against a naive per-pixel oracle


def _naive_uv_sampling_oracle(uv, mask, tex):
    """Reference sampler: explicit double loop over pixels, float32 scalar
    arithmetic, 4-term bilinear mix; invalid pixels stay zero."""
    n_ch, tex_h, tex_w = tex.shape
    _, height, width = uv.shape
    out = np.zeros((n_ch, height, width), dtype=np.float32)
    one = np.float32(1.0)
    sx = np.float32(tex_w - 1)
    sy = np.float32(tex_h - 1)
    for row in range(height):
        for col in range(width):
            if not mask[row, col]:
                continue
            x = uv[0, row, col] * sx
            y = uv[1, row, col] * sy
            x0 = int(np.floor(x))
            y0 = int(np.floor(y))
            x1 = min(x0 + 1, tex_w - 1)
            y1 = min(y0 + 1, tex_h - 1)
            fx = np.float32(x - np.float32(x0))
            fy = np.float32(y - np.float32(y0))
            w00 = (one - fx) * (one - fy)
            w01 = fx * (one - fy)
            w10 = (one - fx) * fy
            w11 = fx * fy
            out[:, row, col] = (
                (tex[:, y0, x0] * w00 + tex[:, y0, x1] * w01) + tex[:, y1, x0] * w10
            ) + tex[:, y1, x1] * w11
    return out


def test_criterion_2_uv_sampling_matches_naive_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    mismatches = 0
    for k in range(100):
        coverage = rng.uniform(0.2, 0.9)
        mask = rng.uniform(size=(224, 224)) < coverage
        uv = rng.uniform(0.0, 1.0, size=(2, 224, 224))
        if k % 7 == 0:  # snap onto texel centers: exercises fx == fy == 0
            uv = np.round(uv * 63.0) / 63.0
        if k % 11 == 0:  # u == v == 1 boundary: exercises neighbor clamping
            uv[:, :3, :] = 1.0
        uv = uv.astype(np.float32)
        uv[:, ~mask] = np.float32(render.UV_SENTINEL)
        uv_image = render.UVImage(uv, mask)
        tex = render.NeuralTexture(rng.normal(0.0, 1.0, size=(16, 64, 64)).astype(np.float32))

        got = render.uv_texture_sampling(uv_image, tex).data
        want = _naive_uv_sampling_oracle(uv_image.data, uv_image.mask, tex.data)
        if not np.array_equal(got.view(np.uint32), want.view(np.uint32)):
            mismatches += 1
    dt = time.perf_counter() - t0

    ok = mismatches == 0 and dt < 60.0
    _line(2, ok, f"{100 - mismatches}/100 pairs bitwise identical at 224^2/64^2 in {dt:.1f}s (<60s)")
    assert mismatches == 0
    assert dt < 60.0


# ---------------------------------------------------------------------------
# 3. style-code invariance suite


def test_criterion_3_style_code_invariances():
    rng = np.random.default_rng(303)
    tol = 1e-7
    worst = 0.0
    for k in range(200):
        n = int(rng.integers(4, 64))
        beta = rng.normal(0.0, rng.uniform(0.2, 2.0), size=(n, 64))
        pose = rng.normal(0.0, rng.uniform(0.2, 2.0), size=(n, 7))
        code = style.style_code(style.MotionSeries(beta, pose, 25.0)).values
        assert code.shape == (135,)

        if k % 4 == 0:  # constant series -> zero code
            cb, cp = np.tile(beta[:1], (n, 1)), np.tile(pose[:1], (n, 1))
            const = style.style_code(style.MotionSeries(cb, cp, 25.0)).values
            worst = max(worst, float(np.max(np.abs(const))))

        off = style.style_code(
            style.MotionSeries(beta + rng.normal(size=64), pose + rng.normal(size=7), 25.0)
        ).values
        worst = max(worst, float(np.max(np.abs(off - code))))

        rev = style.style_code(
            style.MotionSeries(beta[::-1].copy(), pose[::-1].copy(), 25.0)
        ).values
        worst = max(worst, float(np.max(np.abs(rev - code))))

        scale = float(rng.uniform(0.2, 3.0))
        hom = style.style_code(style.MotionSeries(scale * beta, pose, 25.0)).values
        worst = max(worst, float(np.max(np.abs(hom[:128] - scale * code[:128]))))
        worst = max(worst, float(np.max(np.abs(hom[128:] - code[128:]))))

    ok = worst <= tol
    _line(3, ok, f"worst deviation {worst:.2e} (<=1e-7) over 200 series")
    assert worst <= tol


# ---------------------------------------------------------------------------
# 4-6. desk-scale LSF training and its behavioral properties


@pytest.fixture(scope="module")
def desk_lsf(tmp_path_factory):
    """3 specs x 60 clips x 10 s corpus; 2000 Adam iterations at batch 16."""
    specs = [
        data.StyleGeneratorSpec.uniform(s, seed=1000 * i)
        for i, s in enumerate((0.5, 1.0, 2.0))
    ]
    t0 = time.perf_counter()
    clips, _ = data.build_corpus(
        specs, clips_per_spec=60, duration=10.0,
        out_dir=str(tmp_path_factory.mktemp("corpus_desk")),
    )
    windows = data.assemble_training_windows(clips, stride=64)
    model = lsf.LsfModel(lsf.LsfConfig(seed=0))
    report = lsf.train(
        model,
        windows,
        lsf.TrainSettings(learning_rate=5e-4, batch_size=16, iterations=2000, seed=0),
    )
    wall = time.perf_counter() - t0

    held_out = []
    for i, s in enumerate(np.geomspace(0.4, 2.5, 15)):
        spec = data.StyleGeneratorSpec.uniform(float(s), seed=5000 + i)
        held_out.append((spec, data.generate_clip(spec, duration=10.0)))
    return {
        "model": model,
        "report": report,
        "wall": wall,
        "held_out": held_out,
        "n_windows": len(windows),
    }


def _folded_energy_driver(features):
    """Audio channel-0 log-energy folded to motion rate and standardized."""
    e50 = features.frames[:, 0]
    n = len(features) // 2
    drv = 0.5 * (e50[0 : 2 * n : 2] + e50[1 : 2 * n : 2])
    return (drv - drv.mean()) / drv.std()


def _xcorr_peak_lag(a, b, max_lag=10):
    """Lag of the peak of the normalized cross-correlation of 1-D series."""
    a = (a - a.mean()) / max(a.std(), 1e-12)
    b = (b - b.mean()) / max(b.std(), 1e-12)
    lags = range(-max_lag, max_lag + 1)
    scores = []
    for lag in lags:
        if lag >= 0:
            x, y = a[: len(a) - lag], b[lag:]
        else:
            x, y = a[-lag:], b[: len(b) + lag]
        scores.append(float(np.mean(x * y)))
    return list(lags)[int(np.argmax(scores))]


def test_criterion_4_desk_lsf_training(desk_lsf):
    report = desk_lsf["report"]
    ratio = report.final_loss / report.initial_loss

    requested, realized, good_lags = [], [], 0
    for spec, clip in desk_lsf["held_out"]:
        motion = lsf.synthesize(desk_lsf["model"], clip.features, clip.style, window_stride=16)
        realized_code = style.style_code(motion)
        requested.append(float(np.linalg.norm(clip.style.dpose_block)))
        realized.append(float(np.linalg.norm(realized_code.dpose_block)))

        driver = _folded_energy_driver(clip.features)
        trim = lsf.head_trim(desk_lsf["model"].config)
        lag = _xcorr_peak_lag(
            driver[trim : trim + len(motion)], motion.beta[:, spec.mouth_channel]
        )
        if abs(lag) <= 2:
            good_lags += 1
    rho = float(spearmanr(requested, realized).statistic)

    ok = ratio < 0.5 and rho >= 0.7 and good_lags >= 12
    _line(
        4,
        ok,
        f"loss {report.initial_loss:.3f}->{report.final_loss:.3f} (ratio {ratio:.2f}<0.5); "
        f"spearman {rho:.3f} (>=0.7); sync {good_lags}/15 lags within +-2 (>=12); "
        f"{desk_lsf['n_windows']} windows, corpus+train {desk_lsf['wall']:.0f}s",
    )
    assert ratio < 0.5
    assert rho >= 0.7
    assert good_lags >= 12


def test_criterion_5_style_interpolation_monotonicity(desk_lsf):
    low = data.generate_clip(data.StyleGeneratorSpec.uniform(0.5, seed=7100), duration=10.0)
    high = data.generate_clip(data.StyleGeneratorSpec.uniform(2.0, seed=7200), duration=10.0)
    voice = data.generate_clip(data.StyleGeneratorSpec.uniform(1.0, seed=7300), duration=10.0)

    norms = []
    for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
        code = style.interpolate(low.style, high.style, lam)
        motion = lsf.synthesize(desk_lsf["model"], voice.features, code, window_stride=16)
        norms.append(float(np.linalg.norm(style.style_code(motion).dpose_block)))

    gap = norms[-1] - norms[0]
    drops = [norms[i] - norms[i + 1] for i in range(4) if norms[i + 1] < norms[i]]
    ok = gap > 0 and len(drops) <= 1 and all(d <= 0.1 * gap for d in drops)
    _line(
        5,
        ok,
        "realized pose-sigma norms " + " -> ".join(f"{n:.3f}" for n in norms)
        + f"; {len(drops)} inversion(s) (<=1, each <=10% of gap {gap:.3f})",
    )
    assert gap > 0
    assert len(drops) <= 1
    assert all(d <= 0.1 * gap for d in drops)


def test_criterion_6_sliding_window_continuity(desk_lsf):
    clip = data.generate_clip(data.StyleGeneratorSpec.uniform(1.0, seed=7400), duration=10.0)
    motion = lsf.synthesize(
        desk_lsf["model"], clip.features, clip.style, window_stride=16, blend="crossfade"
    )

    cfg = desk_lsf["model"].config
    n_audio = len(clip.features)
    starts = list(range(0, n_audio - cfg.in_len + 1, 2 * 16))
    if starts[-1] != n_audio - cfg.in_len:
        starts.append(n_audio - cfg.in_len)
    trim = lsf.head_trim(cfg)
    window_origins = [(2 * a + cfg.in_len - 2 * cfg.out_len) // 4 - trim for a in starts]

    frames = np.hstack([motion.beta, motion.pose])
    jumps = np.linalg.norm(np.diff(frames, axis=0), axis=1)
    seam_frames = set()
    for origin in window_origins:
        for boundary in (origin, origin + cfg.out_len):  # a window enters / leaves
            if 1 <= boundary <= len(motion) - 1:
                seam_frames.add(boundary)
    seam = [jumps[b - 1] for b in sorted(seam_frames)]
    within = [jumps[i] for i in range(len(jumps)) if (i + 1) not in seam_frames]

    ratio = max(seam) / np.median(within)
    ok = ratio <= 3.0
    _line(
        6,
        ok,
        f"max seam jump {max(seam):.3f} vs median within-window {np.median(within):.3f} "
        f"(ratio {ratio:.2f} <= 3) over {len(seam)} seams",
    )
    assert ratio <= 3.0


# ---------------------------------------------------------------------------
# 7. analytic gradients vs central finite differences


def _finite_difference_worst_error(loss_fn, params, rng, step=1e-5, coords_per_tensor=6):
    """Compare autograd gradients of loss_fn(params) against central FD on a
    random subset of coordinates; returns the worst relative error."""
    grad_params = {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}
    grads = torch.autograd.grad(loss_fn(grad_params), list(grad_params.values()))
    grads = dict(zip(grad_params, grads))

    fd_params = {k: v.detach().clone() for k, v in params.items()}
    worst = 0.0
    for name, tensor in fd_params.items():
        flat = tensor.reshape(-1)
        gflat = grads[name].reshape(-1)
        count = min(coords_per_tensor, flat.numel())
        for i in rng.choice(flat.numel(), size=count, replace=False):
            keep = flat[i].item()
            flat[i] = keep + step
            up = loss_fn(fd_params).item()
            flat[i] = keep - step
            down = loss_fn(fd_params).item()
            flat[i] = keep
            fd = (up - down) / (2.0 * step)
            analytic = gflat[i].item()
            denom = max(abs(analytic), abs(fd), 1e-7)
            worst = max(worst, abs(analytic - fd) / denom)
    return worst


def test_criterion_7_gradient_checks():
    rng = np.random.default_rng(707)

    # (i) l1_loss o forward on a tiny audio->motion model, float64 throughout.
    config = lsf.LsfConfig(
        latent_dim=8, encoder_blocks=1, decoder_blocks=1, dropout_rate=0.0, seed=11
    )
    model = lsf.LsfModel(config).double()
    audio_win = torch.from_numpy(rng.normal(size=(80, 29)))
    style_vec = torch.from_numpy(rng.normal(size=(135,)))
    with torch.no_grad():
        base_beta, base_pose = model(audio_win, style_vec)
    # keep every |.| residual >= 0.5 so no finite-difference step crosses a kink
    gt_beta = base_beta - torch.from_numpy(
        rng.choice([-1.0, 1.0], size=(32, 64)) * rng.uniform(0.5, 1.5, size=(32, 64))
    )
    gt_pose = base_pose - torch.from_numpy(
        rng.choice([-1.0, 1.0], size=(32, 7)) * rng.uniform(0.5, 1.5, size=(32, 7))
    )

    def lsf_loss(params):
        beta, pose = functional_call(model, params, (audio_win, style_vec))
        return lsf.l1_loss(beta, pose, gt_beta, gt_pose)

    worst_lsf = _finite_difference_worst_error(
        lsf_loss, dict(model.named_parameters()), rng
    )

    # (ii) render_loss through translate o uv_texture_sampling o texture_net
    # on 8x8 textures and 8x8 frames.
    class _RenderChain(torch.nn.Module):
        def __init__(self, texture_net, translate_net):
            super().__init__()
            self.texture_net = texture_net
            self.translate_net = translate_net

        def forward(self, rgb, uv, mask):
            tex = self.texture_net(rgb)[0]
            sampled = render.sample_texture_batch(uv, mask, tex)
            return self.translate_net(sampled)

    config = render.RenderConfig(
        image_size=8, texture_size=8, texture_base=4, translate_base=4, seed=21
    )
    texture_net, translate_net = render.build_render_nets(config)
    chain = _RenderChain(texture_net, translate_net).double()
    rgb = torch.from_numpy(rng.uniform(0.1, 0.9, size=(1, 3, 8, 8)))
    mask_np = rng.uniform(size=(8, 8)) < 0.8
    uv_np = rng.uniform(0.05, 0.95, size=(1, 2, 8, 8))
    uv_t = torch.from_numpy(uv_np)
    mask_t = torch.from_numpy(mask_np)[None]
    phi = render.IdentityExtractor()
    with torch.no_grad():
        base = chain(rgb, uv_t, mask_t)
    gt_frame = base - torch.from_numpy(
        rng.choice([-1.0, 1.0], size=tuple(base.shape)) * rng.uniform(0.5, 1.5, size=tuple(base.shape))
    )

    def render_chain_loss(params):
        pred = functional_call(chain, params, (rgb, uv_t, mask_t))
        return render.render_loss(pred, gt_frame, phi=phi)

    worst_render = _finite_difference_worst_error(
        render_chain_loss, dict(chain.named_parameters()), rng
    )

    ok = worst_lsf < 1e-3 and worst_render < 1e-3
    _line(
        7,
        ok,
        f"worst relative gradient error: audio->motion {worst_lsf:.2e}, "
        f"render chain {worst_render:.2e} (both <1e-3, residuals kept off |.| kinks)",
    )
    assert worst_lsf < 1e-3
    assert worst_render < 1e-3


# ---------------------------------------------------------------------------
# 8. desk-scale render training at full frame size


def test_criterion_8_desk_render_training():
    t0 = time.perf_counter()
    basis = face_model.generate_synthetic_basis(seed=0)
    dataset = render.build_toy_render_set(
        basis, n_frames=16, seed=0, image_size=224, texture_size=64
    )
    config = render.RenderConfig(seed=0)
    texture_net, translate_net = render.build_render_nets(config)
    phi = render.PerceptualExtractor(seed=config.perceptual_seed)
    report = render.train_render(
        texture_net,
        translate_net,
        dataset,
        render.RenderTrainSettings(learning_rate=2e-4, batch_size=4, iterations=2000, seed=0),
        phi=phi,
    )
    ratio = report.final_loss / report.initial_loss

    # texture round trip: the RGB texture extracted from the portrait,
    # sampled back through the portrait's own UV image, must reproduce the
    # covered face region.
    portrait_uv = dataset.uv_images[0]
    resampled = render.uv_texture_sampling(portrait_uv, dataset.rgb_texture)
    face = portrait_uv.mask
    mae = float(np.mean(np.abs(resampled.data[:, face] - dataset.portrait[:, face])))
    dt = time.perf_counter() - t0

    ok = ratio < 0.5 and mae <= 0.05 and dt < 1200.0
    _line(
        8,
        ok,
        f"loss {report.initial_loss:.3f}->{report.final_loss:.3f} (ratio {ratio:.2f}<0.5); "
        f"texture round-trip MAE {mae:.4f} (<=0.05); {dt:.0f}s (<1200s)",
    )
    assert ratio < 0.5
    assert mae <= 0.05
    assert dt < 1200.0


# ---------------------------------------------------------------------------
# 9. pipeline constant conformance


def test_criterion_9_constant_conformance(small_basis):
    clip = data.generate_clip(data.StyleGeneratorSpec.uniform(1.0, seed=9), duration=2.0)
    checks = {
        "audio features 29-dim": clip.features.frames.shape[1] == 29,
        "audio features 50 fps": clip.features.fps == 50.0,
        "style code 135-dim": clip.style.values.shape == (135,),
        "motion 25 fps": clip.motion.fps == 25.0,
        "expression 64-dim": clip.motion.beta.shape[1] == 64,
        "pose 7-dim": clip.motion.pose.shape[1] == 7,
        "identity basis 80-dim": small_basis.id_basis.shape[2] == 80,
    }

    config = lsf.LsfConfig()
    checks["window 80 audio frames"] = config.in_len == 80
    checks["window 32 motion frames"] = config.out_len == 32
    model = lsf.LsfModel(config)
    beta, pose = model(np.zeros((80, 29), dtype=np.float32), np.zeros(135, dtype=np.float32))
    checks["predicted windows (32, 64)/(32, 7)"] = (
        tuple(beta.shape) == (32, 64) and tuple(pose.shape) == (32, 7)
    )

    uv = render.rasterize_uv(small_basis, face_model.FaceParams(), image_size=224)
    checks["uv image 2x224x224"] = uv.data.shape == (2, 224, 224)

    texture_net, translate_net = render.build_render_nets(render.RenderConfig())
    with torch.no_grad():
        tex = texture_net(torch.rand(1, 3, 64, 64))
        checks["neural texture 16x64x64"] = tuple(tex.shape) == (1, 16, 64, 64)
        sampled = render.sample_texture_batch(
            torch.from_numpy(uv.data)[None], torch.from_numpy(uv.mask)[None], tex[0]
        )
        frame = translate_net(sampled)
        checks["rendered frame 3x224x224"] = tuple(frame.shape) == (1, 3, 224, 224)

    failed = [name for name, passed in checks.items() if not passed]
    _line(9, not failed, f"{len(checks) - len(failed)}/{len(checks)} dimension checks"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert not failed
