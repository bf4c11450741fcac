"""Latent style fusion: audio-window -> motion-window regression.

The model maps an 80-frame / 29-channel audio feature window plus a 135-dim
style code to a 32-frame motion window (64 expression + 7 pose channels).
Architecture: residual temporal-conv encoder over the audio, one stride-2
stage followed by linear time-resampling to the 32 output frames, seeded
dropout applied to the audio latent only (so at inference the style input is
never corrupted), per-frame concatenation of the style code, residual
temporal-conv decoder, and two linear heads.

Training minimizes mean|beta - beta_gt| + mean|pose - pose_gt| with Adam.
All stochastic pieces (parameter init, dropout, batch sampling) draw from
explicit seeded generators, so runs are reproducible.
"""

import csv
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .containers import ContainerError, read_container, require_meta, write_container
from .style import BETA_DIM, POSE_DIM, STYLE_DIM, MotionSeries
from .audio import FEATURE_DIM


@dataclass
class LsfConfig:
    audio_dim: int = FEATURE_DIM
    style_dim: int = STYLE_DIM
    beta_dim: int = BETA_DIM
    pose_dim: int = POSE_DIM
    in_len: int = 80
    out_len: int = 32
    latent_dim: int = 96
    encoder_blocks: int = 3
    decoder_blocks: int = 4
    dropout_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("audio_dim", "style_dim", "beta_dim", "pose_dim", "latent_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.in_len < 4 or self.in_len % 2 != 0:
            raise ValueError("in_len must be an even number >= 4")
        if not 1 <= self.out_len <= self.in_len // 2:
            raise ValueError("out_len must lie in [1, in_len // 2]")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.encoder_blocks < 1 or self.decoder_blocks < 1:
            raise ValueError("need at least one encoder and one decoder block")


class _ResBlock1d(nn.Module):
    def __init__(self, channels, kernel=3):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv1d(channels, channels, kernel, padding=pad)
        self.conv2 = nn.Conv1d(channels, channels, kernel, padding=pad)

    def forward(self, h):
        return F.relu(h + self.conv2(F.relu(self.conv1(h))))


def _seeded_init(module, seed):
    # uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for every conv weight and bias,
    # drawn from one generator in module-definition order
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Conv1d) or isinstance(m, nn.Conv2d):
                fan_in = m.in_channels
                for k in m.kernel_size:
                    fan_in *= k
                bound = 1.0 / np.sqrt(fan_in)
                m.weight.copy_((torch.rand(m.weight.shape, generator=gen) * 2 - 1) * bound)
                if m.bias is not None:
                    m.bias.copy_((torch.rand(m.bias.shape, generator=gen) * 2 - 1) * bound)


class LsfModel(nn.Module):
    """See module docstring.  forward() takes torch tensors or numpy arrays."""

    def __init__(self, config=None):
        super().__init__()
        self.config = config or LsfConfig()
        c = self.config
        self.stem = nn.Conv1d(c.audio_dim, c.latent_dim, 5, padding=2)
        self.encoder = nn.ModuleList(_ResBlock1d(c.latent_dim) for _ in range(c.encoder_blocks))
        self.down = nn.Conv1d(c.latent_dim, c.latent_dim, 4, stride=2, padding=1)
        self.fuse = nn.Conv1d(c.latent_dim + c.style_dim, c.latent_dim, 1)
        self.decoder = nn.ModuleList(_ResBlock1d(c.latent_dim) for _ in range(c.decoder_blocks))
        self.head_beta = nn.Conv1d(c.latent_dim, c.beta_dim, 3, padding=1)
        self.head_pose = nn.Conv1d(c.latent_dim, c.pose_dim, 3, padding=1)
        _seeded_init(self, c.seed)
        self.reset_dropout_rng(c.seed + 1)

    def reset_dropout_rng(self, seed):
        self._drop_gen = torch.Generator().manual_seed(int(seed))

    def _dtype(self):
        return self.head_beta.weight.dtype

    def forward(self, audio, style, training=False):
        """(in_len, audio_dim) or (B, in_len, audio_dim) -> (out_len, beta/pose) windows.

        `training=True` enables the seeded latent dropout; inference is
        deterministic and bitwise repeatable.
        """
        c = self.config
        audio = torch.as_tensor(np.asarray(audio.detach() if torch.is_tensor(audio) else audio), dtype=self._dtype()) \
            if not torch.is_tensor(audio) else audio.to(self._dtype())
        style = torch.as_tensor(np.asarray(style), dtype=self._dtype()) if not torch.is_tensor(style) \
            else style.to(self._dtype())
        squeeze = audio.dim() == 2
        if squeeze:
            audio = audio[None]
        if style.dim() == 1:
            style = style[None].expand(audio.shape[0], -1)
        if audio.dim() != 3 or audio.shape[1:] != (c.in_len, c.audio_dim):
            raise ValueError(
                f"audio window must be (B, {c.in_len}, {c.audio_dim}), got {tuple(audio.shape)}"
            )
        if style.dim() != 2 or style.shape != (audio.shape[0], c.style_dim):
            raise ValueError(
                f"style must be ({audio.shape[0]}, {c.style_dim}), got {tuple(style.shape)}"
            )

        h = F.relu(self.stem(audio.transpose(1, 2)))
        for block in self.encoder:
            h = block(h)
        h = F.relu(self.down(h))
        h = F.interpolate(h, size=c.out_len, mode="linear", align_corners=True)
        if training and c.dropout_rate > 0.0:
            keep = (
                torch.rand(h.shape, generator=self._drop_gen) >= c.dropout_rate
            ).to(h.dtype) / (1.0 - c.dropout_rate)
            h = h * keep
        s = style[:, :, None].expand(-1, -1, c.out_len)
        h = F.relu(self.fuse(torch.cat([h, s], dim=1)))
        for block in self.decoder:
            h = block(h)
        beta = self.head_beta(h).transpose(1, 2)
        pose = self.head_pose(h).transpose(1, 2)
        if squeeze:
            return beta[0], pose[0]
        return beta, pose


def l1_loss(pred_beta, pred_pose, gt_beta, gt_pose):
    """mean|d beta| + mean|d pose| (scalar tensor; call float() for a number)."""
    pb, pp = torch.as_tensor(pred_beta), torch.as_tensor(pred_pose)
    gb = torch.as_tensor(gt_beta, dtype=pb.dtype)
    gp = torch.as_tensor(gt_pose, dtype=pp.dtype)
    if pb.shape != gb.shape or pp.shape != gp.shape:
        raise ValueError("prediction/target shapes disagree")
    return torch.mean(torch.abs(pb - gb)) + torch.mean(torch.abs(pp - gp))


@dataclass
class TrainSettings:
    learning_rate: float = 5e-4
    batch_size: int = 128
    iterations: int = 50_000
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.iterations < 0:
            raise ValueError("invalid training settings")


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def initial_loss(self):
        return self.losses[0] if self.losses else float("nan")

    @property
    def final_loss(self):
        """Mean over the last 50 recorded iterations (noise-robust endpoint)."""
        if not self.losses:
            return float("nan")
        tail = self.losses[-50:]
        return float(np.mean(tail))


def write_report(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        for i, loss in enumerate(report.losses):
            w.writerow([i, f"{loss:.6f}"])


def _stack_dataset(dataset, cfg):
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    audio = np.stack([np.asarray(s[0], dtype=np.float32) for s in dataset])
    style = np.stack([np.asarray(s[1], dtype=np.float32) for s in dataset])
    beta = np.stack([np.asarray(s[2], dtype=np.float32) for s in dataset])
    pose = np.stack([np.asarray(s[3], dtype=np.float32) for s in dataset])
    want = {
        "audio": (cfg.in_len, cfg.audio_dim),
        "style": (cfg.style_dim,),
        "beta": (cfg.out_len, cfg.beta_dim),
        "pose": (cfg.out_len, cfg.pose_dim),
    }
    for name, arr in (("audio", audio), ("style", style), ("beta", beta), ("pose", pose)):
        if arr.shape[1:] != want[name]:
            raise ValueError(f"dataset {name} windows must be {want[name]}, got {arr.shape[1:]}")
    return tuple(torch.from_numpy(a) for a in (audio, style, beta, pose))


def train(model, dataset, settings=None):
    """Adam on the two-term L1 loss over (audio, style, beta, pose) samples.

    Returns a TrainReport with one loss value per iteration.  Deterministic
    for fixed seeds and a fixed dataset order.
    """
    settings = settings or TrainSettings()
    audio, style, beta, pose = _stack_dataset(dataset, model.config)
    rng = np.random.default_rng(settings.seed)
    model.reset_dropout_rng(settings.seed + 1)
    opt = torch.optim.Adam(model.parameters(), lr=settings.learning_rate)
    report = TrainReport(iterations=settings.iterations)
    n = audio.shape[0]
    for _ in range(settings.iterations):
        idx = torch.from_numpy(rng.integers(0, n, size=settings.batch_size))
        pb, pp = model(audio[idx], style[idx], training=True)
        loss = l1_loss(pb, pp, beta[idx], pose[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
        report.losses.append(float(loss.detach()))
    return report


def head_trim(config=None):
    """Motion frames discarded at each end of a clip (window centering margin)."""
    config = config or LsfConfig()
    return (config.in_len // 2 - config.out_len) // 2


def synthesize(model, features, style, window_stride=16, blend="crossfade"):
    """Full-clip synthesis by sliding windows over the audio features.

    window_stride is in motion frames: successive windows advance
    2 * window_stride audio frames (the last window is clamped to the clip
    end), so stride = out_len means non-overlapping output windows.
    Overlapping predictions are blended.  Center alignment leaves a
    head_trim-frame margin at each end, so an A-frame feature sequence
    yields A // 2 - 2 * head_trim motion frames at half the audio frame
    rate; output frame i corresponds to motion time (i + head_trim) / fps
    into the clip.

    blend: "crossfade" (triangular weights) or "overlap_mean".  Frames seen
    by exactly one window are copied from that window's raw output, so
    non-overlapping strides reduce to exact concatenation.
    """
    if blend not in ("crossfade", "overlap_mean"):
        raise ValueError(f"unknown blend mode {blend!r}")
    if window_stride < 1:
        raise ValueError("window_stride must be >= 1")
    c = model.config
    if features.frames.shape[1] != c.audio_dim:
        raise ValueError(
            f"feature dim {features.frames.shape[1]} does not match model audio_dim {c.audio_dim}"
        )
    n_audio = len(features)
    if n_audio < c.in_len:
        raise ValueError(f"clip too short: {n_audio} audio frames < window of {c.in_len}")
    starts = list(range(0, n_audio - c.in_len + 1, 2 * window_stride))
    if starts[-1] != n_audio - c.in_len:
        starts.append(n_audio - c.in_len)  # edge clamp

    from .audio import motion_window_start

    m_first = motion_window_start(starts[0], c.in_len, c.out_len)
    m_last_end = motion_window_start(starts[-1], c.in_len, c.out_len) + c.out_len
    total = m_last_end - m_first
    dims = c.beta_dim + c.pose_dim
    num = np.zeros((total, dims))
    den = np.zeros(total)
    count = np.zeros(total, dtype=np.int64)
    single = np.zeros((total, dims))

    if blend == "crossfade":
        w = np.minimum(np.arange(1, c.out_len + 1), np.arange(c.out_len, 0, -1)).astype(np.float64)
    else:
        w = np.ones(c.out_len)

    style_vec = style.values if hasattr(style, "values") else np.asarray(style, dtype=np.float64)
    model_was_training = model.training
    model.eval()
    with torch.no_grad():
        for a0 in starts:
            pb, pp = model(features.frames[a0 : a0 + c.in_len], style_vec, training=False)
            raw = np.concatenate(
                [pb.numpy().astype(np.float64), pp.numpy().astype(np.float64)], axis=1
            )
            m0 = motion_window_start(a0, c.in_len, c.out_len) - m_first
            num[m0 : m0 + c.out_len] += raw * w[:, None]
            den[m0 : m0 + c.out_len] += w
            count[m0 : m0 + c.out_len] += 1
            single[m0 : m0 + c.out_len] = raw
    if model_was_training:
        model.train()

    out = num / den[:, None]
    once = count == 1
    out[once] = single[once]
    return MotionSeries(out[:, : c.beta_dim], out[:, c.beta_dim :], fps=features.fps / 2.0)


def save_lsf_checkpoint(model, path, iteration=0):
    state = model.state_dict()
    blobs = [(name, tensor.detach().cpu().numpy()) for name, tensor in state.items()]
    meta = {
        "config": asdict(model.config),
        "iteration": int(iteration),
        "seed": model.config.seed,
        "params": [name for name, _ in blobs],
    }
    write_container(path, "lsf-checkpoint", blobs, meta=meta)


def load_lsf_checkpoint(path):
    """Returns (model, iteration)."""
    meta, arrays = read_container(path, expect_kind="lsf-checkpoint")
    cfg_dict = require_meta(meta, "config", path)
    known = {f.name for f in fields(LsfConfig)}
    extra = set(cfg_dict) - known
    if extra:
        raise ContainerError(f"{path}: unknown config fields {sorted(extra)}")
    try:
        cfg = LsfConfig(**cfg_dict)
    except (TypeError, ValueError) as exc:
        raise ContainerError(f"{path}: bad config ({exc})") from None
    model = LsfModel(cfg)
    state = {}
    for name, tensor in model.state_dict().items():
        if name not in arrays:
            raise ContainerError(f"{path}: missing parameter blob '{name}'")
        arr = arrays[name]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise ContainerError(
                f"{path}: parameter '{name}' has shape {arr.shape}, expected {tuple(tensor.shape)}"
            )
        state[name] = torch.from_numpy(arr)
    model.load_state_dict(state)
    model.eval()
    return model, int(meta.get("iteration", 0))
