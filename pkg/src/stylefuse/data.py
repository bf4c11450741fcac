"""Synthetic talking-style corpus: waveform audio + coupled 3DMM motion.

Each clip draws a band-limited noise carrier shaped by a smooth syllabic
envelope, extracts the 29-channel features from that waveform, and then
drives the motion channels from the realized feature energy: the mouth
channel follows the envelope directly, while the remaining expression and
pose channels mix an envelope-derived component (fixed per-channel smoothing
/delay/sign kernels shared by the whole corpus) with seeded smooth noise.
The per-channel amplitudes come from the StyleGeneratorSpec, so realized
style codes scale linearly with the requested scales and remain predictable
from audio — without the coupling, the non-mouth channels would be pure
noise and any L1-trained model would rightly predict constants for them.
"""

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import AudioClip, AudioFeatureSequence, load_features, save_features, save_wav, surrogate_features, window_pairs
from .containers import ContainerError, read_container, write_container
from .style import BETA_DIM, POSE_DIM, MotionSeries, StyleCode, load_motion, load_style, save_motion, save_style, style_code

SAMPLE_RATE = 16_000
_KERNEL_SEED = 3021977  # corpus-level coupling kernels; never varies per clip


@dataclass
class StyleGeneratorSpec:
    """Target per-channel motion amplitudes for one synthetic speaker style."""

    beta_scales: np.ndarray = field(default_factory=lambda: np.full(BETA_DIM, 0.5))
    pose_scale: float = 0.08
    envelope_gain: float = 1.0
    seed: int = 0
    mouth_channel: int = 0
    audio_coupling: float = 0.7

    def __post_init__(self):
        self.beta_scales = np.ascontiguousarray(self.beta_scales, dtype=np.float64).reshape(-1)
        if self.beta_scales.shape != (BETA_DIM,):
            raise ValueError(f"beta_scales must have {BETA_DIM} entries")
        if self.beta_scales.min() < 0 or self.pose_scale < 0 or self.envelope_gain < 0:
            raise ValueError("scales must be nonnegative")
        if not 0 <= self.mouth_channel < BETA_DIM:
            raise ValueError("mouth_channel out of range")
        if not 0.0 <= self.audio_coupling <= 1.0:
            raise ValueError("audio_coupling must lie in [0, 1]")

    @classmethod
    def uniform(cls, scale, seed=0, **kw):
        """All channels scaled together: the 'overall liveliness' knob."""
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        return cls(
            beta_scales=np.full(BETA_DIM, 0.5 * scale),
            pose_scale=0.08 * scale,
            envelope_gain=1.0 * scale,
            seed=seed,
            **kw,
        )

    def as_dict(self):
        return {
            "beta_scales": self.beta_scales.tolist(),
            "pose_scale": self.pose_scale,
            "envelope_gain": self.envelope_gain,
            "seed": self.seed,
            "mouth_channel": self.mouth_channel,
            "audio_coupling": self.audio_coupling,
        }


@dataclass
class Clip:
    """One corpus entry; style is cached but must agree with the motion."""

    clip_id: str
    features: AudioFeatureSequence
    motion: MotionSeries
    style: StyleCode
    audio: AudioClip = None
    spec_index: int = -1

    def __post_init__(self):
        dt = abs(len(self.features) / self.features.fps - len(self.motion) / self.motion.fps)
        if dt > 0.12:
            raise ValueError(f"feature/motion durations disagree by {dt:.3f} s")
        recomputed = style_code(self.motion).values
        err = np.max(np.abs(recomputed - self.style.values))
        if err > 1e-6:
            raise ValueError(f"cached style code is stale (max deviation {err:.2e})")


def _standardize(x):
    mu = np.mean(x)
    sd = np.std(x)
    return (x - mu) / max(sd, 1e-12)


def _smooth_noise(rng, n, sigma):
    """Unit-variance low-frequency noise (gaussian-smoothed white noise)."""
    half = max(1, int(4 * sigma))
    t = np.arange(-half, half + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (t / sigma) ** 2)
    kern /= kern.sum()
    x = np.convolve(rng.standard_normal(n + 2 * half), kern, mode="same")[half:-half]
    return _standardize(x)


def _band_noise(rng, n, sr, f_lo=100.0, f_hi=4000.0):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(freqs < f_lo) | (freqs > f_hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / max(np.max(np.abs(x)), 1e-12)


class _CouplingKernels:
    """Fixed per-channel (smoothing sigma, delay, sign) for envelope coupling."""

    def __init__(self, seed=_KERNEL_SEED):
        rng = np.random.default_rng(seed)
        n = BETA_DIM + POSE_DIM - 1  # every channel except the mouth gets one
        self.sigma = rng.uniform(1.0, 4.0, size=n)
        self.delay = rng.integers(-2, 3, size=n)
        self.sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)

    def drive(self, env, k):
        half = max(1, int(4 * self.sigma[k]))
        t = np.arange(-half, half + 1, dtype=np.float64)
        kern = np.exp(-0.5 * ((t - self.delay[k]) / self.sigma[k]) ** 2)
        kern /= kern.sum()
        pad = np.pad(env, half, mode="edge")
        out = np.convolve(pad, kern, mode="same")[half:-half]
        return self.sign[k] * _standardize(out)


_KERNELS = None


def _coupling_kernels():
    global _KERNELS
    if _KERNELS is None:
        _KERNELS = _CouplingKernels()
    return _KERNELS


def generate_clip(spec, duration=10.0, feature_seed=0, clip_id=None, spec_index=-1):
    """Deterministic synthetic clip: audio, features, coupled motion, style.

    duration is in seconds (>= 2).  All randomness comes from spec.seed; the
    feature extractor uses feature_seed (one value per corpus).
    """
    duration = float(duration)
    if duration < 2.0:
        raise ValueError(f"clip duration must be >= 2 s, got {duration}")
    audio_rng, motion_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(2)
    )
    n_samples = int(round(duration * SAMPLE_RATE))
    n50 = int(round(duration * 50))

    # waveform: band-limited carrier shaped by a syllabic envelope
    env = np.abs(_smooth_noise(audio_rng, n50, sigma=3.0))
    env = 0.15 + 0.85 * env / max(env.max(), 1e-12)
    env_s = np.interp(np.arange(n_samples) * (50.0 / SAMPLE_RATE), np.arange(n50), env)
    samples = 0.5 * _band_noise(audio_rng, n_samples, SAMPLE_RATE) * env_s
    samples = np.clip(samples, -0.999, 0.999).astype(np.float32).astype(np.float64)
    audio = AudioClip(samples, SAMPLE_RATE)
    features = surrogate_features(audio, seed=feature_seed)

    # motion driver: the realized frame log-energy, folded to 25 fps
    e50 = features.frames[:, 0]
    n_frames = len(features) // 2
    drv = _standardize(0.5 * (e50[0 : 2 * n_frames : 2] + e50[1 : 2 * n_frames : 2]))

    kernels = _coupling_kernels()
    c = spec.audio_coupling
    w_drv, w_noise = np.sqrt(c), np.sqrt(1.0 - c)
    beta = np.zeros((n_frames, BETA_DIM))
    k = 0
    for j in range(BETA_DIM):
        if j == spec.mouth_channel:
            beta[:, j] = spec.envelope_gain * (
                drv + 0.1 * _smooth_noise(motion_rng, n_frames, 3.0)
            )
            continue
        driven = kernels.drive(drv, k)
        noise = _smooth_noise(motion_rng, n_frames, 2.0 + (j % 3))
        beta[:, j] = spec.beta_scales[j] * (w_drv * driven + w_noise * noise)
        k += 1
    pose_raw = np.zeros((n_frames, 6))
    for j in range(6):
        driven = kernels.drive(drv, k)
        noise = _smooth_noise(motion_rng, n_frames, 3.0 + (j % 2))
        pose_raw[:, j] = w_drv * driven + w_noise * noise
        k += 1
    quat = np.concatenate(
        [np.ones((n_frames, 1)), spec.pose_scale * pose_raw[:, :3]], axis=1
    )
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    trans = 0.6 * spec.pose_scale * pose_raw[:, 3:]
    pose = np.concatenate([quat, trans], axis=1)

    motion = MotionSeries(
        beta.astype(np.float32).astype(np.float64),
        pose.astype(np.float32).astype(np.float64),
        fps=25.0,
    )
    cid = clip_id or f"clip-{spec.seed & 0xFFFFFFFF:08x}"
    return Clip(
        clip_id=cid,
        features=features,
        motion=motion,
        style=style_code(motion),
        audio=audio,
        spec_index=spec_index,
    )


def _child_seed(spec_seed, index):
    return int(np.random.SeedSequence((spec_seed, index)).generate_state(1)[0])


def build_corpus(
    specs,
    clips_per_spec,
    duration=10.0,
    out_dir=None,
    holdout=(),
    feature_seed=0,
    save_audio=False,
):
    """Generate clips for every spec; optionally persist to a corpus directory.

    Per-clip seeds derive deterministically from (spec.seed, clip index), so
    rebuilding with the same arguments reproduces the corpus byte for byte.
    Specs listed in `holdout` are tagged split="test", the rest "train".
    Returns (clips, manifest).
    """
    if clips_per_spec < 1:
        raise ValueError("clips_per_spec must be >= 1")
    holdout = set(holdout)
    for h in holdout:
        if not 0 <= h < len(specs):
            raise ValueError(f"holdout index {h} out of range")
    clips = []
    entries = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    for si, spec in enumerate(specs):
        split = "test" if si in holdout else "train"
        for k in range(clips_per_spec):
            cid = f"clip_{si:02d}_{k:03d}"
            cspec = replace(spec, seed=_child_seed(spec.seed, k))
            clip = generate_clip(cspec, duration, feature_seed, clip_id=cid, spec_index=si)
            clips.append(clip)
            files = {
                "motion": f"{cid}/motion.series",
                "features": f"{cid}/audio.features",
                "style": f"{cid}/style.json",
            }
            if out_dir:
                os.makedirs(os.path.join(out_dir, cid), exist_ok=True)
                save_motion(clip.motion, os.path.join(out_dir, files["motion"]))
                save_features(clip.features, os.path.join(out_dir, files["features"]))
                save_style(clip.style, os.path.join(out_dir, files["style"]))
                if save_audio:
                    files["audio"] = f"{cid}/audio.wav"
                    save_wav(clip.audio, os.path.join(out_dir, files["audio"]))
            entries.append(
                {"id": cid, "spec_index": si, "seed": cspec.seed, "split": split, "files": files}
            )
    manifest = {
        "format": "stylefuse-corpus",
        "version": 1,
        "duration": duration,
        "feature_seed": feature_seed,
        "audio_fps": 50.0,
        "motion_fps": 25.0,
        "specs": [s.as_dict() for s in specs],
        "clips": entries,
    }
    if out_dir:
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return clips, manifest


def load_corpus(path, split=None):
    """Read a corpus directory back into Clip objects (audio is not reloaded)."""
    mpath = os.path.join(path, "manifest.json")
    if not os.path.isfile(mpath):
        raise ContainerError(f"{path}: not a corpus directory (missing manifest.json)")
    with open(mpath) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContainerError(f"{mpath}: bad JSON ({exc})") from None
    if manifest.get("format") != "stylefuse-corpus":
        raise ContainerError(f"{mpath}: missing corpus format tag")
    clips = []
    for entry in manifest["clips"]:
        if split is not None and entry["split"] != split:
            continue
        files = entry["files"]
        try:
            clip = Clip(
                clip_id=entry["id"],
                features=load_features(os.path.join(path, files["features"])),
                motion=load_motion(os.path.join(path, files["motion"])),
                style=load_style(os.path.join(path, files["style"])),
                spec_index=entry["spec_index"],
            )
        except ValueError as exc:
            raise ContainerError(f"{path}: clip {entry['id']} is inconsistent ({exc})") from None
        clips.append(clip)
    return clips, manifest


def export_reconstruction(clip, beta_path, pose_path, features_path):
    """Write a clip as three generic array containers (tracker-output shape)."""
    write_container(
        beta_path, "array", [("data", clip.motion.beta)],
        meta={"rows": len(clip.motion), "cols": BETA_DIM},
    )
    write_container(
        pose_path, "array", [("data", clip.motion.pose)],
        meta={"rows": len(clip.motion), "cols": POSE_DIM},
    )
    write_container(
        features_path, "array", [("data", clip.features.frames)],
        meta={"rows": len(clip.features), "cols": clip.features.frames.shape[1]},
    )


def ingest_reconstruction(beta_path, pose_path, features_path, clip_id="ingested"):
    """Build a Clip from externally produced per-frame arrays.

    beta must be (L, 64) at 25 fps, pose (L, 7), features (A, 29) at 50 fps,
    with matching durations.  The style code is recomputed from the motion.
    """
    def _read(path, cols, what):
        _, arrays = read_container(path, expect_kind="array")
        if "data" not in arrays:
            raise ContainerError(f"{path}: missing blob 'data'")
        arr = arrays["data"]
        if arr.ndim != 2 or arr.shape[1] != cols:
            raise ContainerError(
                f"{path}: {what} must be (L, {cols}), got {arr.shape}"
            )
        return arr

    beta = _read(beta_path, BETA_DIM, "expression series")
    pose = _read(pose_path, POSE_DIM, "pose series")
    feats = _read(features_path, 29, "feature series")
    if beta.shape[0] != pose.shape[0]:
        raise ContainerError(
            f"{beta_path}: beta has {beta.shape[0]} frames but pose has {pose.shape[0]}"
        )
    motion = MotionSeries(beta, pose, fps=25.0)
    features = AudioFeatureSequence(feats, fps=50.0)
    try:
        return Clip(
            clip_id=clip_id,
            features=features,
            motion=motion,
            style=style_code(motion),
        )
    except ValueError as exc:
        raise ContainerError(f"ingested clip is inconsistent: {exc}") from None


def assemble_training_windows(clips, stride=64, in_len=80, out_len=32):
    """(audio, style, beta, pose) float32 tuples for every aligned window."""
    samples = []
    for clip in clips:
        style = clip.style.values.astype(np.float32)
        for pair in window_pairs(clip.features, clip.motion, in_len, out_len, stride):
            samples.append(
                (
                    pair.audio.astype(np.float32),
                    style,
                    pair.beta.astype(np.float32),
                    pair.pose.astype(np.float32),
                )
            )
    if not samples:
        raise ValueError("no training windows could be assembled")
    return samples
