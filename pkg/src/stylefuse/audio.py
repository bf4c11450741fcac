"""Audio clips, 29-channel feature sequences at 50 fps, and window pairing.

The feature extractor is a deterministic speech-feature surrogate: channel 0
is the frame log-energy, channels 1-28 are 14 log band energies plus their
deltas pushed through a fixed random orthogonal mixing matrix.  It has the
same interface contract as a pretrained speech network (29 channels, 50 fps,
pure function of the waveform) so the synthesis stack never needs one.
"""

import wave
from dataclasses import dataclass

import numpy as np

from .containers import ContainerError, read_container, require_meta, write_container

FEATURE_DIM = 29
FEATURE_FPS = 50.0
_N_BANDS = 14
_ENERGY_FLOOR = 1e-8


@dataclass
class AudioClip:
    """Mono waveform in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64).reshape(-1)
        self.sample_rate = int(self.sample_rate)
        if self.samples.size == 0:
            raise ValueError("audio clip is empty")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio samples must be finite")
        peak = np.max(np.abs(self.samples))
        if peak > 1.0 + 1e-6:
            raise ValueError(f"audio samples must lie in [-1, 1], peak is {peak:.4f}")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass
class AudioFeatureSequence:
    """(L, 29) feature frames at 50 fps."""

    frames: np.ndarray
    fps: float = FEATURE_FPS

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        self.fps = float(self.fps)
        if self.frames.ndim != 2 or self.frames.shape[1] != FEATURE_DIM:
            raise ValueError(
                f"feature frames must be (L, {FEATURE_DIM}), got {self.frames.shape}"
            )
        if self.frames.shape[0] < 1:
            raise ValueError("feature sequence is empty")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    def __len__(self):
        return self.frames.shape[0]


def save_wav(clip, path):
    """16-bit PCM mono WAV."""
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def load_wav(path):
    try:
        wf = wave.open(str(path), "rb")
    except (wave.Error, EOFError) as exc:
        raise ContainerError(f"{path}: not a readable WAV file ({exc})") from None
    with wf:
        if wf.getnchannels() != 1:
            raise ContainerError(f"{path}: only mono WAV is supported")
        if wf.getsampwidth() != 2:
            raise ContainerError(f"{path}: only 16-bit PCM WAV is supported")
        sr = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, sr)


def _frame_matrix(clip):
    sr = clip.sample_rate
    n_frames = int(clip.samples.size * 50 // sr)
    flen = int(sr // 50)
    starts = (np.arange(n_frames, dtype=np.int64) * sr) // 50
    idx = starts[:, None] + np.arange(flen)[None, :]
    return clip.samples[idx], n_frames, flen


def _band_edges(n_bins, n_bands):
    # log-spaced edges over rfft bins [1, n_bins)
    edges = np.unique(
        np.round(np.logspace(0.0, np.log10(n_bins - 1), n_bands + 1)).astype(int)
    )
    while edges.size < n_bands + 1:  # pad if rounding collapsed edges
        edges = np.append(edges, edges[-1] + 1)
    return edges[: n_bands + 1]


def surrogate_features(clip, seed=0):
    """Deterministic 29-channel features at 50 fps.

    Channel 0: log10 frame energy (floored at 1e-8, so silence maps to -8).
    Channels 1-28: [14 log band energies | their deltas] @ Q.T with Q a fixed
    random orthogonal 28x28 matrix drawn from `seed`.
    """
    if clip.duration < 0.1:
        raise ValueError(f"clip too short for features: {clip.duration:.3f} s < 0.1 s")
    frames, n_frames, flen = _frame_matrix(clip)
    energy = np.mean(frames**2, axis=1)
    ch0 = np.log10(energy + _ENERGY_FLOOR)

    spec = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    edges = _band_edges(spec.shape[1], _N_BANDS)
    bands = np.empty((n_frames, _N_BANDS))
    for b in range(_N_BANDS):
        lo, hi = edges[b], max(edges[b + 1], edges[b] + 1)
        bands[:, b] = np.log10(np.mean(spec[:, lo:hi], axis=1) + _ENERGY_FLOOR)
    deltas = np.diff(bands, axis=0, prepend=bands[:1])

    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((2 * _N_BANDS, 2 * _N_BANDS)))
    mixed = np.concatenate([bands, deltas], axis=1) @ q.T
    out = np.concatenate([ch0[:, None], mixed], axis=1).astype(np.float32)
    return AudioFeatureSequence(out.astype(np.float64))


def save_features(features, path):
    write_container(
        path,
        "audio-features",
        [("frames", features.frames)],
        meta={"frames": len(features), "fps": features.fps, "dim": FEATURE_DIM},
    )


def load_features(path):
    meta, arrays = read_container(path, expect_kind="audio-features")
    if "frames" not in arrays:
        raise ContainerError(f"{path}: missing blob 'frames'")
    fps = float(require_meta(meta, "fps", path))
    try:
        return AudioFeatureSequence(arrays["frames"], fps=fps)
    except ValueError as exc:
        raise ContainerError(f"{path}: invalid feature sequence ({exc})") from None


@dataclass
class WindowPair:
    """One training window: 80 audio frames centered on 32 motion frames."""

    audio: np.ndarray  # (in_len, 29)
    beta: np.ndarray  # (out_len, 64)
    pose: np.ndarray  # (out_len, 7)
    audio_start: int
    motion_start: int


def motion_window_start(audio_start, in_len=80, out_len=32):
    """Center-aligned motion index for an audio window at 2x the frame rate."""
    return (2 * audio_start + in_len - 2 * out_len) // 4


def window_pairs(features, motion, in_len=80, out_len=32, stride=16):
    """Slice aligned (audio, motion) windows; windows falling off either end are dropped."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if in_len < 2 or out_len < 1:
        raise ValueError("window lengths out of range")
    if abs(features.fps - 2.0 * motion.fps) > 1e-9:
        raise ValueError(
            f"audio fps must be twice motion fps, got {features.fps} vs {motion.fps}"
        )
    n_audio, n_motion = len(features), len(motion)
    if n_audio < in_len:
        raise ValueError(f"audio too short: {n_audio} frames < window of {in_len}")
    pairs = []
    for a0 in range(0, n_audio - in_len + 1, stride):
        m0 = motion_window_start(a0, in_len, out_len)
        if m0 < 0 or m0 + out_len > n_motion:
            continue
        pairs.append(
            WindowPair(
                audio=features.frames[a0 : a0 + in_len].copy(),
                beta=motion.beta[m0 : m0 + out_len].copy(),
                pose=motion.pose[m0 : m0 + out_len].copy(),
                audio_start=a0,
                motion_start=m0,
            )
        )
    if not pairs:
        raise ValueError("no aligned windows fit inside the clip")
    return pairs
