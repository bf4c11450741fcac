"""Interpretable style codes over expression/pose motion series.

A style code summarizes a clip as 135 nonnegative numbers: per-channel
population standard deviations of the 64 expression coefficients, of their
temporal derivatives, and of the 7 pose-channel derivatives.  Codes are
mean-invariant, time-reversal invariant, and positively homogeneous in the
expression block, which makes straight-line interpolation between them
meaningful.

All statistics here are float64 and single-pass-free (explicit two-pass
mean/variance), so results are reproducible to ~1e-15 regardless of input
ordering tricks.
"""

import json
from dataclasses import dataclass

import numpy as np

from .containers import ContainerError, read_container, require_meta, write_container

BETA_DIM = 64
POSE_DIM = 7
STYLE_DIM = BETA_DIM + BETA_DIM + POSE_DIM  # 135
MOTION_FPS = 25.0


@dataclass
class MotionSeries:
    """Expression + pose trajectories at a fixed frame rate.

    beta: (L, 64), pose: (L, 7); float64 in memory, float32 on disk.
    """

    beta: np.ndarray
    pose: np.ndarray
    fps: float = MOTION_FPS

    def __post_init__(self):
        self.beta = np.ascontiguousarray(self.beta, dtype=np.float64)
        self.pose = np.ascontiguousarray(self.pose, dtype=np.float64)
        self.fps = float(self.fps)
        if self.beta.ndim != 2 or self.beta.shape[1] != BETA_DIM:
            raise ValueError(f"beta must be (L, {BETA_DIM}), got {self.beta.shape}")
        if self.pose.ndim != 2 or self.pose.shape[1] != POSE_DIM:
            raise ValueError(f"pose must be (L, {POSE_DIM}), got {self.pose.shape}")
        if self.beta.shape[0] != self.pose.shape[0]:
            raise ValueError(
                f"beta and pose disagree on frame count: {self.beta.shape[0]} vs {self.pose.shape[0]}"
            )
        if self.beta.shape[0] < 1:
            raise ValueError("motion series must contain at least one frame")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    def __len__(self):
        return self.beta.shape[0]


@dataclass
class StyleCode:
    """135 nonnegative values: sigma(beta) ++ sigma(d beta/dt) ++ sigma(d pose/dt)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.shape != (STYLE_DIM,):
            raise ValueError(f"style code must have {STYLE_DIM} entries, got {self.values.shape[0]}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("style code must be finite")
        if self.values.min() < 0.0:
            raise ValueError("style code entries must be nonnegative")

    @property
    def beta_block(self):
        return self.values[:BETA_DIM]

    @property
    def dbeta_block(self):
        return self.values[BETA_DIM : 2 * BETA_DIM]

    @property
    def dpose_block(self):
        return self.values[2 * BETA_DIM :]


def derivative(series, fps):
    """Forward differences scaled by fps: out[i] = (in[i+1] - in[i]) * fps.

    (L, D) -> (L-1, D).
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise ValueError("series must be 2-D (frames, channels)")
    if series.shape[0] < 2:
        raise ValueError("need at least 2 frames for a derivative")
    if fps <= 0:
        raise ValueError("fps must be positive")
    return (series[1:] - series[:-1]) * float(fps)


def _population_std(mat):
    # explicit two-pass, divide by L (not L-1)
    mu = np.mean(mat, axis=0)
    return np.sqrt(np.mean((mat - mu) ** 2, axis=0))


def style_code(motion):
    """Compute the 135-dim style code of a motion series (needs L >= 3)."""
    if len(motion) < 3:
        raise ValueError(f"style code needs at least 3 frames, got {len(motion)}")
    sb = _population_std(motion.beta)
    sdb = _population_std(derivative(motion.beta, motion.fps))
    sdp = _population_std(derivative(motion.pose, motion.fps))
    return StyleCode(np.concatenate([sb, sdb, sdp]))


def interpolate(code_a, code_b, lam):
    """(1 - lam) * a + lam * b for lam in [0, 1]."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return StyleCode((1.0 - lam) * code_a.values + lam * code_b.values)


@dataclass
class ObservationStats:
    """The 8 per-clip observation vectors: means and population stds of
    beta, pose, and their temporal derivatives."""

    mean_beta: np.ndarray  # (64,)
    mean_pose: np.ndarray  # (7,)
    mean_dbeta: np.ndarray  # (64,)
    mean_dpose: np.ndarray  # (7,)
    std_beta: np.ndarray  # (64,)
    std_pose: np.ndarray  # (7,)
    std_dbeta: np.ndarray  # (64,)
    std_dpose: np.ndarray  # (7,)

    def __post_init__(self):
        for name in ("std_beta", "std_pose", "std_dbeta", "std_dpose"):
            if np.min(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be componentwise nonnegative")

    def as_dict(self):
        return {
            "mean_beta": self.mean_beta.tolist(),
            "mean_pose": self.mean_pose.tolist(),
            "mean_dbeta": self.mean_dbeta.tolist(),
            "mean_dpose": self.mean_dpose.tolist(),
            "std_beta": self.std_beta.tolist(),
            "std_pose": self.std_pose.tolist(),
            "std_dbeta": self.std_dbeta.tolist(),
            "std_dpose": self.std_dpose.tolist(),
        }


def observation_stats(motion):
    if len(motion) < 3:
        raise ValueError(f"observation stats need at least 3 frames, got {len(motion)}")
    dbeta = derivative(motion.beta, motion.fps)
    dpose = derivative(motion.pose, motion.fps)
    return ObservationStats(
        mean_beta=np.mean(motion.beta, axis=0),
        mean_pose=np.mean(motion.pose, axis=0),
        mean_dbeta=np.mean(dbeta, axis=0),
        mean_dpose=np.mean(dpose, axis=0),
        std_beta=_population_std(motion.beta),
        std_pose=_population_std(motion.pose),
        std_dbeta=_population_std(dbeta),
        std_dpose=_population_std(dpose),
    )


def project_styles_2d(codes):
    """Deterministic PCA scatter of style codes: (n, 2) scores.

    Components are ordered by singular value; each component's sign is fixed
    so its largest-magnitude loading is positive.
    """
    if len(codes) < 3:
        raise ValueError("need at least 3 style codes for a 2-D projection")
    x = np.stack([c.values for c in codes]).astype(np.float64)
    x = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    comps = vt[:2]
    for k in range(comps.shape[0]):
        j = int(np.argmax(np.abs(comps[k])))
        if comps[k, j] < 0:
            comps[k] = -comps[k]
    return x @ comps.T


def save_motion(motion, path):
    write_container(
        path,
        "motion",
        [("beta", motion.beta), ("pose", motion.pose)],
        meta={"frames": len(motion), "fps": motion.fps, "beta_dim": BETA_DIM, "pose_dim": POSE_DIM},
    )


def load_motion(path):
    meta, arrays = read_container(path, expect_kind="motion")
    for key in ("beta", "pose"):
        if key not in arrays:
            raise ContainerError(f"{path}: missing blob '{key}'")
    fps = float(require_meta(meta, "fps", path))
    try:
        return MotionSeries(arrays["beta"], arrays["pose"], fps=fps)
    except ValueError as exc:
        raise ContainerError(f"{path}: invalid motion series ({exc})") from None


def save_style(code, path):
    with open(path, "w") as fh:
        json.dump([float(v) for v in code.values], fh)
        fh.write("\n")


def load_style(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContainerError(f"{path}: bad JSON ({exc})") from None
    if not isinstance(data, list):
        raise ContainerError(f"{path}: style file must hold a flat JSON array")
    try:
        return StyleCode(np.asarray(data, dtype=np.float64))
    except (ValueError, TypeError) as exc:
        raise ContainerError(f"{path}: invalid style code ({exc})") from None
