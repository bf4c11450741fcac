"""Affine 3D face shape model and its synthetic stand-in.

A face is S = mean + B_id @ alpha + B_exp @ beta with 80 identity and 64
expression coefficients; pose is a 7-vector (unit quaternion, scalar first,
plus translation).  Projection is orthographic: rotate, translate, drop z.

`generate_synthetic_basis` builds a laboratory substitute for a scanned
morphable model: a unit sphere mesh with smooth random identity/expression
deflection fields, a dedicated mouth-opening expression channel, tagged
upper/lower lip vertices, and a longitude/latitude UV atlas.  It is exact
enough to exercise every downstream contract (reconstruction, rasterization,
texture extraction) without any external asset.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .containers import ContainerError

ID_DIM = 80
EXP_DIM = 64
POSE_DIM = 7

BASIS_HEADER = "header.json"
_BASIS_BLOBS = (
    ("mean_shape.f32", "mean_shape"),
    ("id_basis.f32", "id_basis"),
    ("exp_basis.f32", "exp_basis"),
    ("vertex_uv.f32", "vertex_uv"),
    ("triangles.i32", "triangles"),
)


@dataclass
class FaceBasis:
    """Morphable-model tensors.  Arrays are float32/int32 (the disk precision)."""

    mean_shape: np.ndarray  # (N, 3)
    id_basis: np.ndarray  # (N, 3, 80)
    exp_basis: np.ndarray  # (N, 3, 64)
    vertex_uv: np.ndarray  # (N, 2) in [0, 1]
    triangles: np.ndarray  # (T, 3) int32 vertex indices
    lip_upper_index: int = 0
    lip_lower_index: int = 1

    def __post_init__(self):
        self.mean_shape = np.ascontiguousarray(self.mean_shape, dtype=np.float32)
        self.id_basis = np.ascontiguousarray(self.id_basis, dtype=np.float32)
        self.exp_basis = np.ascontiguousarray(self.exp_basis, dtype=np.float32)
        self.vertex_uv = np.ascontiguousarray(self.vertex_uv, dtype=np.float32)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        n = self.n_vertices
        if self.mean_shape.ndim != 2 or self.mean_shape.shape[1] != 3 or n < 4:
            raise ValueError(f"mean_shape must be (N>=4, 3), got {self.mean_shape.shape}")
        if self.id_basis.shape != (n, 3, ID_DIM):
            raise ValueError(f"id_basis must be (N, 3, {ID_DIM}), got {self.id_basis.shape}")
        if self.exp_basis.shape != (n, 3, EXP_DIM):
            raise ValueError(f"exp_basis must be (N, 3, {EXP_DIM}), got {self.exp_basis.shape}")
        if self.vertex_uv.shape != (n, 2):
            raise ValueError(f"vertex_uv must be (N, 2), got {self.vertex_uv.shape}")
        if self.vertex_uv.min() < 0.0 or self.vertex_uv.max() > 1.0:
            raise ValueError("vertex_uv values must lie in [0, 1]")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError(f"triangles must be (T, 3), got {self.triangles.shape}")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise ValueError("triangle indices out of range")
        for name, idx in (
            ("lip_upper_index", self.lip_upper_index),
            ("lip_lower_index", self.lip_lower_index),
        ):
            if not 0 <= int(idx) < n:
                raise ValueError(f"{name} index {idx} out of range for {n} vertices")
        if not (
            np.all(np.isfinite(self.mean_shape))
            and np.all(np.isfinite(self.id_basis))
            and np.all(np.isfinite(self.exp_basis))
        ):
            raise ValueError("basis tensors must be finite")

    @property
    def n_vertices(self):
        return self.mean_shape.shape[0]


@dataclass
class FaceParams:
    """Per-frame coefficients: identity (80), expression (64), pose (7)."""

    alpha: np.ndarray = field(default_factory=lambda: np.zeros(ID_DIM))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(EXP_DIM))
    pose: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0, 0, 0, 0]))

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(-1)
        if self.alpha.shape != (ID_DIM,):
            raise ValueError(f"alpha must have {ID_DIM} entries, got {self.alpha.shape}")
        if self.beta.shape != (EXP_DIM,):
            raise ValueError(f"beta must have {EXP_DIM} entries, got {self.beta.shape}")
        if self.pose.shape != (POSE_DIM,):
            raise ValueError(f"pose must have {POSE_DIM} entries, got {self.pose.shape}")
        if np.linalg.norm(self.pose[:4]) == 0.0:
            raise ValueError("pose quaternion must be nonzero")


def reconstruct_shape(basis, alpha, beta):
    """S = mean + B_id @ alpha + B_exp @ beta, float64, shape (N, 3)."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if alpha.shape != (ID_DIM,):
        raise ValueError(f"alpha must have {ID_DIM} entries, got {alpha.shape[0]}")
    if beta.shape != (EXP_DIM,):
        raise ValueError(f"beta must have {EXP_DIM} entries, got {beta.shape[0]}")
    out = basis.mean_shape.astype(np.float64)
    out = out + basis.id_basis.astype(np.float64) @ alpha
    out = out + basis.exp_basis.astype(np.float64) @ beta
    return out


def quaternion_matrix(q):
    """Rotation matrix from a scalar-first quaternion (normalized internally)."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape != (4,):
        raise ValueError("quaternion must have 4 entries")
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("quaternion must be nonzero")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rigid_transform(shape, pose):
    """Rotate + translate vertices; keeps z (used for depth tests). (N, 3)."""
    pose = np.asarray(pose, dtype=np.float64).reshape(-1)
    if pose.shape != (POSE_DIM,):
        raise ValueError(f"pose must have {POSE_DIM} entries, got {pose.shape[0]}")
    rot = quaternion_matrix(pose[:4])
    return np.asarray(shape, dtype=np.float64) @ rot.T + pose[4:7]


def project(shape, pose):
    """Orthographic projection: rigid transform then drop z. (N, 2)."""
    return rigid_transform(shape, pose)[:, :2]


def lip_distance(basis, params):
    """Euclidean gap between the tagged lip vertices, before pose is applied."""
    shape = reconstruct_shape(basis, params.alpha, params.beta)
    return float(np.linalg.norm(shape[basis.lip_upper_index] - shape[basis.lip_lower_index]))


def _fibonacci_sphere(n):
    # exact-count sphere covering; golden-angle longitude spiral
    i = np.arange(n, dtype=np.float64)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    y = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    return np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1)


def _smooth_fields(points, n_fields, rms, rng):
    """Random smooth (N, 3, K) deflection fields: quadratic monomials in xyz."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    phi = np.stack(
        [np.ones_like(x), x, y, z, x * y, x * z, y * z, x * x, y * y, z * z], axis=1
    )  # (N, 10)
    coef = rng.standard_normal((10, 3, n_fields))
    fields = np.einsum("np,pck->nck", phi, coef)
    scale = np.sqrt(np.mean(np.sum(fields**2, axis=1), axis=0))  # per-field RMS length
    return fields / np.maximum(scale, 1e-12) * rms


def generate_synthetic_basis(seed=0, n_vertices=1200, exp_rms=0.02, id_rms=0.05):
    """Deterministic sphere-based stand-in basis.

    Expression channel 0 is a dedicated mouth opener: it pushes the tagged
    upper/lower lip vertices apart so lip-gap responds monotonically to
    beta[0].  All remaining channels are smooth random fields with the given
    RMS deflection (head radius is 1).
    """
    if n_vertices < 4:
        raise ValueError("n_vertices must be at least 4")
    rng = np.random.default_rng(seed)
    pts = _fibonacci_sphere(n_vertices)
    tri = ConvexHull(pts).simplices.astype(np.int32)
    # enforce outward winding so rasterized normals are consistent
    a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    centroid = (a + b + c) / 3.0
    outward = np.einsum("ij,ij->i", np.cross(b - a, c - a), centroid) < 0
    tri[outward] = tri[outward][:, ::-1]

    # longitude/latitude atlas; seam sits at the back of the head (z < 0)
    u = np.arctan2(pts[:, 0], pts[:, 2]) / (2.0 * np.pi) + 0.5
    v = np.arccos(np.clip(pts[:, 1], -1.0, 1.0)) / np.pi
    uv = np.clip(np.stack([u, v], axis=1), 0.0, 1.0)

    # lip vertices: just above/below the equator on the front (+z) side
    tilt = 0.12
    d_up = np.array([0.0, np.sin(tilt), np.cos(tilt)])
    d_low = np.array([0.0, -np.sin(tilt), np.cos(tilt)])
    lip_upper = int(np.argmax(pts @ d_up))
    lip_lower = int(np.argmax(pts @ d_low))

    id_basis = _smooth_fields(pts, ID_DIM, id_rms, rng)
    exp_basis = _smooth_fields(pts, EXP_DIM, exp_rms, rng)
    # channel 0: vertical separation field concentrated on the lip region
    g_up = np.exp(-np.sum((pts - pts[lip_upper]) ** 2, axis=1) / (2 * 0.15**2))
    g_low = np.exp(-np.sum((pts - pts[lip_lower]) ** 2, axis=1) / (2 * 0.15**2))
    opener = np.zeros((n_vertices, 3))
    opener[:, 1] = g_up - g_low
    rms0 = np.sqrt(np.mean(np.sum(opener**2, axis=1)))
    exp_basis[:, :, 0] = opener / max(rms0, 1e-12) * exp_rms * 4.0

    return FaceBasis(
        mean_shape=pts,
        id_basis=id_basis,
        exp_basis=exp_basis,
        vertex_uv=uv,
        triangles=tri,
        lip_upper_index=lip_upper,
        lip_lower_index=lip_lower,
    )


def save_basis(basis, path):
    """Write a basis directory: header.json plus five raw little-endian blobs."""
    os.makedirs(path, exist_ok=True)
    header = {
        "format": "stylefuse-basis",
        "version": 1,
        "n_vertices": int(basis.n_vertices),
        "n_triangles": int(basis.triangles.shape[0]),
        "id_dim": ID_DIM,
        "exp_dim": EXP_DIM,
        "lip_upper_index": int(basis.lip_upper_index),
        "lip_lower_index": int(basis.lip_lower_index),
    }
    with open(os.path.join(path, BASIS_HEADER), "w") as fh:
        json.dump(header, fh, sort_keys=True, indent=1)
        fh.write("\n")
    for fname, attr in _BASIS_BLOBS:
        arr = getattr(basis, attr)
        dtype = "<i4" if arr.dtype.kind == "i" else "<f4"
        np.ascontiguousarray(arr).astype(dtype).tofile(os.path.join(path, fname))


def load_basis(path):
    header_path = os.path.join(path, BASIS_HEADER)
    if not os.path.isfile(header_path):
        raise ContainerError(f"{path}: not a basis directory (missing {BASIS_HEADER})")
    with open(header_path) as fh:
        try:
            header = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContainerError(f"{header_path}: bad JSON ({exc})") from None
    if header.get("format") != "stylefuse-basis":
        raise ContainerError(f"{header_path}: missing basis format tag")
    for key in ("n_vertices", "n_triangles", "id_dim", "exp_dim", "lip_upper_index", "lip_lower_index"):
        if key not in header:
            raise ContainerError(f"{header_path}: missing field '{key}'")
    if header["id_dim"] != ID_DIM:
        raise ContainerError(f"{path}: id_dim is {header['id_dim']}, this model requires {ID_DIM}")
    if header["exp_dim"] != EXP_DIM:
        raise ContainerError(f"{path}: exp_dim is {header['exp_dim']}, this model requires {EXP_DIM}")
    n, t = int(header["n_vertices"]), int(header["n_triangles"])
    shapes = {
        "mean_shape": (n, 3),
        "id_basis": (n, 3, ID_DIM),
        "exp_basis": (n, 3, EXP_DIM),
        "vertex_uv": (n, 2),
        "triangles": (t, 3),
    }
    arrays = {}
    for fname, attr in _BASIS_BLOBS:
        fpath = os.path.join(path, fname)
        if not os.path.isfile(fpath):
            raise ContainerError(f"{path}: missing blob file {fname}")
        dtype = "<i4" if attr == "triangles" else "<f4"
        want = int(np.prod(shapes[attr]))
        arr = np.fromfile(fpath, dtype=dtype)
        if arr.size != want:
            raise ContainerError(
                f"{fpath}: expected {want} values for shape {shapes[attr]}, got {arr.size}"
            )
        arrays[attr] = arr.reshape(shapes[attr])
    try:
        return FaceBasis(
            lip_upper_index=header["lip_upper_index"],
            lip_lower_index=header["lip_lower_index"],
            **arrays,
        )
    except ValueError as exc:
        raise ContainerError(f"{path}: invalid basis ({exc})") from None
