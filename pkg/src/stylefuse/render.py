"""Deferred neural rendering over rasterized UV coordinate images.

Pipeline: rasterize the posed face mesh into a 2-channel UV image (sentinel
-1 outside the face), run a small conv net over the RGB texture unprojected
from a portrait to get a 16-channel neural texture, sample that texture at
the UV image (bilinear, float32, bit-reproducible), and translate the
sampled stack to an RGB frame with a small U-Net.  Loss is photometric L1
plus an L1 over fixed perceptual conv features.

The bilinear sampler is the contract-critical piece: for every pixel
    x = u * (W_t - 1); x0 = floor(x); x1 = min(x0 + 1, W_t - 1); fx = x - x0
    w00 = (1-fx)(1-fy); w01 = fx(1-fy); w10 = (1-fx)fy; w11 = fx fy
    out = ((t00*w00 + t01*w01) + t10*w10) + t11*w11
evaluated in float32 in exactly this order, with invalid pixels' UVs zeroed
before the arithmetic and the result multiplied by the validity mask.  The
vectorized torch path reproduces a scalar reference loop bit for bit.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import nn

from .containers import ContainerError, read_container, require_meta, write_container
from .face_model import reconstruct_shape, rigid_transform, FaceParams
from .lsf import TrainReport, _seeded_init


# ---------------------------------------------------------------------------
# framing + rasterization

@dataclass
class FramingTransform:
    """Model-space (x, y) -> pixel-space mapping for a square image."""

    scale: float
    center_x: float
    center_y: float
    image_size: int

    def apply(self, verts):
        """(N, 3) transformed vertices -> (px, py) pixel coords, y flipped."""
        half = self.image_size / 2.0
        px = (verts[:, 0] - self.center_x) * self.scale + half
        py = half - (verts[:, 1] - self.center_y) * self.scale
        return px, py


def default_framing(basis, image_size=224, fill=0.84):
    centroid = basis.mean_shape.astype(np.float64).mean(axis=0)
    radius = float(np.max(np.linalg.norm(basis.mean_shape - centroid, axis=1)))
    return FramingTransform(
        scale=fill * image_size / (2.0 * radius),
        center_x=float(centroid[0]),
        center_y=float(centroid[1]),
        image_size=int(image_size),
    )


def rasterize_attributes(verts_xy, depth, attrs, triangles, height, width, fill=0.0):
    """Scanline-free triangle rasterizer with a max-z depth test.

    verts_xy: (N, 2) pixel coords, depth: (N,), attrs: (N, A).  Pixel centers
    sit at integer + 0.5.  Returns (image (A, H, W) float64, mask (H, W) bool).
    Degenerate (zero-area) triangles are skipped.
    """
    verts_xy = np.asarray(verts_xy, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    attrs = np.asarray(attrs, dtype=np.float64)
    img = np.full((attrs.shape[1], height, width), fill, dtype=np.float64)
    zbuf = np.full((height, width), -np.inf)
    mask = np.zeros((height, width), dtype=bool)
    for tri in triangles:
        p0, p1, p2 = verts_xy[tri[0]], verts_xy[tri[1]], verts_xy[tri[2]]
        area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
        if area == 0.0:
            continue
        xs = (p0[0], p1[0], p2[0])
        ys = (p0[1], p1[1], p2[1])
        j0 = max(0, int(np.floor(min(xs) - 0.5)))
        j1 = min(width - 1, int(np.ceil(max(xs) - 0.5)))
        i0 = max(0, int(np.floor(min(ys) - 0.5)))
        i1 = min(height - 1, int(np.ceil(max(ys) - 0.5)))
        if j0 > j1 or i0 > i1:
            continue
        jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
        px = jj + 0.5
        py = ii + 0.5
        w0 = (p2[0] - p1[0]) * (py - p1[1]) - (p2[1] - p1[1]) * (px - p1[0])
        w1 = (p0[0] - p2[0]) * (py - p2[1]) - (p0[1] - p2[1]) * (px - p2[0])
        w2 = (p1[0] - p0[0]) * (py - p0[1]) - (p1[1] - p0[1]) * (px - p0[0])
        if area < 0.0:
            w0, w1, w2, tri_area = -w0, -w1, -w2, -area
        else:
            tri_area = area
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        b0 = w0[inside] / tri_area
        b1 = w1[inside] / tri_area
        b2 = w2[inside] / tri_area
        z = b0 * depth[tri[0]] + b1 * depth[tri[1]] + b2 * depth[tri[2]]
        rows = ii[inside]
        cols = jj[inside]
        win = z > zbuf[rows, cols]
        if not win.any():
            continue
        rows, cols = rows[win], cols[win]
        zbuf[rows, cols] = z[win]
        vals = (
            b0[win, None] * attrs[tri[0]]
            + b1[win, None] * attrs[tri[1]]
            + b2[win, None] * attrs[tri[2]]
        )
        img[:, rows, cols] = vals.T
        mask[rows, cols] = True
    return img, mask


# ---------------------------------------------------------------------------
# image-space types

UV_SENTINEL = -1.0


@dataclass
class UVImage:
    """2-channel UV coordinate image; invalid pixels hold -1 in both channels."""

    data: np.ndarray  # (2, H, W) float32
    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise ValueError(f"uv data must be (2, H, W), got {self.data.shape}")
        if self.mask.shape != self.data.shape[1:]:
            raise ValueError("mask shape does not match uv image")
        valid = self.data[:, self.mask]
        if valid.size and (valid.min() < 0.0 or valid.max() > 1.0):
            raise ValueError("valid uv values must lie in [0, 1]")
        invalid = self.data[:, ~self.mask]
        if invalid.size and not np.all(invalid == np.float32(UV_SENTINEL)):
            raise ValueError("invalid uv pixels must hold the -1 sentinel")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class RGBTexture:
    """(3, H_t, W_t) float32 in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ValueError(f"rgb texture must be (3, H, W), got {self.data.shape}")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("rgb texture values must lie in [0, 1]")


@dataclass
class NeuralTexture:
    """(16, H_t, W_t) float32 learned texture."""

    data: np.ndarray
    CHANNELS = 16

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != self.CHANNELS:
            raise ValueError(
                f"neural texture must be ({self.CHANNELS}, H, W), got {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("neural texture must be finite")


@dataclass
class SampledImage:
    """Texture channels warped into image space; invalid pixels are exactly zero."""

    data: np.ndarray  # (D, H, W) float32
    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.data.ndim != 3:
            raise ValueError(f"sampled image must be (D, H, W), got {self.data.shape}")
        if self.mask.shape != self.data.shape[1:]:
            raise ValueError("mask shape does not match sampled image")
        if self.data[:, ~self.mask].size and np.any(self.data[:, ~self.mask] != 0.0):
            raise ValueError("invalid pixels of a sampled image must be zero")


def rasterize_uv(basis, params, image_size=224, framing=None):
    """Rasterize the posed mesh's per-vertex UVs into a UVImage."""
    framing = framing or default_framing(basis, image_size)
    shape = reconstruct_shape(basis, params.alpha, params.beta)
    verts = rigid_transform(shape, params.pose)
    px, py = framing.apply(verts)
    img, mask = rasterize_attributes(
        np.stack([px, py], axis=1),
        verts[:, 2],
        basis.vertex_uv.astype(np.float64),
        basis.triangles,
        framing.image_size,
        framing.image_size,
        fill=UV_SENTINEL,
    )
    data = img.astype(np.float32)
    data[:, mask] = np.clip(data[:, mask], 0.0, 1.0)
    data[:, ~mask] = np.float32(UV_SENTINEL)
    return UVImage(data, mask)


# ---------------------------------------------------------------------------
# bilinear texture sampling (bit-reproducible float32)

def bilinear_sample(texture, u, v):
    """Sample one texel stack at (u, v) in [0, 1]^2; float32 in, float32 out."""
    tex = texture.data if hasattr(texture, "data") else np.asarray(texture)
    tex = np.ascontiguousarray(tex, dtype=np.float32)
    if tex.ndim != 3:
        raise ValueError("texture must be (D, H, W)")
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise ValueError(f"uv out of range: ({u}, {v})")
    h, w = tex.shape[1], tex.shape[2]
    x = np.float32(u) * np.float32(w - 1)
    y = np.float32(v) * np.float32(h - 1)
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = np.float32(x - np.float32(x0))
    fy = np.float32(y - np.float32(y0))
    one = np.float32(1.0)
    w00 = (one - fx) * (one - fy)
    w01 = fx * (one - fy)
    w10 = (one - fx) * fy
    w11 = fx * fy
    return (
        (tex[:, y0, x0] * w00 + tex[:, y0, x1] * w01) + tex[:, y1, x0] * w10
    ) + tex[:, y1, x1] * w11


def _sampling_grid(uv, mask, ht, wt):
    """Corner indices and bilinear weights for a batch of UV images.

    These depend only on the UV data, so training loops precompute them once
    per dataset and reuse them every iteration.
    """
    zero = torch.zeros((), dtype=uv.dtype)
    u = torch.where(mask, uv[:, 0], zero)
    v = torch.where(mask, uv[:, 1], zero)
    x = u * (wt - 1)
    y = v * (ht - 1)
    x0 = torch.floor(x)
    y0 = torch.floor(y)
    ix0 = x0.long()
    iy0 = y0.long()
    ix1 = torch.clamp(ix0 + 1, max=wt - 1)
    iy1 = torch.clamp(iy0 + 1, max=ht - 1)
    fx = x - x0
    fy = y - y0
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    return ix0, iy0, ix1, iy1, w00, w01, w10, w11


def _mix_corners(tex, grid, mask):
    """4-term bilinear mix of gathered texels; differentiable w.r.t. tex."""
    ix0, iy0, ix1, iy1, w00, w01, w10, w11 = grid
    t00 = tex[:, iy0, ix0]  # (D, B, H, W)
    t01 = tex[:, iy0, ix1]
    t10 = tex[:, iy1, ix0]
    t11 = tex[:, iy1, ix1]
    out = ((t00 * w00 + t01 * w01) + t10 * w10) + t11 * w11
    zero = torch.zeros((), dtype=out.dtype)
    out = torch.where(mask[None], out, zero)  # masked pixels are exactly +0.0
    return out.permute(1, 0, 2, 3)


def sample_texture_batch(uv, mask, tex):
    """Vectorized sampler.  uv (B, 2, H, W) f32, mask (B, H, W) bool,
    tex (D, Ht, Wt) f32 -> (B, D, H, W) f32.  Differentiable w.r.t. tex.

    Op order matches `bilinear_sample` exactly so float32 results are
    bitwise identical to the scalar loop.
    """
    grid = _sampling_grid(uv, mask, tex.shape[1], tex.shape[2])
    return _mix_corners(tex, grid, mask)


class _FrameSampler:
    """Precomputed per-frame texture-sampling plan for training loops.

    Sampling locations depend only on the UV images, so the gather indices
    and bilinear weights are computed once, restricted to valid pixels.
    Each call gathers texels for the requested frames and writes the mixed
    values into a zero canvas; results are bitwise identical to
    `sample_texture_batch` (invalid pixels are exactly +0.0).
    """

    def __init__(self, uv, mask, ht, wt):
        ix0, iy0, ix1, iy1, w00, w01, w10, w11 = _sampling_grid(uv, mask, ht, wt)
        n, self.h, self.w = mask.shape
        flat_mask = mask.reshape(n, -1)
        corners = [(iy * wt + ix).reshape(n, -1) for iy, ix in
                   ((iy0, ix0), (iy0, ix1), (iy1, ix0), (iy1, ix1))]
        weights = [t.reshape(n, -1) for t in (w00, w01, w10, w11)]
        self.pos = []      # flat positions of valid pixels within one frame
        self.corners = []  # (4, n_valid) texel indices per frame
        self.weights = []  # (4, n_valid) bilinear weights per frame
        for f in range(n):
            vpos = flat_mask[f].nonzero(as_tuple=True)[0]
            self.pos.append(vpos)
            self.corners.append(torch.stack([c[f, vpos] for c in corners]))
            self.weights.append(torch.stack([t[f, vpos] for t in weights]))

    def __call__(self, tex, idx):
        frames = [int(f) for f in idx]
        hw = self.h * self.w
        pos = torch.cat([self.pos[f] + slot * hw for slot, f in enumerate(frames)])
        cr = torch.cat([self.corners[f] for f in frames], dim=1)
        wt = torch.cat([self.weights[f] for f in frames], dim=1)
        flat_tex = tex.reshape(tex.shape[0], -1)
        t00 = flat_tex.index_select(1, cr[0])
        t01 = flat_tex.index_select(1, cr[1])
        t10 = flat_tex.index_select(1, cr[2])
        t11 = flat_tex.index_select(1, cr[3])
        vals = ((t00 * wt[0] + t01 * wt[1]) + t10 * wt[2]) + t11 * wt[3]
        canvas = torch.zeros(tex.shape[0], len(frames) * hw, dtype=vals.dtype)
        out = canvas.index_copy(1, pos, vals)
        return out.view(tex.shape[0], len(frames), self.h, self.w).permute(1, 0, 2, 3)


def uv_texture_sampling(uv_image, texture):
    """UVImage + texture (NeuralTexture / RGBTexture / array) -> SampledImage."""
    tex = texture.data if hasattr(texture, "data") else np.asarray(texture)
    tex = np.ascontiguousarray(tex, dtype=np.float32)
    if tex.ndim != 3:
        raise ValueError("texture must be (D, H, W)")
    with torch.no_grad():
        out = sample_texture_batch(
            torch.from_numpy(uv_image.data)[None],
            torch.from_numpy(uv_image.mask)[None],
            torch.from_numpy(tex),
        )
    return SampledImage(out[0].numpy(), uv_image.mask.copy())


# ---------------------------------------------------------------------------
# texture extraction (portrait -> RGB texture)

def _bilinear_read_image(img, x, y):
    """Read (C, H, W) image at continuous pixel coords (centers at +0.5), clamped."""
    h, w = img.shape[1], img.shape[2]
    xf = np.asarray(x, dtype=np.float64) - 0.5
    yf = np.asarray(y, dtype=np.float64) - 0.5
    x0 = np.clip(np.floor(xf).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(yf).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(xf - x0, 0.0, 1.0)
    fy = np.clip(yf - y0, 0.0, 1.0)
    p00 = img[:, y0, x0]
    p01 = img[:, y0, x1]
    p10 = img[:, y1, x0]
    p11 = img[:, y1, x1]
    return (
        p00 * (1 - fx) * (1 - fy) + p01 * fx * (1 - fy) + p10 * (1 - fx) * fy + p11 * fx * fy
    )


def extract_texture(portrait, basis, params, texture_size=64, framing=None):
    """Unproject a portrait into UV space.

    Rasterizes the mesh in texture space (vertex (u, v) mapped to texel
    coords) carrying projected image positions as attributes, then reads the
    portrait bilinearly at each covered texel.  Uncovered texels are zero.
    """
    portrait = np.ascontiguousarray(portrait, dtype=np.float64)
    if portrait.ndim != 3 or portrait.shape[0] != 3:
        raise ValueError(f"portrait must be (3, H, W), got {portrait.shape}")
    framing = framing or default_framing(basis, portrait.shape[1])
    shape = reconstruct_shape(basis, params.alpha, params.beta)
    verts = rigid_transform(shape, params.pose)
    px, py = framing.apply(verts)
    uv = basis.vertex_uv.astype(np.float64)
    tex_xy = np.stack(
        [uv[:, 0] * (texture_size - 1) + 0.5, uv[:, 1] * (texture_size - 1) + 0.5], axis=1
    )
    img, mask = rasterize_attributes(
        tex_xy,
        verts[:, 2],
        np.stack([px, py], axis=1),
        basis.triangles,
        texture_size,
        texture_size,
        fill=0.0,
    )
    tex = np.zeros((3, texture_size, texture_size))
    if mask.any():
        cols = _bilinear_read_image(portrait, img[0, mask], img[1, mask])
        tex[:, mask] = np.clip(cols, 0.0, 1.0)
    return RGBTexture(tex.astype(np.float32))


# ---------------------------------------------------------------------------
# networks

class TextureNet(nn.Module):
    """RGB texture -> 16-channel neural texture (conv encoder/decoder)."""

    def __init__(self, in_channels=3, out_channels=16, base=16, seed=0):
        super().__init__()
        self.conv_in = nn.Conv2d(in_channels, base, 3, padding=1)
        self.down = nn.Conv2d(base, 2 * base, 4, stride=2, padding=1)
        self.mid = nn.Conv2d(2 * base, 2 * base, 3, padding=1)
        self.up = nn.Conv2d(2 * base, base, 3, padding=1)
        self.conv_out = nn.Conv2d(base, out_channels, 3, padding=1)
        _seeded_init(self, seed)

    def forward(self, x):
        h = F.relu(self.conv_in(x))
        d = F.relu(self.down(h))
        d = F.relu(self.mid(d))
        d = F.interpolate(d, size=h.shape[-2:], mode="nearest")
        h = F.relu(self.up(d)) + h
        return self.conv_out(h)


class TranslateNet(nn.Module):
    """Sampled neural-texture stack -> RGB frame in [0, 1] (small U-Net)."""

    def __init__(self, in_channels=16, out_channels=3, base=16, seed=0):
        super().__init__()
        self.enc0 = nn.Conv2d(in_channels, base, 3, padding=1)
        self.enc1 = nn.Conv2d(base, 2 * base, 4, stride=2, padding=1)
        self.enc2 = nn.Conv2d(2 * base, 4 * base, 4, stride=2, padding=1)
        self.mid = nn.Conv2d(4 * base, 4 * base, 3, padding=1)
        self.dec2 = nn.Conv2d(4 * base + 2 * base, 2 * base, 3, padding=1)
        self.dec1 = nn.Conv2d(2 * base + base, base, 3, padding=1)
        self.out = nn.Conv2d(base, out_channels, 3, padding=1)
        _seeded_init(self, seed)

    def forward(self, x):
        c0 = F.relu(self.enc0(x))
        c1 = F.relu(self.enc1(c0))
        c2 = F.relu(self.enc2(c1))
        m = F.relu(self.mid(c2))
        u2 = F.interpolate(m, size=c1.shape[-2:], mode="nearest")
        d2 = F.relu(self.dec2(torch.cat([u2, c1], dim=1)))
        u1 = F.interpolate(d2, size=c0.shape[-2:], mode="nearest")
        d1 = F.relu(self.dec1(torch.cat([u1, c0], dim=1)))
        return torch.sigmoid(self.out(d1))


class PerceptualExtractor(nn.Module):
    """Fixed random conv feature stack for the perceptual loss term.

    Weights are frozen at construction (seeded) and can be swapped for
    pretrained ones via save_weights/load_weights.
    """

    def __init__(self, seed=0, channels=(8, 16, 16), strides=(2, 2, 1), in_channels=3):
        super().__init__()
        if len(channels) != len(strides):
            raise ValueError("channels and strides must have equal length")
        self.channels = tuple(int(c) for c in channels)
        self.strides = tuple(int(s) for s in strides)
        self.in_channels = int(in_channels)
        convs = []
        prev = in_channels
        for c, s in zip(self.channels, self.strides):
            convs.append(nn.Conv2d(prev, c, 3, stride=s, padding=1))
            prev = c
        self.convs = nn.ModuleList(convs)
        _seeded_init(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        squeeze = x.dim() == 3
        if squeeze:
            x = x[None]
        h = x
        for i, conv in enumerate(self.convs):
            h = conv(h)
            if i + 1 < len(self.convs):
                h = F.relu(h)
        return h[0] if squeeze else h

    def save_weights(self, path):
        blobs = [(name, t.detach().cpu().numpy()) for name, t in self.state_dict().items()]
        meta = {
            "channels": list(self.channels),
            "strides": list(self.strides),
            "in_channels": self.in_channels,
        }
        write_container(path, "perceptual-weights", blobs, meta=meta)

    @classmethod
    def load_weights(cls, path):
        meta, arrays = read_container(path, expect_kind="perceptual-weights")
        phi = cls(
            seed=0,
            channels=tuple(require_meta(meta, "channels", path)),
            strides=tuple(require_meta(meta, "strides", path)),
            in_channels=int(require_meta(meta, "in_channels", path)),
        )
        state = {}
        for name, tensor in phi.state_dict().items():
            if name not in arrays:
                raise ContainerError(f"{path}: missing weight blob '{name}'")
            if tuple(arrays[name].shape) != tuple(tensor.shape):
                raise ContainerError(f"{path}: weight '{name}' has wrong shape")
            state[name] = torch.from_numpy(arrays[name])
        phi.load_state_dict(state)
        for p in phi.parameters():
            p.requires_grad_(False)
        return phi


class IdentityExtractor(nn.Module):
    """phi(x) = x; turns the perceptual term into a second photometric L1."""

    def forward(self, x):
        return x


def render_loss(pred, gt, phi=None):
    """mean|pred - gt| + mean|phi(pred) - phi(gt)| (scalar tensor)."""
    pred = torch.as_tensor(pred)
    gt = torch.as_tensor(gt, dtype=pred.dtype)
    if pred.shape != gt.shape:
        raise ValueError("prediction/target shapes disagree")
    if phi is None:
        phi = PerceptualExtractor(seed=0)
    batched_pred = pred if pred.dim() == 4 else pred[None]
    batched_gt = gt if gt.dim() == 4 else gt[None]
    return torch.mean(torch.abs(pred - gt)) + torch.mean(
        torch.abs(phi(batched_pred) - phi(batched_gt))
    )


# ---------------------------------------------------------------------------
# configs, dataset, training

@dataclass
class RenderConfig:
    image_size: int = 224
    texture_size: int = 64
    texture_channels: int = 16
    texture_base: int = 16
    translate_base: int = 8
    perceptual_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.image_size % 4 != 0:
            raise ValueError("image_size must be a multiple of 4")
        if self.texture_size % 2 != 0:
            raise ValueError("texture_size must be even")
        for name in ("texture_channels", "texture_base", "translate_base"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def build_render_nets(config=None):
    config = config or RenderConfig()
    tex_net = TextureNet(3, config.texture_channels, config.texture_base, seed=config.seed)
    tr_net = TranslateNet(config.texture_channels, 3, config.translate_base, seed=config.seed + 1)
    return tex_net, tr_net


@dataclass
class RenderTrainSettings:
    learning_rate: float = 2e-4
    batch_size: int = 6
    iterations: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.iterations < 0:
            raise ValueError("invalid training settings")


@dataclass
class RenderDataset:
    """Aligned (UV image, target frame) pairs plus the shared portrait."""

    uv_images: list
    targets: np.ndarray  # (n, 3, H, W) float32 in [0, 1]
    portrait: np.ndarray  # (3, H, W) float32
    portrait_params: FaceParams
    rgb_texture: RGBTexture
    framing: FramingTransform

    def __post_init__(self):
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float32)
        self.portrait = np.ascontiguousarray(self.portrait, dtype=np.float32)
        if len(self.uv_images) != self.targets.shape[0]:
            raise ValueError("uv/target counts disagree")
        if len(self.uv_images) == 0:
            raise ValueError("render dataset is empty")

    def __len__(self):
        return len(self.uv_images)


def _smooth_random_texture(rng, size, coarse=7, lo=0.15, hi=0.85):
    small = rng.uniform(lo, hi, size=(3, coarse, coarse))
    xs = np.linspace(0, coarse - 1, size)
    rows = np.empty((3, coarse, size))
    for c in range(3):
        for i in range(coarse):
            rows[c, i] = np.interp(xs, np.arange(coarse), small[c, i])
    out = np.empty((3, size, size))
    for c in range(3):
        for j in range(size):
            out[c, :, j] = np.interp(xs, np.arange(coarse), rows[c, :, j])
    return out.astype(np.float32)


def build_toy_render_set(basis, n_frames=16, seed=0, image_size=224, texture_size=64):
    """Self-supervised toy set: frames are the basis mesh textured with a
    smooth random RGB texture under random small poses/expressions.  Frame 0
    (neutral) doubles as the portrait."""
    if n_frames < 1:
        raise ValueError("need at least one frame")
    rng = np.random.default_rng(seed)
    framing = default_framing(basis, image_size)
    true_tex = _smooth_random_texture(rng, texture_size)
    uv_images = []
    targets = []
    params_list = [FaceParams()]
    for _ in range(n_frames - 1):
        beta = rng.normal(0.0, 0.8, size=64)
        quat = np.concatenate([[1.0], rng.normal(0.0, 0.06, size=3)])
        quat = quat / np.linalg.norm(quat)
        trans = rng.normal(0.0, 0.03, size=3)
        params_list.append(FaceParams(beta=beta, pose=np.concatenate([quat, trans])))
    for params in params_list:
        uv = rasterize_uv(basis, params, image_size, framing)
        frame = uv_texture_sampling(uv, true_tex).data
        frame = np.round(np.clip(frame, 0.0, 1.0) * 255.0) / 255.0  # 8-bit grid
        uv_images.append(uv)
        targets.append(frame.astype(np.float32))
    portrait = targets[0]
    rgb_tex = extract_texture(portrait, basis, params_list[0], texture_size, framing)
    return RenderDataset(
        uv_images=uv_images,
        targets=np.stack(targets),
        portrait=portrait,
        portrait_params=params_list[0],
        rgb_texture=rgb_tex,
        framing=framing,
    )


def train_render(texture_net, translate_net, dataset, settings=None, phi=None):
    """Joint Adam over both nets on L1 + perceptual L1.  Returns a TrainReport."""
    settings = settings or RenderTrainSettings()
    if phi is None:
        phi = PerceptualExtractor(seed=0)
    n = len(dataset)
    uv = torch.from_numpy(np.stack([im.data for im in dataset.uv_images]))
    mask = torch.from_numpy(np.stack([im.mask for im in dataset.uv_images]))
    gt = torch.from_numpy(dataset.targets)
    rgb = torch.from_numpy(dataset.rgb_texture.data)[None]
    tex_h, tex_w = dataset.rgb_texture.data.shape[1:]
    # the texture is re-generated each step, but the sampling locations only
    # depend on the (fixed) UV images — precompute the gather plan once
    sampler = _FrameSampler(uv, mask, tex_h, tex_w)
    with torch.no_grad():
        phi_gt = phi(gt)  # fixed extractor => cache target features once
    rng = np.random.default_rng(settings.seed)
    params = list(texture_net.parameters()) + list(translate_net.parameters())
    opt = torch.optim.Adam(params, lr=settings.learning_rate)
    report = TrainReport(iterations=settings.iterations)
    for _ in range(settings.iterations):
        idx = torch.from_numpy(rng.integers(0, n, size=settings.batch_size))
        tex = texture_net(rgb)[0]
        sampled = sampler(tex, idx)
        pred = translate_net(sampled)
        loss = torch.mean(torch.abs(pred - gt[idx])) + torch.mean(
            torch.abs(phi(pred) - phi_gt[idx])
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        report.losses.append(float(loss.detach()))
    return report


# ---------------------------------------------------------------------------
# inference + IO

def save_png(image, path):
    """(3, H, W) float in [0, 1] -> 8-bit RGB PNG."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"image must be (3, H, W), got {arr.shape}")
    u8 = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(np.transpose(u8, (1, 2, 0)), mode="RGB").save(path)


def load_png(path):
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise ContainerError(f"{path}: cannot read image ({exc})") from None
    return np.ascontiguousarray(np.transpose(arr, (2, 0, 1)))


def render_sequence(
    motion,
    basis,
    portrait,
    texture_net,
    translate_net,
    out_dir,
    alpha=None,
    portrait_params=None,
    framing=None,
    texture_size=64,
):
    """Render every motion frame to PNG; returns the list of file paths.

    The portrait is unprojected once (assumed neutral unless portrait_params
    is given); each frame is rasterized, sampled, and translated.  Writes
    frame_%04d.png plus index.json into out_dir.
    """
    os.makedirs(out_dir, exist_ok=True)
    image_size = portrait.shape[1]
    framing = framing or default_framing(basis, image_size)
    portrait_params = portrait_params or FaceParams()
    alpha = np.zeros(80) if alpha is None else np.asarray(alpha, dtype=np.float64)
    rgb_tex = extract_texture(portrait, basis, portrait_params, texture_size, framing)
    texture_net.eval()
    translate_net.eval()
    names = []
    with torch.no_grad():
        tex = texture_net(torch.from_numpy(rgb_tex.data)[None])[0]
        for i in range(len(motion)):
            params = FaceParams(alpha=alpha, beta=motion.beta[i], pose=motion.pose[i])
            uv = rasterize_uv(basis, params, image_size, framing)
            sampled = sample_texture_batch(
                torch.from_numpy(uv.data)[None], torch.from_numpy(uv.mask)[None], tex
            )
            frame = translate_net(sampled)[0].numpy()
            name = f"frame_{i:04d}.png"
            save_png(frame, os.path.join(out_dir, name))
            names.append(name)
    with open(os.path.join(out_dir, "index.json"), "w") as fh:
        json.dump({"count": len(names), "frames": names}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return [os.path.join(out_dir, n) for n in names]


# ---------------------------------------------------------------------------
# checkpoints + dataset files

def save_render_checkpoint(texture_net, translate_net, config, framing, path, iteration=0):
    blobs = [
        (f"texture.{name}", t.detach().cpu().numpy())
        for name, t in texture_net.state_dict().items()
    ] + [
        (f"translate.{name}", t.detach().cpu().numpy())
        for name, t in translate_net.state_dict().items()
    ]
    meta = {
        "config": asdict(config),
        "framing": asdict(framing) if framing is not None else None,
        "iteration": int(iteration),
    }
    write_container(path, "render-checkpoint", blobs, meta=meta)


def load_render_checkpoint(path):
    """Returns (texture_net, translate_net, config, framing, iteration)."""
    meta, arrays = read_container(path, expect_kind="render-checkpoint")
    cfg_dict = require_meta(meta, "config", path)
    known = {f.name for f in fields(RenderConfig)}
    if set(cfg_dict) - known:
        raise ContainerError(f"{path}: unknown config fields {sorted(set(cfg_dict) - known)}")
    try:
        config = RenderConfig(**cfg_dict)
    except (TypeError, ValueError) as exc:
        raise ContainerError(f"{path}: bad config ({exc})") from None
    texture_net, translate_net = build_render_nets(config)
    for prefix, net in (("texture", texture_net), ("translate", translate_net)):
        state = {}
        for name, tensor in net.state_dict().items():
            key = f"{prefix}.{name}"
            if key not in arrays:
                raise ContainerError(f"{path}: missing parameter blob '{key}'")
            if tuple(arrays[key].shape) != tuple(tensor.shape):
                raise ContainerError(f"{path}: parameter '{key}' has wrong shape")
            state[name] = torch.from_numpy(arrays[key])
        net.load_state_dict(state)
        net.eval()
    framing = meta.get("framing")
    framing = FramingTransform(**framing) if framing else None
    return texture_net, translate_net, config, framing, int(meta.get("iteration", 0))


def save_render_dataset(dataset, path):
    os.makedirs(path, exist_ok=True)
    items = []
    for i, (uv, target) in enumerate(zip(dataset.uv_images, dataset.targets)):
        uv_name, png_name = f"frame_{i:04d}.uvc", f"frame_{i:04d}.png"
        write_container(os.path.join(path, uv_name), "uv-image", [("uv", uv.data)])
        save_png(target, os.path.join(path, png_name))
        items.append({"uv": uv_name, "target": png_name})
    save_png(dataset.portrait, os.path.join(path, "portrait.png"))
    write_container(
        os.path.join(path, "rgb_texture.tex"), "rgb-texture", [("rgb", dataset.rgb_texture.data)]
    )
    p = dataset.portrait_params
    manifest = {
        "format": "stylefuse-render-set",
        "version": 1,
        "framing": asdict(dataset.framing),
        "portrait": "portrait.png",
        "portrait_alpha": p.alpha.tolist(),
        "portrait_beta": p.beta.tolist(),
        "portrait_pose": p.pose.tolist(),
        "items": items,
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_render_dataset(path):
    mpath = os.path.join(path, "manifest.json")
    if not os.path.isfile(mpath):
        raise ContainerError(f"{path}: not a render dataset (missing manifest.json)")
    with open(mpath) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContainerError(f"{mpath}: bad JSON ({exc})") from None
    if manifest.get("format") != "stylefuse-render-set":
        raise ContainerError(f"{mpath}: missing render-set format tag")
    uv_images, targets = [], []
    for item in manifest["items"]:
        _, arrays = read_container(os.path.join(path, item["uv"]), expect_kind="uv-image")
        data = arrays["uv"]
        mask = data[0] > np.float32(UV_SENTINEL)
        uv_images.append(UVImage(data, mask))
        targets.append(load_png(os.path.join(path, item["target"])))
    _, tex_arrays = read_container(os.path.join(path, "rgb_texture.tex"), expect_kind="rgb-texture")
    params = FaceParams(
        alpha=manifest["portrait_alpha"],
        beta=manifest["portrait_beta"],
        pose=manifest["portrait_pose"],
    )
    return RenderDataset(
        uv_images=uv_images,
        targets=np.stack(targets),
        portrait=load_png(os.path.join(path, manifest["portrait"])),
        portrait_params=params,
        rgb_texture=RGBTexture(tex_arrays["rgb"]),
        framing=FramingTransform(**manifest["framing"]),
    )
