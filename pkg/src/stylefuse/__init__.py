"""Stylized audio-driven facial motion synthesis with deferred neural rendering.

Two-stage pipeline, one small package per stage plus shared plumbing:

* face_model -- affine 3DMM (80 identity / 64 expression coefficients, 7-dim
  pose) with a deterministic synthetic basis generator.
* style -- interpretable 135-dim style codes (per-channel motion standard
  deviations) with interpolation and 2-D projection.
* audio -- waveform IO, deterministic 29-channel features at 50 fps, and
  audio/motion window alignment.
* lsf -- the latent-style-fusion network: audio window + style code ->
  motion window, plus training and sliding-window synthesis.
* render -- UV rasterization, bit-reproducible bilinear texture sampling,
  texture extraction, and the deferred neural renderer.
* data -- synthetic corpus generation and ingest of external reconstructions.
* cli -- the `stylefuse` command-line entry point.
"""

__version__ = "0.1.0"

from .containers import ContainerError  # noqa: F401
