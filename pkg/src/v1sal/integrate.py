"""From per-plane conspicuity to a single saliency map.

The lattice leaves one non-negative conspicuity plane per scale and
orientation, per opponent channel. This module folds them down in three
stages, each a pure array transform:

1. :func:`fuse_planes` collapses a channel's (S, O, H, W) stack into one
   map. "inverse" treats the planes as wavelet detail coefficients and
   reconstructs (sum of all planes plus the channel's low-pass
   residual), "max" takes the pointwise maximum, and "argmax" picks the
   single plane holding the global peak.
2. :func:`combine_channels` merges the per-channel maps. "sqrt_sum"
   shifts each map to a zero floor, adds them and takes the square
   root; "l2" is the pointwise Euclidean norm.
3. :func:`znorm` standardises to zero mean / unit variance and
   :func:`smooth` applies the fixation-scale Gaussian (reflected at the
   borders, so the map's mass stays put).

:func:`upsample` finally brings the working-resolution map back to the
source geometry with the same bilinear resampler the input pipeline
uses for downscaling.
"""

from __future__ import annotations

import warnings
from typing import Mapping, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ValidationError

FUSION_MODES = ("inverse", "max", "argmax")
CHANNEL_COMBINE_MODES = ("sqrt_sum", "l2")

# A Gaussian this narrow is indistinguishable from identity on a pixel
# grid; smooth() skips it rather than pretending to blur.
MIN_SMOOTH_SIGMA_PX = 0.5


def _check_planes(planes: np.ndarray) -> np.ndarray:
    planes = np.asarray(planes, dtype=np.float64)
    if planes.ndim != 4:
        raise ValidationError(f"expected (S, O, H, W) planes, got {planes.shape}")
    if not np.all(np.isfinite(planes)):
        raise ValidationError("conspicuity planes contain non-finite values")
    return planes


def fuse_planes(
    planes: np.ndarray, residual: np.ndarray | None = None, mode: str = "inverse"
) -> np.ndarray:
    """Collapse one channel's conspicuity stack into a single map."""
    planes = _check_planes(planes)
    if mode == "inverse":
        fused = planes.sum(axis=(0, 1))
        if residual is not None:
            residual = np.asarray(residual, dtype=np.float64)
            if residual.shape != planes.shape[-2:]:
                raise ValidationError(
                    f"residual {residual.shape} does not match planes {planes.shape[-2:]}"
                )
            fused = fused + residual
        return fused
    if mode == "max":
        return planes.max(axis=(0, 1))
    if mode == "argmax":
        # plane containing the global peak; ties resolve to the first
        # plane in scale-major order
        s, o = np.unravel_index(int(np.argmax(planes)), planes.shape)[:2]
        return planes[s, o].copy()
    raise ValidationError(f"unknown fusion mode {mode!r}; pick from {FUSION_MODES}")


def combine_channels(
    channel_maps: Mapping[str, np.ndarray] | Sequence[np.ndarray],
    mode: str = "sqrt_sum",
) -> np.ndarray:
    """Merge per-channel maps into one; all maps must share a shape."""
    if isinstance(channel_maps, Mapping):
        maps = list(channel_maps.values())
    else:
        maps = list(channel_maps)
    if not maps:
        raise ValidationError("no channel maps to combine")
    arrs = [np.asarray(m, dtype=np.float64) for m in maps]
    shape = arrs[0].shape
    for a in arrs:
        if a.shape != shape or a.ndim != 2:
            raise ValidationError("channel maps must all be 2-D and same-shaped")
        if not np.all(np.isfinite(a)):
            raise ValidationError("channel map contains non-finite values")
    if mode == "sqrt_sum":
        total = np.zeros(shape)
        for a in arrs:
            total += a - a.min()
        return np.sqrt(np.maximum(total, 0.0))
    if mode == "l2":
        total = np.zeros(shape)
        for a in arrs:
            total += np.square(a)
        return np.sqrt(total)
    raise ValidationError(
        f"unknown channel combination {mode!r}; pick from {CHANNEL_COMBINE_MODES}"
    )


def znorm(saliency: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Zero-mean unit-variance map; a flat map becomes all zeros."""
    saliency = np.asarray(saliency, dtype=np.float64)
    if not np.all(np.isfinite(saliency)):
        raise ValidationError("cannot normalize a non-finite map")
    std = float(saliency.std())
    if std <= eps:
        warnings.warn(
            "flat saliency map: standardization would divide by ~0, returning zeros",
            RuntimeWarning,
            stacklevel=2,
        )
        return np.zeros_like(saliency)
    return (saliency - saliency.mean()) / std


def smooth(saliency: np.ndarray, sigma_px: float, truncate: float = 3.0) -> np.ndarray:
    """Gaussian blur with reflected borders; sub-pixel sigmas are a no-op."""
    saliency = np.asarray(saliency, dtype=np.float64)
    if sigma_px < 0 or not np.isfinite(sigma_px):
        raise ValidationError(f"bad smoothing sigma {sigma_px!r}")
    if sigma_px < MIN_SMOOTH_SIGMA_PX:
        warnings.warn(
            f"smoothing sigma {sigma_px:.3g}px is below {MIN_SMOOTH_SIGMA_PX}px; skipped",
            RuntimeWarning,
            stacklevel=2,
        )
        return saliency.copy()
    return ndimage.gaussian_filter(saliency, sigma_px, mode="reflect", truncate=truncate)


def upsample(saliency: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to ``size`` = (width, height), PIL convention."""
    saliency = np.asarray(saliency, dtype=np.float64)
    if saliency.ndim != 2:
        raise ValidationError("can only upsample a 2-D map")
    width, height = int(size[0]), int(size[1])
    if width < 1 or height < 1:
        raise ValidationError(f"bad target size {size!r}")
    if (width, height) == (saliency.shape[1], saliency.shape[0]):
        return saliency.copy()
    img = Image.fromarray(saliency.astype(np.float32), mode="F")
    out = img.resize((width, height), Image.Resampling.BILINEAR)
    return np.asarray(out, dtype=np.float64)
