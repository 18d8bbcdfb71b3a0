"""Opponent colour decomposition of RGB images.

An input image is mapped to three opponent channels before any spatial
analysis: an additive luminance channel and two chromatic channels built
from luminance-normalised differences,

    L  = R + G + B
    rg = (R - G) / L
    by = (R + G - 2B) / L

with the divisions guarded at near-black pixels. Gamma correction
(exponent 1/2.2 by default) linearises display-encoded values first, and
large images are downscaled so the longer side does not exceed a working
limit, which bounds the cost of everything downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ValidationError

# Pixels darker than this total luminance get zero chromatic response
# instead of an ill-conditioned division.
LUMINANCE_EPS = 1e-6

# Display-decoding exponent applied before the opponent transform.
DEFAULT_GAMMA = 1.0 / 2.2

# Default cap on the longer image side during analysis.
DEFAULT_MAX_SIDE = 128


@dataclass(frozen=True)
class RgbImage:
    """RGB image as three float planes in [0, 1].

    ``source_size`` records the (width, height) the image had before
    :func:`resize_max_side`, so a saliency map computed at the working
    resolution can be scaled back up.
    """

    r: np.ndarray
    g: np.ndarray
    b: np.ndarray
    source_size: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.r.shape != self.g.shape or self.r.shape != self.b.shape:
            raise ValidationError("RGB planes must share one shape")
        if self.r.ndim != 2 or self.r.size == 0:
            raise ValidationError("RGB planes must be non-empty 2-D arrays")
        for plane in (self.r, self.g, self.b):
            if not np.all(np.isfinite(plane)):
                raise ValidationError("RGB planes must be finite")
            if plane.min() < -1e-9 or plane.max() > 1.0 + 1e-9:
                raise ValidationError("RGB values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.r.shape[0]

    @property
    def width(self) -> int:
        return self.r.shape[1]

    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.r, self.g, self.b


@dataclass(frozen=True)
class OpponentImage:
    """Opponent decomposition: luminance plus two chromatic contrasts."""

    luminance: np.ndarray
    red_green: np.ndarray
    blue_yellow: np.ndarray
    source_size: tuple[int, int] | None = None

    @property
    def height(self) -> int:
        return self.luminance.shape[0]

    @property
    def width(self) -> int:
        return self.luminance.shape[1]

    def channels(self) -> dict[str, np.ndarray]:
        """Channel name -> plane, in canonical order (L, rg, by)."""
        return {
            "L": self.luminance,
            "rg": self.red_green,
            "by": self.blue_yellow,
        }


def load_image(path) -> RgbImage:
    """Decode a PNG/JPEG file into float RGB planes in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return RgbImage(arr[..., 0], arr[..., 1], arr[..., 2])


def from_array(arr: np.ndarray) -> RgbImage:
    """Wrap an (H, W, 3) float array in [0, 1] as an :class:`RgbImage`."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError("expected an (H, W, 3) array")
    return RgbImage(arr[..., 0], arr[..., 1], arr[..., 2])


def gamma_correct(image: RgbImage, exponent: float = DEFAULT_GAMMA) -> RgbImage:
    """Raise every sample to ``exponent`` (default 1/2.2).

    Rejects non-finite samples and non-positive exponents rather than
    propagating NaNs into the wavelet stage.
    """
    if not np.isfinite(exponent) or exponent <= 0:
        raise ValidationError(f"gamma exponent must be positive, got {exponent!r}")
    out = []
    for plane in image.planes():
        if not np.all(np.isfinite(plane)):
            raise ValidationError("non-finite sample in gamma correction input")
        out.append(np.power(plane, exponent))
    return RgbImage(out[0], out[1], out[2], source_size=image.source_size)


def to_opponent(image: RgbImage, eps: float = LUMINANCE_EPS) -> OpponentImage:
    """Map RGB planes to (L, rg, by) opponent channels.

    Chromatic channels are zero wherever the summed luminance falls under
    ``eps``: a black pixel carries no colour opponency.
    """
    r, g, b = image.planes()
    lum = r + g + b
    safe = np.maximum(lum, eps)
    dark = lum < eps
    rg = np.where(dark, 0.0, (r - g) / safe)
    by = np.where(dark, 0.0, (r + g - 2.0 * b) / safe)
    return OpponentImage(lum, rg, by, source_size=image.source_size)


def _resize_plane(plane: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    img = Image.fromarray(plane.astype(np.float32), mode="F")
    return np.asarray(img.resize(size, Image.BILINEAR), dtype=np.float64)


def resize_max_side(image: RgbImage, limit: int = DEFAULT_MAX_SIDE) -> RgbImage:
    """Downscale so the longer side equals ``limit`` (bilinear).

    Images already at or under the limit pass through unchanged apart from
    recording their source size. Aspect ratio is preserved; the shorter
    side is rounded but kept at least 1 px.
    """
    if limit < 8:
        raise ValidationError(f"working-size limit must be >= 8, got {limit}")
    h, w = image.height, image.width
    if h == 0 or w == 0:
        raise ValidationError("cannot resize an empty image")
    src = image.source_size or (w, h)
    if max(h, w) <= limit:
        return RgbImage(image.r, image.g, image.b, source_size=src)
    scale = limit / max(h, w)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    if w >= h:
        new_w = limit
    else:
        new_h = limit
    size = (new_w, new_h)
    r, g, b = (np.clip(_resize_plane(p, size), 0.0, 1.0) for p in image.planes())
    return RgbImage(r, g, b, source_size=src)
