"""Undecimated a-trous wavelet decomposition.

Each channel plane is split into S scales of three oriented detail planes
plus one low-pass residual, all at full resolution. The separable kernel
starts as the 5-tap binomial [1, 4, 6, 4, 1]/16 and is dilated by zero
insertion at every level, so scale s probes structure around wavelength
2^s px. The cascade at level s, writing c for the previous approximation
and h for the level's 1-D taps, is

    ch = c * h          (filter along rows, i.e. the horizontal axis)
    cv = c * h'         (filter along columns)
    wh = c - ch
    wv = c - cv
    wd = c - ((ch * h') + wh + wv)
    c' = c - (wh + wv + wd)

which telescopes to c' = (ch * h'), the plain separable 2-D low-pass, and
makes the synthesis sum(w) + residual reproduce the input exactly by
construction. Orientation naming follows the filtering axis: the "h"
plane removes horizontal smoothing and therefore responds to structure
varying along x (vertically oriented features); "v" responds to
horizontal features; "d" holds the diagonal remainder (45/135 combined).

Planes are kept in float64; the optional debug dump stores 32-bit floats
behind a small self-describing header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ValidationError

BASE_FILTER = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

ORIENTATIONS = ("h", "v", "d")

# scipy boundary modes for the supported padding conventions; "mirror"
# means half-sample symmetric (edge value repeated).
_BOUNDARY_MODES = {"mirror": "reflect", "wrap": "wrap"}

_DUMP_MAGIC = b"V1WP"
_DUMP_VERSION = 1


def num_scales(side: int) -> int:
    """Number of scales for an image whose longer side is ``side``.

    floor(log2(side / 8)) + 2, defined for side >= 8; 128 px gives 6.
    """
    if side < 8:
        raise ValidationError(f"need side >= 8 for a wavelet stack, got {side}")
    return int(np.floor(np.log2(side / 8.0))) + 2


def dilate_filter(taps: np.ndarray) -> np.ndarray:
    """Insert one zero between consecutive taps (a-trous dilation)."""
    taps = np.asarray(taps, dtype=np.float64)
    out = np.zeros(2 * taps.size - 1)
    out[::2] = taps
    return out


def filter_bank(levels: int) -> list[np.ndarray]:
    """Taps for levels 1..levels; level s has 4 * 2**(s-1) + 1 entries."""
    bank = [BASE_FILTER.copy()]
    for _ in range(1, levels):
        bank.append(dilate_filter(bank[-1]))
    return bank


@dataclass
class WaveletPyramid:
    """Oriented detail planes plus the final low-pass residual.

    ``planes`` has shape (scales, 3, H, W) with orientation axis ordered
    (h, v, d); ``residual`` is (H, W).
    """

    planes: np.ndarray
    residual: np.ndarray
    boundary: str = "mirror"
    channel: str = ""

    @property
    def scales(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.residual.shape


def _smooth(plane: np.ndarray, taps: np.ndarray, axis: int, boundary: str) -> np.ndarray:
    return correlate1d(plane, taps, axis=axis, mode=_BOUNDARY_MODES[boundary])


def decompose(
    plane: np.ndarray,
    scales: int | None = None,
    boundary: str = "mirror",
    channel: str = "",
) -> WaveletPyramid:
    """Run the a-trous cascade over one channel plane.

    ``scales`` defaults to :func:`num_scales` of the longer side. The
    boundary is "mirror" (default) or "wrap"; under "wrap" the transform
    commutes exactly with circular shifts.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValidationError("decompose expects a 2-D plane")
    if not np.all(np.isfinite(plane)):
        raise ValidationError("non-finite values in wavelet input")
    if boundary not in _BOUNDARY_MODES:
        raise ValidationError(f"unknown boundary {boundary!r}")
    if scales is None:
        scales = num_scales(max(plane.shape))
    if scales < 1:
        raise ValidationError("need at least one scale")

    bank = filter_bank(scales)
    out = np.empty((scales, 3) + plane.shape)
    c = plane
    for s, taps in enumerate(bank):
        ch = _smooth(c, taps, axis=1, boundary=boundary)
        cv = _smooth(c, taps, axis=0, boundary=boundary)
        wh = c - ch
        wv = c - cv
        wd = c - (_smooth(ch, taps, axis=0, boundary=boundary) + wh + wv)
        out[s, 0] = wh
        out[s, 1] = wv
        out[s, 2] = wd
        c = c - (wh + wv + wd)
    return WaveletPyramid(out, c, boundary=boundary, channel=channel)


def synthesize(pyramid: WaveletPyramid) -> np.ndarray:
    """Sum all detail planes and the residual back into one plane."""
    return pyramid.planes.sum(axis=(0, 1)) + pyramid.residual


def split_on_off(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Half-wave rectify a plane into non-negative ON and OFF parts."""
    plane = np.asarray(plane, dtype=np.float64)
    return np.maximum(plane, 0.0), np.maximum(-plane, 0.0)


def dump_pyramid(pyramid: WaveletPyramid, path) -> None:
    """Write planes as float32 grids behind a small binary header.

    Layout: magic, version, scales, orientations, H, W, then the detail
    planes in (scale, orientation) order followed by the residual.
    """
    s, o, h, w = pyramid.planes.shape
    boundary = pyramid.boundary.encode("ascii")
    channel = pyramid.channel.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<5I", _DUMP_VERSION, s, o, h, w))
        fh.write(struct.pack("<2B", len(boundary), len(channel)))
        fh.write(boundary)
        fh.write(channel)
        fh.write(pyramid.planes.astype("<f4").tobytes())
        fh.write(pyramid.residual.astype("<f4").tobytes())


def load_pyramid(path) -> WaveletPyramid:
    """Read a pyramid written by :func:`dump_pyramid` (float32 precision)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DUMP_MAGIC:
            raise ValidationError(f"not a pyramid dump: bad magic {magic!r}")
        version, s, o, h, w = struct.unpack("<5I", fh.read(20))
        if version != _DUMP_VERSION:
            raise ValidationError(f"unsupported pyramid dump version {version}")
        len_b, len_c = struct.unpack("<2B", fh.read(2))
        boundary = fh.read(len_b).decode("ascii")
        channel = fh.read(len_c).decode("ascii")
        planes = np.frombuffer(fh.read(4 * s * o * h * w), dtype="<f4")
        residual = np.frombuffer(fh.read(4 * h * w), dtype="<f4")
    return WaveletPyramid(
        planes.reshape(s, o, h, w).astype(np.float64),
        residual.reshape(h, w).astype(np.float64),
        boundary=boundary,
        channel=channel,
    )
