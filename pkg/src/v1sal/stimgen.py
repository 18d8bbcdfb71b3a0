"""Parametric singleton-search stimuli for contrast-monotonicity studies.

Five families, each a canvas of identical distractor items plus one
target item differing along a single feature axis:

* brightness: gray discs; the distractors' lightness walks away from
  the fixed target lightness (0.5) toward the background, so level 0 is
  a perfect null and the top level leaves only the target visible.
* color: same-hue discs at lightness 0.5; distractor saturation sits
  ``delta`` below the target's full saturation, on a gray or saturated
  red background.
* size: dark discs, distractors at 2.5 degrees diameter, target from
  1.25 to 5.
* orientation: dark bars, distractors horizontal, target rotated.
* asymmetry: a regular grid of outline circles where one glyph carries
  (or misses) a vertical bar; item scale selects the grid density.

All geometry is specified in visual degrees and rasterized hard-edged
at integer pixel centers, so a zero-contrast target is pixel-for-pixel
identical to a distractor. Colors go through the standard HSL hexcone
(:mod:`colorsys`). Placement for the scattered families is rejection
sampling with a minimum gap; every stimulus is a pure function of its
parameters and seed.

Each stimulus ships with two binary masks: the target glyph and the
union of distractor glyphs. The second is the matched control region
for null checks (a fair "elsewhere" with the same pixel statistics).
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .color import RgbImage
from .errors import PlacementError, ValidationError

STIMULUS_KINDS = ("brightness", "color", "size", "orientation", "asymmetry")

BRIGHTNESS_LEVELS = (0.0, 0.08, 0.17, 0.25, 0.33, 0.41, 0.5)
COLOR_LEVELS = (0.0, 0.121, 0.246, 0.368, 0.528, 0.728, 1.0)
SIZE_LEVELS_DEG = (1.25, 1.67, 2.08, 2.5, 3.34, 4.17, 5.0)
ORIENTATION_LEVELS_DEG = (0.0, 10.0, 20.0, 30.0, 42.0, 56.0, 90.0)
ASYMMETRY_SCALES_DEG = (1.25, 1.67, 2.08, 2.5, 3.33, 4.17, 5.0)

# Grid density per asymmetry item scale: larger items, fewer cells. The
# smallest scale continues the published progression one step further.
ASYMMETRY_GRIDS = {
    1.25: (24, 32),
    1.67: (20, 26),
    2.08: (15, 20),
    2.5: (10, 13),
    3.33: (8, 10),
    4.17: (6, 8),
    5.0: (5, 7),
}

TARGET_LIGHTNESS = 0.5
COLOR_BACKGROUNDS = ("achromatic", "saturated_red")
COLOR_TARGET_HUES = {"red": 0.0, "blue": 240.0}

N_ITEMS = 34
ITEM_DIAMETER_DEG = 2.5
BAR_LENGTH_DEG = 2.5
BAR_WIDTH_DEG = 0.5

DEFAULT_CANVAS = 1024
DEFAULT_PPD = 32.0
MIN_GAP_PX = 4
PLACEMENT_RETRIES = 1000

# dark items / light field used by the gray-geometry families
_INK = 0.1
_PAPER = 0.9


@dataclass(frozen=True)
class StimulusSpec:
    """What was asked for: family, its parameters, canvas geometry, seed."""

    kind: str
    params: tuple[tuple[str, object], ...]
    canvas: int = DEFAULT_CANVAS
    ppd: float = DEFAULT_PPD
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in STIMULUS_KINDS:
            raise ValidationError(f"unknown stimulus kind {self.kind!r}")
        if self.canvas < 32:
            raise ValidationError("canvas too small to hold any item")
        if self.ppd <= 0 or not math.isfinite(self.ppd):
            raise ValidationError(f"bad ppd {self.ppd!r}")

    @property
    def name(self) -> str:
        bits = [self.kind] + [f"{v:g}" if isinstance(v, float) else str(v) for _, v in self.params]
        return "_".join(bits)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "canvas": self.canvas,
            "ppd": self.ppd,
            "seed": self.seed,
        }


@dataclass
class Stimulus:
    """Rendered search array with its singleton and control masks."""

    image: RgbImage
    target_mask: np.ndarray
    distractor_mask: np.ndarray
    spec: StimulusSpec

    def __post_init__(self) -> None:
        for mask in (self.target_mask, self.distractor_mask):
            if mask.shape != (self.image.height, self.image.width):
                raise ValidationError("mask shape does not match the canvas")
            if mask.dtype != bool:
                raise ValidationError("masks must be boolean")
        if not self.target_mask.any():
            raise ValidationError("empty target mask")
        if (self.target_mask & self.distractor_mask).any():
            raise ValidationError("target and distractor masks overlap")


def hsl_to_rgb(hue_deg: float, saturation: float, lightness: float) -> tuple[float, float, float]:
    """Hexcone HSL to RGB; hue in degrees, the rest in [0, 1]."""
    if not (0.0 <= saturation <= 1.0 and 0.0 <= lightness <= 1.0):
        raise ValidationError("saturation and lightness must lie in [0, 1]")
    return colorsys.hls_to_rgb((hue_deg % 360.0) / 360.0, lightness, saturation)


def rgb_to_hsl(r: float, g: float, b: float) -> tuple[float, float, float]:
    h, l, s = colorsys.rgb_to_hls(r, g, b)
    return h * 360.0, s, l


def _check_level(value: float, allowed, label: str) -> float:
    for v in allowed:
        if abs(value - v) <= 1e-9:
            return v
    raise ValidationError(f"{label} must be one of {list(allowed)}, got {value!r}")


def _blank(canvas: int, rgb: tuple[float, float, float]) -> np.ndarray:
    field = np.empty((3, canvas, canvas))
    for i in range(3):
        field[i].fill(rgb[i])
    return field


def _paint(field: np.ndarray, mask: np.ndarray, rgb: tuple[float, float, float]) -> None:
    for i in range(3):
        field[i][mask] = rgb[i]


def _disc_mask(canvas: int, center: tuple[int, int], radius_px: float) -> np.ndarray:
    cy, cx = center
    r = int(math.ceil(radius_px))
    y0, y1 = max(0, cy - r), min(canvas, cy + r + 1)
    x0, x1 = max(0, cx - r), min(canvas, cx + r + 1)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    out = np.zeros((canvas, canvas), dtype=bool)
    out[y0:y1, x0:x1] = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius_px**2
    return out


def _ring_mask(canvas: int, center: tuple[int, int], radius_px: float, stroke_px: float) -> np.ndarray:
    cy, cx = center
    r = int(math.ceil(radius_px))
    y0, y1 = max(0, cy - r), min(canvas, cy + r + 1)
    x0, x1 = max(0, cx - r), min(canvas, cx + r + 1)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d2 = (yy - cy) ** 2 + (xx - cx) ** 2
    inner = max(radius_px - stroke_px, 0.0)
    out = np.zeros((canvas, canvas), dtype=bool)
    out[y0:y1, x0:x1] = (d2 <= radius_px**2) & (d2 > inner**2)
    return out


def _bar_mask(
    canvas: int,
    center: tuple[int, int],
    length_px: float,
    width_px: float,
    angle_deg: float,
) -> np.ndarray:
    cy, cx = center
    half_diag = math.hypot(length_px, width_px) / 2.0
    r = int(math.ceil(half_diag))
    y0, y1 = max(0, cy - r), min(canvas, cy + r + 1)
    x0, x1 = max(0, cx - r), min(canvas, cx + r + 1)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    # image rows grow downward; use the math convention on (x, -y)
    phi = math.radians(angle_deg)
    u = (xx - cx) * math.cos(phi) + (cy - yy) * math.sin(phi)
    v = -(xx - cx) * math.sin(phi) + (cy - yy) * math.cos(phi)
    out = np.zeros((canvas, canvas), dtype=bool)
    # the epsilon keeps boundary pixels from flickering with the tiny
    # trig residue at axis-aligned angles (cos 90deg is not exactly 0)
    eps = 1e-9
    out[y0:y1, x0:x1] = (np.abs(u) <= length_px / 2.0 + eps) & (
        np.abs(v) <= width_px / 2.0 + eps
    )
    return out


def _place_items(
    rng: np.random.Generator, canvas: int, clearances_px: list[float]
) -> list[tuple[int, int]]:
    """Random non-overlapping centers, first entry placed first.

    ``clearances_px`` holds each item's collision radius. Items keep
    ``MIN_GAP_PX`` between clearance circles and stay fully inside the
    canvas; every item gets ``PLACEMENT_RETRIES`` draws before a
    :class:`PlacementError`.
    """
    centers: list[tuple[int, int]] = []
    for idx, clearance in enumerate(clearances_px):
        margin = int(math.ceil(clearance)) + 1
        if canvas - 2 * margin <= 0:
            raise PlacementError(f"item {idx} larger than the canvas")
        for _ in range(PLACEMENT_RETRIES):
            cy = int(rng.integers(margin, canvas - margin))
            cx = int(rng.integers(margin, canvas - margin))
            ok = True
            for (py, px), prev in zip(centers, clearances_px):
                need = clearance + prev + MIN_GAP_PX
                if (cy - py) ** 2 + (cx - px) ** 2 < need * need:
                    ok = False
                    break
            if ok:
                centers.append((cy, cx))
                break
        else:
            raise PlacementError(
                f"could not place item {idx + 1}/{len(clearances_px)} "
                f"after {PLACEMENT_RETRIES} tries (canvas {canvas}px)"
            )
    return centers


def _finish(
    field: np.ndarray,
    target_mask: np.ndarray,
    distractor_mask: np.ndarray,
    spec: StimulusSpec,
) -> Stimulus:
    np.clip(field, 0.0, 1.0, out=field)
    image = RgbImage(
        field[0], field[1], field[2], source_size=(spec.canvas, spec.canvas)
    )
    return Stimulus(
        image=image,
        target_mask=target_mask,
        distractor_mask=distractor_mask & ~target_mask,
        spec=spec,
    )


def _scattered_discs(
    spec: StimulusSpec,
    background_rgb: tuple[float, float, float],
    target_rgb: tuple[float, float, float],
    distractor_rgb: tuple[float, float, float],
    target_diameter_deg: float = ITEM_DIAMETER_DEG,
) -> Stimulus:
    rng = np.random.default_rng(spec.seed)
    radius_d = ITEM_DIAMETER_DEG * spec.ppd / 2.0
    radius_t = target_diameter_deg * spec.ppd / 2.0
    radii = [radius_t] + [radius_d] * (N_ITEMS - 1)
    centers = _place_items(rng, spec.canvas, radii)
    field = _blank(spec.canvas, background_rgb)
    target_mask = _disc_mask(spec.canvas, centers[0], radius_t)
    _paint(field, target_mask, target_rgb)
    distractor_mask = np.zeros_like(target_mask)
    for center in centers[1:]:
        m = _disc_mask(spec.canvas, center, radius_d)
        _paint(field, m, distractor_rgb)
        distractor_mask |= m
    return _finish(field, target_mask, distractor_mask, spec)


def brightness_stimulus(
    delta: float,
    background: str = "dark",
    seed: int = 0,
    canvas: int = DEFAULT_CANVAS,
    ppd: float = DEFAULT_PPD,
) -> Stimulus:
    """Gray discs; distractor lightness moves ``delta`` toward the background."""
    delta = _check_level(delta, BRIGHTNESS_LEVELS, "brightness delta")
    if background not in ("bright", "dark"):
        raise ValidationError(f"background must be 'bright' or 'dark', got {background!r}")
    if background == "bright":
        bg_l, dist_l = 1.0, TARGET_LIGHTNESS + delta
    else:
        bg_l, dist_l = 0.0, TARGET_LIGHTNESS - delta
    spec = StimulusSpec(
        kind="brightness",
        params=(("background", background), ("delta", delta)),
        canvas=canvas,
        ppd=ppd,
        seed=seed,
    )
    return _scattered_discs(
        spec,
        background_rgb=(bg_l,) * 3,
        target_rgb=(TARGET_LIGHTNESS,) * 3,
        distractor_rgb=(dist_l,) * 3,
    )


def color_stimulus(
    delta: float,
    target_hue: str = "red",
    background: str = "achromatic",
    seed: int = 0,
    canvas: int = DEFAULT_CANVAS,
    ppd: float = DEFAULT_PPD,
) -> Stimulus:
    """Same-hue discs; distractor saturation sits ``delta`` below the target's."""
    delta = _check_level(delta, COLOR_LEVELS, "saturation delta")
    if target_hue not in COLOR_TARGET_HUES:
        raise ValidationError(f"target_hue must be one of {sorted(COLOR_TARGET_HUES)}")
    if background not in COLOR_BACKGROUNDS:
        raise ValidationError(f"background must be one of {COLOR_BACKGROUNDS}")
    hue = COLOR_TARGET_HUES[target_hue]
    bg_rgb = (
        hsl_to_rgb(0.0, 0.0, TARGET_LIGHTNESS)
        if background == "achromatic"
        else hsl_to_rgb(0.0, 1.0, TARGET_LIGHTNESS)
    )
    spec = StimulusSpec(
        kind="color",
        params=(("target_hue", target_hue), ("background", background), ("delta", delta)),
        canvas=canvas,
        ppd=ppd,
        seed=seed,
    )
    return _scattered_discs(
        spec,
        background_rgb=bg_rgb,
        target_rgb=hsl_to_rgb(hue, 1.0, TARGET_LIGHTNESS),
        distractor_rgb=hsl_to_rgb(hue, 1.0 - delta, TARGET_LIGHTNESS),
    )


def size_stimulus(
    target_diameter: float,
    seed: int = 0,
    canvas: int = DEFAULT_CANVAS,
    ppd: float = DEFAULT_PPD,
) -> Stimulus:
    """Dark discs; only the target's diameter departs from 2.5 degrees."""
    target_diameter = _check_level(target_diameter, SIZE_LEVELS_DEG, "target diameter")
    spec = StimulusSpec(
        kind="size",
        params=(("target_diameter", target_diameter),),
        canvas=canvas,
        ppd=ppd,
        seed=seed,
    )
    return _scattered_discs(
        spec,
        background_rgb=(_PAPER,) * 3,
        target_rgb=(_INK,) * 3,
        distractor_rgb=(_INK,) * 3,
        target_diameter_deg=target_diameter,
    )


def orientation_stimulus(
    delta_phi: float,
    seed: int = 0,
    canvas: int = DEFAULT_CANVAS,
    ppd: float = DEFAULT_PPD,
) -> Stimulus:
    """Dark horizontal bars; the target is rotated by ``delta_phi`` degrees."""
    delta_phi = _check_level(delta_phi, ORIENTATION_LEVELS_DEG, "delta_phi")
    spec = StimulusSpec(
        kind="orientation",
        params=(("delta_phi", delta_phi),),
        canvas=canvas,
        ppd=ppd,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    length = BAR_LENGTH_DEG * ppd
    width = BAR_WIDTH_DEG * ppd
    clearance = math.hypot(length, width) / 2.0
    centers = _place_items(rng, canvas, [clearance] * N_ITEMS)
    field = _blank(canvas, (_PAPER,) * 3)
    target_mask = _bar_mask(canvas, centers[0], length, width, delta_phi)
    _paint(field, target_mask, (_INK,) * 3)
    distractor_mask = np.zeros_like(target_mask)
    for center in centers[1:]:
        m = _bar_mask(canvas, center, length, width, 0.0)
        _paint(field, m, (_INK,) * 3)
        distractor_mask |= m
    return _finish(field, target_mask, distractor_mask, spec)


def _glyph(
    canvas: int,
    center: tuple[int, int],
    diameter_px: float,
    barred: bool,
) -> np.ndarray:
    stroke = max(2.0, diameter_px / 8.0)
    mask = _ring_mask(canvas, center, diameter_px / 2.0, stroke)
    if barred:
        mask |= _bar_mask(canvas, center, diameter_px, stroke, 90.0)
    return mask


def asymmetry_stimulus(
    variant: str,
    scale: float,
    seed: int = 0,
    canvas: int = DEFAULT_CANVAS,
    ppd: float = DEFAULT_PPD,
) -> Stimulus:
    """Grid of outline circles; one glyph differs by a vertical bar.

    ``variant`` picks which glyph is the singleton: "bar_among_circles"
    puts one barred circle among plain ones, "circle_among_barred" the
    reverse. ``scale`` selects the grid density; glyphs fill 80% of
    their cell.
    """
    if variant not in ("bar_among_circles", "circle_among_barred"):
        raise ValidationError(
            "variant must be 'bar_among_circles' or 'circle_among_barred', "
            f"got {variant!r}"
        )
    scale = _check_level(scale, ASYMMETRY_SCALES_DEG, "asymmetry scale")
    rows, cols = ASYMMETRY_GRIDS[scale]
    spec = StimulusSpec(
        kind="asymmetry",
        params=(("variant", variant), ("scale", scale)),
        canvas=canvas,
        ppd=ppd,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    target_cell = int(rng.integers(rows * cols))
    cell_h = canvas / rows
    cell_w = canvas / cols
    diameter = 0.8 * min(cell_h, cell_w)
    target_barred = variant == "bar_among_circles"
    field = _blank(canvas, (_PAPER,) * 3)
    target_mask = np.zeros((canvas, canvas), dtype=bool)
    distractor_mask = np.zeros((canvas, canvas), dtype=bool)
    for cell in range(rows * cols):
        r, c = divmod(cell, cols)
        center = (int((r + 0.5) * cell_h), int((c + 0.5) * cell_w))
        is_target = cell == target_cell
        m = _glyph(canvas, center, diameter, barred=target_barred == is_target)
        _paint(field, m, (_INK,) * 3)
        if is_target:
            target_mask = m
        else:
            distractor_mask |= m
    return _finish(field, target_mask, distractor_mask, spec)


def build_stimulus(spec: StimulusSpec) -> Stimulus:
    """Re-render a stimulus from its spec record."""
    params = dict(spec.params)
    common = {"seed": spec.seed, "canvas": spec.canvas, "ppd": spec.ppd}
    if spec.kind == "brightness":
        return brightness_stimulus(params["delta"], params["background"], **common)
    if spec.kind == "color":
        return color_stimulus(
            params["delta"], params["target_hue"], params["background"], **common
        )
    if spec.kind == "size":
        return size_stimulus(params["target_diameter"], **common)
    if spec.kind == "orientation":
        return orientation_stimulus(params["delta_phi"], **common)
    if spec.kind == "asymmetry":
        return asymmetry_stimulus(params["variant"], params["scale"], **common)
    raise ValidationError(f"unknown stimulus kind {spec.kind!r}")


@dataclass(frozen=True)
class Condition:
    """One monotonicity series: a family fixed except for its level knob."""

    kind: str
    name: str
    level_name: str
    levels: tuple[float, ...]
    fixed: tuple[tuple[str, object], ...] = ()

    def spec(self, level: float, seed: int, canvas: int = DEFAULT_CANVAS, ppd: float = DEFAULT_PPD) -> StimulusSpec:
        params = dict(self.fixed)
        params[self.level_name] = level
        order = {
            "brightness": ("background", "delta"),
            "color": ("target_hue", "background", "delta"),
            "size": ("target_diameter",),
            "orientation": ("delta_phi",),
            "asymmetry": ("variant", "scale"),
        }[self.kind]
        return StimulusSpec(
            kind=self.kind,
            params=tuple((k, params[k]) for k in order),
            canvas=canvas,
            ppd=ppd,
            seed=seed,
        )


def condition_catalog() -> tuple[Condition, ...]:
    """Every published series, one Condition per (family, fixed choice)."""
    out = [
        Condition("brightness", "brightness_dark", "delta", BRIGHTNESS_LEVELS, (("background", "dark"),)),
        Condition("brightness", "brightness_bright", "delta", BRIGHTNESS_LEVELS, (("background", "bright"),)),
    ]
    for hue in sorted(COLOR_TARGET_HUES):
        for bg in COLOR_BACKGROUNDS:
            out.append(
                Condition(
                    "color",
                    f"color_{hue}_{bg}",
                    "delta",
                    COLOR_LEVELS,
                    (("target_hue", hue), ("background", bg)),
                )
            )
    out.append(Condition("size", "size", "target_diameter", SIZE_LEVELS_DEG))
    out.append(Condition("orientation", "orientation", "delta_phi", ORIENTATION_LEVELS_DEG))
    for variant in ("bar_among_circles", "circle_among_barred"):
        out.append(
            Condition(
                "asymmetry",
                f"asymmetry_{variant}",
                "scale",
                ASYMMETRY_SCALES_DEG,
                (("variant", variant),),
            )
        )
    return tuple(out)


def _to_png(plane_triplet) -> Image.Image:
    arr = np.stack(plane_triplet, axis=-1)
    return Image.fromarray((np.round(arr * 255.0)).astype(np.uint8), mode="RGB")


def save_stimulus(stimulus: Stimulus, out_dir, name: str | None = None) -> dict:
    """Write image, both masks and the JSON sidecar; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = name or stimulus.spec.name
    paths = {
        "image": out_dir / f"{name}.png",
        "target_mask": out_dir / f"{name}_mask.png",
        "distractor_mask": out_dir / f"{name}_distractors.png",
        "sidecar": out_dir / f"{name}.json",
    }
    _to_png(stimulus.image.planes()).save(paths["image"])
    Image.fromarray(stimulus.target_mask.astype(np.uint8) * 255, mode="L").save(
        paths["target_mask"]
    )
    Image.fromarray(stimulus.distractor_mask.astype(np.uint8) * 255, mode="L").save(
        paths["distractor_mask"]
    )
    sidecar = stimulus.spec.as_dict()
    sidecar["files"] = {k: p.name for k, p in paths.items() if k != "sidecar"}
    paths["sidecar"].write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return paths
