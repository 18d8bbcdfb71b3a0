"""Fixation-based evaluation of saliency maps.

Everything here compares a real-valued map against human (or synthetic)
fixations. Two data carriers and seven scores:

* :class:`FixationSet` holds 0-based pixel coordinates (x = column,
  y = row) plus the size of the image they were recorded on, so sets
  can be mapped between resolutions through normalized coordinates.
* :func:`density_map` renders fixations as a blurred, sum-1 probability
  map for the distribution-based scores.

Location-based scores: :func:`auc_judd` (ROC over thresholds placed at
every fixated value, non-fixated pixels as negatives), :func:`auc_shuffled`
(negatives drawn from fixations on *other* images, which discounts a
shared center bias), :func:`nss` (mean standardized value at fixations)
and :func:`info_gain` (log-likelihood improvement over a baseline
density, in bits per fixation). Distribution-based scores: :func:`cc`
(Pearson), :func:`sim` (histogram intersection) and :func:`kl`
(Kullback-Leibler divergence of the ground-truth density from the
map-as-distribution).

Scores that need a probability map convert with the same recipe: shift
to a zero floor, then scale to unit sum.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ValidationError

# Floor added to probabilities inside logs; pinned once for every score.
EPS_PROB = 1e-7

_FLAT_STD = 1e-12


@dataclass(frozen=True)
class FixationSet:
    """Fixation locations on one image.

    ``xy`` is (N, 2) float64 with columns (x, y) = (column, row),
    0-based; ``size`` is the (width, height) of the recorded image.
    """

    xy: np.ndarray
    size: tuple[int, int]

    def __post_init__(self) -> None:
        xy = np.asarray(self.xy, dtype=np.float64)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ValidationError(f"fixations must be (N, 2), got {xy.shape}")
        if xy.shape[0] == 0:
            raise ValidationError("a fixation set needs at least one fixation")
        if not np.all(np.isfinite(xy)):
            raise ValidationError("fixation coordinates must be finite")
        w, h = int(self.size[0]), int(self.size[1])
        if w < 1 or h < 1:
            raise ValidationError(f"bad image size {self.size!r}")
        if xy[:, 0].min() < 0 or xy[:, 0].max() >= w or xy[:, 1].min() < 0 or xy[:, 1].max() >= h:
            raise ValidationError(f"fixations fall outside the {w}x{h} image")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "size", (w, h))

    def __len__(self) -> int:
        return self.xy.shape[0]

    @property
    def cols(self) -> np.ndarray:
        return np.clip(np.rint(self.xy[:, 0]).astype(int), 0, self.size[0] - 1)

    @property
    def rows(self) -> np.ndarray:
        return np.clip(np.rint(self.xy[:, 1]).astype(int), 0, self.size[1] - 1)

    def map_to(self, size: tuple[int, int]) -> "FixationSet":
        """Rescale through normalized coordinates onto another image size."""
        w, h = int(size[0]), int(size[1])
        scale = np.array([w / self.size[0], h / self.size[1]])
        xy = np.minimum(self.xy * scale, np.array([w, h]) - 1e-9)
        return FixationSet(xy=xy, size=(w, h))

    def values_from(self, saliency: np.ndarray) -> np.ndarray:
        saliency = _check_map(saliency)
        if saliency.shape != (self.size[1], self.size[0]):
            raise ValidationError(
                f"map shape {saliency.shape} does not match fixation frame "
                f"(h={self.size[1]}, w={self.size[0]})"
            )
        return saliency[self.rows, self.cols]


def fixations_from_csv(path, size: tuple[int, int]) -> FixationSet:
    """Read fixations from a CSV with `x,y` columns (0-based pixels)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: expected columns named 'x' and 'y'")
        pts = [(float(row["x"]), float(row["y"])) for row in reader]
    if not pts:
        raise ValidationError(f"{path}: no fixation rows")
    return FixationSet(xy=np.asarray(pts), size=size)


def fixations_from_image(path) -> FixationSet:
    """Read fixations from an image mask; any non-zero pixel is one fixation."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    rows, cols = np.nonzero(arr)
    if rows.size == 0:
        raise ValidationError(f"{path}: fixation mask is empty")
    xy = np.stack([cols, rows], axis=1).astype(np.float64)
    return FixationSet(xy=xy, size=(arr.shape[1], arr.shape[0]))


def _check_map(saliency: np.ndarray) -> np.ndarray:
    saliency = np.asarray(saliency, dtype=np.float64)
    if saliency.ndim != 2:
        raise ValidationError(f"saliency map must be 2-D, got {saliency.shape}")
    if not np.all(np.isfinite(saliency)):
        raise ValidationError("saliency map contains non-finite values")
    return saliency


def _as_probability(arr: np.ndarray) -> np.ndarray:
    """Shift to a zero floor and scale to unit sum."""
    arr = arr - arr.min()
    total = arr.sum()
    if total <= 0:
        return np.full(arr.shape, 1.0 / arr.size)
    return arr / total


def density_map(
    fixations: FixationSet, sigma_px: float, size: tuple[int, int] | None = None
) -> np.ndarray:
    """Blurred fixation impulses, normalized to sum 1.

    ``size`` (width, height) defaults to the set's own frame; blur mass
    leaving the image is discarded before renormalizing.
    """
    if size is not None:
        fixations = fixations.map_to(size)
    w, h = fixations.size
    if sigma_px < 0 or not np.isfinite(sigma_px):
        raise ValidationError(f"bad density sigma {sigma_px!r}")
    impulses = np.zeros((h, w))
    np.add.at(impulses, (fixations.rows, fixations.cols), 1.0)
    if sigma_px > 0:
        impulses = ndimage.gaussian_filter(impulses, sigma_px, mode="constant", truncate=4.0)
    total = impulses.sum()
    if total <= 0:
        raise ValidationError("fixation density has no mass")
    return impulses / total


def _roc_auc(pos_values: np.ndarray, neg_values: np.ndarray) -> float:
    """Trapezoidal ROC area with thresholds at every positive value."""
    thresholds = np.sort(pos_values)[::-1]
    neg_sorted = np.sort(neg_values)
    tp = np.empty(thresholds.size + 2)
    fp = np.empty(thresholds.size + 2)
    tp[0], fp[0] = 0.0, 0.0
    pos_sorted = np.sort(pos_values)
    tp[1:-1] = 1.0 - np.searchsorted(pos_sorted, thresholds, side="left") / pos_values.size
    fp[1:-1] = 1.0 - np.searchsorted(neg_sorted, thresholds, side="left") / neg_values.size
    tp[-1], fp[-1] = 1.0, 1.0
    return float(np.trapezoid(tp, fp))


def auc_judd(saliency: np.ndarray, fixations: FixationSet) -> float:
    """ROC area; every image pixel serves as the negative pool.

    A constant map cannot rank anything and scores 0.5 exactly.
    """
    saliency = _check_map(saliency)
    values = fixations.values_from(saliency)
    if saliency.max() - saliency.min() <= 0:
        return 0.5
    return _roc_auc(values, saliency.ravel())


def auc_shuffled(
    saliency: np.ndarray,
    fixations: FixationSet,
    other_fixations,
    n_trials: int = 10,
    seed=0,
) -> float:
    """ROC area with negatives drawn from other images' fixations.

    ``other_fixations`` is an iterable of FixationSets recorded on other
    images; their coordinates are carried over through normalized
    positions. Each of the ``n_trials`` seeded trials samples as many
    negatives as there are positives, and the areas are averaged.
    """
    saliency = _check_map(saliency)
    values = fixations.values_from(saliency)
    pool_parts = [
        fs.map_to(fixations.size).values_from(saliency) for fs in other_fixations
    ]
    if not pool_parts:
        raise ValidationError("shuffled AUC needs fixations from other images")
    pool = np.concatenate(pool_parts)
    if saliency.max() - saliency.min() <= 0:
        return 0.5
    rng = np.random.default_rng(seed)
    if n_trials < 1:
        raise ValidationError("n_trials must be at least 1")
    areas = []
    for _ in range(n_trials):
        take = rng.choice(pool.size, size=values.size, replace=pool.size < values.size)
        areas.append(_roc_auc(values, pool[take]))
    return float(np.mean(areas))


def nss(saliency: np.ndarray, fixations: FixationSet) -> float:
    """Mean standardized saliency at the fixated pixels."""
    saliency = _check_map(saliency)
    std = saliency.std()
    if std <= _FLAT_STD:
        warnings.warn("flat map: NSS is 0 by convention", RuntimeWarning, stacklevel=2)
        return 0.0
    z = (saliency - saliency.mean()) / std
    return float(fixations.values_from(z).mean())


def cc(saliency: np.ndarray, density: np.ndarray) -> float:
    """Pearson correlation between the map and a ground-truth density."""
    saliency = _check_map(saliency)
    density = _check_map(density)
    if saliency.shape != density.shape:
        raise ValidationError("map and density shapes differ")
    if saliency.std() <= _FLAT_STD or density.std() <= _FLAT_STD:
        warnings.warn("flat input: CC is 0 by convention", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.corrcoef(saliency.ravel(), density.ravel())[0, 1])


def sim(saliency: np.ndarray, density: np.ndarray) -> float:
    """Histogram intersection of the two maps as probabilities (0..1)."""
    saliency = _check_map(saliency)
    density = _check_map(density)
    if saliency.shape != density.shape:
        raise ValidationError("map and density shapes differ")
    p = _as_probability(saliency)
    q = _as_probability(density)
    return float(np.minimum(p, q).sum())


def kl(saliency: np.ndarray, density: np.ndarray) -> float:
    """KL divergence (nats) of the density from the map-as-distribution.

    Zero-probability density cells contribute nothing; map cells are
    floored at ``EPS_PROB`` inside the log.
    """
    saliency = _check_map(saliency)
    density = _check_map(density)
    if saliency.shape != density.shape:
        raise ValidationError("map and density shapes differ")
    p = _as_probability(saliency)
    q = _as_probability(density)
    support = q > 0
    terms = q[support] * np.log(q[support] / (p[support] + EPS_PROB))
    return float(terms.sum())


def info_gain(
    saliency: np.ndarray, fixations: FixationSet, baseline: np.ndarray
) -> float:
    """Bits per fixation gained over a baseline density.

    Both the map (converted to a probability) and the baseline are
    evaluated at the fixated pixels under log2 with the shared floor.
    """
    saliency = _check_map(saliency)
    baseline = _check_map(baseline)
    if saliency.shape != baseline.shape:
        raise ValidationError("map and baseline shapes differ")
    p = _as_probability(saliency)
    b = _as_probability(baseline)
    rows, cols = fixations.rows, fixations.cols
    if saliency.shape != (fixations.size[1], fixations.size[0]):
        raise ValidationError("map shape does not match fixation frame")
    gain = np.log2(p[rows, cols] + EPS_PROB) - np.log2(b[rows, cols] + EPS_PROB)
    return float(gain.mean())


ALL_METRICS = ("auc_judd", "auc_shuffled", "nss", "cc", "sim", "kl", "info_gain")


@dataclass
class MetricReport:
    """Per-image scores plus their means, serializable to JSON or CSV."""

    rows: list[dict] = field(default_factory=list)

    def add(self, image: str, scores: dict) -> None:
        self.rows.append({"image": image, **scores})

    def aggregate(self) -> dict:
        if not self.rows:
            return {}
        keys = [k for k in self.rows[0] if k != "image"]
        out = {}
        for k in keys:
            vals = [r[k] for r in self.rows if r.get(k) is not None]
            out[k] = float(np.mean(vals)) if vals else None
        return out

    def to_json(self, path) -> None:
        payload = {"images": self.rows, "mean": self.aggregate()}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def to_csv(self, path) -> None:
        if not self.rows:
            raise ValidationError("empty report")
        keys = ["image"] + [k for k in self.rows[0] if k != "image"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(self.rows)
