"""End-to-end saliency runs: config, dataset plumbing, the image chain.

The chain for one image is fixed: resize to the working resolution,
gamma-correct, split into opponent channels, wavelet-decompose each
channel, rectify into ON/OFF stacks, run the lateral-interaction
lattice, fuse the conspicuity planes, combine channels, standardise,
smooth at fixation scale and upsample back to the source geometry.
:class:`SaliencyEngine` owns that chain plus a cache of coupling tables
keyed by lattice shape, so a batch over same-sized images builds them
once.

Randomness policy: one run seed; the channel simulation for image ``i``,
channel ``c`` draws from ``SeedSequence([run_seed, i, c])``. Worker
processes therefore cannot change any result, only wall time.

Configuration is a frozen :class:`RunConfig`, readable from a TOML file
with ``[pipeline]``, ``[dataset]``, ``[output]``, ``[lattice]`` and
``[psychophysics]`` tables; explicit keyword overrides (the CLI flags)
win over file values. Dataset layout is a directory of images plus
either a ``fixations.csv`` (``image_id,x,y`` rows, 0-based pixels) or a
directory of binary fixation maps named after the image stems.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import color, dynamics, integrate, metrics, wavelet
from .dynamics import LatticeParams
from .errors import ValidationError
from .kernels import CouplingKernels, build_kernels
from .metrics import FixationSet

CHANNEL_ORDER = ("L", "rg", "by")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

# The pipeline runs the lattice in its calibrated working regime, which
# differs from the LatticeParams dataclass defaults in two ways: the
# classical inhibitory gate (the printed exclusion leaves W identically
# zero, and without inhibitory coupling the excitatory field has no
# containment at working drive levels), and a horizon cut to the length
# of the averaging window so the rate average spans onset to end.
# Including the onset matters: strong singletons ignite earlier, so
# time-to-ignition grades the response instead of every suprathreshold
# input collapsing onto the same saturated fixed point by the time a
# late window opens. The dataclass defaults stay as printed so the
# dynamics module remains a plain statement of the model equations;
# this constant is where the engine's operating point lives.
DEFAULT_LATTICE = LatticeParams(
    w_gate_as_printed=False,
    input_gain=18.0,
    t_total=5.0,
    avg_window=5.0,
)

_LATTICE_TOML_FIELDS = {
    f.name
    for f in dataclasses.fields(LatticeParams)
    if f.name not in ("activation_x", "activation_y")
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch run needs; immutable once built."""

    images: Path | None = None
    fixations: Path | None = None
    masks: Path | None = None
    out_dir: Path = Path("out")
    ppd: float = 32.0
    sigma_deg: float = 1.0
    density_sigma_deg: float = 1.0
    max_side: int = 128
    fusion: str = "inverse"
    combine: str = "sqrt_sum"
    wavelet_boundary: str = "mirror"
    seed: int = 0
    workers: int = 1
    write_channel_maps: bool = False
    write_float_maps: bool = True
    write_pyramids: bool = False
    trace_positions: tuple[tuple[int, int], ...] | None = None
    lattice: LatticeParams = field(default_factory=lambda: DEFAULT_LATTICE)
    stim_canvas: int = 1024
    stim_ppd: float = 32.0
    conditions: tuple[str, ...] | None = None
    trials: int = 1
    pseudo_fixations: int = 20

    def __post_init__(self) -> None:
        if self.ppd <= 0 or not np.isfinite(self.ppd):
            raise ValidationError(f"ppd must be positive, got {self.ppd!r}")
        if self.max_side < 8:
            raise ValidationError("max_side below the smallest wavelet frame")
        if self.fusion not in integrate.FUSION_MODES:
            raise ValidationError(f"unknown fusion mode {self.fusion!r}")
        if self.combine not in integrate.CHANNEL_COMBINE_MODES:
            raise ValidationError(f"unknown channel combination {self.combine!r}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        for name in ("images", "fixations", "masks", "out_dir"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, Path):
                object.__setattr__(self, name, Path(value))

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, LatticeParams):
                v = {
                    k: val
                    for k, val in dataclasses.asdict(v).items()
                    if k in _LATTICE_TOML_FIELDS
                }
            out[f.name] = v
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "RunConfig":
        lattice_kw = kw.pop("lattice", None)
        cfg = dataclasses.replace(self, **kw) if kw else self
        if lattice_kw:
            cfg = dataclasses.replace(cfg, lattice=dataclasses.replace(cfg.lattice, **lattice_kw))
        return cfg


def _pick(table: dict, mapping: dict, section: str) -> dict:
    out = {}
    for key, value in table.items():
        if key not in mapping:
            raise ValidationError(f"unknown key {key!r} in [{section}]")
        out[mapping[key]] = value
    return out


def load_config(path=None, **overrides) -> RunConfig:
    """Build a RunConfig from an optional TOML file plus overrides."""
    kw: dict = {}
    lattice_kw: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        known = {
            "pipeline": {
                k: k
                for k in (
                    "ppd",
                    "sigma_deg",
                    "density_sigma_deg",
                    "max_side",
                    "fusion",
                    "combine",
                    "wavelet_boundary",
                    "seed",
                    "workers",
                )
            },
            "dataset": {"images": "images", "fixations": "fixations", "masks": "masks"},
            "output": {
                "dir": "out_dir",
                "channel_maps": "write_channel_maps",
                "float_maps": "write_float_maps",
                "pyramids": "write_pyramids",
            },
            "psychophysics": {
                "canvas": "stim_canvas",
                "ppd": "stim_ppd",
                "conditions": "conditions",
                "trials": "trials",
                "pseudo_fixations": "pseudo_fixations",
            },
        }
        for section, table in doc.items():
            if section == "lattice":
                for key, value in table.items():
                    if key not in _LATTICE_TOML_FIELDS:
                        raise ValidationError(f"unknown key {key!r} in [lattice]")
                    if key == "lambda_profile":
                        value = tuple(value)
                    lattice_kw[key] = value
                continue
            if section not in known:
                raise ValidationError(f"unknown config section [{section}]")
            kw.update(_pick(table, known[section], section))
    if "conditions" in kw and kw["conditions"] is not None:
        kw["conditions"] = tuple(kw["conditions"])
    lattice_kw.update(overrides.pop("lattice", {}) or {})
    kw.update({k: v for k, v in overrides.items() if v is not None})
    # overrides land on top of the calibrated default, not the dataclass
    # defaults, so a TOML [lattice] section tweaking one field keeps the
    # engine's operating point for the rest
    lattice = DEFAULT_LATTICE.with_overrides(**lattice_kw)
    return RunConfig(lattice=lattice, **kw)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: Path
    fixations: FixationSet | None = None
    mask_path: Path | None = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    dataset_id: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def require_fixations(self) -> None:
        missing = [e.image_id for e in self.entries if e.fixations is None]
        if missing:
            raise ValidationError(
                f"no fixation record for: {', '.join(sorted(missing)[:5])}"
                + ("..." if len(missing) > 5 else "")
            )


def _image_size(path: Path) -> tuple[int, int]:
    with Image.open(path) as img:
        return img.size


def _fixations_by_id(fixations_path: Path, sizes: dict[str, tuple[int, int]]) -> dict:
    """Parse a fixations.csv with image_id,x,y rows into per-image sets."""
    import csv

    rows: dict[str, list[tuple[float, float]]] = {}
    with open(fixations_path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"image_id", "x", "y"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValidationError(
                f"{fixations_path}: expected columns image_id,x,y"
            )
        for row in reader:
            rows.setdefault(row["image_id"], []).append((float(row["x"]), float(row["y"])))
    out = {}
    for image_id, pts in rows.items():
        if image_id in sizes:
            out[image_id] = FixationSet(np.asarray(pts), size=sizes[image_id])
    return out


def build_manifest(
    images_dir, fixations=None, masks=None, dataset_id: str | None = None
) -> DatasetManifest:
    """Scan a dataset directory into a manifest, sorted by image stem.

    ``fixations`` may be a CSV file (``image_id,x,y``), a directory of
    binary fixation-map images named by stem, or None.
    """
    images_dir = Path(images_dir)
    if not images_dir.is_dir():
        raise ValidationError(f"image directory {images_dir} does not exist")
    image_paths = sorted(
        p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not image_paths:
        raise ValidationError(f"no images under {images_dir}")
    sizes = {p.stem: _image_size(p) for p in image_paths}

    fix_by_id: dict[str, FixationSet] = {}
    if fixations is not None:
        fixations = Path(fixations)
        if fixations.is_file():
            fix_by_id = _fixations_by_id(fixations, sizes)
        elif fixations.is_dir():
            for p in image_paths:
                for suffix in IMAGE_SUFFIXES:
                    cand = fixations / f"{p.stem}{suffix}"
                    if cand.exists():
                        fix_by_id[p.stem] = metrics.fixations_from_image(cand)
                        break
        else:
            raise ValidationError(f"fixation source {fixations} does not exist")

    masks = Path(masks) if masks is not None else None
    entries = []
    for p in image_paths:
        mask_path = None
        if masks is not None:
            cand = masks / f"{p.stem}.png"
            mask_path = cand if cand.exists() else None
        entries.append(
            ManifestEntry(
                image_id=p.stem,
                image_path=p,
                fixations=fix_by_id.get(p.stem),
                mask_path=mask_path,
            )
        )
    return DatasetManifest(entries=entries, dataset_id=dataset_id or images_dir.name)


@dataclass
class SaliencyResult:
    """Outputs of one image's run, working and source resolution."""

    image_id: str
    final_map: np.ndarray
    working_map: np.ndarray
    channel_maps: dict[str, np.ndarray]
    source_size: tuple[int, int]
    working_shape: tuple[int, int]
    ppd_working: float
    seconds: float
    pyramids: dict | None = None
    traces: dict | None = None


class SaliencyEngine:
    """Runs the image chain, reusing coupling tables across images."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._kernels: dict[tuple, CouplingKernels] = {}

    def kernels_for(self, scales: int, shape: tuple[int, int]) -> CouplingKernels:
        lat = self.config.lattice
        key = (scales, shape, lat.boundary, lat.lambda_profile, lat.w_gate_as_printed)
        if key not in self._kernels:
            self._kernels[key] = build_kernels(
                scales,
                shape,
                boundary=lat.boundary,
                lambda_profile=lat.lambda_profile,
                w_gate_as_printed=lat.w_gate_as_printed,
            )
        return self._kernels[key]

    def prewarm(self, shapes) -> None:
        """Build tables for the given working shapes ahead of a pool fork."""
        for shape in shapes:
            side = max(shape)
            self.kernels_for(wavelet.num_scales(side), shape)

    def working_shape(self, source_size: tuple[int, int]) -> tuple[int, int]:
        w, h = source_size
        side = max(w, h)
        if side <= self.config.max_side:
            return (h, w)
        scale = self.config.max_side / side
        return (max(8, round(h * scale)), max(8, round(w * scale)))

    def process(
        self,
        image: color.RgbImage,
        image_id: str = "",
        image_index: int = 0,
        keep_pyramids: bool = False,
    ) -> SaliencyResult:
        cfg = self.config
        t0 = time.perf_counter()
        resized = color.resize_max_side(image, cfg.max_side)
        gamma = color.gamma_correct(resized)
        opponent = color.to_opponent(gamma)
        source_size = resized.source_size or (resized.width, resized.height)

        fused: dict[str, np.ndarray] = {}
        pyramids: dict = {}
        traces: dict = {}
        channels = opponent.channels()
        kernels = None
        for ci, name in enumerate(CHANNEL_ORDER):
            plane = channels[name]
            pyramid = wavelet.decompose(plane, boundary=cfg.wavelet_boundary, channel=name)
            if kernels is None:
                kernels = self.kernels_for(pyramid.scales, plane.shape)
            on, off = wavelet.split_on_off(pyramid.planes)
            seed = np.random.SeedSequence([cfg.seed, image_index, ci])
            response = dynamics.simulate_channel(
                on,
                off,
                kernels,
                cfg.lattice,
                seed=seed,
                channel=name,
                trace_positions=cfg.trace_positions,
            )
            planes = dynamics.conspicuity(response)
            residual = pyramid.residual if cfg.fusion == "inverse" else None
            fused[name] = integrate.fuse_planes(planes, residual, mode=cfg.fusion)
            if keep_pyramids or cfg.write_pyramids:
                pyramids[name] = pyramid
            if response.trace_rates is not None:
                traces[name] = (response.trace_times, response.trace_rates)

        combined = integrate.combine_channels(fused, mode=cfg.combine)
        normalized = integrate.znorm(combined)
        working_side = max(combined.shape)
        source_side = max(source_size)
        ppd_working = cfg.ppd * working_side / source_side
        smoothed = integrate.smooth(normalized, cfg.sigma_deg * ppd_working)
        final = integrate.upsample(smoothed, source_size)

        channel_maps = {name: integrate.znorm(arr) for name, arr in fused.items()}
        return SaliencyResult(
            image_id=image_id,
            final_map=final,
            working_map=smoothed,
            channel_maps=channel_maps,
            source_size=source_size,
            working_shape=combined.shape,
            ppd_working=ppd_working,
            seconds=time.perf_counter() - t0,
            pyramids=pyramids or None,
            traces=traces or None,
        )

    def process_path(self, path, image_index: int = 0, **kw) -> SaliencyResult:
        image = color.load_image(path)
        return self.process(image, image_id=Path(path).stem, image_index=image_index, **kw)


def save_float_map(path, arr: np.ndarray) -> None:
    np.save(path, np.asarray(arr, dtype=np.float64))


def load_float_map(path) -> np.ndarray:
    return np.load(path)


def save_map_png(path, arr: np.ndarray) -> None:
    """8-bit grayscale rendering, min-max scaled (flat maps go black)."""
    arr = np.asarray(arr, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi - lo <= 0:
        scaled = np.zeros(arr.shape, dtype=np.uint8)
    else:
        scaled = np.round((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)
    Image.fromarray(scaled, mode="L").save(path)


def write_trace_csv(path, traces: dict) -> None:
    """Per-node firing-rate records: one row per step/channel/node."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "channel", "polarity", "position", "scale", "orientation", "rate"]
        )
        for channel, (times, rates) in traces.items():
            n_steps, n_pol, n_pos, s_n, o_n = rates.shape
            for k in range(n_steps):
                for pol in range(n_pol):
                    pol_name = "on" if pol == 0 else "off"
                    for p in range(n_pos):
                        for s in range(s_n):
                            for o in range(o_n):
                                writer.writerow(
                                    [
                                        f"{times[k]:.4f}",
                                        channel,
                                        pol_name,
                                        p,
                                        s,
                                        o,
                                        f"{rates[k, pol, p, s, o]:.8g}",
                                    ]
                                )


def pseudo_fixations_from_mask(
    mask: np.ndarray, n: int = 20, seed=0, replace: bool | None = None
) -> FixationSet:
    """Sample fixation points uniformly from a boolean mask's pixels."""
    mask = np.asarray(mask)
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise ValidationError("cannot sample fixations from an empty mask")
    rng = np.random.default_rng(seed)
    if replace is None:
        replace = rows.size < n
    take = rng.choice(rows.size, size=n, replace=replace)
    xy = np.stack([cols[take], rows[take]], axis=1).astype(np.float64)
    return FixationSet(xy=xy, size=(mask.shape[1], mask.shape[0]))


def resize_mask(mask: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Downsample a boolean mask to (H, W); any coverage marks a pixel."""
    if mask.shape == shape:
        return mask.astype(bool)
    img = Image.fromarray(mask.astype(np.float32), mode="F")
    arr = np.asarray(img.resize((shape[1], shape[0]), Image.Resampling.BILINEAR))
    return arr > 0.0


def evaluate_maps(
    manifest: DatasetManifest, maps_dir, config: RunConfig
) -> tuple[metrics.MetricReport, list[dict]]:
    """Score stored maps against the manifest's fixations.

    Returns the per-image report plus an exceptions list for images
    whose map is missing or unreadable; those are left out of the means.
    The InfoGain baseline is the pooled fixation density of all other
    images, carried across image frames through normalized coordinates.
    """
    manifest.require_fixations()
    maps_dir = Path(maps_dir)
    report = metrics.MetricReport()
    exceptions: list[dict] = []

    loaded: dict[str, np.ndarray] = {}
    for entry in manifest.entries:
        cand = maps_dir / f"{entry.image_id}_saliency.npy"
        if not cand.exists():
            exceptions.append({"image": entry.image_id, "error": f"missing map {cand.name}"})
            continue
        try:
            arr = load_float_map(cand)
        except Exception as exc:  # noqa: BLE001 - report and move on
            exceptions.append({"image": entry.image_id, "error": str(exc)})
            continue
        loaded[entry.image_id] = arr

    sigma_px = config.density_sigma_deg * config.ppd
    for entry in manifest.entries:
        if entry.image_id not in loaded:
            continue
        saliency = loaded[entry.image_id]
        fixations = entry.fixations
        others = [
            e.fixations
            for e in manifest.entries
            if e.image_id != entry.image_id and e.fixations is not None
        ]
        density = metrics.density_map(fixations, sigma_px)
        scores = {
            "auc_judd": metrics.auc_judd(saliency, fixations),
            "auc_shuffled": (
                metrics.auc_shuffled(saliency, fixations, others, seed=config.seed)
                if others
                else None
            ),
            "nss": metrics.nss(saliency, fixations),
            "cc": metrics.cc(saliency, density),
            "sim": metrics.sim(saliency, density),
            "kl": metrics.kl(saliency, density),
        }
        if others:
            pooled = np.concatenate(
                [fs.map_to(fixations.size).xy for fs in others], axis=0
            )
            baseline = metrics.density_map(
                FixationSet(pooled, size=fixations.size), sigma_px
            )
            scores["info_gain"] = metrics.info_gain(saliency, fixations, baseline)
        else:
            scores["info_gain"] = None
        report.add(entry.image_id, scores)
    return report, exceptions
