"""Batch driver: dataset runs, evaluation, experiments, stimulus export.

Five subcommands over one shared flag set:

* ``saliency``  – compute maps for every image in a dataset directory.
* ``evaluate``  – score stored maps against recorded fixations.
* ``psychophysics`` – generate the singleton batteries, run the model,
  and report contrast-response tables with rank correlations.
* ``ablation``  – rerun ``saliency`` under each fusion mode and emit a
  side-by-side metric table plus map-distinctness checksums.
* ``stimgen``   – export the stimulus batteries to disk.

Images are processed with image-level parallelism. Coupling tables are
built in the parent before any worker forks, and every per-image seed
is derived from (run seed, image index, channel index), so the worker
count can change wall time but never a single output byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from . import integrate, metrics, stimgen
from .errors import ValidationError
from .pipeline import (
    RunConfig,
    SaliencyEngine,
    build_manifest,
    evaluate_maps,
    load_config,
    pseudo_fixations_from_mask,
    resize_mask,
    save_float_map,
    save_map_png,
    write_trace_csv,
)

log = logging.getLogger("v1sal")

# Worker-process state. Under the default fork start method the parent's
# engine (with its prebuilt tables) is inherited; under spawn the
# initializer rebuilds it from the pickled config.
_ENGINE: SaliencyEngine | None = None


def _init_worker(config: RunConfig) -> None:
    global _ENGINE
    if _ENGINE is None:
        _ENGINE = SaliencyEngine(config)


def _process_one(job: tuple[int, str, str]) -> dict:
    index, image_id, image_path = job
    engine = _ENGINE
    assert engine is not None
    cfg = engine.config
    maps_dir = cfg.out_dir / "maps"
    row: dict = {"image": image_id, "index": index}
    try:
        result = engine.process_path(image_path, image_index=index)
        save_map_png(maps_dir / f"{image_id}_saliency.png", result.final_map)
        if cfg.write_float_maps:
            save_float_map(maps_dir / f"{image_id}_saliency.npy", result.final_map)
        if cfg.write_channel_maps:
            for name, cmap in result.channel_maps.items():
                save_float_map(maps_dir / f"{image_id}_channel_{name}.npy", cmap)
        if cfg.write_pyramids and result.pyramids:
            from .wavelet import dump_pyramid

            pyr_dir = cfg.out_dir / "pyramids"
            pyr_dir.mkdir(parents=True, exist_ok=True)
            for name, pyramid in result.pyramids.items():
                dump_pyramid(pyramid, pyr_dir / f"{image_id}_{name}.v1wp")
        if result.traces:
            trace_dir = cfg.out_dir / "traces"
            trace_dir.mkdir(parents=True, exist_ok=True)
            write_trace_csv(trace_dir / f"{image_id}_trace.csv", result.traces)
        row.update(status="ok", seconds=round(result.seconds, 3))
    except Exception as exc:  # noqa: BLE001 - batch isolation: log, keep going
        log.error("image %s failed: %s", image_id, exc)
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def cmd_saliency(config: RunConfig) -> dict:
    if config.images is None:
        raise ValidationError("saliency needs --dataset (an image directory)")
    manifest = build_manifest(config.images, fixations=None)
    maps_dir = config.out_dir / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)

    engine = SaliencyEngine(config)
    from PIL import Image as _Image

    shapes = set()
    for entry in manifest.entries:
        with _Image.open(entry.image_path) as img:
            shapes.add(engine.working_shape(img.size))
    engine.prewarm(shapes)

    global _ENGINE
    _ENGINE = engine
    jobs = [
        (i, e.image_id, str(e.image_path)) for i, e in enumerate(manifest.entries)
    ]
    t0 = time.perf_counter()
    if config.workers == 1:
        rows = [_process_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(
            max_workers=config.workers, initializer=_init_worker, initargs=(config,)
        ) as pool:
            rows = list(pool.map(_process_one, jobs))
    _ENGINE = None

    run_log = {
        "command": "saliency",
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "dataset": manifest.dataset_id,
        "images": rows,
        "failures": sum(1 for r in rows if r["status"] != "ok"),
        "wall_seconds": round(time.perf_counter() - t0, 3),
    }
    (config.out_dir / "run_saliency.json").write_text(
        json.dumps(run_log, indent=2, sort_keys=True) + "\n"
    )
    log.info(
        "saliency: %d/%d images ok in %.1fs",
        len(rows) - run_log["failures"],
        len(rows),
        run_log["wall_seconds"],
    )
    return run_log


def _discover_fixations(config: RunConfig) -> Path:
    if config.fixations is not None:
        return config.fixations
    assert config.images is not None
    for cand in (
        config.images.parent / "fixations.csv",
        config.images.parent / "fixations",
        config.images / "fixations.csv",
    ):
        if cand.exists():
            return cand
    raise ValidationError(
        "no fixation source: pass --fixations or place fixations.csv next to the images"
    )


def cmd_evaluate(config: RunConfig, maps_dir=None) -> dict:
    if config.images is None:
        raise ValidationError("evaluate needs --dataset (an image directory)")
    fixations = _discover_fixations(config)
    manifest = build_manifest(config.images, fixations=fixations)
    maps_dir = Path(maps_dir) if maps_dir else config.out_dir / "maps"
    report, exceptions = evaluate_maps(manifest, maps_dir, config)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    if report.rows:
        report.to_csv(config.out_dir / "evaluation.csv")
    else:
        log.warning("no maps could be scored under %s", maps_dir)
    payload = {
        "command": "evaluate",
        "config_digest": config.digest(),
        "dataset": manifest.dataset_id,
        "images": report.rows,
        "mean": report.aggregate(),
        "exceptions": exceptions,
    }
    (config.out_dir / "evaluation.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    log.info(
        "evaluate: %d images scored, %d exceptions", len(report.rows), len(exceptions)
    )
    return payload


def _condition_rows(
    engine: SaliencyEngine, condition: stimgen.Condition, trial: int, base_index: int
) -> list[dict]:
    """Run one condition series; returns one row per contrast level."""
    cfg = engine.config
    per_level: list[dict] = []
    z_maps = []
    fixsets = []
    for li, level in enumerate(condition.levels):
        seed = int(
            np.random.SeedSequence(
                [cfg.seed, trial, base_index, li]
            ).generate_state(1)[0]
        )
        spec = condition.spec(level, seed=seed, canvas=cfg.stim_canvas, ppd=cfg.stim_ppd)
        stim = stimgen.build_stimulus(spec)
        result = engine.process(
            stim.image, image_id=spec.name, image_index=base_index * 101 + li
        )
        zmap = integrate.znorm(result.working_map)
        tmask = resize_mask(stim.target_mask, result.working_shape)
        dmask = resize_mask(stim.distractor_mask, result.working_shape) & ~tmask
        in_mask = float(zmap[tmask].mean())
        out_mask = float(zmap[dmask].mean()) if dmask.any() else float("nan")
        max_rank = int((zmap > zmap[tmask].max()).sum())
        fixsets.append(pseudo_fixations_from_mask(tmask, n=cfg.pseudo_fixations, seed=seed))
        z_maps.append(zmap)
        per_level.append(
            {
                "condition": condition.name,
                "kind": condition.kind,
                "trial": trial,
                "level": level,
                "in_mask": in_mask,
                "out_mask": out_mask,
                "z_diff": in_mask - out_mask,
                "max_rank": max_rank,
                "seconds": round(result.seconds, 3),
            }
        )
    for li, row in enumerate(per_level):
        others = [fs for lj, fs in enumerate(fixsets) if lj != li]
        row["sauc_mask"] = (
            metrics.auc_shuffled(z_maps[li], fixsets[li], others, seed=cfg.seed)
            if others
            else None
        )
    return per_level


def cmd_psychophysics(config: RunConfig) -> dict:
    catalog = stimgen.condition_catalog()
    if config.conditions is not None:
        wanted = set(config.conditions)
        unknown = wanted - {c.name for c in catalog}
        if unknown:
            raise ValidationError(f"unknown conditions: {sorted(unknown)}")
        catalog = tuple(c for c in catalog if c.name in wanted)
    engine = SaliencyEngine(config)
    config.out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    summary: dict = {}
    failures: dict = {}
    t0 = time.perf_counter()
    for ci, condition in enumerate(catalog):
        for trial in range(config.trials):
            try:
                series = _condition_rows(engine, condition, trial, ci * config.trials + trial)
            except Exception as exc:  # noqa: BLE001 - abort condition, keep the rest
                log.error("condition %s trial %d failed: %s", condition.name, trial, exc)
                failures[f"{condition.name}/{trial}"] = f"{type(exc).__name__}: {exc}"
                continue
            rows.extend(series)
            levels = [r["level"] for r in series]
            in_mask = [r["in_mask"] for r in series]
            rho, pval = stats.spearmanr(levels, in_mask)
            summary.setdefault(condition.name, {})[f"trial_{trial}"] = {
                "spearman_in_mask": None if np.isnan(rho) else float(rho),
                "p_value": None if np.isnan(pval) else float(pval),
                "n_levels": len(levels),
            }
    if rows:
        keys = list(rows[0].keys())
        import csv as _csv

        with open(config.out_dir / "psychophysics.csv", "w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(rows)
    payload = {
        "command": "psychophysics",
        "config_digest": config.digest(),
        "conditions": summary,
        "failures": failures,
        "wall_seconds": round(time.perf_counter() - t0, 3),
    }
    (config.out_dir / "psychophysics.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    log.info(
        "psychophysics: %d rows over %d conditions in %.1fs",
        len(rows),
        len(summary),
        payload["wall_seconds"],
    )
    return payload


def cmd_ablation(config: RunConfig) -> dict:
    if config.images is None:
        raise ValidationError("ablation needs --dataset (an image directory)")
    fixations = _discover_fixations(config)
    means: dict = {}
    checksums: dict[str, dict[str, str]] = {}
    for mode in integrate.FUSION_MODES:
        sub = config.with_overrides(fusion=mode, out_dir=config.out_dir / mode)
        cmd_saliency(sub)
        manifest = build_manifest(config.images, fixations=fixations)
        report, exceptions = evaluate_maps(manifest, sub.out_dir / "maps", sub)
        means[mode] = report.aggregate()
        means[mode]["exceptions"] = len(exceptions)
        for entry in manifest.entries:
            path = sub.out_dir / "maps" / f"{entry.image_id}_saliency.npy"
            if path.exists():
                digest = hashlib.sha256(path.read_bytes()).hexdigest()[:16]
                checksums.setdefault(entry.image_id, {})[mode] = digest

    distinct = {
        image_id: len(set(by_mode.values())) == len(by_mode) == len(integrate.FUSION_MODES)
        for image_id, by_mode in checksums.items()
    }
    metric_names = [k for k in next(iter(means.values()), {}) if k != "exceptions"]
    lines = ["mode," + ",".join(metric_names)]
    for mode, agg in means.items():
        lines.append(
            mode
            + ","
            + ",".join(
                "" if agg.get(m) is None else f"{agg[m]:.6f}" for m in metric_names
            )
        )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    (config.out_dir / "ablation.csv").write_text("\n".join(lines) + "\n")
    payload = {
        "command": "ablation",
        "config_digest": config.digest(),
        "means": means,
        "checksums": checksums,
        "all_modes_distinct": distinct,
        "n_distinct_images": sum(distinct.values()),
    }
    (config.out_dir / "ablation.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    log.info(
        "ablation: %d/%d images with pairwise-distinct maps",
        payload["n_distinct_images"],
        len(distinct),
    )
    return payload


def cmd_stimgen(config: RunConfig) -> dict:
    out = config.out_dir / "stimuli"
    out.mkdir(parents=True, exist_ok=True)
    catalog = stimgen.condition_catalog()
    if config.conditions is not None:
        catalog = tuple(c for c in catalog if c.name in set(config.conditions))
    index = []
    for ci, condition in enumerate(catalog):
        for li, level in enumerate(condition.levels):
            seed = int(
                np.random.SeedSequence([config.seed, 0, ci, li]).generate_state(1)[0]
            )
            spec = condition.spec(
                level, seed=seed, canvas=config.stim_canvas, ppd=config.stim_ppd
            )
            stim = stimgen.build_stimulus(spec)
            paths = stimgen.save_stimulus(stim, out)
            index.append(
                {"name": spec.name, "condition": condition.name, "level": level,
                 "files": {k: p.name for k, p in paths.items()}}
            )
    (out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    log.info("stimgen: wrote %d stimuli under %s", len(index), out)
    return {"command": "stimgen", "count": len(index), "dir": str(out)}


def _parse_trace(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        bits = part.split(",")
        if len(bits) != 2:
            raise argparse.ArgumentTypeError(
                f"trace positions look like 'row,col[;row,col]', got {text!r}"
            )
        out.append((int(bits[0]), int(bits[1])))
    if not out:
        raise argparse.ArgumentTypeError("empty trace position list")
    return tuple(out)


def _parse_conditions(text: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    if not names:
        raise argparse.ArgumentTypeError("empty condition list")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="v1sal",
        description="Saliency maps from simulated V1 lateral interactions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML config file")
    common.add_argument("--dataset", type=Path, help="directory of input images")
    common.add_argument("--fixations", type=Path, help="fixations.csv or a mask directory")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--fusion", choices=integrate.FUSION_MODES)
    common.add_argument("--seed", type=int)
    common.add_argument("--ppd", type=float, help="pixels per visual degree of the source")
    common.add_argument("--workers", type=int)
    common.add_argument("--max-side", type=int, dest="max_side")
    common.add_argument(
        "--trace",
        type=_parse_trace,
        help="working-resolution positions 'row,col[;row,col]' to record rate traces for",
    )
    for name in ("saliency", "evaluate", "psychophysics", "ablation", "stimgen"):
        p = sub.add_parser(name, parents=[common])
        if name == "evaluate":
            p.add_argument("--maps", type=Path, help="directory of stored float maps")
        if name in ("psychophysics", "stimgen"):
            p.add_argument(
                "--conditions",
                type=_parse_conditions,
                help="comma-separated condition names (default: all)",
            )
        if name == "psychophysics":
            p.add_argument("--trials", type=int, help="stimulus draws per condition")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "images": args.dataset,
        "fixations": args.fixations,
        "out_dir": args.out,
        "fusion": args.fusion,
        "seed": args.seed,
        "ppd": args.ppd,
        "workers": args.workers,
        "max_side": args.max_side,
        "trace_positions": args.trace,
        "conditions": getattr(args, "conditions", None),
        "trials": getattr(args, "trials", None),
    }
    return load_config(args.config, **overrides)


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "saliency":
            cmd_saliency(config)
        elif args.command == "evaluate":
            cmd_evaluate(config, maps_dir=args.maps)
        elif args.command == "psychophysics":
            cmd_psychophysics(config)
        elif args.command == "ablation":
            cmd_ablation(config)
        elif args.command == "stimgen":
            cmd_stimgen(config)
    except ValidationError as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level fail with a message
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
