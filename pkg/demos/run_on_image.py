"""Run the saliency engine on one image and dump the maps as PNGs.

Usage:
    python demos/run_on_image.py [path/to/image.png]

Without an argument a small synthetic scene is built in place: a soft
luminance gradient, a few gray discs, and one red disc that should end
up as the strongest spot in the output map.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from v1sal import color
from v1sal.pipeline import RunConfig, SaliencyEngine, save_map_png


def synthetic_scene(side=480):
    yy, xx = np.mgrid[0:side, 0:side].astype(float) / side
    base = 0.35 + 0.25 * xx  # gentle left-to-right ramp
    r = base.copy()
    g = base.copy()
    b = base.copy()
    rng = np.random.default_rng(11)
    for _ in range(6):
        cy, cx = rng.integers(60, side - 60, size=2)
        rad = rng.integers(16, 26)
        disc = (yy * side - cy) ** 2 + (xx * side - cx) ** 2 < rad**2
        for plane in (r, g, b):
            plane[disc] = 0.62
    # the singleton: one saturated red disc
    disc = (yy * side - side // 3) ** 2 + (xx * side - 2 * side // 3) ** 2 < 22**2
    r[disc] = 0.85
    g[disc] = 0.12
    b[disc] = 0.12
    return color.from_array(np.stack([r, g, b], axis=-1))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("image", nargs="?", help="image file; omit for the built-in scene")
    ap.add_argument("--out", default="demo_out/single", help="output directory")
    args = ap.parse_args()

    if args.image:
        image = color.load_image(args.image)
        name = Path(args.image).stem
    else:
        image = synthetic_scene()
        name = "synthetic"

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = RunConfig(out_dir=out, max_side=96)
    engine = SaliencyEngine(cfg)
    t0 = time.perf_counter()
    result = engine.process(image, image_id=name)
    dt = time.perf_counter() - t0

    save_map_png(out / f"{name}_saliency.png", result.final_map)
    for cname, cmap in result.channel_maps.items():
        save_map_png(out / f"{name}_{cname}.png", cmap)

    peak = tuple(
        int(v) for v in np.unravel_index(np.argmax(result.final_map), result.final_map.shape)
    )
    print(f"image {name}: {result.source_size[0]}x{result.source_size[1]} px,")
    print(f"  lattice at {result.working_shape[1]}x{result.working_shape[0]}, {dt:.1f}s")
    print(f"  strongest point (row, col) = {peak}")
    print(f"  wrote {name}_saliency.png and per-channel maps to {out}/")


if __name__ == "__main__":
    main()
