"""Fixation metrics on a toy example, well-aimed vs badly-aimed.

Builds a 160x120 frame with fixations clustered around two hot spots,
then scores two candidate saliency maps against them: a Gaussian mixture
centered on the true spots, and the same mixture shifted off target.
Every metric should prefer the aligned map.
"""

import numpy as np

from v1sal.metrics import (
    FixationSet,
    auc_judd,
    cc,
    density_map,
    info_gain,
    kl,
    nss,
    sim,
)

W, H = 160, 120
SPOTS = [(40.0, 60.0), (120.0, 50.0)]  # (x, y)

rng = np.random.default_rng(3)
pts = []
for sx, sy in SPOTS:
    pts.append(np.column_stack([
        rng.normal(sx, 6.0, size=25),
        rng.normal(sy, 6.0, size=25),
    ]))
xy = np.concatenate(pts)
xy[:, 0] = xy[:, 0].clip(0, W - 1)
xy[:, 1] = xy[:, 1].clip(0, H - 1)
fixes = FixationSet(xy=xy, size=(W, H))


def mixture(centers):
    yy, xx = np.mgrid[0:H, 0:W].astype(float)
    out = np.zeros((H, W))
    for cx, cy in centers:
        out += np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 12.0**2))
    return out


aligned = mixture(SPOTS)
shifted = mixture([(cx + 45, cy + 30) for cx, cy in SPOTS])
truth = density_map(fixes, sigma_px=8.0)
uniform_baseline = np.full((H, W), 1.0 / (W * H))

print(f"{'metric':>10s} {'aligned':>10s} {'shifted':>10s}")
rows = [
    ("auc", auc_judd(aligned, fixes), auc_judd(shifted, fixes)),
    ("nss", nss(aligned, fixes), nss(shifted, fixes)),
    ("cc", cc(aligned, truth), cc(shifted, truth)),
    ("sim", sim(aligned, truth), sim(shifted, truth)),
    ("kl", kl(aligned, truth), kl(shifted, truth)),
    ("infogain",
     info_gain(aligned, fixes, uniform_baseline),
     info_gain(shifted, fixes, uniform_baseline)),
]
for name, a, b in rows:
    print(f"{name:>10s} {a:10.4f} {b:10.4f}")
print("(kl is a distance: lower is better; all others higher is better)")
