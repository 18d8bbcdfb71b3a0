"""Lateral coupling weights between orientation/scale-tuned lattice nodes.

Two translation-invariant weight tables connect cortical nodes: a
monosynaptic excitatory table J favouring collinear, similarly oriented
pairs, and a disynaptic inhibitory table W targeting flanking geometry.
Both depend only on the relative offset between the two nodes, their
preferred orientations, and their scale pair, through

    d      straight-line offset length in lattice steps
    d_s    the same length in the scale pair's own unit 2^((s-1+s'-1)/2),
           so lateral reach grows with receptive-field size
    θ1, θ2 angles between each preferred orientation and the connecting
           line, wrapped to [-π/2, π/2] and ordered |θ1| <= |θ2|
    β      2|θ1| + 2 sin|θ1 + θ2|  (0 for collinear, π for orthogonal)
    Δθ     wrapped orientation difference

with values

    J = λ(Δscale) 0.126 exp((β/d_s)^2 - 2 (β/d_s)^7 - d_s^2 / 90)
        gated to 0 < d_s <= 10 and β < π/2.69,

    W = λ(Δscale) 0.14 (1 - exp(-0.4 (β/d_s)^1.5)) exp(-(|Δθ|/(π/4))^1.5)
        zero when d_s = 0, d_s >= 10, β < π/1.1, |Δθ| >= π/3, or
        |θ1| < π/1.99.

The last W exclusion is kept exactly as printed in the source model
description even though |θ1| can never reach π/1.99, which makes the
built W table identically zero; ``w_gate_as_printed=False`` swaps in the
classical exclusion threshold π/11.999, under which W is active. Scale
mixing λ is 1 within a scale, 0.5 one scale apart, 0 beyond.

Tables are built once per lattice shape and stored as per-scale-band
Fourier stacks so the lattice update applies them with batched FFTs.
Each stored entry is the formula value times :func:`site_weight`, the
quadrature weight that keeps the summed lateral input per node
scale-invariant on the undecimated lattice (see that function).
:func:`offset_tables` regenerates the raw, unweighted offset-indexed
values for exhaustive gate audits without keeping them resident.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .errors import ValidationError

J_AMPLITUDE = 0.126
W_AMPLITUDE = 0.14
J_BETA_GATE = np.pi / 2.69
W_BETA_GATE = np.pi / 1.1
W_DTHETA_GATE = np.pi / 3.0
W_THETA1_GATE_PRINTED = np.pi / 1.99
W_THETA1_GATE_CLASSIC = np.pi / 11.999
DISTANCE_GATE = 10.0

# Preferred orientation per detail-plane index (h, v, d): the "h" plane
# responds to vertically oriented structure, "v" to horizontal, "d" to
# the combined diagonals (represented by 45 degrees).
ORIENT_ANGLES = (np.pi / 2.0, 0.0, np.pi / 4.0)

DEFAULT_LAMBDA = (1.0, 0.5)


def scale_mixing(dscale: int, profile: tuple[float, ...] = DEFAULT_LAMBDA) -> float:
    """λ(Δscale): same scale 1, adjacent scales 0.5, farther 0."""
    return profile[dscale] if dscale < len(profile) else 0.0


def scale_unit(scale_a: int, scale_b: int) -> float:
    """Lattice steps per unit of scaled distance for a scale pair (1-based)."""
    return 2.0 ** (0.5 * ((scale_a - 1) + (scale_b - 1)))


def support_radius(scale_a: int, scale_b: int) -> int:
    """Largest offset length with a non-zero gate for this scale pair."""
    return int(np.floor(DISTANCE_GATE * scale_unit(scale_a, scale_b)))


def site_weight(scale_a: int, scale_b: int) -> float:
    """Quadrature weight of one lattice site in the lateral sum.

    The weight formulas describe an interaction density over scaled
    distance; on the undecimated lattice a scale pair's unit area holds
    scale_unit**2 sites, so each site must carry the reciprocal cell
    weight for the summed lateral input to stay scale-invariant. Without
    it, coarse-scale nodes collect inputs thousands of times stronger
    than fine-scale ones and the excitatory field swamps the saturating
    inhibition at any drive level.
    """
    return scale_unit(scale_a, scale_b) ** -2.0


@dataclass(frozen=True)
class KernelGeometry:
    """Relative geometry of one node pair, precomputed for the weights."""

    d: float
    d_scaled: float
    theta1: float
    theta2: float
    beta: float
    dtheta: float
    dscale: int


def _wrap_half_pi(angle):
    """Wrap an orientation difference into [-π/2, π/2) modulo π."""
    return (angle + np.pi / 2.0) % np.pi - np.pi / 2.0


def _geometry_fields(dy, dx, theta_a, theta_b, scale_a, scale_b):
    """Vectorised geometry used both by the scalar API and the builder."""
    d = np.hypot(dx, dy)
    d_scaled = d / scale_unit(scale_a, scale_b)
    phi = np.arctan2(dy, dx)
    t_a = _wrap_half_pi(theta_a - phi)
    t_b = _wrap_half_pi(theta_b - phi)
    swap = np.abs(t_a) > np.abs(t_b)
    theta1 = np.where(swap, t_b, t_a)
    theta2 = np.where(swap, t_a, t_b)
    at_node = d == 0
    theta1 = np.where(at_node, 0.0, theta1)
    theta2 = np.where(at_node, 0.0, theta2)
    beta = 2.0 * np.abs(theta1) + 2.0 * np.sin(np.abs(theta1 + theta2))
    dtheta = _wrap_half_pi(theta_a - theta_b)
    return d, d_scaled, theta1, theta2, beta, dtheta


def geometry(
    offset: tuple[float, float],
    theta_a: float,
    theta_b: float,
    scale_a: int = 1,
    scale_b: int = 1,
) -> KernelGeometry:
    """Geometry of the pair (node, node + offset); offset is (dy, dx)."""
    dy, dx = offset
    d, ds, t1, t2, beta, dtheta = _geometry_fields(
        float(dy), float(dx), theta_a, theta_b, scale_a, scale_b
    )
    return KernelGeometry(
        d=float(d),
        d_scaled=float(ds),
        theta1=float(t1),
        theta2=float(t2),
        beta=float(beta),
        dtheta=float(dtheta),
        dscale=abs(scale_a - scale_b),
    )


def _j_gate(d_scaled, beta):
    return (d_scaled > 0.0) & (d_scaled <= DISTANCE_GATE) & (beta < J_BETA_GATE)


def _j_values(d_scaled, beta, lam):
    gate = _j_gate(d_scaled, beta)
    safe_d = np.where(gate, d_scaled, 1.0)
    ratio = beta / safe_d
    value = J_AMPLITUDE * np.exp(ratio**2 - 2.0 * ratio**7 - safe_d**2 / 90.0)
    return np.where(gate, lam * value, 0.0)


def _w_excluded(d_scaled, beta, dtheta, theta1, as_printed):
    theta1_gate = W_THETA1_GATE_PRINTED if as_printed else W_THETA1_GATE_CLASSIC
    return (
        (d_scaled == 0.0)
        | (d_scaled >= DISTANCE_GATE)
        | (beta < W_BETA_GATE)
        | (np.abs(dtheta) >= W_DTHETA_GATE)
        | (np.abs(theta1) < theta1_gate)
    )


def _w_values(d_scaled, beta, dtheta, theta1, lam, as_printed):
    excluded = _w_excluded(d_scaled, beta, dtheta, theta1, as_printed)
    safe_d = np.where(excluded, 1.0, d_scaled)
    value = (
        W_AMPLITUDE
        * (1.0 - np.exp(-0.4 * (beta / safe_d) ** 1.5))
        * np.exp(-((np.abs(dtheta) / (np.pi / 4.0)) ** 1.5))
    )
    return np.where(excluded, 0.0, lam * value)


def j_weight(geom: KernelGeometry, lam: float = 1.0) -> float:
    """Excitatory weight for one node pair (0 outside the gate)."""
    return float(_j_values(geom.d_scaled, geom.beta, lam))


def w_weight(geom: KernelGeometry, lam: float = 1.0, as_printed: bool = True) -> float:
    """Inhibitory weight for one node pair (0 when any exclusion holds)."""
    return float(
        _w_values(geom.d_scaled, geom.beta, geom.dtheta, geom.theta1, lam, as_printed)
    )


def _pair_tables(
    scale_a: int,
    scale_b: int,
    radius_y: int,
    radius_x: int,
    lam: float,
    orientations: tuple[float, ...],
    as_printed: bool,
):
    """Offset-indexed J and W tables for one scale pair.

    Returns (dy, dx, j, w) where dy/dx are 1-D offset coordinates and the
    tables have shape (n_orient_dst, n_orient_src, len(dy), len(dx)); the
    destination node sits at offset (0, 0) and the source at (dy, dx).
    """
    dy = np.arange(-radius_y, radius_y + 1)
    dx = np.arange(-radius_x, radius_x + 1)
    gy, gx = np.meshgrid(dy, dx, indexing="ij")
    n_o = len(orientations)
    j = np.empty((n_o, n_o, dy.size, dx.size))
    w = np.empty_like(j)
    for a, th_dst in enumerate(orientations):
        for b, th_src in enumerate(orientations):
            _, ds, t1, _, beta, dth = _geometry_fields(
                gy, gx, th_dst, th_src, scale_a, scale_b
            )
            j[a, b] = _j_values(ds, beta, lam)
            w[a, b] = _w_values(ds, beta, dth, t1, lam, as_printed)
    return dy, dx, j, w


def _fold_periodic(table: np.ndarray, radius_y: int, radius_x: int, h: int, w: int):
    """Wrap an offset-indexed table onto an (h, w) torus, flipped for FFT.

    The lattice update is a cross-correlation, out[p] = Σ_o T[o] r[p + o];
    storing T[-o] at index (o mod size) turns it into a circular
    convolution so a plain spectrum product applies it.
    """
    flipped = table[..., ::-1, ::-1]
    ty, tx = flipped.shape[-2:]
    pad_y = (-ty) % h
    pad_x = (-tx) % w
    padded = np.pad(flipped, [(0, 0)] * (flipped.ndim - 2) + [(0, pad_y), (0, pad_x)])
    stacked = padded.reshape(padded.shape[:-2] + (-1, h, padded.shape[-1] // w, w))
    folded = stacked.sum(axis=(-4, -2))
    # index 0 currently holds offset +radius (after the flip); roll so the
    # zero offset lands at index 0.
    return np.roll(folded, (-radius_y % h, -radius_x % w), axis=(-2, -1))


def _embed_linear(table: np.ndarray, radius_y: int, radius_x: int, gy: int, gx: int):
    """Place a flipped offset table on a zero grid large enough to avoid wrap."""
    out = np.zeros(table.shape[:-2] + (gy, gx))
    flipped = table[..., ::-1, ::-1]
    rolled = np.zeros_like(out)
    rolled[..., : flipped.shape[-2], : flipped.shape[-1]] = flipped
    return np.roll(rolled, (-radius_y % gy, -radius_x % gx), axis=(-2, -1))


@dataclass
class CouplingKernels:
    """Built weight tables for one lattice shape, ready for application.

    ``j_bands``/``w_bands`` map a scale offset δ to a Fourier stack of
    shape (n_pairs, O, O, grid_y, grid_x//2+1): entry [k, od, os] carries
    weights into scale k+max(δ,0)... stored so that ``apply`` can run the
    whole lattice in a handful of batched FFT products. ``w_is_zero``
    short-circuits the inhibitory pass when every W entry is 0.
    """

    scales: int
    shape: tuple[int, int]
    boundary: str
    orientations: tuple[float, ...]
    lambda_profile: tuple[float, ...]
    w_gate_as_printed: bool
    grid: tuple[int, int]
    j_bands: dict[int, np.ndarray] = field(repr=False)
    w_bands: dict[int, np.ndarray] = field(repr=False)
    w_is_zero: bool = True
    j_mass: float = 0.0
    w_mass: float = 0.0

    def __post_init__(self) -> None:
        self._cast_cache: dict = {}

    def _bands_as(self, table: str, dtype) -> dict[int, np.ndarray]:
        key = (table, np.dtype(dtype).str)
        cached = self._cast_cache.get(key)
        if cached is None:
            source = self.j_bands if table == "j" else self.w_bands
            cached = {d: s.astype(dtype, copy=False) for d, s in source.items()}
            self._cast_cache[key] = cached
        return cached

    def apply(self, rates: np.ndarray, table: str = "j") -> np.ndarray:
        """Lateral drive Σ_src T[offset] rate[src] for every lattice node.

        ``rates`` has shape (..., scales, n_orient, H, W); the leading axes
        are treated as batch dimensions. The tables already carry the
        per-scale-pair :func:`site_weight`, so the sum is the quadrature
        of the interaction field over scaled distance.
        """
        if table == "w" and self.w_is_zero:
            return np.zeros_like(rates)
        h, w = self.shape
        gy, gx = self.grid
        spec = sfft.rfft2(rates, s=(gy, gx))
        acc = np.zeros_like(spec)
        n_s = self.scales
        for delta, k in self._bands_as(table, spec.dtype).items():
            if delta == 0:
                acc += np.einsum("sdqyx,...sqyx->...sdyx", k, spec)
            elif delta > 0:
                acc[..., : n_s - delta, :, :, :] += np.einsum(
                    "sdqyx,...sqyx->...sdyx", k, spec[..., delta:, :, :, :]
                )
            else:
                acc[..., -delta:, :, :, :] += np.einsum(
                    "sdqyx,...sqyx->...sdyx", k, spec[..., : n_s + delta, :, :, :]
                )
        out = sfft.irfft2(acc, s=(gy, gx))
        if (gy, gx) == (h, w):
            return out
        return np.ascontiguousarray(out[..., :h, :w])


def build_kernels(
    scales: int,
    shape: tuple[int, int],
    boundary: str = "wrap",
    lambda_profile: tuple[float, ...] = DEFAULT_LAMBDA,
    w_gate_as_printed: bool = True,
    orientations: tuple[float, ...] = ORIENT_ANGLES,
) -> CouplingKernels:
    """Tabulate both weight tables over every in-gate offset and scale pair.

    Under the default periodic boundary the tables are folded onto the
    lattice torus; under "fill" they are embedded on a larger grid so the
    FFT realises plain zero-padded summation.
    """
    if scales < 1:
        raise ValidationError("need at least one scale")
    h, w = shape
    if h < 1 or w < 1:
        raise ValidationError(f"bad lattice shape {shape!r}")
    if boundary not in ("wrap", "fill"):
        raise ValidationError(f"unknown lattice boundary {boundary!r}")

    deltas = [d for d in range(-(scales - 1), scales) if scale_mixing(abs(d), lambda_profile) > 0.0]
    if not deltas:
        deltas = [0]

    if boundary == "wrap":
        grid = (h, w)
    else:
        r_max = 0
        for s in range(1, scales + 1):
            for d in deltas:
                s2 = s + d
                if 1 <= s2 <= scales:
                    r_max = max(r_max, min(support_radius(s, s2), max(h, w) - 1))
        grid = (int(sfft.next_fast_len(h + r_max)), int(sfft.next_fast_len(w + r_max)))

    n_o = len(orientations)
    gy, gx = grid
    j_bands: dict[int, np.ndarray] = {}
    w_bands: dict[int, np.ndarray] = {}
    j_mass = 0.0
    w_mass = 0.0
    any_w = False
    for delta in deltas:
        pairs = [(s, s + delta) for s in range(1, scales + 1) if 1 <= s + delta <= scales]
        if not pairs:
            continue
        j_stack = np.zeros((len(pairs), n_o, n_o, gy, gx // 2 + 1), dtype=np.complex128)
        w_stack = np.zeros_like(j_stack)
        for k, (s_dst, s_src) in enumerate(pairs):
            lam = scale_mixing(abs(delta), lambda_profile)
            radius = support_radius(s_dst, s_src)
            ry = radius if boundary == "wrap" else min(radius, h - 1)
            rx = radius if boundary == "wrap" else min(radius, w - 1)
            _, _, j_tab, w_tab = _pair_tables(
                s_dst, s_src, ry, rx, lam, orientations, w_gate_as_printed
            )
            # bands carry the quadrature weight; audits read the raw
            # formula values through offset_tables instead
            quad = site_weight(s_dst, s_src)
            j_tab = j_tab * quad
            w_tab = w_tab * quad
            j_mass += float(j_tab.sum())
            w_mass += float(w_tab.sum())
            if boundary == "wrap":
                j_real = _fold_periodic(j_tab, ry, rx, h, w)
                w_real = _fold_periodic(w_tab, ry, rx, h, w) if w_tab.any() else None
            else:
                j_real = _embed_linear(j_tab, ry, rx, gy, gx)
                w_real = _embed_linear(w_tab, ry, rx, gy, gx) if w_tab.any() else None
            j_stack[k] = sfft.rfft2(j_real, s=grid)
            if w_real is not None:
                any_w = True
                w_stack[k] = sfft.rfft2(w_real, s=grid)
        j_bands[delta] = j_stack
        w_bands[delta] = w_stack
    if not any_w:
        w_bands = {}

    return CouplingKernels(
        scales=scales,
        shape=(h, w),
        boundary=boundary,
        orientations=tuple(orientations),
        lambda_profile=tuple(lambda_profile),
        w_gate_as_printed=w_gate_as_printed,
        grid=grid,
        j_bands=j_bands,
        w_bands=w_bands,
        w_is_zero=not any_w,
        j_mass=j_mass,
        w_mass=w_mass,
    )


def offset_tables(kernels: CouplingKernels):
    """Regenerate raw offset-indexed tables for every built scale pair.

    Yields (scale_dst, scale_src, dy, dx, j_table, w_table) with tables of
    shape (O, O, len(dy), len(dx)). The full logical support is covered
    regardless of boundary clipping, so gate audits see every entry. The
    values are the plain weight-formula outputs; the :func:`site_weight`
    quadrature factor applied inside the built bands is NOT included.
    """
    for delta in sorted(kernels.j_bands):
        lam = scale_mixing(abs(delta), kernels.lambda_profile)
        for s_dst in range(1, kernels.scales + 1):
            s_src = s_dst + delta
            if not 1 <= s_src <= kernels.scales:
                continue
            radius = support_radius(s_dst, s_src)
            dy, dx, j_tab, w_tab = _pair_tables(
                s_dst,
                s_src,
                radius,
                radius,
                lam,
                kernels.orientations,
                kernels.w_gate_as_printed,
            )
            yield s_dst, s_src, dy, dx, j_tab, w_tab
