import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v1sal.errors import ValidationError
from v1sal.kernels import (
    DISTANCE_GATE,
    J_AMPLITUDE,
    J_BETA_GATE,
    ORIENT_ANGLES,
    W_AMPLITUDE,
    build_kernels,
    geometry,
    j_weight,
    offset_tables,
    site_weight,
    scale_mixing,
    scale_unit,
    support_radius,
    w_weight,
)


def test_scale_helpers():
    assert scale_mixing(0) == 1.0
    assert scale_mixing(1) == 0.5
    assert scale_mixing(2) == 0.0
    assert scale_mixing(5) == 0.0
    assert scale_unit(1, 1) == 1.0
    assert scale_unit(2, 2) == 2.0
    assert scale_unit(1, 2) == pytest.approx(math.sqrt(2))
    assert support_radius(1, 1) == 10
    assert support_radius(2, 2) == 20


def test_geometry_collinear_horizontal():
    # horizontal orientation (angle 0), offset straight along x: the
    # connecting line is the orientation axis, so every angle is zero
    geom = geometry((0, 5), 0.0, 0.0)
    assert geom.d == 5.0
    assert geom.theta1 == pytest.approx(0.0)
    assert geom.theta2 == pytest.approx(0.0)
    assert geom.beta == pytest.approx(0.0)
    assert geom.dtheta == pytest.approx(0.0)


def test_geometry_orders_theta_pair():
    geom = geometry((0, 5), math.pi / 2, 0.0)
    # theta1 is the smaller magnitude of the two line angles
    assert abs(geom.theta1) <= abs(geom.theta2)
    assert geom.theta1 == pytest.approx(0.0)
    assert abs(geom.theta2) == pytest.approx(math.pi / 2)


def test_j_weight_hand_value():
    # collinear pair at distance 5, same scale: beta = 0, so the weight
    # is amplitude * exp(-d^2 / 90)
    geom = geometry((0, 5), 0.0, 0.0)
    expected = J_AMPLITUDE * math.exp(-25.0 / 90.0)
    assert j_weight(geom) == pytest.approx(expected, rel=1e-12)


def test_j_gate_boundaries():
    # self-connection excluded
    assert j_weight(geometry((0, 0), 0.0, 0.0)) == 0.0
    # beyond the distance gate excluded
    assert j_weight(geometry((0, 11), 0.0, 0.0)) == 0.0
    # at the gate edge included
    assert j_weight(geometry((0, 10), 0.0, 0.0)) > 0.0
    # perpendicular flankers: beta = pi + 2 sin(pi) = pi >= gate
    geom = geometry((0, 5), math.pi / 2, math.pi / 2)
    assert geom.beta == pytest.approx(math.pi)
    assert geom.beta >= J_BETA_GATE
    assert j_weight(geom) == 0.0


def test_collinear_beats_parallel_flank():
    # contour facilitation: collinear neighbours couple harder than
    # side-by-side parallel ones at the same distance
    collinear = j_weight(geometry((0, 4), 0.0, 0.0))
    flank = j_weight(geometry((4, 0), 0.0, 0.0))
    assert collinear > flank


def test_j_symmetric_under_pair_swap():
    # swapping source and destination reverses the offset; the weight
    # must not change
    for dy, dx in [(0, 3), (2, 5), (-4, 1), (3, -3)]:
        for ta in ORIENT_ANGLES:
            for tb in ORIENT_ANGLES:
                a = j_weight(geometry((dy, dx), ta, tb))
                b = j_weight(geometry((-dy, -dx), tb, ta))
                assert a == pytest.approx(b, abs=1e-15)


def test_w_printed_gates_exclude_everything():
    # |theta1| <= pi/2 < pi/1.99 always triggers the printed exclusion
    offsets = [(0, 3), (1, 7), (5, 5), (-2, 9), (0, 9)]
    for off in offsets:
        for ta in ORIENT_ANGLES:
            for tb in ORIENT_ANGLES:
                assert w_weight(geometry(off, ta, tb), as_printed=True) == 0.0


def test_w_classic_gate_admits_ladder():
    # parallel vertical bars side by side: theta1 = theta2 = pi/2,
    # beta = pi, dtheta = 0 -> classic reading gives a positive weight
    geom = geometry((0, 5), math.pi / 2, math.pi / 2)
    val = w_weight(geom, as_printed=False)
    expected = W_AMPLITUDE * (1.0 - math.exp(-0.4 * (math.pi / 5.0) ** 1.5))
    assert val == pytest.approx(expected, rel=1e-12)
    assert w_weight(geom, as_printed=True) == 0.0


def test_w_classic_respects_other_exclusions():
    # collinear pair: beta = 0 < pi/1.1 -> excluded under either reading
    assert w_weight(geometry((0, 5), 0.0, 0.0), as_printed=False) == 0.0
    # self-connection excluded
    assert w_weight(geometry((0, 0), math.pi / 2, math.pi / 2), as_printed=False) == 0.0


def test_build_kernels_validation():
    with pytest.raises(ValidationError):
        build_kernels(0, (8, 8))
    with pytest.raises(ValidationError):
        build_kernels(2, (8, 8), boundary="mirror")


def test_band_structure_follows_lambda():
    k = build_kernels(3, (12, 12))
    assert set(k.j_bands) <= {-1, 0, 1}
    assert k.w_is_zero  # printed gates leave no inhibitory long-range table
    assert k.w_bands == {}
    assert k.j_mass > 0.0
    k2 = build_kernels(3, (12, 12), lambda_profile=(1.0,))
    assert set(k2.j_bands) == {0}


def test_w_classic_build_has_mass():
    k = build_kernels(2, (12, 12), w_gate_as_printed=False)
    assert not k.w_is_zero
    assert k.w_mass > 0.0


def _direct_apply(kernels, rates, which):
    """Brute-force lateral sum straight from the offset tables."""
    s_n, o_n, h, w = rates.shape
    out = np.zeros_like(rates)
    wrap = kernels.boundary == "wrap"
    for s_dst, s_src, dys, dxs, j_tab, w_tab in offset_tables(kernels):
        tab = j_tab if which == "j" else w_tab
        # offset_tables yields raw formula values; the applied bands fold
        # in the per-pair quadrature weight
        tab = tab * site_weight(s_dst, s_src)
        for a in range(o_n):
            for b in range(o_n):
                plane = rates[s_src - 1, b]
                tt = tab[a, b]
                for iy, oy in enumerate(dys):
                    for ix, ox in enumerate(dxs):
                        wgt = tt[iy, ix]
                        if wgt == 0.0:
                            continue
                        if wrap:
                            out[s_dst - 1, a] += wgt * np.roll(
                                plane, (-oy, -ox), axis=(0, 1)
                            )
                        else:
                            if abs(oy) >= h or abs(ox) >= w:
                                continue
                            ys = slice(max(0, -oy), h - max(0, oy))
                            xs = slice(max(0, -ox), w - max(0, ox))
                            ys_src = slice(max(0, oy), h + min(0, oy))
                            xs_src = slice(max(0, ox), w + min(0, ox))
                            out[s_dst - 1, a][ys, xs] += wgt * plane[ys_src, xs_src]
    return out


@pytest.mark.parametrize("boundary", ["wrap", "fill"])
def test_fft_apply_matches_direct_sum(boundary, rng):
    kernels = build_kernels(2, (12, 11), boundary=boundary, w_gate_as_printed=False)
    rates = rng.random((2, 3, 12, 11))
    for which in ("j", "w"):
        fast = kernels.apply(rates, which)
        slow = _direct_apply(kernels, rates, which)
        assert fast.shape == rates.shape
        np.testing.assert_allclose(fast, slow, atol=1e-10)


def test_apply_batch_axis(rng):
    kernels = build_kernels(2, (10, 10))
    rates = rng.random((2, 2, 3, 10, 10))
    batched = kernels.apply(rates, "j")
    for i in range(2):
        np.testing.assert_allclose(batched[i], kernels.apply(rates[i], "j"), atol=1e-12)


def test_apply_translation_equivariance_wrap(rng):
    kernels = build_kernels(2, (12, 12), boundary="wrap")
    rates = rng.random((2, 3, 12, 12))
    rolled = np.roll(rates, (3, -5), axis=(-2, -1))
    a = kernels.apply(rates, "j")
    b = kernels.apply(rolled, "j")
    np.testing.assert_allclose(np.roll(a, (3, -5), axis=(-2, -1)), b, atol=1e-10)


def test_apply_preserves_dtype(rng):
    kernels = build_kernels(2, (10, 10))
    r32 = rng.random((2, 3, 10, 10)).astype(np.float32)
    out = kernels.apply(r32, "j")
    assert out.dtype == np.float32


@given(st.integers(0, 10_000))
def test_tabulated_entries_match_scalar_weights(case):
    # every table entry must agree with the scalar weight of its geometry
    r = np.random.default_rng(case)
    kernels = build_kernels(2, (9, 9), w_gate_as_printed=False)
    tables = list(offset_tables(kernels))
    s_dst, s_src, dys, dxs, j_tab, w_tab = tables[r.integers(len(tables))]
    a = int(r.integers(3))
    b = int(r.integers(3))
    iy = int(r.integers(dys.size))
    ix = int(r.integers(dxs.size))
    lam = scale_mixing(abs(s_dst - s_src))
    geom = geometry(
        (dys[iy], dxs[ix]), ORIENT_ANGLES[a], ORIENT_ANGLES[b], s_dst, s_src
    )
    assert j_tab[a, b, iy, ix] == pytest.approx(j_weight(geom, lam), abs=1e-15)
    assert w_tab[a, b, iy, ix] == pytest.approx(
        w_weight(geom, lam, as_printed=False), abs=1e-15
    )


def test_distance_gate_constant():
    assert DISTANCE_GATE == 10.0
