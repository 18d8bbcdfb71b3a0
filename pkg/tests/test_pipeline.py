import numpy as np
import pytest
from PIL import Image

from v1sal.color import RgbImage
from v1sal.dynamics import LatticeParams
from v1sal.errors import ValidationError
from v1sal.metrics import FixationSet
from v1sal.pipeline import (
    CHANNEL_ORDER,
    DatasetManifest,
    ManifestEntry,
    RunConfig,
    SaliencyEngine,
    build_manifest,
    evaluate_maps,
    load_config,
    load_float_map,
    pseudo_fixations_from_mask,
    resize_mask,
    save_float_map,
    save_map_png,
    write_trace_csv,
)


def _png(path, arr):
    Image.fromarray(arr, mode="RGB" if arr.ndim == 3 else "L").save(path)


def _random_rgb(rng, side=24):
    return RgbImage(
        rng.random((side, side)), rng.random((side, side)), rng.random((side, side))
    )


# ---------------------------------------------------------------- config


def test_runconfig_validation_and_paths(tmp_path):
    cfg = RunConfig(images=str(tmp_path), out_dir=str(tmp_path / "out"))
    assert cfg.images == tmp_path
    with pytest.raises(ValidationError):
        RunConfig(ppd=0.0)
    with pytest.raises(ValidationError):
        RunConfig(max_side=4)
    with pytest.raises(ValidationError):
        RunConfig(fusion="mean")
    with pytest.raises(ValidationError):
        RunConfig(combine="sum")
    with pytest.raises(ValidationError):
        RunConfig(workers=0)


def test_runconfig_digest_tracks_content():
    a = RunConfig(seed=1)
    b = RunConfig(seed=1)
    c = RunConfig(seed=2)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert len(a.digest()) == 16
    d = a.with_overrides(lattice={"dt": 0.05})
    assert d.lattice.dt == 0.05
    assert d.seed == a.seed
    assert d.digest() != a.digest()


def test_load_config_from_toml(tmp_path):
    doc = tmp_path / "run.toml"
    doc.write_text(
        """
[pipeline]
ppd = 16.0
max_side = 64
fusion = "max"
seed = 7

[dataset]
images = "imgs"

[output]
dir = "results"
channel_maps = true

[lattice]
dt = 0.05
input_gain = 9.0
lambda_profile = [1.0, 0.25]

[psychophysics]
conditions = ["size", "orientation"]
trials = 2
"""
    )
    cfg = load_config(doc)
    assert cfg.ppd == 16.0
    assert cfg.max_side == 64
    assert cfg.fusion == "max"
    assert cfg.seed == 7
    assert str(cfg.images) == "imgs"
    assert str(cfg.out_dir) == "results"
    assert cfg.write_channel_maps is True
    assert cfg.lattice.dt == 0.05
    assert cfg.lattice.input_gain == 9.0
    assert cfg.lattice.lambda_profile == (1.0, 0.25)
    assert cfg.conditions == ("size", "orientation")
    assert cfg.trials == 2
    # explicit overrides beat the file
    cfg2 = load_config(doc, seed=99, lattice={"dt": 0.2})
    assert cfg2.seed == 99
    assert cfg2.lattice.dt == 0.2
    assert cfg2.lattice.input_gain == 9.0


def test_load_config_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[pipeline]\nppdd = 3.0\n")
    with pytest.raises(ValidationError, match="ppdd"):
        load_config(bad)
    bad.write_text("[lattice]\nalpha_z = 1.0\n")
    with pytest.raises(ValidationError, match="alpha_z"):
        load_config(bad)
    bad.write_text("[spurious]\nx = 1\n")
    with pytest.raises(ValidationError, match="spurious"):
        load_config(bad)


def test_load_config_defaults_without_file():
    cfg = load_config()
    assert cfg.fusion == "inverse"
    assert cfg.max_side == 128
    assert isinstance(cfg.lattice, LatticeParams)


# -------------------------------------------------------------- manifest


def test_build_manifest_with_csv(tmp_path, rng):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    for name in ("b", "a"):
        _png(imgs / f"{name}.png", (rng.random((10, 12, 3)) * 255).astype(np.uint8))
    (tmp_path / "fixations.csv").write_text(
        "image_id,x,y\na,3,4\na,5,6\nb,0,0\n"
    )
    man = build_manifest(imgs, fixations=tmp_path / "fixations.csv")
    assert [e.image_id for e in man.entries] == ["a", "b"]
    assert len(man) == 2
    assert len(man.entries[0].fixations) == 2
    assert man.entries[0].fixations.size == (12, 10)
    man.require_fixations()
    assert man.dataset_id == "imgs"


def test_build_manifest_missing_fixations_raise(tmp_path, rng):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    _png(imgs / "a.png", (rng.random((8, 8, 3)) * 255).astype(np.uint8))
    _png(imgs / "b.png", (rng.random((8, 8, 3)) * 255).astype(np.uint8))
    (tmp_path / "fixations.csv").write_text("image_id,x,y\na,1,1\n")
    man = build_manifest(imgs, fixations=tmp_path / "fixations.csv")
    with pytest.raises(ValidationError, match="b"):
        man.require_fixations()


def test_build_manifest_mask_dir_fixations(tmp_path, rng):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    _png(imgs / "a.png", (rng.random((8, 8, 3)) * 255).astype(np.uint8))
    fixdir = tmp_path / "fixations"
    fixdir.mkdir()
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[3, 5] = 255
    _png(fixdir / "a.png", mask)
    man = build_manifest(imgs, fixations=fixdir)
    np.testing.assert_allclose(man.entries[0].fixations.xy, [[5.0, 3.0]])

    masks = tmp_path / "masks"
    masks.mkdir()
    _png(masks / "a.png", mask)
    man2 = build_manifest(imgs, masks=masks)
    assert man2.entries[0].mask_path == masks / "a.png"


def test_build_manifest_validation(tmp_path):
    with pytest.raises(ValidationError):
        build_manifest(tmp_path / "nowhere")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ValidationError):
        build_manifest(empty)


# ---------------------------------------------------------------- engine


def test_working_shape_rules():
    engine = SaliencyEngine(RunConfig(max_side=128))
    assert engine.working_shape((100, 50)) == (50, 100)
    assert engine.working_shape((256, 128)) == (64, 128)
    assert engine.working_shape((2000, 10)) == (8, 128)


def test_kernel_cache_reuses_tables():
    engine = SaliencyEngine(RunConfig())
    k1 = engine.kernels_for(3, (24, 24))
    k2 = engine.kernels_for(3, (24, 24))
    assert k1 is k2
    k3 = engine.kernels_for(2, (24, 24))
    assert k3 is not k1
    engine.prewarm([(24, 24)])
    assert engine.kernels_for(3, (24, 24)) is k1


def test_process_is_deterministic(rng):
    cfg = RunConfig(max_side=24, trace_positions=((5, 5),))
    img = _random_rgb(rng)
    a = SaliencyEngine(cfg).process(img, image_id="x", image_index=0)
    b = SaliencyEngine(cfg).process(img, image_id="x", image_index=0)
    np.testing.assert_array_equal(a.final_map, b.final_map)
    np.testing.assert_array_equal(a.working_map, b.working_map)
    for name in CHANNEL_ORDER:
        np.testing.assert_array_equal(a.channel_maps[name], b.channel_maps[name])
        np.testing.assert_array_equal(a.traces[name][1], b.traces[name][1])
    # a different image index reseeds the lattice noise; the transient
    # shows it (time-averaged rates may coincide once nodes saturate)
    c = SaliencyEngine(cfg).process(img, image_id="x", image_index=1)
    assert not np.array_equal(a.traces["L"][1], c.traces["L"][1])


def test_process_output_geometry(rng):
    cfg = RunConfig(max_side=16, sigma_deg=0.5, ppd=8.0)
    img = RgbImage(
        rng.random((20, 32)), rng.random((20, 32)), rng.random((20, 32))
    )
    res = SaliencyEngine(cfg).process(img, image_id="wide")
    assert res.source_size == (32, 20)
    assert res.working_shape == (10, 16)
    assert res.final_map.shape == (20, 32)
    assert res.working_map.shape == (10, 16)
    assert res.ppd_working == pytest.approx(8.0 * 16 / 32)
    assert set(res.channel_maps) == set(CHANNEL_ORDER)
    assert res.seconds > 0


def test_process_grayscale_chromatic_channels_are_flat(rng):
    gray_plane = rng.random((16, 16))
    img = RgbImage(gray_plane, gray_plane.copy(), gray_plane.copy())
    res = SaliencyEngine(RunConfig(max_side=16)).process(img, image_id="gray")
    np.testing.assert_array_equal(res.channel_maps["rg"], np.zeros((16, 16)))
    np.testing.assert_array_equal(res.channel_maps["by"], np.zeros((16, 16)))
    assert res.channel_maps["L"].std() > 0


def test_process_keeps_pyramids_and_traces(rng):
    cfg = RunConfig(max_side=16, trace_positions=((2, 2),))
    res = SaliencyEngine(cfg).process(_random_rgb(rng, 16), image_id="t")
    assert res.traces is not None
    assert set(res.traces) == set(CHANNEL_ORDER)
    times, rates = res.traces["L"]
    assert rates.shape[1:3] == (2, 1)
    res2 = SaliencyEngine(RunConfig(max_side=16)).process(
        _random_rgb(rng, 16), image_id="p", keep_pyramids=True
    )
    assert set(res2.pyramids) == set(CHANNEL_ORDER)


def test_process_path_uses_stem(tmp_path, rng):
    _png(tmp_path / "scene.png", (rng.random((16, 16, 3)) * 255).astype(np.uint8))
    res = SaliencyEngine(RunConfig(max_side=16)).process_path(tmp_path / "scene.png")
    assert res.image_id == "scene"


# ------------------------------------------------------------ small i/o


def test_float_map_roundtrip(tmp_path, rng):
    m = rng.random((7, 9))
    save_float_map(tmp_path / "m.npy", m)
    got = load_float_map(tmp_path / "m.npy")
    np.testing.assert_array_equal(got, m)
    assert got.dtype == np.float64


def test_save_map_png_scaling(tmp_path, rng):
    m = rng.random((8, 8))
    save_map_png(tmp_path / "m.png", m)
    with Image.open(tmp_path / "m.png") as img:
        arr = np.asarray(img)
    assert arr.min() == 0 and arr.max() == 255
    save_map_png(tmp_path / "flat.png", np.ones((4, 4)))
    with Image.open(tmp_path / "flat.png") as img:
        np.testing.assert_array_equal(np.asarray(img), np.zeros((4, 4), dtype=np.uint8))


def test_write_trace_csv(tmp_path):
    times = np.array([0.1, 0.2])
    rates = np.zeros((2, 2, 1, 2, 3))
    rates[1, 0, 0, 1, 2] = 0.5
    write_trace_csv(tmp_path / "trace.csv", {"L": (times, rates)})
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "t,channel,polarity,position,scale,orientation,rate"
    assert len(lines) == 1 + 2 * 2 * 1 * 2 * 3
    assert "0.2000,L,on,0,1,2,0.5" in lines


# ----------------------------------------------------- masks + evaluate


def test_pseudo_fixations_sampling(rng):
    mask = np.zeros((20, 20), dtype=bool)
    mask[5:9, 10:14] = True
    fs = pseudo_fixations_from_mask(mask, n=12, seed=3)
    assert len(fs) == 12
    assert mask[fs.rows, fs.cols].all()
    fs2 = pseudo_fixations_from_mask(mask, n=12, seed=3)
    np.testing.assert_array_equal(fs.xy, fs2.xy)
    # a pool smaller than n falls back to sampling with replacement
    tiny = np.zeros((4, 4), dtype=bool)
    tiny[1, 1] = True
    fs3 = pseudo_fixations_from_mask(tiny, n=5, seed=0)
    assert len(fs3) == 5
    with pytest.raises(ValidationError):
        pseudo_fixations_from_mask(np.zeros((4, 4), dtype=bool), n=3)


def test_resize_mask():
    mask = np.zeros((16, 16), dtype=bool)
    mask[4:8, 4:8] = True
    small = resize_mask(mask, (8, 8))
    assert small.shape == (8, 8)
    # the covered block lands at half the coordinates; far corners stay clear
    assert small[2:4, 2:4].all()
    assert not small[0, 0] and not small[7, 7]
    same = resize_mask(mask, (16, 16))
    np.testing.assert_array_equal(same, mask)


def test_evaluate_maps_reports_and_exceptions(tmp_path, rng):
    h, w = 12, 12
    entries = []
    maps_dir = tmp_path / "maps"
    maps_dir.mkdir()
    for i, name in enumerate(("a", "b", "c")):
        pts = rng.integers(1, 11, size=(3, 2)).astype(float)
        entries.append(
            ManifestEntry(
                image_id=name,
                image_path=tmp_path / f"{name}.png",
                fixations=FixationSet(pts, size=(w, h)),
            )
        )
        if name != "c":  # c's map is deliberately missing
            save_float_map(maps_dir / f"{name}_saliency.npy", rng.random((h, w)))
    man = DatasetManifest(entries=entries)
    cfg = RunConfig(ppd=2.0, density_sigma_deg=1.0, seed=0)
    report, exceptions = evaluate_maps(man, maps_dir, cfg)
    assert [r["image"] for r in report.rows] == ["a", "b"]
    assert len(exceptions) == 1
    assert exceptions[0]["image"] == "c"
    for row in report.rows:
        for key in ("auc_judd", "auc_shuffled", "nss", "cc", "sim", "kl", "info_gain"):
            assert row[key] is not None
            assert np.isfinite(row[key])
    agg = report.aggregate()
    assert 0.0 <= agg["auc_judd"] <= 1.0
