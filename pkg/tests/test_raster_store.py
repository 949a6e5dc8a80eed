import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from highdan.errors import ArgumentError, DataError, FormatError, IntegrityError
from highdan.raster_store import (
    RasterStack, Scene, ShiftSpec, band_normalize, class_priors, fit_pca, load_scene,
    pca_reduce, save_scene, shift_parameters, synth_scene_pair, tile_origins, tile_scene,
)


def small_scene(h=8, w=6, seed=0):
    r = np.random.default_rng(seed)
    mods = [RasterStack("msi", r.normal(size=(3, h, w))), RasterStack("sar", r.normal(size=(2, h, w)))]
    labels = r.integers(0, 14, size=(h, w)).astype(np.uint8)
    return Scene("tiny", mods, labels)


# ------------------------------------------------------------------ persistence

def test_round_trip_bit_exact(tmp_path):
    s = small_scene()
    save_scene(s, tmp_path / "s")
    back = load_scene(tmp_path / "s")
    assert back.name == s.name and back.num_classes == 13 and back.ignore_index == 0
    assert back.class_names == s.class_names
    for a, b in zip(s.modalities, back.modalities):
        assert a.modality_id == b.modality_id
        assert a.data.tobytes() == b.data.tobytes()
    assert back.labels.tobytes() == s.labels.tobytes()


def test_synthetic_round_trip_checksums(tmp_path, toy_pair):
    src, _ = toy_pair
    sums = save_scene(src, tmp_path / "src")
    assert load_scene(tmp_path / "src").checksums() == sums


def test_raw_files_are_little_endian_band_major(tmp_path):
    s = small_scene(4, 5)
    save_scene(s, tmp_path / "s")
    raw = (tmp_path / "s" / "msi.f32").read_bytes()
    assert raw[:4] == np.float32(s.get("msi").data[0, 0, 0]).astype("<f4").tobytes()
    assert len(raw) == 3 * 4 * 5 * 4
    assert (tmp_path / "s" / "labels.u8").read_bytes() == s.labels.tobytes()


def test_band_count_mismatch_is_integrity_error(tmp_path):
    s = small_scene()
    d = tmp_path / "s"
    save_scene(s, d)
    m = json.loads((d / "manifest.json").read_text())
    m["modalities"][0]["bands"] = 4
    (d / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(IntegrityError):
        load_scene(d)


def test_missing_and_extra_files_are_format_errors(tmp_path):
    s = small_scene()
    d = tmp_path / "s"
    save_scene(s, d)
    (d / "stray.bin").write_bytes(b"x")
    with pytest.raises(FormatError):
        load_scene(d)
    (d / "stray.bin").unlink()
    (d / "sar.f32").unlink()
    with pytest.raises(FormatError):
        load_scene(d)


def test_unknown_manifest_key_rejected(tmp_path):
    d = tmp_path / "s"
    save_scene(small_scene(), d)
    m = json.loads((d / "manifest.json").read_text())
    m["crs"] = "EPSG:4326"
    (d / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatError, match="crs"):
        load_scene(d)


def test_nan_on_disk_is_data_error(tmp_path):
    d = tmp_path / "s"
    save_scene(small_scene(), d)
    a = np.fromfile(d / "msi.f32", dtype="<f4")
    a[3] = np.nan
    a.tofile(d / "msi.f32")
    with pytest.raises(DataError):
        load_scene(d)


def test_scene_invariants():
    r = np.random.default_rng(0)
    with pytest.raises(IntegrityError):
        Scene("bad", [RasterStack("msi", r.normal(size=(2, 4, 4)))], np.zeros((4, 5), np.uint8))
    with pytest.raises(ArgumentError):
        Scene("dup", [RasterStack("msi", r.normal(size=(1, 4, 4)))] * 2, np.zeros((4, 4), np.uint8))
    with pytest.raises(DataError):
        Scene("lab", [RasterStack("msi", r.normal(size=(1, 2, 2)))], np.full((2, 2), 14, np.uint8))
    with pytest.raises(DataError):
        RasterStack("msi", np.array([[[np.inf]]]))


# ------------------------------------------------------------------ normalization

def test_band_normalize_examples():
    out = band_normalize(RasterStack("x", np.array([[[2.0, 4.0, 6.0]]])))
    np.testing.assert_array_equal(out.data, [[[0.0, 0.5, 1.0]]])
    out = band_normalize(RasterStack("x", np.array([[[5.0, 5.0, 5.0]]])))
    np.testing.assert_array_equal(out.data, [[[0.0, 0.0, 0.0]]])
    out = band_normalize(RasterStack("x", np.array([[[0.0, 1.0]]])))
    np.testing.assert_array_equal(out.data, [[[0.0, 1.0]]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(2, 6), st.integers(0, 10_000))
def test_band_normalize_range_and_idempotence(bands, n, seed):
    data = np.random.default_rng(seed).normal(scale=100, size=(bands, n, n))
    once = band_normalize(RasterStack("x", data))
    assert once.data.min() >= 0.0 and once.data.max() <= 1.0
    twice = band_normalize(once)
    np.testing.assert_array_equal(once.data, twice.data)


# ------------------------------------------------------------------ PCA

def covariance_pca(x: np.ndarray, k: int):
    """Brute-force oracle: eigendecomposition of the sample covariance."""
    cov = np.cov(x.reshape(x.shape[0], -1))
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:k]
    comps = vecs[:, order].T
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return vals[order], comps, vals.sum()


def test_pca_matches_covariance_eigensolver():
    x = np.random.default_rng(7).normal(size=(5, 8, 8)) * np.arange(1, 6)[:, None, None]
    stack = RasterStack("hsi", x)
    proj = fit_pca(stack, 5)
    vals, comps, total = covariance_pca(stack.data.astype(np.float64), 5)
    np.testing.assert_allclose(proj.components, comps, atol=1e-6)
    np.testing.assert_allclose(proj.explained_variance, vals, rtol=1e-6)
    assert proj.total_variance == pytest.approx(total, rel=1e-9)


def test_pca_rank_one():
    b1 = np.random.default_rng(0).normal(size=(1, 6, 6))
    stack = RasterStack("hsi", np.concatenate([b1, 2 * b1]))
    proj = fit_pca(stack, 1)
    assert proj.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-6)
    recon = proj.inverse_transform(proj.transform(stack))
    np.testing.assert_allclose(recon, stack.data, atol=1e-5)


def test_pca_full_basis_and_properties():
    x = np.random.default_rng(3).normal(size=(6, 10, 10))
    proj = fit_pca(RasterStack("hsi", x), 6)
    assert proj.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(proj.components @ proj.components.T, np.eye(6), atol=1e-6)
    assert np.all(np.diff(proj.explained_variance) <= 1e-12)
    out = pca_reduce(RasterStack("hsi", x), 3)
    assert out.data.shape == (3, 10, 10) and out.modality_id == "hsi"


def test_pca_argument_errors():
    stack = RasterStack("hsi", np.zeros((3, 2, 2)))
    with pytest.raises(ArgumentError):
        fit_pca(stack, 0)
    with pytest.raises(ArgumentError):
        fit_pca(stack, 4)
    with pytest.raises(ArgumentError):
        fit_pca(RasterStack("hsi", np.zeros((3, 1, 2))), 3)


# ------------------------------------------------------------------ tiling

def blank_scene(h, w):
    return Scene("blank", [RasterStack("msi", np.zeros((1, h, w)))], np.zeros((h, w), np.uint8))


def test_tile_examples():
    tiles = tile_scene(blank_scene(256, 256), 128, 128)
    assert [t.origin for t in tiles] == [(0, 0), (0, 128), (128, 0), (128, 128)]
    tiles = tile_scene(blank_scene(300, 300), 128, 128)
    assert len(tiles) == 9
    assert max(t.origin[0] for t in tiles) == 172
    assert len(tile_scene(blank_scene(128, 128), 128, 1)) == 1
    with pytest.raises(ArgumentError):
        tile_scene(blank_scene(100, 300), 128, 64)


@settings(max_examples=60, deadline=None)
@given(st.integers(32, 90), st.integers(32, 90), st.integers(1, 32), st.integers(1, 40))
def test_tiling_covers_scene(h, w, tile, stride):
    assume(stride <= tile)  # gaps between windows otherwise
    scene = blank_scene(h, w)
    tiles = tile_scene(scene, tile, stride, "target")
    hits = np.zeros((h, w), int)
    for t in tiles:
        r, c = t.origin
        assert r + tile <= h and c + tile <= w
        assert t.labels.shape == (tile, tile) and t.crops["msi"].shape == (1, tile, tile)
        assert t.domain == "target"
        hits[r:r + tile, c:c + tile] += 1
    assert hits.min() >= 1
    expect = (math.ceil((h - tile) / stride) + 1) * (math.ceil((w - tile) / stride) + 1)
    assert len(tiles) == expect
    assert len(tile_origins(h, tile, stride)) == math.ceil((h - tile) / stride) + 1


# ------------------------------------------------------------------ synthetic scenes

def test_null_shift_gives_identical_scenes():
    src, tgt = synth_scene_pair(5, ShiftSpec(), 64, 64, num_classes=4)
    for a, b in zip(src.modalities, tgt.modalities):
        assert a.data.tobytes() == b.data.tobytes()
    assert src.labels.tobytes() == tgt.labels.tobytes()


def test_synthesis_is_deterministic():
    shift = ShiftSpec((0.8, 1.2), (-0.1, 0.1), 0.02, 0.5, seed=9)
    a = synth_scene_pair(2, shift, 64, 48, num_classes=6, target_layout_seed=8)
    b = synth_scene_pair(2, shift, 64, 48, num_classes=6, target_layout_seed=8)
    for sa, sb in zip(a, b):
        assert sa.checksums() == sb.checksums()


def test_target_band_means_follow_affine_shift():
    shift = ShiftSpec((0.7, 1.3), (-0.2, 0.2), 0.05, 0.0, seed=4)
    bands = {"hsi": 10, "msi": 4, "sar": 2}
    src, tgt = synth_scene_pair(1, shift, 96, 96, bands=bands, num_classes=5)
    params = shift_parameters(shift, bands)
    n = 96 * 96
    bound = 3 * shift.noise_std / math.sqrt(n)
    for m in bands:
        gain, offset = params[m]
        s_mean = src.get(m).data.astype(np.float64).mean(axis=(1, 2))
        t_mean = tgt.get(m).data.astype(np.float64).mean(axis=(1, 2))
        assert np.all(np.abs(t_mean - (gain * s_mean + offset)) <= bound)


def test_labels_valid_and_skew_monotone():
    fracs = []
    for skew in (0.0, 0.5, 1.0, 2.0):
        _, tgt = synth_scene_pair(0, ShiftSpec(skew=skew), 64, 64, num_classes=5,
                                  unlabeled_fraction=0.1)
        assert tgt.labels.max() <= 5
        counts = np.bincount(tgt.labels.ravel(), minlength=6)[1:]
        fracs.append(counts / counts.sum())
    top = [f[-1] for f in fracs]
    bottom = [f[0] for f in fracs]
    assert all(a <= b for a, b in zip(top, top[1:]))
    assert all(a >= b for a, b in zip(bottom, bottom[1:]))
    p = class_priors(5, 1.0)
    assert p.sum() == pytest.approx(1.0) and np.all(np.diff(p) > 0)


def test_shift_spec_validation():
    with pytest.raises(ArgumentError):
        ShiftSpec(gain_range=(0.0, 1.0))
    with pytest.raises(ArgumentError):
        ShiftSpec(noise_std=-1)
    with pytest.raises(ArgumentError):
        synth_scene_pair(0, num_classes=1)
