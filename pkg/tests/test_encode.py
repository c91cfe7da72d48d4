import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridforge import encode as E
from gridforge.errors import DataError, ParamError, RangeError, ShapeError, SizeError

import oracles


# -- rescale / GAF -----------------------------------------------------------

def test_rescale_unit_examples():
    assert list(E.rescale_unit([0, 5, 10])) == [-1.0, 0.0, 1.0]
    assert list(E.rescale_unit([3, 3, 3])) == [0.0, 0.0, 0.0]
    with pytest.raises(DataError):
        E.rescale_unit([1.0, np.nan])


def test_rescale_random_hits_both_ends():
    s = np.random.default_rng(4).normal(size=100) * 7 + 3
    r = E.rescale_unit(s)
    assert r.min() == -1.0 and r.max() == 1.0
    direct = (2 * (s - s.min()) - (s.max() - s.min())) / (s.max() - s.min())
    np.testing.assert_allclose(r, direct, rtol=0, atol=1e-15)


def test_gaf_constant_series():
    pair = E.gaf_encode([2.0, 2.0, 2.0, 2.0], rescale=True)
    np.testing.assert_allclose(np.asarray(pair.gasf), -1.0, atol=1e-15)
    np.testing.assert_allclose(np.asarray(pair.gadf), 0.0, atol=1e-15)


def test_gaf_four_points_against_oracle():
    x = [-1.0, -0.5, 0.5, 1.0]
    pair = E.gaf_encode(x)
    gasf, gadf = oracles.gaf(x)
    np.testing.assert_allclose(np.asarray(pair.gasf), gasf, rtol=0, atol=1e-12)
    np.testing.assert_allclose(np.asarray(pair.gadf), gadf, rtol=0, atol=1e-12)
    # frozen values from the oracle: cos(acos(-1)+acos(0.5)) = cos(4pi/3) = -0.5
    assert abs(pair.gasf.get((0, 3)) - (-1.0)) < 1e-12
    assert abs(pair.gasf.get((0, 2)) - (-0.5)) < 1e-12
    assert abs(pair.gadf.get((1, 2)) - np.sin(2 * np.pi / 3 - np.pi / 3)) < 1e-12


def test_gaf_stacked_has_two_channels():
    t = E.gaf_encode(np.linspace(0, 1, 50)).stacked()
    assert t.shape == [50, 50, 2]


def test_gaf_rejects_out_of_range_without_rescale():
    with pytest.raises(Exception):
        E.gaf_encode([0.0, 2.0], rescale=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
def test_gaf_properties(values):
    pair = E.gaf_encode(values, rescale=True)
    s, d = np.asarray(pair.gasf), np.asarray(pair.gadf)
    x = E.rescale_unit(values)
    assert np.max(np.abs(s - s.T)) <= 1e-12
    assert np.max(np.abs(d + d.T)) <= 1e-12
    assert np.all(np.abs(s) <= 1 + 1e-12) and np.all(np.abs(d) <= 1 + 1e-12)
    np.testing.assert_allclose(np.diag(s), 2 * x ** 2 - 1, rtol=0, atol=1e-12)


# -- resample ----------------------------------------------------------------

def test_resample_examples():
    assert list(E.resample([1, 1, 2, 2], 2)) == [1.0, 2.0]
    assert len(E.resample(np.arange(4150.0), 50)) == 50
    s = np.random.default_rng(0).normal(size=37)
    np.testing.assert_array_equal(E.resample(s, 37), s)
    with pytest.raises(SizeError):
        E.resample([1, 2, 3], 4)


def test_resample_uneven_segments_cover_everything():
    s = np.arange(10.0)
    r = E.resample(s, 3)  # segments [0..2], [3..5], [6..9]
    np.testing.assert_allclose(r, [1.0, 4.0, 7.5])


# -- scatter binning ---------------------------------------------------------

def test_bin_scatter_lower_corner():
    t = E.bin_scatter([[0.0, 0.0]], bins=2, range=(0, 1, 0, 1))
    a = np.asarray(t)[:, :, 0]
    assert a[0, 0] == 1 and a.sum() == 1


def test_bin_scatter_upper_edge_goes_to_last_bin():
    a = np.asarray(E.bin_scatter([[1.0, 1.0], [2.0, 0.5]], bins=4, range=(0, 1, 0, 1)))[:, :, 0]
    assert a[3, 3] == 1 and a.sum() == 1


def test_bin_scatter_shape_and_log():
    pts = np.random.default_rng(1).random((500, 2))
    t = E.bin_scatter(pts, bins=50)
    assert t.shape == [50, 50, 1]
    lt = E.bin_scatter(pts, bins=50, log_counts=True)
    np.testing.assert_allclose(np.asarray(lt), np.log1p(np.asarray(t)))


def test_bin_scatter_empty_needs_range():
    with pytest.raises(RangeError):
        E.bin_scatter(np.zeros((0, 2)), bins=5)
    assert np.asarray(E.bin_scatter(np.zeros((0, 2)), 5, range=(0, 1, 0, 1))).sum() == 0


def test_bin_scatter_conservation_vs_recount():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(0, 300))
        pts = rng.normal(size=(n, 2))
        box = (-1.5, 1.2, -1.0, 2.0)
        bins = int(rng.integers(1, 12))
        got = np.asarray(E.bin_scatter(pts, bins, range=box))[:, :, 0]
        want = oracles.scatter_counts(pts, bins, box)
        np.testing.assert_array_equal(got, want)
        inside = np.sum((pts[:, 0] >= box[0]) & (pts[:, 0] <= box[1])
                        & (pts[:, 1] >= box[2]) & (pts[:, 1] <= box[3]))
        assert got.sum() == inside


def test_bin_scatter_10k_points():
    pts = np.random.default_rng(3).normal(0.5, 0.2, size=(10_000, 2))
    box = (0.0, 1.0, 0.0, 1.0)
    got = np.asarray(E.bin_scatter(pts, 50, range=box))[:, :, 0]
    np.testing.assert_array_equal(got, oracles.scatter_counts(pts, 50, box))


# -- channels / matrices -----------------------------------------------------

def test_stack_channels():
    g = [np.random.default_rng(i).random((50, 50)) for i in range(3)]
    t = E.stack_channels(g)
    assert t.shape == [50, 50, 3]
    np.testing.assert_array_equal(np.asarray(t)[:, :, 1], g[1])
    assert E.stack_channels([g[0][:, :, None]]).shape == [50, 50, 1]
    with pytest.raises(ShapeError):
        E.stack_channels([np.zeros((2, 2)), np.zeros((3, 3))])


def test_series_matrix():
    rng = np.random.default_rng(5)
    ms = E.MultiSeries(rng.normal(2, 3, size=(52, 60)))
    t = E.series_matrix(ms, normalize=True)
    assert t.shape == [52, 60, 1]
    a = np.asarray(t)[:, :, 0]
    assert np.max(np.abs(a.mean(axis=1))) <= 1e-12
    assert np.max(np.abs(a.std(axis=1) - 1)) <= 1e-12
    mean, std = E.zscore_stats(ms)
    back = a * std[:, None] + mean[:, None]
    np.testing.assert_allclose(back, ms.values, rtol=0, atol=1e-10)
    raw = np.asarray(E.series_matrix(ms))[:, :, 0]
    np.testing.assert_array_equal(raw, ms.values)


def test_series_matrix_constant_row():
    v = np.vstack([np.full(10, 4.0), np.arange(10.0)])
    a = np.asarray(E.series_matrix(E.MultiSeries(v), normalize=True))[:, :, 0]
    assert np.all(a[0] == 0.0)


def test_series_matrix_external_stats():
    v = np.arange(12.0).reshape(2, 6)
    a = np.asarray(E.series_matrix(v, True, mean=[1.0, 2.0], std=[2.0, 0.0]))[:, :, 0]
    np.testing.assert_allclose(a[0], (v[0] - 1) / 2)
    assert np.all(a[1] == 0)


# -- colour ------------------------------------------------------------------

def test_lab_black_white_gray():
    lab = np.asarray(E.rgb_to_lab(np.array([[[0, 0, 0], [1, 1, 1], [0.5, 0.5, 0.5]]], float)))
    assert lab[0, 0, 0] == 0.0
    assert abs(lab[0, 1, 0] - 100) <= 0.01
    assert np.all(np.abs(lab[0, 1:, 1:]) <= 0.01)


def test_lab_range_errors():
    with pytest.raises(RangeError):
        E.rgb_to_lab(np.full((1, 1, 3), 1.5))
    with pytest.raises(ShapeError):
        E.rgb_to_lab(np.zeros((2, 2)))


def test_lab_round_trip():
    rgb = np.random.default_rng(8).random((20, 20, 3))
    lab = np.asarray(E.rgb_to_lab(rgb))
    assert lab[..., 0].min() >= 0 and lab[..., 0].max() <= 100
    np.testing.assert_allclose(oracles.lab_to_rgb(lab), rgb, rtol=0, atol=1e-6)


# -- perturbations -----------------------------------------------------------

def _img(seed=0, shape=(32, 32, 1)):
    return np.random.default_rng(seed).random(shape)


def test_fog_zero_is_identity():
    img = _img()
    out = E.perturb(img, "fog", {"intensity": 0.0}, seed=3)
    np.testing.assert_array_equal(np.asarray(out), img)


def test_fog_brightens():
    img = _img()
    out = np.asarray(E.perturb(img, "fog", {"intensity": 0.6}, seed=3))
    assert np.all(out >= img) and out.max() <= 1.0


def test_cutout_full_frame():
    out = np.asarray(E.perturb(_img(), "cutout", {"height": 32, "width": 32, "fill": 0.25}, seed=1))
    assert np.all(out == 0.25)


def test_shift_moves_lit_pixel():
    img = np.zeros((4, 4, 1))
    img[0, 0, 0] = 1.0
    out = np.asarray(E.perturb(img, "shift", {"dy": 1, "dx": 0}))
    assert out[1, 0, 0] == 1.0 and out.sum() == 1.0
    out = np.asarray(E.perturb(img, "shift", {"dy": -1, "dx": 0}))
    assert out.sum() == 0.0


def test_rotate_and_brightness():
    img = _img(shape=(5, 7, 1))
    r = np.asarray(E.perturb(img, "rotate90", {"k": 1}))
    assert r.shape == (7, 5, 1)
    r4 = np.asarray(E.perturb(img, "rotate90", {"k": 4}))
    np.testing.assert_array_equal(r4, img)
    b = np.asarray(E.perturb(img, "brightness", {"factor": 3.0}))
    assert b.max() <= 1.0


def test_spatter_changes_pixels():
    img = np.ones((32, 32, 1))
    out = np.asarray(E.perturb(img, "spatter", {"count": 5, "radius": 2, "value": 0.3}, seed=2))
    assert np.any(out == 0.3)


def test_perturb_param_errors():
    with pytest.raises(ParamError):
        E.perturb(_img(), "fog", {"intensity": 1.5})
    with pytest.raises(ParamError):
        E.perturb(_img(), "spatter", {"radius": -1})
    with pytest.raises(ParamError):
        E.perturb(_img(), "blur")


@pytest.mark.parametrize("kind", E.PERTURBATIONS)
def test_perturb_deterministic(kind):
    img = _img(seed=9)
    a = np.asarray(E.perturb(img, kind, {"intensity": 0.5, "dy": 2, "dx": -1}, seed=42))
    b = np.asarray(E.perturb(img, kind, {"intensity": 0.5, "dy": 2, "dx": -1}, seed=42))
    assert a.tobytes() == b.tobytes()


def test_perturb_2d_input_keeps_rank():
    out = E.perturb(np.ones((8, 8)), "cutout", {"size": 2}, seed=0)
    assert out.shape == [8, 8]
