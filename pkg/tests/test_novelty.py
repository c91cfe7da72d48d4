import numpy as np
import pytest

from gridforge import nn, novelty
from gridforge.errors import CalibrationError, ShapeError, SpecError

import oracles


def _sensor(filters=4, seed=0):
    spec = nn.NetworkSpec([nn.Conv2D(filters, 3, 3), nn.Activation("relu"), nn.MaxPool((2, 2)),
                           nn.Conv2D(3, 2, 2), nn.Activation("relu"),
                           nn.Flatten(), nn.Dense(1)], (10, 10, 1), "sse")
    return spec, nn.init_params(spec, seed)


def test_extract_refined_length_and_zero():
    spec, params = _sensor(filters=64)
    f = novelty.extract_refined(spec, params, np.random.default_rng(0).random((10, 10, 1)))
    assert f.shape == (64,)
    assert np.all(novelty.extract_refined(spec, params, np.zeros((10, 10, 1))) == 0)


def test_extract_refined_matches_pooled_map_mean():
    spec, params = _sensor()
    x = np.random.default_rng(1).normal(size=(10, 10, 1))
    pooled = nn.pool(nn.activate(nn.conv2d_forward(x, params[0]["W"], params[0]["b"]), "relu"), (2, 2))
    p = np.asarray(pooled)
    brute = [sum(p[i, j, f] for i in range(p.shape[0]) for j in range(p.shape[1])) / (p.shape[0] * p.shape[1])
             for f in range(p.shape[2])]
    np.testing.assert_allclose(novelty.extract_refined(spec, params, x, 0), brute, rtol=0, atol=1e-12)
    assert novelty.extract_refined(spec, params, x, 1).shape == (3,)
    with pytest.raises(SpecError):
        novelty.extract_refined(spec, params, x, 2)


def test_calibrate_identical_points():
    m = novelty.calibrate(np.ones((10, 3)), k=3, quantile=0.9)
    assert m.threshold == 0.0
    assert not m.is_novel(np.ones(3))


def test_calibrate_gaussian_quantile():
    ref = np.random.default_rng(2).normal(size=(100, 4))
    m = novelty.calibrate(ref, k=5, quantile=0.99)
    brute = []
    for i in range(100):
        others = np.delete(ref, i, axis=0)
        brute.append(oracles.knn_score(others, ref[i], 5))
    np.testing.assert_allclose(novelty.leave_one_out_scores(ref, 5), brute, rtol=0, atol=1e-12)
    assert sum(b > m.threshold for b in brute) == 1


def test_calibrate_errors():
    with pytest.raises(CalibrationError):
        novelty.calibrate(np.zeros((5, 2)), k=5)
    with pytest.raises(CalibrationError):
        novelty.calibrate(np.zeros((10, 2)), k=2, quantile=0.0)


def test_score_examples():
    ref = np.random.default_rng(3).normal(size=(30, 3))
    m = novelty.calibrate(ref, k=1)
    assert m.score(ref[4]) == 0.0 and not m.is_novel(ref[4])
    assert m.is_novel(ref.mean(axis=0) + 1e3)
    with pytest.raises(ShapeError):
        m.score(np.zeros(4))


def test_score_against_brute_force():
    r = np.random.default_rng(4)
    for _ in range(100):
        ref = r.normal(size=(int(r.integers(3, 25)), 5))
        k = int(r.integers(1, len(ref)))
        m = novelty.NoveltyModel(ref, 0.0, k)
        q = r.normal(size=5) * 2
        assert abs(m.score(q) - oracles.knn_score(ref, q, k)) <= 1e-12


def test_score_permutation_invariant():
    r = np.random.default_rng(5)
    ref = r.normal(size=(40, 3))
    q = r.normal(size=3)
    a = novelty.NoveltyModel(ref, 0.0, 4).score(q)
    b = novelty.NoveltyModel(ref[r.permutation(40)], 0.0, 4).score(q)
    assert abs(a - b) <= 1e-15


def test_score_scales_with_displacement():
    c = np.array([[1.0, -2.0, 0.5]])
    m = novelty.NoveltyModel(c, 0.0, 1)
    d = np.array([0.3, 0.1, -0.7])
    base = m.score(c[0] + d)
    for scale in (1.5, 3.0, 10.0):
        assert abs(m.score(c[0] + scale * d) - scale * base) <= 1e-12 * scale


def test_model_json_round_trip():
    m = novelty.calibrate(np.random.default_rng(6).normal(size=(12, 2)), k=2, block_index=1)
    back = novelty.NoveltyModel.from_json(m.to_json())
    assert back.k == 2 and back.block_index == 1 and back.threshold == m.threshold
    np.testing.assert_array_equal(back.reference, m.reference)
    assert set(m.to_dict()) == {"k", "threshold", "block_index", "reference"}
