"""Novelty detection on a CNN sensor's own feature maps.

Three stages: run the sensor up to the end of one convolution block,
refine the pooled map to one scalar per filter (global average), and score
the refined vector by its mean Euclidean distance to the ``k`` nearest
reference vectors.  The threshold is a quantile of the reference set's
leave-one-out scores.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ShapeError, SpecError
from .nn.layers import forward
from .nn.spec import conv_blocks

DEFAULT_K = 5
DEFAULT_QUANTILE = 0.99


def _block_stop(spec, block_index):
    blocks = conv_blocks(spec)
    if not 0 <= block_index < len(blocks):
        raise SpecError(f"block index {block_index} out of range; network has {len(blocks)} blocks")
    return blocks[block_index][1]


def extract_refined_batch(spec, params, X, block_index=0, batch_size=256):
    """Refined features for a batch: ``(n, filters)``."""
    stop = _block_stop(spec, block_index)
    X = np.asarray(X, dtype=np.float64)
    out = []
    for s in range(0, len(X), batch_size):
        maps = forward(spec, params, X[s:s + batch_size], stop=stop)
        out.append(maps.reshape(len(maps), -1, maps.shape[-1]).mean(axis=1))
    return np.concatenate(out, axis=0)


def extract_refined(spec, params, input, block_index=0):  # noqa: A002
    """Per-filter global average of one block's pooled output for a single input."""
    return extract_refined_batch(spec, params, np.asarray(input, dtype=np.float64)[None], block_index)[0]


def _distances(reference, queries):
    diff = queries[:, None, :] - reference[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _mean_k_smallest(d, k):
    part = np.partition(d, k - 1, axis=-1)[..., :k]
    return np.sort(part, axis=-1).sum(axis=-1) / k


@dataclass(frozen=True)
class NoveltyModel:
    reference: np.ndarray
    threshold: float
    k: int = DEFAULT_K
    block_index: int = 0

    def score_batch(self, features):
        f = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if f.shape[1] != self.reference.shape[1]:
            raise ShapeError(f"feature length {f.shape[1]} != reference length {self.reference.shape[1]}")
        return _mean_k_smallest(_distances(self.reference, f), self.k)

    def score(self, feature):
        return float(self.score_batch(feature)[0])

    def is_novel(self, feature):
        return self.score(feature) > self.threshold

    def to_dict(self):
        return {
            "k": int(self.k),
            "threshold": float(self.threshold),
            "block_index": int(self.block_index),
            "reference": self.reference.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["reference"], dtype=np.float64), float(d["threshold"]),
                   int(d["k"]), int(d.get("block_index", 0)))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def leave_one_out_scores(reference, k):
    ref = np.asarray(reference, dtype=np.float64)
    d = _distances(ref, ref)
    np.fill_diagonal(d, np.inf)
    return _mean_k_smallest(d, k)


def calibrate(features, k=DEFAULT_K, quantile=DEFAULT_QUANTILE, block_index=0):
    """Build a :class:`NoveltyModel` from reference features of normal inputs."""
    ref = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if k < 1:
        raise CalibrationError("k must be >= 1")
    if ref.shape[0] < k + 1:
        raise CalibrationError(f"need at least k+1 = {k + 1} reference points, got {ref.shape[0]}")
    if not 0.0 < quantile <= 1.0:
        raise CalibrationError("quantile must lie in (0, 1]")
    if not np.all(np.isfinite(ref)):
        raise CalibrationError("reference features must be finite")
    loo = leave_one_out_scores(ref, k)
    threshold = float(np.quantile(loo, quantile))
    return NoveltyModel(ref.copy(), threshold, int(k), int(block_index))


def score(model, feature):
    return model.score(feature)


def is_novel(model, feature):
    return model.is_novel(feature)
