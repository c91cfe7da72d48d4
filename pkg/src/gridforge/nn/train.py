"""Parameter initialisation, minibatch SGD, inference and metrics."""

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NumericError, SpecError, TrainingError
from .layers import backward_batch, forward
from .spec import Conv1D, Conv2D, Dense

PARAMS_FORMAT_VERSION = 1

# stream ids for numpy SeedSequence spawn keys
STREAM_INIT = 1
STREAM_SHUFFLE = 2
STREAM_DROPOUT = 3


def stream_rng(seed, stream):
    """Independent generator for subsystem ``stream`` under root ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream),)))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    init: str = "uniform_scaled"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.init != "uniform_scaled":
            raise ValueError(f"unknown init scheme {self.init!r}")

    def to_dict(self):
        return asdict(self)


def param_shapes(spec):
    shapes = []
    for i, layer in enumerate(spec.layers):
        in_shape = spec.input_shape_of(i)
        if isinstance(layer, Conv2D):
            shapes.append({"W": (layer.filters, layer.height, layer.width, in_shape[-1]),
                           "b": (layer.filters,)})
        elif isinstance(layer, Conv1D):
            shapes.append({"W": (layer.filters, layer.width, in_shape[-1]), "b": (layer.filters,)})
        elif isinstance(layer, Dense):
            shapes.append({"W": (layer.units, in_shape[0]), "b": (layer.units,)})
        else:
            shapes.append(None)
    return shapes


def init_params(spec, seed=0):
    """Glorot-style uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = stream_rng(seed, STREAM_INIT)
    params = []
    for shp in param_shapes(spec):
        if shp is None:
            params.append(None)
            continue
        w = shp["W"]
        if len(w) == 2:
            fan_out, fan_in = w
        else:
            receptive = int(np.prod(w[1:-1]))
            fan_in, fan_out = receptive * w[-1], receptive * w[0]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.append({"W": rng.uniform(-bound, bound, size=w), "b": np.zeros(shp["b"])})
    return params


def zeros_like_params(params):
    return [None if p is None else {k: np.zeros_like(v) for k, v in p.items()} for p in params]


def _check_params(spec, params):
    if len(params) != len(spec.layers):
        raise SpecError("params do not match the network's layer count")
    for i, (p, shp) in enumerate(zip(params, param_shapes(spec))):
        if (p is None) != (shp is None):
            raise SpecError(f"layer {i}: parameter presence mismatch")
        if p is not None:
            for k in ("W", "b"):
                if tuple(np.shape(p[k])) != tuple(shp[k]):
                    raise SpecError(f"layer {i}: {k} has shape {np.shape(p[k])}, expected {shp[k]}")


def encode_targets(spec, targets):
    """Targets as a 2D float array; class labels become one-hot rows for cross entropy."""
    t = np.asarray(targets)
    n_out = spec.output_shape[0]
    if spec.loss == "cross_entropy" and t.ndim == 1:
        return np.eye(n_out)[t.astype(np.int64)]
    return t.reshape(len(t), -1).astype(np.float64)


def stack_dataset(dataset):
    xs, ys = zip(*dataset)
    return np.stack([np.asarray(x, dtype=np.float64) for x in xs]), np.asarray(ys)


def sgd_step(params, grads, lr):
    return [None if p is None else {k: p[k] - lr * grads[i][k] for k in p}
            for i, p in enumerate(params)]


def train(spec, dataset, cfg, params=None, log=None):
    """Minibatch SGD on ``dataset`` (list of ``(input, target)`` or an ``(X, y)`` pair).

    Returns ``(params, history)`` with ``history`` the mean per-sample
    training loss of each epoch.  Each epoch reshuffles with a generator
    seeded from ``cfg.seed``; the update uses the mean batch gradient.
    """
    if isinstance(dataset, tuple) and len(dataset) == 2 and isinstance(dataset[0], np.ndarray):
        X, y = dataset
    else:
        if len(dataset) == 0:
            raise TrainingError("empty dataset")
        X, y = stack_dataset(dataset)
    if len(X) == 0:
        raise TrainingError("empty dataset")
    if tuple(X.shape[1:]) != spec.input_shape:
        raise SpecError(f"inputs have shape {list(X.shape[1:])}, network expects {list(spec.input_shape)}")
    Y = encode_targets(spec, y)
    params = init_params(spec, cfg.seed) if params is None else params
    _check_params(spec, params)
    shuffle_rng = stream_rng(cfg.seed, STREAM_SHUFFLE)
    drop_rng = stream_rng(cfg.seed, STREAM_DROPOUT)
    n = len(X)
    history = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                # overflow is caught below as divergence, so keep numpy quiet
                with np.errstate(over="ignore", invalid="ignore"):
                    losses, grads = backward_batch(spec, params, X[idx], Y[idx], training=True, rng=drop_rng)
            except NumericError as exc:
                raise TrainingError(f"diverged at epoch {epoch}, batch {b}: {exc}", epoch, b) from exc
            total += float(losses.sum())
            params = sgd_step(params, grads, cfg.learning_rate / len(idx))
            if not all(np.all(np.isfinite(p[k])) for p in params if p is not None for k in p):
                raise TrainingError(f"diverged at epoch {epoch}, batch {b}", epoch, b)
        history.append(total / n)
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss {history[-1]:.6g}")
    return params, history


def predict_batch(spec, params, X, batch_size=256):
    X = np.asarray(X, dtype=np.float64)
    outs = [forward(spec, params, X[s:s + batch_size]) for s in range(0, len(X), batch_size)]
    return np.concatenate(outs, axis=0)


def predict(spec, params, input):  # noqa: A002
    """Inference-mode forward pass of a single sample."""
    from ..tensor import Tensor
    return Tensor(forward(spec, params, np.asarray(input, dtype=np.float64)[None])[0])


def confusion_matrix(true, pred, n_classes):
    """Counts with rows = predicted class and columns = true class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(pred, dtype=np.int64), np.asarray(true, dtype=np.int64)), 1)
    return cm


def evaluate(spec, params, dataset):
    """Metrics on a labelled set: accuracy + confusion for classifiers, rmse otherwise."""
    if isinstance(dataset, tuple) and len(dataset) == 2 and isinstance(dataset[0], np.ndarray):
        X, y = dataset
    else:
        X, y = stack_dataset(dataset)
    out = predict_batch(spec, params, X)
    if spec.loss == "cross_entropy":
        n_classes = spec.output_shape[0]
        y = np.asarray(y)
        true = y.argmax(axis=1) if y.ndim == 2 else y.astype(np.int64)
        pred = out.argmax(axis=1)
        cm = confusion_matrix(true, pred, n_classes)
        support = cm.sum(axis=0)
        per_class = np.where(support > 0, np.diag(cm) / np.maximum(support, 1), np.nan)
        return {
            "accuracy": float(np.mean(pred == true)),
            "confusion": cm.tolist(),
            "per_class_accuracy": [None if np.isnan(v) else float(v) for v in per_class],
            "n": int(len(true)),
        }
    Y = encode_targets(spec, y)
    err = out.reshape(len(out), -1) - Y
    return {"rmse": float(np.sqrt(np.mean(err ** 2))), "n": int(len(Y))}


# -- serialisation -----------------------------------------------------------

def _fmt(a):
    a = np.asarray(a)
    if a.ndim == 0:
        return format(float(a), ".17g")
    return "[" + ",".join(_fmt(v) for v in a) + "]"


def params_to_json(params, seed=None):
    """JSON text with every value at 17 significant digits (exact round trip)."""
    layers = []
    for p in params:
        if p is None:
            layers.append("null")
        else:
            layers.append('{"W":%s,"b":%s}' % (_fmt(p["W"]), _fmt(p["b"])))
    seed_txt = "null" if seed is None else json.dumps(int(seed))
    return ('{"format_version":%d,"seed":%s,"layers":[\n%s\n]}\n'
            % (PARAMS_FORMAT_VERSION, seed_txt, ",\n".join(layers)))


def params_from_json(text):
    doc = json.loads(text)
    if doc.get("format_version") != PARAMS_FORMAT_VERSION:
        raise SpecError(f"unsupported params format {doc.get('format_version')!r}")
    return [None if p is None else {k: np.asarray(v, dtype=np.float64) for k, v in p.items()}
            for p in doc["layers"]]
