"""Declarative CNN architectures and their JSON form."""

from dataclasses import dataclass, field, fields

from ..errors import SpecError

ACTIVATIONS = ("sigmoid", "tanh", "relu")
LOSSES = ("sse", "cross_entropy")
PADS = ("valid", "same")


@dataclass(frozen=True)
class Conv1D:
    filters: int
    width: int
    pad: str = "valid"
    type = "conv1d"


@dataclass(frozen=True)
class Conv2D:
    filters: int
    height: int
    width: int
    pad: str = "valid"
    type = "conv2d"


@dataclass(frozen=True)
class Activation:
    kind: str
    type = "activation"


@dataclass(frozen=True)
class MaxPool:
    window: tuple
    type = "maxpool"


@dataclass(frozen=True)
class AvgPool:
    window: tuple
    type = "avgpool"


@dataclass(frozen=True)
class Flatten:
    type = "flatten"


@dataclass(frozen=True)
class Dense:
    units: int
    type = "dense"


@dataclass(frozen=True)
class Dropout:
    rate: float
    type = "dropout"


@dataclass(frozen=True)
class Softmax:
    type = "softmax"


LAYER_TYPES = {cls.type: cls for cls in
               (Conv1D, Conv2D, Activation, MaxPool, AvgPool, Flatten, Dense, Dropout, Softmax)}
CONV_TYPES = (Conv1D, Conv2D)
POOL_TYPES = (MaxPool, AvgPool)


def _window(w, rank):
    w = (w,) if isinstance(w, int) else tuple(int(v) for v in w)
    if rank == 3 and len(w) == 1:
        w = (w[0], w[0])
    return w


def _check_layer(layer, i):
    def fail(msg):
        raise SpecError(f"layer {i} ({layer.type}): {msg}")

    if isinstance(layer, CONV_TYPES):
        ext = [layer.filters, layer.width] + ([layer.height] if isinstance(layer, Conv2D) else [])
        if any(int(v) < 1 for v in ext):
            fail("counts must be >= 1")
        if layer.pad not in PADS:
            fail(f"pad must be one of {PADS}")
    elif isinstance(layer, Activation):
        if layer.kind not in ACTIVATIONS:
            fail(f"unknown activation {layer.kind!r}")
    elif isinstance(layer, POOL_TYPES):
        w = _window(layer.window, 3)
        if any(v < 1 for v in w):
            fail("window must be >= 1")
    elif isinstance(layer, Dense):
        if layer.units < 1:
            fail("units must be >= 1")
    elif isinstance(layer, Dropout):
        if not 0.0 <= layer.rate < 1.0:
            fail("rate must lie in [0, 1)")


def layer_output_shape(layer, shape, i=0):
    """Shape after ``layer`` given the per-sample input ``shape``."""
    shape = tuple(shape)

    def fail(msg):
        raise SpecError(f"layer {i} ({layer.type}) on input {list(shape)}: {msg}")

    if isinstance(layer, Conv2D):
        if len(shape) != 3:
            fail("conv2d needs a rows x cols x channels input")
        h, w, _ = shape
        if layer.pad == "same":
            return (h, w, layer.filters)
        oh, ow = h - layer.height + 1, w - layer.width + 1
        if oh < 1 or ow < 1:
            fail("kernel larger than input")
        return (oh, ow, layer.filters)
    if isinstance(layer, Conv1D):
        if len(shape) != 2:
            fail("conv1d needs a length x channels input")
        n, _ = shape
        if layer.pad == "same":
            return (n, layer.filters)
        if n - layer.width + 1 < 1:
            fail("kernel larger than input")
        return (n - layer.width + 1, layer.filters)
    if isinstance(layer, POOL_TYPES):
        if len(shape) not in (2, 3):
            fail("pooling needs a grid or series input")
        w = _window(layer.window, len(shape))
        if len(w) != len(shape) - 1:
            fail(f"window {w} does not match input rank")
        out = tuple(s // p for s, p in zip(shape[:-1], w))
        if any(o < 1 for o in out):
            fail("window larger than input")
        return out + (shape[-1],)
    if isinstance(layer, Flatten):
        n = 1
        for s in shape:
            n *= s
        return (n,)
    if isinstance(layer, Dense):
        if len(shape) != 1:
            fail("dense needs a vector input (add a flatten layer)")
        return (layer.units,)
    if isinstance(layer, Softmax):
        if len(shape) != 1:
            fail("softmax needs a vector input")
        return shape
    return shape  # activation, dropout


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    input_shape: tuple
    loss: str = "sse"
    _shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "_shapes", tuple(self._propagate()))

    def _propagate(self):
        if not self.input_shape or any(s < 1 for s in self.input_shape):
            raise SpecError(f"bad input shape {list(self.input_shape)}")
        if self.loss not in LOSSES:
            raise SpecError(f"unknown loss {self.loss!r}")
        if not self.layers:
            raise SpecError("network has no layers")
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            _check_layer(layer, i)
            if isinstance(layer, Softmax) and i != len(self.layers) - 1:
                raise SpecError(f"layer {i}: softmax must be the last layer")
            shape = layer_output_shape(layer, shape, i)
            out.append(shape)
        last = self.layers[-1]
        if self.loss == "cross_entropy" and not isinstance(last, Softmax):
            raise SpecError("cross_entropy loss needs a terminal softmax layer")
        if self.loss == "sse" and (isinstance(last, Softmax) or len(shape) != 1):
            raise SpecError("sse loss needs a linear vector output")
        return out

    @property
    def shapes(self):
        """Per-layer output shapes (per sample)."""
        return [list(s) for s in self._shapes]

    @property
    def output_shape(self):
        return list(self._shapes[-1])

    def input_shape_of(self, i):
        return self.input_shape if i == 0 else self._shapes[i - 1]

    def to_dict(self):
        return {
            "input_shape": list(self.input_shape),
            "loss": self.loss,
            "layers": [layer_to_dict(l) for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            layers = [layer_from_dict(l) for l in d["layers"]]
            return cls(layers, d["input_shape"], d.get("loss", "sse"))
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed network spec: {exc}") from None


def layer_to_dict(layer):
    d = {"type": layer.type}
    for f in fields(layer):
        v = getattr(layer, f.name)
        d[f.name] = list(v) if isinstance(v, tuple) else v
    return d


def layer_from_dict(d):
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in LAYER_TYPES:
        raise SpecError(f"unknown layer type {kind!r}")
    cls = LAYER_TYPES[kind]
    if "window" in d:
        w = d["window"]
        d["window"] = (int(w),) if isinstance(w, int) else tuple(int(v) for v in w)
    try:
        return cls(**d)
    except TypeError as exc:
        raise SpecError(f"{kind}: {exc}") from None


def pool_window(layer, rank):
    """Pool window as ``(ph, pw)``; series pooling uses ``ph == 1``."""
    w = _window(layer.window, rank)
    return (1, w[0]) if rank == 2 else w


def conv_blocks(spec):
    """Layer index ranges ``(start, stop)`` of each convolution block.

    A block starts at a convolution and runs through the activation,
    pooling and dropout layers that follow it.
    """
    blocks = []
    start = None
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, CONV_TYPES):
            if start is not None:
                blocks.append((start, i))
            start = i
        elif start is not None and not isinstance(layer, (Activation, Dropout) + POOL_TYPES):
            blocks.append((start, i))
            start = None
    if start is not None:
        blocks.append((start, len(spec.layers)))
    return blocks


def endonet(input_shape=(50, 50, 3), filters=64, hidden=32):
    """Conv(64)-MaxPool-Flatten-Dense(32)-Dense(32)-Dense(1) regressor."""
    return NetworkSpec([
        Conv2D(filters, 3, 3),
        Activation("relu"),
        MaxPool((2, 2)),
        Flatten(),
        Dense(hidden),
        Activation("relu"),
        Dense(hidden),
        Activation("relu"),
        Dense(1),
    ], input_shape, "sse")


def plasticnet_1d(length=4150, classes=10, filters=64, hidden=64, dropout=0.2, n_conv=4):
    layers = []
    for _ in range(n_conv):
        layers += [Conv1D(filters, 3), Activation("relu"), MaxPool((2,))]
    layers.append(Flatten())
    for _ in range(3):
        layers += [Dense(hidden), Activation("relu"), Dropout(dropout)]
    layers += [Dense(classes), Softmax()]
    return NetworkSpec(layers, (length, 1), "cross_entropy")


def plasticnet_2d(size=50, classes=10, filters=64, hidden=64, dropout=0.2):
    """Four 3x3 convolutions with 2x2 max pooling after the second and fourth."""
    layers = []
    for _ in range(2):
        layers += [Conv2D(filters, 3, 3), Activation("relu"),
                   Conv2D(filters, 3, 3), Activation("relu"), MaxPool((2, 2))]
    layers.append(Flatten())
    for _ in range(3):
        layers += [Dense(hidden), Activation("relu"), Dropout(dropout)]
    layers += [Dense(classes), Softmax()]
    return NetworkSpec(layers, (size, size, 2), "cross_entropy")
