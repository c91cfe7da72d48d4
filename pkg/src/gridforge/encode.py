"""Turn raw manufacturing data into tensors, and perturb images.

Series are plain 1D float arrays; a :class:`MultiSeries` holds ``m`` equal
length series as the rows of an ``(m, T)`` array.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataError, NumericError, ParamError, RangeError, ShapeError, SizeError
from .tensor import Tensor


@dataclass(frozen=True)
class GafPair:
    gasf: Tensor
    gadf: Tensor

    def stacked(self):
        """``n x n x 2`` tensor with GASF in channel 0 and GADF in channel 1."""
        return stack_channels([self.gasf, self.gadf])


@dataclass
class MultiSeries:
    values: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if not self.names:
            self.names = [f"x{i + 1}" for i in range(self.values.shape[0])]
        if len(self.names) != self.values.shape[0]:
            raise ShapeError("one name per series required")

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def length(self):
        return self.values.shape[1]


def _series(s):
    s = np.asarray(s, dtype=np.float64).ravel()
    if s.size < 1:
        raise DataError("empty series")
    if not np.all(np.isfinite(s)):
        raise DataError("series contains non-finite values")
    return s


# -- 1D series ---------------------------------------------------------------

def rescale_unit(s):
    """Min-max rescale onto [-1, 1]; a constant series maps to all zeros."""
    s = _series(s)
    lo, hi = s.min(), s.max()
    span = hi - lo
    if span == 0:
        return np.zeros_like(s)
    return (2.0 * (s - lo) - span) / span


def gaf_encode(s, rescale=None):
    """Gramian angular summation / difference fields of a series.

    With ``rescale=None`` the series is rescaled only when it leaves
    [-1, 1]; pass ``True`` to always rescale (what the pipelines do).
    """
    s = _series(s)
    if rescale or (rescale is None and np.any(np.abs(s) > 1.0)):
        s = rescale_unit(s)
    if np.any(np.abs(s) > 1.0):
        raise NumericError("series values outside [-1, 1]")
    phi = np.arccos(s)
    gasf = np.cos(phi[:, None] + phi[None, :])
    gadf = np.sin(phi[:, None] - phi[None, :])
    return GafPair(Tensor(gasf), Tensor(gadf))


def resample(s, target_len):
    """Piecewise aggregate approximation onto ``target_len`` segment means.

    Segment ``k`` covers indices ``floor(k*n/L) .. floor((k+1)*n/L) - 1``.
    """
    s = _series(s)
    n = s.size
    if target_len < 1 or target_len > n:
        raise SizeError(f"target length {target_len} not in [1, {n}]")
    edges = (np.arange(target_len + 1) * n) // target_len
    sums = np.add.reduceat(s, edges[:-1])
    return sums / np.diff(edges)


# -- scatter fields ----------------------------------------------------------

def bin_edges(lo, hi, bins):
    return lo + (hi - lo) * np.arange(bins + 1) / bins


def scatter_range(points):
    """Auto range (fsc_lo, fsc_hi, ssc_lo, ssc_hi) from the data extremes."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if p.shape[0] == 0:
        raise RangeError("cannot auto-range an empty point cloud")
    lo = p.min(axis=0)
    hi = p.max(axis=0)
    # degenerate axis: widen so every point lands in the first bin
    hi = np.where(hi > lo, hi, lo + 1.0)
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def _bin_index(v, edges):
    idx = np.searchsorted(edges, v, side="right") - 1
    return np.where(v == edges[-1], len(edges) - 2, idx)


def bin_scatter(points, bins=50, range=None, log_counts=False):  # noqa: A002
    """2D histogram of (fsc, ssc) events as a ``bins x bins x 1`` tensor.

    Rows index FSC bins, columns SSC bins.  Points on the upper edge go to
    the last bin, points outside the range are dropped.  ``log_counts``
    stores ``ln(1 + count)``.
    """
    if bins < 1:
        raise ParamError("bins must be >= 1")
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(p)):
        raise DataError("point cloud contains non-finite coordinates")
    if range is None:
        range = scatter_range(p)
    f_lo, f_hi, s_lo, s_hi = (float(r) for r in range)
    if not (f_hi > f_lo and s_hi > s_lo):
        raise RangeError(f"empty range {range}")
    keep = (p[:, 0] >= f_lo) & (p[:, 0] <= f_hi) & (p[:, 1] >= s_lo) & (p[:, 1] <= s_hi)
    p = p[keep]
    i = _bin_index(p[:, 0], bin_edges(f_lo, f_hi, bins))
    j = _bin_index(p[:, 1], bin_edges(s_lo, s_hi, bins))
    counts = np.bincount(i * bins + j, minlength=bins * bins).astype(np.float64)
    if log_counts:
        counts = np.log1p(counts)
    return Tensor(counts.reshape(bins, bins, 1))


def stack_channels(channels):
    """Stack single-channel grids along the channel axis, order preserved."""
    if not channels:
        raise ShapeError("nothing to stack")
    arrays = []
    for ch in channels:
        a = np.asarray(ch, dtype=np.float64)
        if a.ndim == 3 and a.shape[2] == 1:
            a = a[:, :, 0]
        if a.ndim != 2:
            raise ShapeError(f"channel must be rows x cols (x 1), got {a.shape}")
        arrays.append(a)
    if any(a.shape != arrays[0].shape for a in arrays):
        raise ShapeError(f"mismatched channel shapes {[a.shape for a in arrays]}")
    return Tensor(np.stack(arrays, axis=-1))


# -- multivariate series -----------------------------------------------------

def zscore_stats(ms):
    """Per-row population mean and std of a MultiSeries (or ``(m, T)`` array)."""
    v = ms.values if isinstance(ms, MultiSeries) else np.asarray(ms, dtype=np.float64)
    return v.mean(axis=-1), v.std(axis=-1)


def series_matrix(ms, normalize=False, mean=None, std=None):
    """``m x T x 1`` tensor with one series per row.

    ``normalize`` z-scores each row with its own statistics unless ``mean``
    and ``std`` (one entry per row, e.g. from a training set) are given.
    Zero-variance rows become all zeros.
    """
    v = ms.values if isinstance(ms, MultiSeries) else np.atleast_2d(np.asarray(ms, dtype=np.float64))
    if normalize:
        if mean is None or std is None:
            mean, std = zscore_stats(v)
        mean = np.asarray(mean, dtype=np.float64).reshape(-1, 1)
        std = np.asarray(std, dtype=np.float64).reshape(-1, 1)
        safe = np.where(std > 0, std, 1.0)
        v = np.where(std > 0, (v - mean) / safe, 0.0)
    return Tensor(v[:, :, None])


# -- colour ------------------------------------------------------------------

# sRGB primaries -> CIE XYZ, D65.  The reference white is taken as the row
# sums so that neutral greys land exactly on a = b = 0.
SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
D65_WHITE = SRGB_TO_XYZ.sum(axis=1)
_DELTA = 6.0 / 29.0


def srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _lab_f(t):
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)


def rgb_to_lab(img):
    """sRGB image in [0, 1] (rows x cols x 3) to CIELAB under D65."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeError(f"expected rows x cols x 3, got {a.shape}")
    if np.any(a < 0) or np.any(a > 1) or not np.all(np.isfinite(a)):
        raise RangeError("RGB values must lie in [0, 1]")
    xyz = srgb_to_linear(a) @ SRGB_TO_XYZ.T
    f = _lab_f(xyz / D65_WHITE)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return Tensor(lab)


# -- perturbations -----------------------------------------------------------

PERTURBATIONS = ("fog", "spatter", "cutout", "shift", "rotate90", "brightness")


def _fog(a, p, rng):
    intensity = float(p.get("intensity", 0.5))
    if not 0.0 <= intensity <= 1.0:
        raise ParamError("fog intensity must lie in [0, 1]")
    sigma = float(p.get("sigma", max(a.shape[0], a.shape[1]) / 8.0))
    if sigma <= 0:
        raise ParamError("fog sigma must be positive")
    noise = ndimage.gaussian_filter(rng.standard_normal(a.shape[:2]), sigma, mode="wrap")
    lo, hi = noise.min(), noise.max()
    field = (noise - lo) / (hi - lo) if hi > lo else np.ones_like(noise)
    alpha = intensity * (0.5 + 0.5 * field)[:, :, None]
    return a * (1.0 - alpha) + alpha


def _spatter(a, p, rng):
    count = int(p.get("count", 8))
    radius = float(p.get("radius", 3.0))
    value = float(p.get("value", 0.4))
    if count < 0 or radius < 0:
        raise ParamError("spatter count and radius must be non-negative")
    rows, cols = a.shape[:2]
    out = a.copy()
    yy, xx = np.mgrid[0:rows, 0:cols]
    for cy, cx in zip(rng.uniform(0, rows, count), rng.uniform(0, cols, count)):
        out[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2] = value
    return out


def _cutout(a, p, rng):
    rows, cols = a.shape[:2]
    h = int(p.get("height", p.get("size", rows // 4)))
    w = int(p.get("width", p.get("size", cols // 4)))
    if not (1 <= h <= rows and 1 <= w <= cols):
        raise ParamError(f"cutout {h}x{w} does not fit a {rows}x{cols} image")
    top = int(rng.integers(0, rows - h + 1))
    left = int(rng.integers(0, cols - w + 1))
    out = a.copy()
    out[top:top + h, left:left + w] = float(p.get("fill", 0.0))
    return out


def _shift(a, p, rng):
    dy, dx = int(p.get("dy", 0)), int(p.get("dx", 0))
    rows, cols = a.shape[:2]
    out = np.zeros_like(a)
    if abs(dy) >= rows or abs(dx) >= cols:
        return out
    src_r = slice(max(0, -dy), rows - max(0, dy))
    dst_r = slice(max(0, dy), rows - max(0, -dy))
    src_c = slice(max(0, -dx), cols - max(0, dx))
    dst_c = slice(max(0, dx), cols - max(0, -dx))
    out[dst_r, dst_c] = a[src_r, src_c]
    return out


def _rotate90(a, p, rng):
    return np.rot90(a, k=int(p.get("k", 1)), axes=(0, 1)).copy()


def _brightness(a, p, rng):
    factor = float(p.get("factor", 1.0))
    if factor < 0:
        raise ParamError("brightness factor must be non-negative")
    return np.clip(a * factor, 0.0, 1.0)


_PERTURB = {
    "fog": _fog,
    "spatter": _spatter,
    "cutout": _cutout,
    "shift": _shift,
    "rotate90": _rotate90,
    "brightness": _brightness,
}


def perturb(img, kind, params=None, seed=0):
    """Apply one named perturbation; the result depends only on the inputs.

    Parameters per kind (defaults in brackets):

    * fog: ``intensity`` [0.5] in [0, 1], ``sigma`` [size/8] smoothing px
    * spatter: ``count`` [8] discs, ``radius`` [3] px, ``value`` [0.4]
    * cutout: ``height``/``width`` (or ``size``) [quarter frame], ``fill`` [0]
    * shift: ``dy``, ``dx`` integer pixels, zero fill
    * rotate90: ``k`` quarter turns
    * brightness: ``factor`` [1], result clamped to [0, 1]
    """
    if kind not in _PERTURB:
        raise ParamError(f"unknown perturbation {kind!r}")
    a = np.asarray(img, dtype=np.float64)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ShapeError(f"expected rows x cols x channels, got {a.shape}")
    out = _PERTURB[kind](a, dict(params or {}), np.random.default_rng(seed))
    return Tensor(out[:, :, 0] if squeeze else out)
