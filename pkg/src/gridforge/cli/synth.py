"""Synthetic stand-ins for the three case-study datasets.

Every generator is deterministic in its ``seed``.  Class definitions (peak
tables, fault signatures) come from the recipe's own ``recipe_seed`` so a
seed grid varies the samples but not the task.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..encode import MultiSeries, bin_scatter, stack_channels
from ..errors import ParamError

# spawn-key streams under the data seed
STREAM_SAMPLES = 20
STREAM_RECIPE = 21


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


class _Recipe:
    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParamError(f"unknown recipe fields {sorted(unknown)}")
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


# -- EndoNet -----------------------------------------------------------------

@dataclass(frozen=True)
class EndonetRecipe(_Recipe):
    """Droplet scatter populations.

    A sample at log-concentration ``c`` draws events from the bipolar
    cluster with probability ``1 - w(c)`` and from the radial cluster with
    ``w(c)``, where ``w`` rises linearly from 0 at ``log_range[0]`` to 1 at
    ``log_range[1]``.  Each sample belongs to a run with its own offset and
    gain; the negative (pure bipolar) and positive (pure radial) reference
    populations are measured under that same run.
    """
    n_events: int = 2000
    bipolar_center: tuple = (0.4, 0.4)
    radial_center: tuple = (0.6, 0.6)
    spread: float = 0.05
    run_shift: float = 0.1
    run_gain: float = 0.1
    log_range: tuple = (0.0, 8.0)
    bins: int = 50
    log_counts: bool = True


def _mixture_weight(recipe, c):
    lo, hi = recipe.log_range
    return float(np.clip((c - lo) / (hi - lo), 0.0, 1.0))


def endonet_cloud(recipe, c, offset, gain, rng):
    """Event cloud (n_events x 2) for log-concentration ``c`` under one run."""
    w = _mixture_weight(recipe, c)
    radial = rng.random(recipe.n_events) < w
    centers = np.where(radial[:, None], np.asarray(recipe.radial_center), np.asarray(recipe.bipolar_center))
    pts = centers + recipe.spread * rng.standard_normal((recipe.n_events, 2))
    mid = 0.5 * (np.asarray(recipe.bipolar_center) + np.asarray(recipe.radial_center))
    return mid + gain * (pts - mid) + offset


def gen_endonet_data(recipe, n_samples, seed, channels=3):
    """``(X, y)`` with ``X`` of shape ``(n, bins, bins, channels)`` and ``y`` the log-concentration.

    Channel order is (negative reference, target, positive reference);
    ``channels=1`` keeps only the target field.
    """
    if n_samples < 1:
        raise ParamError("n_samples must be >= 1")
    if channels not in (1, 3):
        raise ParamError("channels must be 1 or 3")
    lo, hi = recipe.log_range
    rng = _rng(seed, STREAM_SAMPLES)
    X = np.empty((n_samples, recipe.bins, recipe.bins, channels))
    y = np.empty(n_samples)
    for i in range(n_samples):
        c = float(rng.uniform(lo, hi))
        img = endonet_sample(recipe, c, rng)
        X[i] = img if channels == 3 else img[:, :, 1:2]
        y[i] = c
    return X, y


def endonet_sample(recipe, c, rng):
    """One ``bins x bins x 3`` input at log-concentration ``c`` under a freshly drawn run."""
    lo, hi = recipe.log_range
    offset = recipe.run_shift * rng.standard_normal(2)
    gain = float(np.exp(recipe.run_gain * rng.standard_normal()))
    box = (0.0, 1.0, 0.0, 1.0)
    grids = [bin_scatter(endonet_cloud(recipe, level, offset, gain, rng), recipe.bins, box, recipe.log_counts)
             for level in (lo, c, hi)]
    return np.asarray(stack_channels(grids))


# -- PlasticNet --------------------------------------------------------------

@dataclass(frozen=True)
class PlasticRecipe(_Recipe):
    """Absorbance-like spectra built from a shared pool of Gaussian peaks.

    Each class picks ``peaks_per_class`` peaks from the pool with its own
    amplitudes, so classes overlap through shared bands.  Per sample the
    whole spectrum shifts by ``shift_std`` samples, amplitudes scale by
    ``1 + amp_jitter * N(0,1)``, a random linear baseline is added and white
    noise of std ``noise`` is laid on top.
    """
    length: int = 4150
    pool_size: int = 14
    peaks_per_class: int = 4
    width_range: tuple = (15.0, 60.0)
    amp_range: tuple = (0.3, 1.0)
    margin: int = 150
    shift_std: float = 60.0
    amp_jitter: float = 0.4
    baseline_std: float = 0.1
    noise: float = 0.5
    recipe_seed: int = 0


def plastic_classes(recipe, classes):
    """Per-class peak table: list of ``(centres, widths, amplitudes)``."""
    rng = _rng(recipe.recipe_seed, STREAM_RECIPE, 1)
    centres = np.sort(rng.uniform(recipe.margin, recipe.length - recipe.margin, recipe.pool_size))
    widths = rng.uniform(*recipe.width_range, recipe.pool_size)
    table = []
    seen = set()
    for _ in range(classes):
        while True:
            pick = tuple(sorted(rng.choice(recipe.pool_size, recipe.peaks_per_class, replace=False)))
            if pick not in seen:
                seen.add(pick)
                break
        idx = np.asarray(pick)
        table.append((centres[idx], widths[idx], rng.uniform(*recipe.amp_range, len(idx))))
    return table


def gen_plastic_spectra(recipe, classes=10, n_per_class=40, seed=0):
    """``(X, labels)`` with ``X`` of shape ``(classes * n_per_class, length)``; class-major order."""
    if classes < 2:
        raise ParamError("need at least two classes")
    if n_per_class < 1:
        raise ParamError("n_per_class must be >= 1")
    table = plastic_classes(recipe, classes)
    rng = _rng(seed, STREAM_SAMPLES)
    t = np.arange(recipe.length, dtype=np.float64)
    X = np.empty((classes * n_per_class, recipe.length))
    labels = np.repeat(np.arange(classes), n_per_class)
    for i, label in enumerate(labels):
        centres, widths, amps = table[label]
        shift = recipe.shift_std * rng.standard_normal()
        scale = 1.0 + recipe.amp_jitter * rng.standard_normal(len(amps))
        z = (t[:, None] - (centres + shift)) / widths
        spec = np.exp(-0.5 * z * z) @ (amps * scale)
        a, b = recipe.baseline_std * rng.standard_normal(2)
        X[i] = spec + a + b * (t / recipe.length - 0.5) + recipe.noise * rng.standard_normal(recipe.length)
    return X, labels


# -- Tennessee-Eastman-like process ------------------------------------------

FAULT_KINDS = ("step", "variance", "drift")


@dataclass(frozen=True)
class TeRecipe(_Recipe):
    """Stationary AR(1) channels with per-fault signatures.

    Fault 0 is the nominal process.  Fault ``k >= 1`` acts on
    ``channels_per_fault`` channels from onset (uniform in ``onset_range``)
    with kind ``FAULT_KINDS[(k - 1) % 3]``: a mean step of ``magnitude``
    stationary standard deviations, a variance inflation by ``1 +
    magnitude``, or a linear drift reaching ``magnitude`` deviations at the
    end of the window.  Each pair in ``confusable`` shares channels and kind
    and differs in magnitude by ``confusable_delta``.
    """
    m: int = 52
    T: int = 60
    phi: float = 0.7
    noise: float = 1.0
    channels_per_fault: int = 4
    magnitude: float = 2.0
    onset_range: tuple = (5, 20)
    confusable: tuple = ((3, 9),)
    confusable_delta: float = 0.1
    recipe_seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "confusable" in d:
            d["confusable"] = tuple(tuple(int(v) for v in p) for p in d["confusable"])
        return super().from_dict(d)

    def to_dict(self):
        d = asdict(self)
        d["confusable"] = [list(p) for p in self.confusable]
        d["onset_range"] = list(self.onset_range)
        return d


def te_faults(recipe, faults):
    """Signature table: ``{k: (kind, channel indices, magnitude)}`` for ``k >= 1``."""
    rng = _rng(recipe.recipe_seed, STREAM_RECIPE, 2)
    table = {}
    for k in range(1, faults):
        chans = np.sort(rng.choice(recipe.m, recipe.channels_per_fault, replace=False))
        table[k] = (FAULT_KINDS[(k - 1) % len(FAULT_KINDS)], chans, recipe.magnitude)
    for a, b in recipe.confusable:
        if not (1 <= a < faults and 1 <= b < faults):
            raise ParamError(f"confusable pair {(a, b)} outside faults 1..{faults - 1}")
        kind, chans, mag = table[a]
        table[b] = (kind, chans, mag + recipe.confusable_delta)
    return table


def te_nominal(recipe, rng):
    """One nominal ``m x T`` window (stationary start)."""
    sd = recipe.noise / np.sqrt(1.0 - recipe.phi ** 2)
    x = np.empty((recipe.m, recipe.T))
    x[:, 0] = sd * rng.standard_normal(recipe.m)
    eps = recipe.noise * rng.standard_normal((recipe.m, recipe.T))
    for t in range(1, recipe.T):
        x[:, t] = recipe.phi * x[:, t - 1] + eps[:, t]
    return x


def apply_fault(recipe, x, signature, onset):
    kind, chans, mag = signature
    sd = recipe.noise / np.sqrt(1.0 - recipe.phi ** 2)
    out = x.copy()
    n = recipe.T - onset
    if kind == "step":
        out[chans, onset:] += mag * sd
    elif kind == "variance":
        out[chans, onset:] *= 1.0 + mag
    else:
        out[chans, onset:] += mag * sd * np.arange(1, n + 1) / n
    return out


def gen_te_like(recipe, faults=20, n_per_class=60, seed=0):
    """``(windows, labels)``: a list of :class:`MultiSeries` (``m x T``) and class ids 0..faults-1."""
    if faults < 2:
        raise ParamError("need at least two classes")
    if n_per_class < 1:
        raise ParamError("n_per_class must be >= 1")
    table = te_faults(recipe, faults)
    rng = _rng(seed, STREAM_SAMPLES)
    names = [f"v{j + 1}" for j in range(recipe.m)]
    labels = np.repeat(np.arange(faults), n_per_class)
    windows = []
    for label in labels:
        x = te_nominal(recipe, rng)
        onset = int(rng.integers(recipe.onset_range[0], recipe.onset_range[1] + 1))
        if label:
            x = apply_fault(recipe, x, table[int(label)], onset)
        windows.append(MultiSeries(x, names))
    return windows, labels


RECIPES = {"endonet": EndonetRecipe, "plastic": PlasticRecipe, "te": TeRecipe}
