"""Experiment runners behind the CLI verbs.

Each runner returns a :class:`RunResult`: a JSON-ready report plus the
artifact files to write, keyed by relative path.  Nothing here touches the
filesystem, which keeps the runners easy to test and the output
byte-for-byte reproducible.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import cartpole as cp
from .. import encode, fileio, nn, novelty
from ..errors import ConfigError
from .synth import (EndonetRecipe, PlasticRecipe, TeRecipe, gen_endonet_data, gen_plastic_spectra,
                    gen_te_like, plastic_classes, te_faults)

log = logging.getLogger("gridforge")

REPORT_VERSION = 1
STREAM_SPLIT = 4


_METRICS = {
    "type": "object",
    "properties": {
        "rmse": {"type": "number", "minimum": 0},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "confusion": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        "per_class_accuracy": {"type": "array", "items": {"type": ["number", "null"]}},
        "n": {"type": "integer", "minimum": 0},
    },
    "required": ["n"],
}

_EPISODE = {
    "type": "object",
    "required": ["seed", "steps", "terminated_at", "max_abs_theta_deg", "rmse_before_deg",
                 "rmse_after_deg", "first_flag", "flag_latency", "flags_before_onset", "flags_total"],
    "properties": {
        "seed": {"type": "integer"},
        "steps": {"type": "integer", "minimum": 1},
        "terminated_at": {"type": ["integer", "null"]},
        "max_abs_theta_deg": {"type": "number", "minimum": 0},
        "first_flag": {"type": ["integer", "null"]},
        "flags_total": {"type": "integer", "minimum": 0},
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gridforge run report",
    "type": "object",
    "required": ["schema_version", "kind", "seed", "config"],
    "properties": {
        "schema_version": {"const": REPORT_VERSION},
        "kind": {"enum": ["endonet", "plasticnet1d", "plasticnet2d", "te_monitor", "cartpole"]},
        "seed": {"type": "integer", "minimum": 0},
        "config": {"type": "object"},
        "data": {"type": "object", "required": ["n", "split_sizes"]},
        "results": {"type": "object", "additionalProperties": {
            "type": "object", "required": ["metrics"],
            "properties": {"metrics": _METRICS, "val_metrics": _METRICS,
                           "loss_history": {"type": "array", "items": {"type": "number"}},
                           "network": {"type": "object"}}}},
        "comparison": {"type": "object", "required": ["rmse_3ch", "rmse_1ch", "three_channel_better"]},
        "table": {"type": "array", "items": {
            "type": "object", "required": ["size", "accuracy_1d", "accuracy_2d"]}},
        "hardest_classes": {"type": "array", "items": {"type": "integer"}},
        "sensor": {"type": "object", "required": ["n_frames", "loss_history", "novelty"]},
        "onset": {"type": "integer", "minimum": 0},
        "scenarios": {"type": "object", "additionalProperties": {
            "type": "object",
            "required": ["episodes", "all_upright", "seeds_without_flags", "median_first_flag"],
            "properties": {"episodes": {"type": "array", "minItems": 1, "items": _EPISODE}}}},
    },
    "if": {"properties": {"kind": {"const": "cartpole"}}},
    "then": {"anyOf": [{"required": ["scenarios", "onset"]}, {"required": ["sensor"]}]},
    "else": {"required": ["data", "results"]},
}


@dataclass
class RunResult:
    report: dict
    files: dict = field(default_factory=dict)


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, NaN/inf to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def split_indices(n, ratios, seed):
    """Seeded shuffle cut into train/validation/test index arrays."""
    order = nn.stream_rng(seed, STREAM_SPLIT).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    if n_train < 1 or n - n_train - n_val < 1:
        raise ConfigError(f"split {list(ratios)} leaves an empty train or test set for n={n}", "/split")
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def _recipe(cfg, cls):
    try:
        return cls.from_dict(cfg.data.get("recipe", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "/data/recipe") from None


def _confusion_csv(cm):
    n = len(cm)
    rows = [[f"pred_{i}"] + list(cm[i]) for i in range(n)]
    return fileio.csv_text(["predicted\\true"] + [f"true_{j}" for j in range(n)], rows)


def _fit(name, spec, train_set, val_set, test_set, tcfg):
    log.info("training %s: %d samples, %d epochs", name, len(train_set[0]), tcfg.epochs)
    params, history = nn.train(spec, train_set, tcfg, log=lambda m: log.debug("%s %s", name, m))
    out = {
        "network": spec.to_dict(),
        "loss_history": history,
        "metrics": nn.evaluate(spec, params, test_set),
    }
    if len(val_set[0]):
        out["val_metrics"] = nn.evaluate(spec, params, val_set)
    return params, out


def _subset(X, y, idx):
    return X[idx], y[idx]


# -- data --------------------------------------------------------------------

def make_dataset(cfg):
    """Inputs, targets and metadata for one experiment config."""
    kind = cfg.kind
    d = cfg.data
    if kind == "endonet":
        recipe = _recipe(cfg, EndonetRecipe)
        X, y = gen_endonet_data(recipe, d["n_samples"], cfg.seed, 3)
        meta = {"recipe": recipe.to_dict(), "channel_order": ["negative", "target", "positive"]}
        return X, y[:, None], meta
    if kind.startswith("plasticnet"):
        recipe = _recipe(cfg, PlasticRecipe)
        X, labels = gen_plastic_spectra(recipe, d["classes"], d["n_per_class"], cfg.seed)
        table = plastic_classes(recipe, d["classes"])
        meta = {"recipe": recipe.to_dict(), "classes": d["classes"],
                "peak_table": [{"centres": c, "widths": w, "amplitudes": a} for c, w, a in table]}
        return X, labels, meta
    if kind == "te_monitor":
        recipe = _recipe(cfg, TeRecipe)
        windows, labels = gen_te_like(recipe, d["faults"], d["n_per_class"], cfg.seed)
        table = te_faults(recipe, d["faults"])
        meta = {"recipe": recipe.to_dict(), "faults": d["faults"],
                "signatures": {str(k): {"kind": s[0], "channels": s[1], "magnitude": s[2]}
                               for k, s in table.items()}}
        return windows, labels, meta
    raise ConfigError(f"no dataset for kind {kind!r}", "/kind")


def gaf_inputs(X, size):
    """Raw spectra to stacked GASF/GADF images of ``size x size x 2``."""
    return np.stack([encode.gaf_encode(encode.resample(x, size), rescale=True).stacked() for x in X])


def te_matrices(windows, train_idx, mode="train"):
    if mode == "row":
        return np.stack([np.asarray(encode.series_matrix(w, normalize=True)) for w in windows]), None
    train_ms = encode.MultiSeries(np.concatenate([windows[i].values for i in train_idx], axis=1),
                                  windows[0].names)
    mean, std = encode.zscore_stats(train_ms)
    X = np.stack([np.asarray(encode.series_matrix(w, False, mean, std)) for w in windows])
    return X, {"mean": mean, "std": std}


def _network_for(cfg, name, X, **builder_args):
    """Configured network sized for inputs ``X``.

    Builder references get data-dependent arguments; explicit specs without
    an ``input_shape`` take the sample shape of ``X``.
    """
    pointer = "/networks/" + name if name else "/network"
    ref = cfg.doc["networks"][name] if name else cfg.doc["network"]
    if "builder" in ref:
        spec = cfg.network(name, **builder_args)
    else:
        spec = cfg.network(name, input_shape=X.shape[1:])
    if tuple(spec.input_shape) != tuple(X.shape[1:]):
        raise ConfigError(f"network input {list(spec.input_shape)} does not match data {list(X.shape[1:])}",
                          pointer)
    return spec


# -- run_experiment ----------------------------------------------------------

def prepare(cfg):
    """Dataset, split and per-model inputs shared by ``train`` and ``eval``.

    Returns ``(models, meta, split)`` where ``models`` maps a model name to
    ``(spec, X, y)``.
    """
    kind = cfg.kind
    data, y, meta = make_dataset(cfg)
    n = len(y)
    split = split_indices(n, cfg.split, cfg.seed)
    models = {}
    if kind == "endonet":
        bins = data.shape[1]
        for variant in cfg.doc.get("variants", ["3ch", "1ch"]):
            X = data if variant == "3ch" else data[..., 1:2]
            spec = _network_for(cfg, None, X, input_shape=X.shape[1:])
            models[variant] = (spec, X, y)
        meta["bins"] = bins
    elif kind == "plasticnet1d":
        X = data[..., None]
        spec = _network_for(cfg, None, X, length=X.shape[1], classes=cfg.data["classes"])
        models["1d"] = (spec, X, y)
    elif kind == "plasticnet2d":
        size = cfg.data.get("gaf_size", 50)
        X = gaf_inputs(data, size)
        spec = _network_for(cfg, None, X, size=size, classes=cfg.data["classes"])
        models["2d"] = (spec, X, y)
        meta["gaf_size"] = size
    elif kind == "te_monitor":
        mode = cfg.data.get("normalize", "train")
        X, stats = te_matrices(data, split[0], mode)
        spec = _network_for(cfg, None, X)
        models["te"] = (spec, X, y)
        meta["normalize"] = mode
        if stats is not None:
            meta["train_stats"] = stats
    else:
        raise ConfigError("use the cartpole verb for cartpole experiments", "/kind")
    return models, meta, split


def _header(cfg, meta, split):
    return {
        "schema_version": REPORT_VERSION,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "data": {"n": int(sum(len(s) for s in split)),
                 "split_sizes": [len(s) for s in split],
                 **meta},
    }


def run_experiment(cfg):
    """Generate data, split, train and evaluate each configured model."""
    models, meta, split = prepare(cfg)
    tr, va, te = split
    report = _header(cfg, meta, split)
    report["results"] = {}
    files = {}
    tcfg = cfg.train_config()
    for name, (spec, X, y) in models.items():
        params, res = _fit(name, spec, _subset(X, y, tr), _subset(X, y, va), _subset(X, y, te), tcfg)
        report["results"][name] = res
        suffix = "" if len(models) == 1 else f"_{name}"
        files[f"params{suffix}.json"] = nn.params_to_json(params, tcfg.seed)
        if "confusion" in res["metrics"]:
            files[f"confusion{suffix}.csv"] = _confusion_csv(res["metrics"]["confusion"])
    if cfg.kind == "endonet" and {"3ch", "1ch"} <= set(models):
        a = report["results"]["3ch"]["metrics"]["rmse"]
        b = report["results"]["1ch"]["metrics"]["rmse"]
        report["comparison"] = {"rmse_3ch": a, "rmse_1ch": b, "three_channel_better": a < b}
    if cfg.kind == "te_monitor":
        res = report["results"]["te"]["metrics"]
        per = np.array([np.inf if v is None else v for v in res["per_class_accuracy"]])
        report["hardest_classes"] = [int(i) for i in np.argsort(per, kind="stable")[:2]]
        report["confusable"] = [list(p) for p in meta["recipe"]["confusable"]]
    report = _clean(report)
    return RunResult(report, files)


def evaluate_saved(cfg, params_by_model):
    """Re-evaluate saved parameters on the regenerated test split."""
    models, meta, split = prepare(cfg)
    te = split[2]
    report = _header(cfg, meta, split)
    report["results"] = {}
    for name, (spec, X, y) in models.items():
        if name not in params_by_model:
            raise ConfigError(f"no saved parameters for model {name!r}", "/")
        report["results"][name] = {"network": spec.to_dict(),
                                   "metrics": nn.evaluate(spec, params_by_model[name], _subset(X, y, te))}
    return RunResult(_clean(report))


def model_names(cfg):
    if cfg.kind == "endonet":
        return list(cfg.doc.get("variants", ["3ch", "1ch"]))
    return {"plasticnet1d": ["1d"], "plasticnet2d": ["2d"], "te_monitor": ["te"]}.get(cfg.kind, [])


# -- compare -----------------------------------------------------------------

def compare_plasticnet(cfg):
    """1D CNN on raw spectra versus 2D CNN on GAF images at each configured size."""
    if not cfg.kind.startswith("plasticnet"):
        raise ConfigError("compare needs a plasticnet config", "/kind")
    nets = cfg.doc.get("networks", {})
    if "1d" not in nets or "2d" not in nets:
        raise ConfigError("compare needs networks '1d' and '2d'", "/networks")
    sizes = cfg.doc.get("gaf_sizes", [cfg.data.get("gaf_size", 50)])
    data, y, meta = make_dataset(cfg)
    split = split_indices(len(y), cfg.split, cfg.seed)
    tr, va, te = split
    tcfg = cfg.train_config()
    classes = cfg.data["classes"]
    report = _header(cfg, meta, split)
    files = {}

    X1 = data[..., None]
    spec1 = _network_for(cfg, "1d", X1, length=X1.shape[1], classes=classes)
    p1, res1 = _fit("1d", spec1, _subset(X1, y, tr), _subset(X1, y, va), _subset(X1, y, te), tcfg)
    files["params_1d.json"] = nn.params_to_json(p1, tcfg.seed)
    results = {"1d": res1}
    table = []
    for size in sizes:
        X2 = gaf_inputs(data, size)
        spec2 = _network_for(cfg, "2d", X2, size=size, classes=classes)
        p2, res2 = _fit(f"2d@{size}", spec2, _subset(X2, y, tr), _subset(X2, y, va), _subset(X2, y, te), tcfg)
        results[f"2d_{size}"] = res2
        files[f"params_2d_{size}.json"] = nn.params_to_json(p2, tcfg.seed)
        table.append({"size": size, "accuracy_1d": res1["metrics"]["accuracy"],
                      "accuracy_2d": res2["metrics"]["accuracy"]})
    report["results"] = results
    report["table"] = table
    files["accuracy_vs_size.csv"] = fileio.csv_text(
        ["size", "accuracy_1d", "accuracy_2d"],
        [[r["size"], repr(r["accuracy_1d"]), repr(r["accuracy_2d"])] for r in table])
    return RunResult(_clean(report), files)


# -- cartpole ----------------------------------------------------------------

DEFAULT_SCENARIOS = ({"disturbance": "none"}, {"disturbance": "fog"},
                     {"disturbance": "spatter"}, {"disturbance": "cutout"})


def _cartpole_setup(cfg):
    c = cfg.doc["cartpole"]
    physics = cp.Physics(**c.get("physics", {}))
    pid = cp.PidState(dt=physics.dt, **c["pid"])
    width, height = c.get("frame", [64, 64])
    return c, physics, pid, width, height


def sensor_dataset(cfg):
    c, physics, pid, width, height = _cartpole_setup(cfg)
    d = cfg.data
    return cp.make_sensor_dataset(d.get("episodes", 30), tuple(d.get("perturbations", ["fog"])), cfg.seed,
                                  pid, d.get("steps", 200), d.get("stride", 3), d.get("explore", 0.2),
                                  d.get("spread", 0.15), c.get("perturb_params", {}), physics, width, height,
                                  x_range=d.get("x_range", 0.0))


def sensor_spec(cfg):
    c, physics, pid, width, height = _cartpole_setup(cfg)
    return _network_for(cfg, None, np.empty((0, height, width, 1)))


def train_sensor(cfg):
    """Sensor dataset, trained CNN regressor and calibrated novelty model."""
    c, physics, pid, width, height = _cartpole_setup(cfg)
    ds = sensor_dataset(cfg)
    spec = sensor_spec(cfg)
    scale = c.get("sensor_scale", cp.DEGREES)
    tcfg = cfg.train_config()
    log.info("training sensor on %d frames", len(ds))
    params, history = nn.train(spec, (ds.images, scale * ds.targets[:, None]), tcfg,
                               log=lambda m: log.debug("sensor %s", m))
    sensor = cp.CnnSensor(spec, params, scale)
    nov = c.get("novelty", {})
    ref_kinds = set(nov.get("reference", ["clean", "fog"]))
    keep = np.array([k in ref_kinds for k in ds.kinds])
    block = nov.get("block_index", 0)
    feats = novelty.extract_refined_batch(spec, params, ds.images[keep], block)
    detector = novelty.calibrate(feats, nov.get("k", novelty.DEFAULT_K),
                                 nov.get("quantile", novelty.DEFAULT_QUANTILE), block)
    pred = nn.predict_batch(spec, params, ds.images)[:, 0] / scale
    info = {
        "n_frames": len(ds),
        "kinds": sorted(set(ds.kinds)),
        "loss_history": history,
        "train_rmse_deg": math.degrees(float(np.sqrt(np.mean((pred - ds.targets) ** 2)))),
        "novelty": {"k": detector.k, "quantile": nov.get("quantile", novelty.DEFAULT_QUANTILE),
                    "threshold": detector.threshold, "reference_size": int(keep.sum()),
                    "reference_kinds": sorted(ref_kinds), "block_index": block},
    }
    return sensor, detector, info


def _rmse_deg(a, b):
    if len(a) == 0:
        return None
    d = np.degrees(np.asarray(a) - np.asarray(b))
    return float(np.sqrt(np.mean(d * d)))


def episode_summary(trace, onset):
    theta = np.asarray(trace.theta)
    hat = np.asarray(trace.theta_hat)
    pre = np.asarray(trace.steps) < onset
    flags = np.asarray(trace.novelty_flag, dtype=bool)
    first = trace.first_flag()
    return {
        "steps": len(trace),
        "terminated_at": trace.terminated_at,
        "max_abs_theta_deg": float(np.degrees(np.abs(theta).max())),
        "rmse_before_deg": _rmse_deg(hat[pre], theta[pre]),
        "rmse_after_deg": _rmse_deg(hat[~pre], theta[~pre]),
        "first_flag": first,
        "flag_latency": None if first is None else first - onset,
        "flags_before_onset": int(flags[pre].sum()),
        "flags_total": int(flags.sum()),
    }


def run_cartpole(cfg, sensor=None, detector=None, theta_limit_deg=12.0):
    """Train (or reuse) the CNN sensor, then run every scenario for every episode seed."""
    c, physics, pid, width, height = _cartpole_setup(cfg)
    report = {"schema_version": REPORT_VERSION, "kind": "cartpole", "seed": cfg.seed, "config": cfg.to_dict()}
    files = {}
    if sensor is None:
        sensor, detector, info = train_sensor(cfg)
        report["sensor"] = info
        files["sensor_params.json"] = nn.params_to_json(sensor.params, cfg.seed)
    files["novelty.json"] = detector.to_json() + "\n"
    onset = c.get("onset", 150)
    steps = c.get("steps", 500)
    seeds = c.get("episode_seeds", [cfg.seed])
    snaps = c.get("snapshots", [max(onset - 1, 0), onset, onset + 10])
    perturb_params = c.get("perturb_params", {})
    scenarios = {}
    for sc_doc in c.get("scenarios", DEFAULT_SCENARIOS):
        kind = sc_doc["disturbance"]
        params = sc_doc.get("params", perturb_params.get(kind, {}))
        episodes = []
        for j, seed in enumerate(seeds):
            sc = cp.Scenario(kind, onset, params, steps, seed)
            log.info("cartpole %s seed %d", kind, seed)
            tr = cp.run_episode(sc, sensor, pid, detector, physics, width=width, height=height,
                                keep_frames=(j == 0))
            s = episode_summary(tr, onset)
            s["seed"] = seed
            episodes.append(s)
            files[f"traces/{kind}_seed{seed}.csv"] = fileio.csv_text(cp.Trace.CSV_HEADER, tr.rows())
            if j == 0:
                for k in snaps:
                    if k < len(tr.frames):
                        files[f"snapshots/{kind}_step{k:04d}.pgm"] = fileio.pnm_bytes(tr.frames[k])
        latencies = [e["flag_latency"] for e in episodes]
        firsts = [e["first_flag"] for e in episodes]
        scenarios[kind] = {
            "params": params,
            "episodes": episodes,
            "all_upright": all(e["terminated_at"] is None and e["max_abs_theta_deg"] < theta_limit_deg
                               for e in episodes),
            "seeds_without_flags": sum(e["flags_total"] == 0 for e in episodes),
            "median_first_flag": _median_or_none(firsts),
            "median_flag_latency": _median_or_none(latencies),
        }
    report["onset"] = onset
    report["theta_limit_deg"] = theta_limit_deg
    report["scenarios"] = scenarios
    return RunResult(_clean(report), files)


def _median_or_none(values):
    """Median where a missing flag counts as never (+inf)."""
    v = [math.inf if x is None else x for x in values]
    m = float(np.median(v)) if v else math.inf
    return m if math.isfinite(m) else None
