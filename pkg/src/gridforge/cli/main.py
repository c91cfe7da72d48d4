"""``gridforge`` command line.

Verbs: gen, train, eval, compare, cartpole.  Exit codes: 0 success,
2 config error, 3 runtime or training error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import cartpole as cp
from .. import fileio, nn, novelty
from .._accel import configure_threads
from ..errors import ConfigError, GridforgeError
from . import experiments as ex
from .config import load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("gridforge")


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_files(out, files):
    out = Path(out)
    for rel, content in sorted(files.items()):
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content, encoding="utf-8")


def write_result(out, result, report_name="report.json"):
    files = dict(result.files)
    files[report_name] = dump_json(result.report)
    write_files(out, files)
    return Path(out) / report_name


# -- verbs -------------------------------------------------------------------

def cmd_gen(cfg, out):
    """Write the generated dataset (npz) plus readable previews and metadata."""
    files = {}
    if cfg.kind == "cartpole":
        ds = ex.sensor_dataset(cfg)
        X, y, meta = ds.images, ds.targets, {"kinds": ds.kinds, "target": "theta_rad"}
        for i in range(min(4, len(X))):
            files[f"preview/frame{i}.pgm"] = fileio.pnm_bytes(X[i])
    else:
        data, y, meta = ex.make_dataset(cfg)
        if cfg.kind == "te_monitor":
            X = np.stack([w.values for w in data])
            files["preview/sample0.csv"] = fileio.csv_text(
                data[0].names, [[repr(v) for v in row] for row in data[0].values.T])
        else:
            X = data
        if cfg.kind == "endonet":
            for i in range(min(4, len(X))):
                img = X[i] / max(float(X[i].max()), 1e-12)
                files[f"preview/sample{i}.ppm"] = fileio.pnm_bytes(img)
        if cfg.kind.startswith("plasticnet"):
            files["spectra.csv"] = fileio.csv_text(
                [f"c{int(lab)}_{i}" for i, lab in enumerate(y)], [[repr(float(v)) for v in row] for row in X.T])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    np.savez(out / "dataset.npz", X=X, y=np.asarray(y))
    meta = ex._clean({"schema_version": ex.REPORT_VERSION, "kind": cfg.kind, "seed": cfg.seed,
                      "X_shape": list(X.shape), "meta": meta})
    files["metadata.json"] = dump_json(meta)
    write_files(out, files)
    log.info("wrote %d samples to %s", len(X), out)


def cmd_train(cfg, out):
    if cfg.kind == "cartpole":
        sensor, detector, info = ex.train_sensor(cfg)
        files = {"sensor_params.json": nn.params_to_json(sensor.params, cfg.seed),
                 "novelty.json": detector.to_json() + "\n"}
        report = ex._clean({"schema_version": ex.REPORT_VERSION, "kind": "cartpole", "seed": cfg.seed,
                            "config": cfg.to_dict(), "sensor": info})
        path = write_result(out, ex.RunResult(report, files))
    else:
        path = write_result(out, ex.run_experiment(cfg))
    log.info("report: %s", path)


def _load_params(path):
    try:
        return nn.params_from_json(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read parameters: {exc}", "") from None


def cmd_eval(cfg, out, params_dir=None):
    src = Path(params_dir or out)
    names = ex.model_names(cfg)
    if not names:
        raise ConfigError("eval does not apply to cartpole configs; use the cartpole verb", "/kind")
    if len(names) == 1:
        params = {names[0]: _load_params(src / "params.json")}
    else:
        params = {n: _load_params(src / f"params_{n}.json") for n in names}
    path = write_result(out, ex.evaluate_saved(cfg, params), "eval.json")
    log.info("report: %s", path)


def cmd_compare(cfg, out):
    path = write_result(out, ex.compare_plasticnet(cfg), "compare.json")
    log.info("report: %s", path)


def cmd_cartpole(cfg, out, params_dir=None):
    if cfg.kind != "cartpole":
        raise ConfigError("the cartpole verb needs a cartpole config", "/kind")
    sensor = detector = None
    if params_dir:
        src = Path(params_dir)
        sensor = cp.CnnSensor(ex.sensor_spec(cfg), _load_params(src / "sensor_params.json"),
                              cfg.doc["cartpole"].get("sensor_scale", cp.DEGREES))
        detector = novelty.NoveltyModel.from_json((src / "novelty.json").read_text(encoding="utf-8"))
    path = write_result(out, ex.run_cartpole(cfg, sensor, detector))
    log.info("report: %s", path)


VERBS = {
    "gen": ("generate a synthetic dataset", cmd_gen),
    "train": ("train and evaluate the configured model(s)", cmd_train),
    "eval": ("evaluate saved parameters on the test split", cmd_eval),
    "compare": ("PlasticNet 1D vs 2D (GAF) accuracy table", cmd_compare),
    "cartpole": ("closed-loop cart-pole scenarios with novelty monitoring", cmd_cartpole),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="gridforge", description="Grid-structured learning experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, (help_text, _) in VERBS.items():
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress lines")
        if verb in ("eval", "cartpole"):
            p.add_argument("--params", help="directory holding saved parameters")
    return parser


def _setup_logging(quiet):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    log.propagate = False


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging(args.quiet)
    try:
        configure_threads()
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = args.out or cfg.doc.get("output_dir")
        if not out:
            raise ConfigError("no output directory: pass --out or set output_dir", "/output_dir")
        handler = VERBS[args.verb][1]
        if args.verb in ("eval", "cartpole"):
            handler(cfg, out, args.params)
        else:
            handler(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridforgeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
