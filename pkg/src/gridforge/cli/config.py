"""Experiment configuration: JSON schema, validation and network references."""

import copy
import json
from dataclasses import dataclass, field

import jsonschema

from .. import nn
from ..errors import ConfigError, GridforgeError

CONFIG_VERSION = 1
KINDS = ("endonet", "plasticnet1d", "plasticnet2d", "te_monitor", "cartpole")

BUILDERS = {
    "endonet": nn.endonet,
    "plasticnet_1d": nn.plasticnet_1d,
    "plasticnet_2d": nn.plasticnet_2d,
}

_NETWORK = {
    "oneOf": [
        {
            "type": "object",
            "required": ["builder"],
            "additionalProperties": False,
            "properties": {
                "builder": {"enum": sorted(BUILDERS)},
                "args": {"type": "object"},
            },
        },
        {
            "type": "object",
            "required": ["layers"],
            "additionalProperties": False,
            "properties": {
                "layers": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "required": ["type"]}},
                "input_shape": {"type": "array", "minItems": 1,
                                "items": {"type": "integer", "minimum": 1}},
                "loss": {"enum": ["sse", "cross_entropy"]},
            },
        },
    ]
}

_TRAIN = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "epochs": {"type": "integer", "minimum": 0},
        "init": {"enum": ["uniform_scaled"]},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gridforge experiment config",
    "type": "object",
    "required": ["schema_version", "kind", "seed", "data"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": CONFIG_VERSION},
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "data": {"type": "object"},
        "network": _NETWORK,
        "networks": {"type": "object", "additionalProperties": _NETWORK},
        "train": _TRAIN,
        "split": {
            "type": "array", "minItems": 3, "maxItems": 3,
            "items": {"type": "number", "exclusiveMinimum": 0},
        },
        "variants": {"type": "array", "minItems": 1, "uniqueItems": True,
                     "items": {"enum": ["3ch", "1ch"]}},
        "gaf_sizes": {"type": "array", "minItems": 1,
                      "items": {"type": "integer", "minimum": 4}},
        "cartpole": {"type": "object"},
        "output_dir": {"type": "string"},
    },
}

_DATA_SCHEMAS = {
    "endonet": {
        "type": "object", "required": ["n_samples"],
        "properties": {"n_samples": {"type": "integer", "minimum": 1}, "recipe": {"type": "object"}},
        "additionalProperties": False,
    },
    "plastic": {
        "type": "object", "required": ["classes", "n_per_class"],
        "properties": {"classes": {"type": "integer", "minimum": 2},
                       "n_per_class": {"type": "integer", "minimum": 1},
                       "gaf_size": {"type": "integer", "minimum": 4},
                       "recipe": {"type": "object"}},
        "additionalProperties": False,
    },
    "te_monitor": {
        "type": "object", "required": ["faults", "n_per_class"],
        "properties": {"faults": {"type": "integer", "minimum": 2},
                       "n_per_class": {"type": "integer", "minimum": 1},
                       "normalize": {"enum": ["train", "row"]},
                       "recipe": {"type": "object"}},
        "additionalProperties": False,
    },
    "cartpole": {
        "type": "object",
        "properties": {"episodes": {"type": "integer", "minimum": 1},
                       "steps": {"type": "integer", "minimum": 1},
                       "stride": {"type": "integer", "minimum": 1},
                       "explore": {"type": "number", "minimum": 0, "maximum": 1},
                       "spread": {"type": "number", "minimum": 0},
                       "x_range": {"type": "number", "minimum": 0},
                       "perturbations": {"type": "array", "items": {"enum": ["fog", "spatter", "cutout"]}}},
        "additionalProperties": False,
    },
}

_CARTPOLE_SCHEMA = {
    "type": "object",
    "required": ["pid"],
    "additionalProperties": False,
    "properties": {
        "pid": {
            "type": "object", "required": ["kp", "ki", "kd"], "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in ("kp", "ki", "kd", "setpoint")}
            | {"n_filter": {"type": "number", "exclusiveMinimum": 0}},
        },
        "physics": {"type": "object", "additionalProperties": False,
                    "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in
                                   ("gravity", "masscart", "masspole", "half_length", "force_mag", "dt")}},
        "frame": {"type": "array", "minItems": 2, "maxItems": 2,
                  "items": {"type": "integer", "minimum": 32}},
        "scenarios": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["disturbance"], "additionalProperties": False,
            "properties": {"disturbance": {"enum": ["none", "fog", "spatter", "cutout"]},
                           "params": {"type": "object"}}}},
        "onset": {"type": "integer", "minimum": 0},
        "steps": {"type": "integer", "minimum": 1},
        "episode_seeds": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
        "novelty": {"type": "object", "additionalProperties": False,
                    "properties": {"k": {"type": "integer", "minimum": 1},
                                   "quantile": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                                   "block_index": {"type": "integer", "minimum": 0},
                                   "reference": {"type": "array",
                                                 "items": {"enum": ["clean", "fog", "spatter", "cutout"]}}}},
        "perturb_params": {"type": "object"},
        "snapshots": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "sensor_scale": {"type": "number", "exclusiveMinimum": 0},
    },
}


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else "/"


def _validate(instance, schema, prefix=()):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _pointer(tuple(prefix) + tuple(err.absolute_path)))


def _data_schema_key(kind):
    return "plastic" if kind.startswith("plasticnet") else kind


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description (kept as its JSON document)."""
    doc: dict = field(repr=False)

    @property
    def kind(self):
        return self.doc["kind"]

    @property
    def seed(self):
        return self.doc["seed"]

    @property
    def data(self):
        return self.doc["data"]

    @property
    def split(self):
        return tuple(self.doc.get("split", (0.6, 0.2, 0.2)))

    def train_config(self, seed=None):
        t = self.doc.get("train", {})
        return nn.TrainConfig(seed=self.seed if seed is None else seed, **t)

    def network(self, name=None, input_shape=None, **overrides):
        """Resolve a network reference.

        Builder references take ``overrides`` as extra builder arguments.
        Explicit specs may omit ``input_shape``; it is then taken from
        ``input_shape`` (normally the data's sample shape).
        """
        pointer = "/networks/" + name if name else "/network"
        ref = self.doc["networks"].get(name) if name else self.doc.get("network")
        if ref is None:
            raise ConfigError("no network configured", pointer)
        if "builder" in ref and input_shape is not None:
            overrides["input_shape"] = input_shape
        return build_network(ref, overrides, pointer, input_shape)

    def with_seed(self, seed):
        doc = copy.deepcopy(self.doc)
        doc["seed"] = int(seed)
        return ExperimentConfig.from_dict(doc)

    def to_dict(self):
        return copy.deepcopy(self.doc)

    def to_json(self):
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc):
        _validate(doc, CONFIG_SCHEMA)
        kind = doc["kind"]
        _validate(doc["data"], _DATA_SCHEMAS[_data_schema_key(kind)], ("data",))
        if "split" in doc and abs(sum(doc["split"]) - 1.0) > 1e-9:
            raise ConfigError("split ratios must sum to 1", "/split")
        if kind == "cartpole":
            if "cartpole" not in doc:
                raise ConfigError("cartpole experiments need a 'cartpole' section", "/cartpole")
            _validate(doc["cartpole"], _CARTPOLE_SCHEMA, ("cartpole",))
        if "network" not in doc and "networks" not in doc:
            raise ConfigError("a 'network' or 'networks' entry is required", "/network")
        cfg = cls(copy.deepcopy(doc))
        # resolve networks early so bad specs surface as config errors
        if "network" in doc:
            build_network(doc["network"], {}, "/network", None, strict=False)
        for name, ref in doc.get("networks", {}).items():
            build_network(ref, {}, "/networks/" + name, None, strict=False)
        try:
            cfg.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc), "/train") from None
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "") from None
        return cls.from_dict(doc)


def build_network(ref, overrides, pointer, input_shape=None, strict=True):
    """NetworkSpec from a builder reference or an explicit layer list.

    With ``strict=False`` an explicit spec lacking ``input_shape`` is only
    checked for well-formed layers.
    """
    try:
        if "builder" in ref:
            args = dict(ref.get("args", {}))
            args.update(overrides)
            if "input_shape" in args:
                args["input_shape"] = tuple(args["input_shape"])
            return BUILDERS[ref["builder"]](**args)
        doc = dict(ref)
        if "input_shape" not in doc:
            if input_shape is None:
                if strict:
                    raise ConfigError("explicit network needs an input_shape", pointer)
                for layer in doc["layers"]:
                    nn.layer_from_dict(layer)
                return None
            doc["input_shape"] = list(input_shape)
        return nn.NetworkSpec.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(f"bad network arguments: {exc}", pointer) from None
    except GridforgeError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), pointer) from None


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "") from None
    return ExperimentConfig.from_json(text)
