"""Experiment configuration: a JSON document with one section per concern.

Top-level keys::

    kind       gaussian | gmm | morph | langevin | quiver
    seed       integer
    out        output directory
    target     density {"type": "gaussian"|"gmm", ...} or, for morph/langevin,
               a particle source (see below)
    source     morph/langevin initial particles (default: unit Gaussian)
    generator  {"type": "linear", "n_in": n} or {"type": "mlp", "widths": [...], "slope": s}
    kernel     {"type": "phs", "k": k} | {"type": "rbfg", "sigma": s} | {"type": "imq", "c": c}
               | {"type": "mog", "sigmas": [...]}; optional "table_gradients"
    train      loss (scoregan | flowgan) plus the fields of TrainConfig
    langevin   alpha0, steps, decay, rho, noise, particles, data_pool,
               data_batch, scale, snapshot_stride, metric_stride
    quiver     view (score | flowgan), extent [x0, x1, y0, y1], resolution,
               gen_source (normal | data), n_centers
    eval       samples, radius_multiplier, metric_samples, data_as_generator

A Gaussian target may give a scalar ``mean`` together with ``dim``; it is
expanded to a constant vector. Particle sources are ``{"type": "shape", "name":
"disk"|"heart"|"spiral"|"square", "size": 64}``, ``{"type": "pgm", "path": ...}``
(relative to the config file), ``{"type": "normal"}`` or a density config.
Missing keys take the defaults below; unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..flowcore.langevin import LangevinSchedule
from ..flowcore.train import LOSS_KINDS, TrainConfig
from ..kernels import KernelSpec
from ..scores import target_from_config
from .shapes import SHAPES

KINDS = ("gaussian", "gmm", "morph", "langevin", "quiver")

TRAIN_DEFAULTS = {
    "loss": "flowgan",
    "iterations": 2000,
    "batch_size": 500,
    "n_centers": 500,
    "lr": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "metric_stride": 10,
    "flow_objective": "drift",
    "fd_step": 1e-5,
}
LANGEVIN_DEFAULTS = {
    "alpha0": 1.0,
    "steps": 500,
    "decay": "constant",
    "rho": 0.99,
    "noise": "zero",
    "particles": 1000,
    "data_pool": 1000,
    "data_batch": 1000,
    "scale": 1.0,
    "snapshot_stride": 50,
    "metric_stride": 1,
}
QUIVER_DEFAULTS = {
    "view": "flowgan",
    "extent": [-8.0, 8.0, -8.0, 8.0],
    "resolution": 50,
    "gen_source": "normal",
    "n_centers": 1000,
}
EVAL_DEFAULTS = {
    "samples": 10000,
    "radius_multiplier": 3.0,
    "metric_samples": 1000,
    "data_as_generator": False,
}
TOP_KEYS = ("kind", "seed", "out", "target", "source", "generator", "kernel", "train", "langevin", "quiver", "eval")


class ConfigError(ValueError):
    pass


def _merge(section, defaults, given):
    given = dict(given or {})
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {unknown}")
    out = copy.deepcopy(defaults)
    out.update(given)
    return out


def _expand_target(t):
    t = dict(t)
    if t.get("type") == "gaussian" and np.ndim(t.get("mean")) == 0 and "dim" in t:
        t["mean"] = [float(t["mean"])] * int(t["dim"])
        del t["dim"]
    return t


def build_density(cfg):
    try:
        return target_from_config(_expand_target(cfg))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid target: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    out: str = "runs/out"
    target: dict = None
    source: dict = None
    generator: dict = None
    kernel: dict = None
    train: dict = None
    langevin: dict = None
    quiver: dict = None
    eval: dict = field(default_factory=lambda: dict(EVAL_DEFAULTS))
    base_dir: str = field(default=".", compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return {k: v for k, v in d.items() if v is not None}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def resolve_path(self, p):
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    # builders for the validated sections

    def density(self):
        return build_density(self.target)

    def kernel_spec(self, dim=None):
        return KernelSpec.from_config(dict(self.kernel), dim=dim)

    def train_config(self):
        t = dict(self.train)
        t.pop("loss")
        return TrainConfig(**t)

    def schedule(self):
        lg = self.langevin
        return LangevinSchedule(lg["alpha0"], lg["steps"], lg["decay"], lg["rho"], lg["noise"])


def _check_source(name, src, allow_density=True):
    if not isinstance(src, dict) or "type" not in src:
        raise ConfigError(f"{name} must be an object with a 'type'")
    kind = src["type"]
    if kind == "shape":
        extra = sorted(set(src) - {"type", "name", "size"})
        if extra:
            raise ConfigError(f"unknown keys in {name}: {extra}")
        if src.get("name") not in SHAPES:
            raise ConfigError(f"{name}.name must be one of {SHAPES}")
        if int(src.get("size", 64)) < 2:
            raise ConfigError(f"{name}.size must be >= 2")
    elif kind == "pgm":
        if not isinstance(src.get("path"), str):
            raise ConfigError(f"{name}.path must be a string")
    elif kind == "normal":
        extra = sorted(set(src) - {"type", "dim"})
        if extra:
            raise ConfigError(f"unknown keys in {name}: {extra}")
    elif kind in ("gaussian", "gmm") and allow_density:
        build_density(src)
    else:
        raise ConfigError(f"unsupported {name} type {kind!r}")


def parse_config(raw, base_dir="."):
    """Validate a config mapping and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(TOP_KEYS))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if "seed" not in raw or isinstance(raw["seed"], bool) or not isinstance(raw["seed"], int):
        raise ConfigError("seed must be present and an integer")
    d = {"kind": kind, "seed": int(raw["seed"]), "out": str(raw.get("out", f"runs/{kind}"))}
    d["eval"] = _merge("eval", EVAL_DEFAULTS, raw.get("eval"))
    if "target" not in raw:
        raise ConfigError("target section is required")
    d["target"] = copy.deepcopy(raw["target"])

    if kind in ("gaussian", "gmm"):
        target = build_density(d["target"])
        if kind == "gmm" and d["target"].get("type") != "gmm":
            raise ConfigError("gmm experiments need a gmm target")
        d["train"] = _merge("train", TRAIN_DEFAULTS, raw.get("train"))
        if d["train"]["loss"] not in LOSS_KINDS:
            raise ConfigError(f"train.loss must be one of {LOSS_KINDS}")
        gen = copy.deepcopy(raw.get("generator") or {"type": "linear"})
        if gen.get("type") == "mlp" and list(gen.get("widths", []))[-1:] != [target.dim]:
            raise ConfigError(f"mlp widths must end with the data dimension {target.dim}")
        if gen.get("type") not in ("linear", "mlp"):
            raise ConfigError("generator.type must be linear or mlp")
        d["generator"] = gen
        if d["train"]["loss"] == "flowgan" or "kernel" in raw:
            d["kernel"] = copy.deepcopy(raw.get("kernel"))
    elif kind in ("morph", "langevin"):
        _check_source("target", d["target"])
        d["source"] = copy.deepcopy(raw.get("source") or {"type": "normal"})
        _check_source("source", d["source"])
        d["langevin"] = _merge("langevin", LANGEVIN_DEFAULTS, raw.get("langevin"))
        d["kernel"] = copy.deepcopy(raw.get("kernel"))
    else:
        build_density(d["target"])
        d["quiver"] = _merge("quiver", QUIVER_DEFAULTS, raw.get("quiver"))
        q = d["quiver"]
        if q["view"] not in ("score", "flowgan"):
            raise ConfigError("quiver.view must be score or flowgan")
        if q["gen_source"] not in ("normal", "data"):
            raise ConfigError("quiver.gen_source must be normal or data")
        if len(q["extent"]) != 4 or not (q["extent"][0] < q["extent"][1] and q["extent"][2] < q["extent"][3]):
            raise ConfigError("quiver.extent must be [x0, x1, y0, y1] with x0 < x1 and y0 < y1")
        if int(q["resolution"]) < 2:
            raise ConfigError("quiver.resolution must be >= 2")
        if q["view"] == "flowgan":
            d["kernel"] = copy.deepcopy(raw.get("kernel"))

    for extra in ("generator", "train", "langevin", "quiver", "source"):
        if extra in raw and extra not in d:
            raise ConfigError(f"section {extra!r} does not apply to {kind} experiments")
    cfg = ExperimentConfig(**d, base_dir=base_dir)
    try:
        if "kernel" in d:
            if d["kernel"] is None:
                raise ConfigError("kernel section is required for this experiment")
            cfg.kernel_spec()
        if cfg.train is not None:
            cfg.train_config()
        if cfg.langevin is not None:
            cfg.schedule()
            for key in ("particles", "data_pool", "data_batch", "metric_stride"):
                if int(cfg.langevin[key]) < 1:
                    raise ConfigError(f"langevin.{key} must be >= 1")
            if not cfg.langevin["scale"] > 0:
                raise ConfigError("langevin.scale must be > 0")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def with_overrides(cfg, seed=None, iters=None, out=None):
    """Copy of ``cfg`` with command-line overrides applied and re-validated."""
    d = cfg.to_dict()
    if seed is not None:
        d["seed"] = int(seed)
    if out is not None:
        d["out"] = str(out)
    if iters is not None:
        if cfg.train is not None:
            d["train"]["iterations"] = int(iters)
        elif cfg.langevin is not None:
            d["langevin"]["steps"] = int(iters)
        else:
            raise ConfigError(f"--iters does not apply to {cfg.kind} experiments")
    return parse_config(d, base_dir=cfg.base_dir)
