"""Pipeline configuration: defaults, JSON loading, dotted overrides and
range validation."""

import copy
import json

from .losses import DEFAULT_WEIGHTS, OPACITY_TARGET, PATCH_SIZE
from .raster import VISIBILITY_EPS_REL
from .tracker.stages import STAGE_WEIGHTS
from .uvscatter import CORE_GRID, SCATTER_EPS, SHELL_GRID

DEFAULTS = {
    "seed": 0,
    "samples": 200000,
    "core_grid": list(CORE_GRID),
    "shell_grid": list(SHELL_GRID),
    "shell_delta": None,
    "scatter_eps": SCATTER_EPS,
    "kernel": "nearest",
    "visibility_eps": VISIBILITY_EPS_REL,
    "background": [0.0, 0.0, 0.0],
    "loss_weights": dict(DEFAULT_WEIGHTS),
    "patch_size": PATCH_SIZE,
    "opacity_target": OPACITY_TARGET,
    "stage_weights": {k: dict(vars(w)) for k, w in STAGE_WEIGHTS.items()},
    "optim": {
        "steps": None,
        "lr": 1e-3,
        "betas": [0.9, 0.999],
        "eps": 1e-8,
        "sigma": 100.0,
        "conf_thresh": 0.6,
        "mask_slack": 0.0,
        "vertical_axis": [0.0, 1.0, 0.0],
    },
}


class ConfigError(ValueError):
    pass


def _grid(name, v):
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, int) and x >= 1 for x in v)):
        raise ConfigError(f"{name} must be [height, width] with positive integers")


def _pos(name, v, allow_zero=False):
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not (v >= 0 if allow_zero else v > 0):
        raise ConfigError(f"{name} must be a {'non-negative' if allow_zero else 'positive'} number")


def validate(cfg):
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(cfg["samples"], int) or cfg["samples"] < 1:
        raise ConfigError("samples must be a positive integer")
    _grid("core_grid", cfg["core_grid"])
    _grid("shell_grid", cfg["shell_grid"])
    if cfg["shell_delta"] is not None:
        _pos("shell_delta", cfg["shell_delta"], allow_zero=True)
    _pos("scatter_eps", cfg["scatter_eps"])
    if cfg["kernel"] not in ("nearest", "tent"):
        raise ConfigError("kernel must be 'nearest' or 'tent'")
    _pos("visibility_eps", cfg["visibility_eps"], allow_zero=True)
    bg = cfg["background"]
    if not (isinstance(bg, list) and len(bg) == 3 and all(isinstance(x, (int, float)) and 0 <= x <= 1 for x in bg)):
        raise ConfigError("background must be three numbers in [0, 1]")
    if set(cfg["loss_weights"]) != set(DEFAULT_WEIGHTS):
        raise ConfigError(f"loss_weights must name exactly {sorted(DEFAULT_WEIGHTS)}")
    for k, v in cfg["loss_weights"].items():
        _pos(f"loss_weights.{k}", v, allow_zero=True)
    if not isinstance(cfg["patch_size"], int) or cfg["patch_size"] < 1:
        raise ConfigError("patch_size must be a positive integer")
    if not 0 < cfg["opacity_target"] < 1:
        raise ConfigError("opacity_target must lie in (0, 1)")
    for stage, w in cfg["stage_weights"].items():
        if stage not in STAGE_WEIGHTS:
            raise ConfigError(f"unknown stage {stage!r} in stage_weights")
        extra = set(w) - set(DEFAULTS["stage_weights"][stage])
        if extra:
            raise ConfigError(f"unknown weights for stage {stage}: {sorted(extra)}")
        for k, v in w.items():
            _pos(f"stage_weights.{stage}.{k}", v, allow_zero=True)
    o = cfg["optim"]
    extra = set(o) - set(DEFAULTS["optim"])
    if extra:
        raise ConfigError(f"unknown optimizer settings: {sorted(extra)}")
    if o["steps"] is not None and (not isinstance(o["steps"], int) or o["steps"] < 0):
        raise ConfigError("optim.steps must be null or a non-negative integer")
    for k in ("lr", "eps", "sigma"):
        _pos(f"optim.{k}", o[k])
    b = o["betas"]
    if not (isinstance(b, list) and len(b) == 2 and all(0 <= x < 1 for x in b)):
        raise ConfigError("optim.betas must be two numbers in [0, 1)")
    if not 0 <= o["conf_thresh"] <= 1:
        raise ConfigError("optim.conf_thresh must lie in [0, 1]")
    _pos("optim.mask_slack", o["mask_slack"], allow_zero=True)
    if not (isinstance(o["vertical_axis"], list) and len(o["vertical_axis"]) == 3 and any(o["vertical_axis"])):
        raise ConfigError("optim.vertical_axis must be a non-zero 3-vector")
    return cfg


def _merge(base, override, path=""):
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v, f"{path}{k}.")
        else:
            base[k] = v
    return base


def load_config(path=None, overrides=()):
    """Defaults, then the JSON file at ``path``, then ``key.sub=value``
    overrides (values parsed as JSON, falling back to plain strings)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge(cfg, data)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"override {key!r} does not name a config section")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return validate(cfg)
