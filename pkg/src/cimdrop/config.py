"""Experiment configuration: one JSON document, every default in one table.

==========================  ==================  ==============================================
key                         default             meaning
==========================  ==================  ==============================================
mode                        "reuse"             dense | reuse | reuse_ordered
T                           30                  dropout iterations per input
precision_n                 null                sign-magnitude bits; null keeps the network's
operator                    "mf"                mf | conventional (dense mode only)
requant                     "per_layer"         per_layer | global activation grid
solver                      "two_opt"           nearest_neighbor | two_opt | exact_dp
macro.rows / macro.cols     16 / 31             array geometry; wider layers are tiled
macro.vdd                   0.85                supply, also the converter full scale
macro.mav_denominator       "physical"          physical | active columns in the MAV
adc.mode                    "asymmetric"        ideal | symmetric | asymmetric
adc.bits                    5                   converter resolution
adc.tree                    null                stored tree file; null fits one on warm-up
adc.warmup_frames           1                   warm-up passes used to fit the tree
adc.merge_tol               0.0                 largest sample share a merged (lossy) cell may hold
rng.source                  "embedded"          embedded | beta | ideal | file
rng.p_drop                  0.5                 dropout probability
rng.a                       null                Beta shape for source=beta (null = exact)
rng.seed                    0                   root seed; per-input streams derive from it
rng.schedule                null                schedule file (or one per dropout layer), for source=file
rng.instances               100                 generator instances for rng-report
network                     null                network JSON path, or {"synthetic": ...}
inputs                      null                CSV path, or {"corruption", "count", "seed"}
energy                      {}                  overrides of the energy constants (fJ)
sweep.axis / sweep.values   null / []           precision | beta_a | p_drop and its values
output_dir                  "out"               artifact directory
==========================  ==================  ==============================================

With ``network`` null the synthetic prototype classifier is used; with
``inputs`` null, four inputs at each corruption level 0, 0.6 and 0.9 are
drawn for it. ``{"synthetic": "regression"}`` selects the regression task
(``inputs`` then only takes ``count``); extra keys in a ``{"synthetic":
{"kind": ..., ...}}`` object are passed to the task builder.
"""
from __future__ import annotations

import copy
import json
import os
from typing import Any, Mapping

from .ledger import EnergyConstants

__all__ = ["DEFAULTS", "ConfigError", "resolve", "load_config", "dump_config"]


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "mode": "reuse",
    "T": 30,
    "precision_n": None,
    "operator": "mf",
    "requant": "per_layer",
    "solver": "two_opt",
    "macro": {"rows": 16, "cols": 31, "vdd": 0.85, "mav_denominator": "physical"},
    "adc": {"mode": "asymmetric", "bits": 5, "tree": None, "warmup_frames": 1, "merge_tol": 0.0},
    "rng": {"source": "embedded", "p_drop": 0.5, "a": None, "seed": 0, "schedule": None, "instances": 100},
    "network": None,
    "inputs": None,
    "energy": {},
    "sweep": {"axis": None, "values": []},
    "output_dir": "out",
}

_CHOICES = {
    "mode": ("dense", "reuse", "reuse_ordered"),
    "operator": ("mf", "conventional"),
    "requant": ("per_layer", "global"),
    "solver": ("nearest_neighbor", "two_opt", "exact_dp"),
    "macro.mav_denominator": ("physical", "active"),
    "adc.mode": ("ideal", "symmetric", "asymmetric"),
    "rng.source": ("embedded", "beta", "ideal", "file"),
}


def _merge(base: dict, over: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config field {where!r}")
        if isinstance(base[k], dict) and base[k] and k not in ("energy",):
            if not isinstance(v, Mapping):
                raise ConfigError(f"config field {where!r} must be an object")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _get(cfg: Mapping, dotted: str):
    cur = cfg
    for part in dotted.split("."):
        cur = cur[part]
    return cur


def _int(cfg, dotted, lo=None):
    v = _get(cfg, dotted)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"config field {dotted!r} must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"config field {dotted!r} must be >= {lo}, got {v}")


def _existing(v: str, key: str, base_dir: str) -> str:
    path = v if os.path.isabs(v) else os.path.normpath(os.path.join(base_dir, v))
    if not os.path.exists(path):
        raise ConfigError(f"config field {key!r}: file not found: {v}")
    return path


def resolve(user: Mapping | None = None, base_dir: str = ".") -> dict:
    """Overlay ``user`` on the defaults and validate; paths resolve against ``base_dir``."""
    cfg = _merge(DEFAULTS, user or {})
    for dotted, choices in _CHOICES.items():
        if _get(cfg, dotted) not in choices:
            raise ConfigError(f"config field {dotted!r} must be one of {choices}, got {_get(cfg, dotted)!r}")
    _int(cfg, "T", 1)
    if cfg["precision_n"] is not None:
        _int(cfg, "precision_n", 2)
    _int(cfg, "macro.rows", 1)
    _int(cfg, "macro.cols", 1)
    _int(cfg, "adc.bits", 1)
    _int(cfg, "adc.warmup_frames", 1)
    _int(cfg, "rng.seed", 0)
    _int(cfg, "rng.instances", 1)
    p = cfg["rng"]["p_drop"]
    if not isinstance(p, (int, float)) or not 0 <= p < 1:
        raise ConfigError(f"config field 'rng.p_drop' must lie in [0, 1), got {p!r}")
    tol = cfg["adc"]["merge_tol"]
    if isinstance(tol, bool) or not isinstance(tol, (int, float)) or not 0 <= tol <= 1:
        raise ConfigError(f"config field 'adc.merge_tol' must lie in [0, 1], got {tol!r}")
    a = cfg["rng"]["a"]
    if a is not None and (not isinstance(a, (int, float)) or a <= 0):
        raise ConfigError(f"config field 'rng.a' must be positive or null, got {a!r}")
    if cfg["operator"] == "conventional" and cfg["mode"] != "dense":
        raise ConfigError("config field 'operator': conventional is only available with mode 'dense'")
    src, sched = cfg["rng"]["source"], cfg["rng"]["schedule"]
    if src == "file" and sched is None:
        raise ConfigError("config field 'rng.schedule' is required when rng.source is 'file'")
    if src != "file" and sched is not None:
        raise ConfigError("config fields 'rng.schedule' and 'rng.source' conflict: a schedule file "
                          "replaces the generator, set rng.source to 'file'")
    for key in ("network", "inputs", "rng.schedule", "adc.tree"):
        v = _get(cfg, key)
        parent, leaf = (cfg, key) if "." not in key else (cfg[key.split(".")[0]], key.split(".")[1])
        if isinstance(v, str):
            parent[leaf] = _existing(v, key, base_dir)
        elif key == "rng.schedule" and isinstance(v, list) and v and all(isinstance(s, str) for s in v):
            # one file per dropout layer, in layer order
            parent[leaf] = [_existing(s, key, base_dir) for s in v]
        elif v is not None and (key in ("rng.schedule", "adc.tree") or not isinstance(v, Mapping)):
            what = {"rng.schedule": "a path, a list of paths", "adc.tree": "a path"}.get(key, "a path, an object")
            raise ConfigError(f"config field {key!r} must be {what} or null")
    if isinstance(cfg["network"], Mapping) and "synthetic" not in cfg["network"]:
        raise ConfigError("config field 'network' object needs a 'synthetic' entry")
    if not isinstance(cfg["energy"], Mapping):
        raise ConfigError("config field 'energy' must be an object")
    known = set(EnergyConstants().as_dict())
    bad = sorted(set(cfg["energy"]) - known)
    if bad:
        raise ConfigError(f"config field 'energy' has unknown constants: {', '.join(bad)}")
    return cfg


def load_config(path: str | None) -> dict:
    if path is None:
        return resolve({})
    try:
        with open(path) as fh:
            user = json.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from e
    if not isinstance(user, Mapping):
        raise ConfigError("config document must be a JSON object")
    return resolve(user, os.path.dirname(os.path.abspath(path)))


def dump_config(cfg: Mapping, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
