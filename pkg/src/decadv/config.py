"""
Experiment configuration files.

A config is an INI file (``configparser``) with the sections listed in
:data:`DEFAULTS`. Values are JSON literals (``0.1``, ``[0, 0.1]``, ``true``,
``null``, ``"text"``); bare words such as ``logistic`` are read as strings.
Unknown sections or keys are rejected before anything runs.
"""

from __future__ import annotations

import configparser
import copy
import io
import json
from pathlib import Path

__all__ = ["ConfigError", "DEFAULTS", "load_config", "parse_config", "resolve", "dump_config"]

DEFAULTS = {
    "graph": {
        "K": 10,
        "threshold": 0.3,
        "seed": 0,
        "path": None,
    },
    "model": {
        "kind": "logistic",
        "rho": 0.0,
        "tau": 1.0,
        "hidden": [16],
        "n_classes": 2,
    },
    "train": {
        "strategy": "diffusion",
        "mu": 0.01,
        "mu_decay": [],
        "batch_size": 1,
        "iterations": 1000,
        "seed": 0,
        "record_every": 10,
        "divergence_threshold": 1e8,
        "init_scale": 0.0,
        "workers": 1,
    },
    "attack": {
        "pattern": "homogeneous",
        "norm": "2",
        "epsilon": 0.0,
        "epsilon_linf": None,
        "generator": "auto",
        "pgd_steps": 10,
        "pgd_step_size": None,
        "pgd_random_init": False,
        "specs": None,
    },
    "data": {
        "source": "synthetic",
        "dim": 2,
        "heterogeneity": 0.0,
        "separation": 1.0,
        "feature_std": 1.0,
        "pool_size": 0,
        "seed": 0,
        "path": None,
        "label_column": -1,
        "normalize": False,
        "partition": "contiguous",
        "test_fraction": 0.2,
        "test_path": None,
    },
    "eval": {
        "attacks": ["closed_form"],
        "epsilons": [0.0, 0.1, 0.2, 0.3],
        "test_size": 1000,
        "overshoot": 0.02,
        "pgd_steps": 10,
        "pgd_random_init": False,
        "seed": 0,
    },
    "metrics": {
        "reference": False,
        "eval_size": 2000,
        "moreau_L": None,
        "moreau_inner_steps": 500,
        "moreau_inner_tol": 1e-8,
        "noise_trials": 0,
        "noise_batch": None,
        "adv_epsilon": None,
        "adv_test_size": 500,
        "seed": 0,
    },
    "output": {
        "dir": "out",
        "plots": True,
    },
}

# keys whose value may be a number or a list of numbers / strings
_FLEX = {("data", "separation"), ("data", "feature_std"), ("data", "label_column"),
         ("attack", "norm"), ("metrics", "moreau_L")}

_CHOICES = {
    ("model", "kind"): ("logistic", "exponential", "lms", "huber", "mlp"),
    ("train", "strategy"): ("diffusion", "consensus", "noncooperative", "centralized"),
    ("attack", "pattern"): ("homogeneous", "clean+adv", "l2+linf"),
    ("attack", "generator"): ("auto", "closed_form", "fgm", "fgsm", "pgd"),
    ("data", "source"): ("synthetic", "csv"),
    ("data", "partition"): ("contiguous", "shuffled"),
}

# sections written by the tool into manifests and ignored on input
_PASSIVE = ("manifest",)


class ConfigError(ValueError):
    pass


def _value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip()


def parse_config(text: str, source="<config>") -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(source))
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    raw = {}
    for section in parser.sections():
        if section in _PASSIVE:
            continue
        raw[section] = {k: _value(v) for k, v in parser.items(section)}
    return resolve(raw, source)


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), path)


def _type_ok(default, value):
    if default is None or value is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, (int, float)):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, type(default))


def resolve(raw: dict, source="<config>") -> dict:
    """Fill defaults and validate; returns a fresh nested dict."""
    cfg = copy.deepcopy(DEFAULTS)
    for section, values in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, value in values.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            default = DEFAULTS[section][key]
            if (section, key) not in _FLEX and not _type_ok(default, value):
                raise ConfigError(f"{source}: [{section}] {key} = {value!r} has the wrong type")
            if isinstance(default, float) and isinstance(value, int):
                value = float(value)
            cfg[section][key] = value
    _validate(cfg, source)
    return cfg


def _validate(cfg, source):
    def fail(msg):
        raise ConfigError(f"{source}: {msg}")

    for (section, key), choices in _CHOICES.items():
        if cfg[section][key] not in choices:
            fail(f"[{section}] {key} must be one of {choices}, got {cfg[section][key]!r}")
    g, t, a, d = cfg["graph"], cfg["train"], cfg["attack"], cfg["data"]
    if g["path"] is None:
        if not isinstance(g["K"], int) or g["K"] < 1:
            fail("[graph] K must be a positive integer")
        if not g["threshold"] > 0:
            fail("[graph] threshold must be positive")
    if not t["mu"] > 0:
        fail("[train] mu must be positive")
    if t["batch_size"] < 1 or t["record_every"] < 1 or t["workers"] < 1:
        fail("[train] batch_size, record_every and workers must be >= 1")
    if t["iterations"] < 0:
        fail("[train] iterations must be >= 0")
    if a["epsilon"] < 0 or (a["epsilon_linf"] is not None and a["epsilon_linf"] < 0):
        fail("[attack] epsilon must be nonnegative")
    if str(a["norm"]).lower() not in ("2", "l2", "inf", "linf"):
        fail("[attack] norm must be 2 or inf")
    if d["source"] == "csv" and not d["path"]:
        fail("[data] source = csv needs a path")
    if not 0 <= d["test_fraction"] < 1:
        fail("[data] test_fraction must be in [0, 1)")
    if cfg["model"]["kind"] != "mlp" and d["source"] == "synthetic" and cfg["model"]["n_classes"] != 2:
        fail("[model] n_classes only applies to the mlp")
    for eps in cfg["eval"]["epsilons"]:
        if not isinstance(eps, (int, float)) or eps < 0:
            fail("[eval] epsilons must be nonnegative numbers")


def dump_config(cfg: dict, extra: dict | None = None) -> str:
    """Serialize a resolved config (plus optional passive sections) back to INI text."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, values in cfg.items():
        parser[section] = {k: json.dumps(v) for k, v in values.items()}
    for section, values in (extra or {}).items():
        parser[section] = {k: json.dumps(v) for k, v in values.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
