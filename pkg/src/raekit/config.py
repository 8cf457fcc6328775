"""Experiment configuration: a JSON tree merged over the bundled defaults."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path


class ConfigError(ValueError):
    pass


def default_config():
    text = resources.files("raekit").joinpath("default_config.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, overrides=None):
    cfg = default_config()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _positive_int(val, name):
    _require(isinstance(val, int) and not isinstance(val, bool) and val >= 1, f"{name} must be a positive integer")


def validate(cfg):
    for section in ("data", "windowing", "partition", "split", "rae", "classifier", "attack"):
        _require(isinstance(cfg.get(section), dict), f"missing section {section!r}")
    data = cfg["data"]
    _require(data.get("source") in ("synthetic", "csv"), "data.source must be 'synthetic' or 'csv'")
    if data["source"] == "csv":
        _require(isinstance(data.get("csv"), str), "data.csv must name a CSV file when data.source is 'csv'")
    _positive_int(data.get("k"), "data.k")
    _positive_int(data.get("decimate", 1), "data.decimate")
    down = data.get("downsample")
    if down is not None:
        frac = down.get("keep_fraction")
        _require(isinstance(frac, (int, float)) and 0 < frac <= 1, "data.downsample.keep_fraction must be in (0, 1]")
        _require(isinstance(down.get("class"), int), "data.downsample.class must be a class id")

    _positive_int(cfg["windowing"].get("d"), "windowing.d")
    _positive_int(cfg["windowing"].get("w"), "windowing.w")

    lists = {}
    for name in ("white", "black", "gray"):
        ids = cfg["partition"].get(name, [])
        _require(isinstance(ids, list) and all(isinstance(i, int) and i >= 0 for i in ids),
                 f"partition.{name} must be a list of class ids")
        lists[name] = set(ids)
    _require(not (lists["white"] & lists["black"] or lists["white"] & lists["gray"] or lists["black"] & lists["gray"]),
             "partition lists must be disjoint")
    _require(lists["gray"] or not lists["black"], "a black list needs at least one gray class")

    frac = cfg["split"].get("train_fraction")
    _require(isinstance(frac, (int, float)) and 0 < frac < 1, "split.train_fraction must be in (0, 1)")
    _require(cfg["rae"].get("profile") in ("deep", "shallow"), "rae.profile must be 'deep' or 'shallow'")
    for section in ("rae", "classifier"):
        _positive_int(cfg[section].get("epochs"), f"{section}.epochs")
        _positive_int(cfg[section].get("batch_size"), f"{section}.batch_size")
    _positive_int(cfg["attack"].get("n_generated"), "attack.n_generated")
    other = cfg["attack"].get("other_user")
    _require(other is None or isinstance(other, dict), "attack.other_user must be an object or null")
    _require(isinstance(cfg.get("output_dir"), str), "output_dir must be a path")
    return cfg
