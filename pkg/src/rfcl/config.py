"""Structured run configuration: INI-style file with strict key validation."""

from __future__ import annotations

import configparser
import io

MODES = ("rfcl", "reverse_only", "forward_only", "none", "uniform_reset", "global_reverse")

# section -> key -> (python type, default). Defaults follow the shipped
# sample-efficient hyperparameter set.
SCHEMA = {
    "env": {
        "maze": (str, "default"),           # "default" or path to an ASCII maze file
        "cell_size": (float, 1.0),
        "goal_radius": (float, 0.3),
        "max_step_displacement": (float, 0.2),
        "episode_horizon": (int, 100),
        "exclude_demo_cells": (bool, False),
    },
    "demos": {
        "path": (str, ""),
        "count": (int, 0),                  # 0 = use all demos in the file
        "action_rescale_factor": (float, 0.0),  # 0 = off; 1.25 = demo-derived 125% bounds
    },
    "learner": {
        "discount": (float, 0.99),
        "utd": (float, 10.0),
        "actor_update_every": (int, 20),
        "seed_steps": (int, 5000),
        "replay_capacity": (int, 1_000_000),
        "batch_size": (int, 256),
        "num_critics": (int, 10),
        "num_sampled_critics": (int, 2),
        "polyak_tau": (float, 0.005),
        "init_temperature": (float, 1.0),
        "learnable_temperature": (bool, True),
        "lr": (float, 3e-4),
        "offline_ratio": (float, 0.5),
    },
    "reverse": {
        "delta": (int, 4),
        "m": (int, 3),
        "phi": (float, 3.0),
        "p_geom": (float, 0.5),
        "dynamic_timelimit": (bool, True),
        "global_v": (int, 20),
        "global_threshold": (float, 0.9),
    },
    "forward": {
        "k": (int, 5),
        "omega": (float, 0.75),
        "beta": (float, 0.1),
        "staleness_coef": (float, 0.1),
        "n_levels": (int, 1000),
    },
    "trainer": {
        "mode": (str, "rfcl"),
        "stage1_budget": (int, 150_000),
        "stage2_budget": (int, 500_000),
        "eval_interval": (int, 10_000),
        "eval_episodes": (int, 50),
        "num_envs": (int, 1),
        "steps_per_env": (int, 1),
        "wall_time_mode": (bool, False),
        "seed": (int, 0),
    },
}


class ConfigError(ValueError):
    pass


def _parse_value(section: str, key: str, raw: str):
    typ, _ = SCHEMA[section][key]
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {typ.__name__}") from None


def default_config() -> dict:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def validate(cfg: dict):
    checks = [
        ("trainer", "mode", lambda v: v in MODES, f"must be one of {MODES}"),
        ("trainer", "stage1_budget", lambda v: v > 0, "must be > 0"),
        ("trainer", "stage2_budget", lambda v: v > 0, "must be > 0"),
        ("trainer", "num_envs", lambda v: v >= 1, "must be >= 1"),
        ("trainer", "steps_per_env", lambda v: v >= 1, "must be >= 1"),
        ("reverse", "delta", lambda v: v >= 1, "must be >= 1"),
        ("reverse", "m", lambda v: v >= 1, "must be >= 1"),
        ("reverse", "phi", lambda v: v > 0, "must be > 0"),
        ("reverse", "p_geom", lambda v: 0 < v < 1, "must be in (0, 1)"),
        ("forward", "k", lambda v: v >= 1, "must be >= 1"),
        ("forward", "omega", lambda v: 0 < v < 1, "must be in (0, 1)"),
        ("forward", "beta", lambda v: v > 0, "must be > 0"),
        ("forward", "staleness_coef", lambda v: 0 <= v <= 1, "must be in [0, 1]"),
        ("forward", "n_levels", lambda v: v >= 1, "must be >= 1"),
        ("learner", "discount", lambda v: 0 <= v <= 1, "must be in [0, 1]"),
        ("learner", "polyak_tau", lambda v: 0 <= v <= 1, "must be in [0, 1]"),
        ("learner", "utd", lambda v: v > 0, "must be > 0"),
        ("learner", "batch_size", lambda v: v >= 1, "must be >= 1"),
        ("learner", "offline_ratio", lambda v: 0 < v <= 1, "must be in (0, 1]"),
        ("env", "goal_radius", lambda v: v > 0, "must be > 0"),
    ]
    for sec, key, ok, msg in checks:
        if not ok(cfg[sec][key]):
            raise ConfigError(f"{sec}.{key}={cfg[sec][key]}: {msg}")


def apply_wall_time_mode(cfg: dict):
    """Wall-time hyperparameter set: 8 envs x 4 steps per burst, 16 updates each burst."""
    if cfg["trainer"]["wall_time_mode"]:
        cfg["learner"]["utd"] = 0.5
        cfg["learner"]["actor_update_every"] = 1
        cfg["trainer"]["num_envs"] = 8
        cfg["trainer"]["steps_per_env"] = 4


def load_config(path=None, text: str = None, overrides: dict = None) -> dict:
    cfg = default_config()
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if path is not None:
        with open(path) as f:
            text = f.read()
    if text is not None:
        parser.read_string(text)
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
                cfg[section][key] = _parse_value(section, key, raw)
    for dotted, value in (overrides or {}).items():
        sec, key = dotted.split(".", 1)
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown key {dotted}")
        cfg[sec][key] = _parse_value(sec, key, str(value)) if isinstance(value, str) else value
    apply_wall_time_mode(cfg)
    validate(cfg)
    return cfg


def serialize_config(cfg: dict) -> str:
    """Canonical text form; parse(serialize(parse(x))) is the identity."""
    buf = io.StringIO()
    for sec in SCHEMA:
        buf.write(f"[{sec}]\n")
        for key in SCHEMA[sec]:
            v = cfg[sec][key]
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            buf.write(f"{key} = {v}\n")
        buf.write("\n")
    return buf.getvalue()
