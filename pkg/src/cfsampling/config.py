"""Experiment configuration: defaults, ``key = value`` files and CLI overrides.

Precedence is flags > config file > defaults. List values are comma
separated; ``#`` starts a comment.
"""
from __future__ import annotations

from pathlib import Path

from .samplers import PERCENTS, SAMPLER_NAMES

DEFAULTS: dict = {
    "datasets": [],
    "scenarios": ["explicit", "implicit", "sequential"],
    "samplers": list(SAMPLER_NAMES),
    "percents": list(PERCENTS),
    "seeds": [0],
    "algorithms": ["PopRec", "BiasOnly", "MF", "NeuMFLite"],
    "grid.lr": [0.001, 0.006, 0.02],
    "grid.dim": [4, 8, 16, 32, 50],
    "grid.dropout": [0.0, 0.3, 0.5],
    "dim": 16,
    "reg": 1e-4,
    "max_epochs": 50,
    "patience": 5,
    "min_interactions": 3,
    "proxy.epochs": 20,
    "proxy.lr": 0.006,
    "featurize.seed": 0,
    "genie.mode": "regression",
    "genie.seed": 0,
    "genie.hidden": 32,
    "genie.lr": 1e-3,
    "genie.steps": 2000,
    "jobs": 1,
}

LIST_KEYS = {k for k, v in DEFAULTS.items() if isinstance(v, list)}
# settings that change how fast, not what, a run computes
RUNTIME_KEYS = {"jobs"}


class ConfigError(ValueError):
    pass


def _scalar(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        try:
            return int(text)
        except ValueError:
            return float(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, str):
        return text
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_value(key: str, text: str):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown setting {key!r}")
    like = DEFAULTS[key]
    try:
        if key in LIST_KEYS:
            items = [t for t in text.split(",") if t.strip()]
            # an empty default list (datasets) holds names
            elem = like[0] if like else ""
            return [_scalar(t, elem) for t in items]
        return _scalar(text, like)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def read_config(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def resolve(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    cfg = {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULTS.items()}
    if path is not None:
        cfg.update(read_config(path))
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in DEFAULTS:
            raise ConfigError(f"unknown setting {k!r}")
        cfg[k] = v
    return cfg


def experiment_view(cfg: dict) -> dict:
    """The part of ``cfg`` that determines results (hashed into every record)."""
    return {k: v for k, v in sorted(cfg.items()) if k not in RUNTIME_KEYS}
