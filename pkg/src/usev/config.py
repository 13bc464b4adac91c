"""Plain-text key=value run configs.

One file can carry simulation, model, and training keys together; each
builder picks out the fields it knows. Values are coerced by the type of
the dataclass default: ints, floats, bools, and comma-separated tuples.
"""

from __future__ import annotations

import dataclasses
import json

from .harness import TrainConfig
from .losses import LossWeights
from .mixsim import SimConfig
from .model import UsevConfig


def parse_kv_file(path) -> dict[str, str]:
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key = value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _coerce(default, raw: str):
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(x) for x in raw.split(","))
    if isinstance(default, dict):
        return json.loads(raw)
    if isinstance(default, LossWeights):
        parts = [float(x) for x in raw.split(",")]
        return LossWeights(*parts)
    if default is None:
        return raw
    return raw


def _build(cls, kv: dict, prefix: str = ""):
    defaults = cls()
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = prefix + f.name
        if key in kv:
            kwargs[f.name] = _coerce(getattr(defaults, f.name), kv[key])
    return cls(**kwargs)


def sim_config(kv: dict) -> SimConfig:
    return _build(SimConfig, kv)


def model_config(kv: dict) -> UsevConfig:
    return _build(UsevConfig, kv)


def train_config(kv: dict) -> TrainConfig:
    return _build(TrainConfig, kv)
