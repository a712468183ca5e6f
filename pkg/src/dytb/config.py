"""Experiment configuration: JSON-native dataclass with lossless round trips,
environment overrides under the DYTB_ prefix and a content hash embedded in
every output artifact."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields


class ConfigError(ValueError):
    pass


ENV_PREFIX = "DYTB_"


@dataclass
class ExperimentConfig:
    dim: int = 1
    canvas_level: int = 6
    depth: int = 0                  # 0 means: use canvas_level
    measure: str = "lebesgue"       # lebesgue | random | sparse | csv:<path>
    measure_seed: int = 1
    kernel: str = "hilbert_mollified"
    lambda_model: str = "lebesgue"
    alpha: str = "1"
    system: str = "t1"              # t1 | random_bounded:<eps> | counterexample:<N>
    system_seed: int = 11
    forest_mode: str = "linf"       # linf | l2 | injected
    delta: float = 0.5
    s: float = 4.0
    r: int = 2
    gamma: str = "1/4"
    eta: float = 0.1
    k: int = 6
    trials: int = 10000
    seed: int = 7
    N: int = 8
    shift_d: int = 0
    shift_dp: int = 0
    depths: tuple[int, ...] = (4, 5, 6, 7, 8)
    out: str = "out"

    def __post_init__(self):
        self.depths = tuple(self.depths)
        if self.depth == 0:
            self.depth = self.canvas_level

    def to_json(self) -> str:
        d = asdict(self)
        d["depths"] = list(self.depths)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | None) -> "ExperimentConfig":
        if path is None:
            cfg = cls()
        else:
            try:
                with open(path) as fh:
                    cfg = cls.from_json(fh.read())
            except OSError as e:
                raise ConfigError(f"cannot read config: {e}") from None
        return cfg

    def apply_env(self) -> "ExperimentConfig":
        for f in fields(self):
            raw = os.environ.get(ENV_PREFIX + f.name.upper())
            if raw is None:
                continue
            setattr(self, f.name, _coerce(f.name, raw, getattr(self, f.name)))
        return self

    def apply_overrides(self, **kv) -> "ExperimentConfig":
        for name, value in kv.items():
            if value is None:
                continue
            if not hasattr(self, name):
                raise ConfigError(f"unknown config field {name!r}")
            setattr(self, name, value)
        return self

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _coerce(name: str, raw: str, current):
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(int(t) for t in raw.split(","))
    return raw
