"""Run configuration: defaults, TOML files and dotted command-line overrides."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


class Variant(str, enum.Enum):
    PACE = "pace"
    NO_ABSTRACTIONS = "no_abstractions"
    GREEDY = "greedy"

    @classmethod
    def parse(cls, value: str | Variant) -> Variant:
        if isinstance(value, Variant):
            return value
        key = value.strip().lower().replace("-", "_")
        aliases = {"noabstractions": "no_abstractions", "none": "no_abstractions", "noabs": "no_abstractions"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown variant {value!r}") from None


@dataclass(frozen=True)
class RunConfig:
    # schedule
    steps: int = 20
    epochs: int = 40
    # bandit
    alpha: float = 0.5
    gamma: float = 0.99
    epsilon: float = 0.1
    q_init: float = 0.0
    # networks
    lr: float = 0.0009
    batch: int = 32
    temperature: float = 1.0
    lam_ps: float = 0.1
    beta_ps: float = 1.0
    vocab: int = 30
    hidden: int = 200
    n_cap: int = 64
    # symbolic side
    prune_keep: int = 3
    max_candidate_length: int = 6
    # data
    shape_spec: str = "builtin"
    n_shapes: int = 31
    dataset_seed: int = 0
    # run
    variant: Variant = Variant.PACE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        positive = ["steps", "epochs", "lr", "batch", "temperature", "vocab", "hidden", "n_cap", "prune_keep"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("epsilon must lie in [0, 1]")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0 <= self.q_init <= 1:
            raise ConfigError("q_init must lie in [0, 1]")
        if self.max_candidate_length < 2:
            raise ConfigError("max_candidate_length must be at least 2")
        if self.n_shapes < 2:
            raise ConfigError("n_shapes must be at least 2")

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["variant"] = self.variant.value
        return out


_FIELDS = {f.name: f for f in fields(RunConfig)}
_SECTIONS = {"schedule", "bandit", "networks", "symbolic", "data", "run"}


def _coerce(name: str, value: Any) -> Any:
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    default = getattr(RunConfig(), name)
    if isinstance(default, Variant):
        return Variant.parse(str(value))
    if isinstance(value, str) and not isinstance(default, str):
        text = value.strip()
        try:
            if isinstance(default, bool):
                return text.lower() in ("1", "true", "yes")
            if isinstance(default, int):
                return int(text)
            if isinstance(default, float):
                return float(text)
        except ValueError:
            raise ConfigError(f"bad value {value!r} for {name}") from None
    if isinstance(default, float) and isinstance(value, int):
        return float(value)
    if isinstance(default, int) and not isinstance(value, int):
        raise ConfigError(f"bad value {value!r} for {name}")
    return value


def flatten_toml(data: dict) -> dict[str, Any]:
    """Accept keys at top level or inside the named sections; reject anything else."""
    flat: dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in _SECTIONS:
                raise ConfigError(f"unknown config section [{key}]")
            for sub, v in value.items():
                if isinstance(v, dict):
                    raise ConfigError(f"nested section [{key}.{sub}] is not supported")
                flat[sub] = v
        else:
            flat[key] = value
    return flat


def parse_overrides(items: list[str] | None) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section {section!r}")
        out[key] = value
    return out


def load_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None, base: RunConfig | None = None
) -> RunConfig:
    """defaults < base < file < overrides."""
    values = (base or RunConfig()).to_dict()
    if path is not None:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
        for key, value in flatten_toml(data).items():
            values[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        values[key] = _coerce(key, value)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def dump_toml(config: RunConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        else:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"
