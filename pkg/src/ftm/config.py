"""Run configuration: a flat ``key = value`` file with ``#`` comments.

Precedence when resolving a run: command-line overrides, then the
``FTM_SEED`` environment variable (seed only), then the file, then the
defaults below.  Unknown keys are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigurationError, ParseError
from .model import ModelConfig
from .training import TrainConfig

__all__ = ["RunConfig", "parse_config_text", "load_config", "resolve_config"]

SETTINGS = ("transductive", "inductive", "all")


@dataclass(frozen=True)
class RunConfig:
    # data
    dataset: str = ""
    has_header: bool = True
    bipartite: bool = False
    train_ratio: float = 0.70
    validation_ratio: float = 0.15
    test_ratio: float = 0.15
    new_node_fraction: float = 0.10
    # model
    layers: int = 2
    heads: int = 2
    frame_length: int = 20
    timeline_length: int = 3
    hidden_dim: int = 32
    time_dim: int = 172
    # training
    learning_rate: float = 1e-4
    epochs: int = 10
    batch_size: int = 200
    negatives: int = 1
    patience: int = 3
    # evaluation
    setting: str = "transductive"
    attack_intensities: tuple[float, ...] = (0.0, 0.01, 0.10, 0.20, 0.30, 0.40, 0.50)
    attack_repetitions: int = 5
    transfer_dataset: str = ""
    sweep_axis: str = "neighborhood"
    stability_nodes: int = 10
    stability_times: int = 20
    # run
    output_dir: str = "run"
    seed: int = 0
    log_wall_time: bool = False

    def __post_init__(self):
        ratios = (self.train_ratio, self.validation_ratio, self.test_ratio)
        if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigurationError(f"split ratios must be nonnegative and sum to 1, got {ratios}")
        if self.setting not in SETTINGS:
            raise ConfigurationError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.sweep_axis not in ("neighborhood", "fraction"):
            raise ConfigurationError(f"sweep_axis must be neighborhood or fraction, got {self.sweep_axis!r}")
        if not self.output_dir:
            raise ConfigurationError("output_dir must be non-empty")

    def model_config(self, link_dim: int) -> ModelConfig:
        return ModelConfig(
            layers=self.layers,
            heads=self.heads,
            frame_length=self.frame_length,
            timeline_length=self.timeline_length,
            hidden_dim=self.hidden_dim,
            time_dim=self.time_dim,
            link_dim=link_dim,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            negatives=self.negatives,
            seed=self.seed,
            patience=self.patience,
        )

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.validation_ratio, self.test_ratio)

    def dumps(self) -> str:
        """Serialise in the config-file format; parsing the result gives back ``self``."""
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str) -> Any:
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigurationError(f"{key}: {exc}") from None
    return raw


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines into typed values (unknown keys rejected)."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key = key.strip()
        if key not in _TYPES:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path) -> dict[str, Any]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def resolve_config(
    file_values: Mapping[str, Any] | None = None,
    overrides: Mapping[str, str] | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """Merge defaults < file < ``FTM_SEED`` < overrides into a validated RunConfig.

    ``overrides`` hold raw strings as given on the command line.
    """
    environ = os.environ if environ is None else environ
    cfg = replace(RunConfig(), **dict(file_values or {})) if file_values else RunConfig()
    if environ.get("FTM_SEED", "").strip():
        cfg = replace(cfg, seed=_coerce("seed", environ["FTM_SEED"]))
    if overrides:
        typed = {}
        for k, v in overrides.items():
            if k not in _TYPES:
                raise ConfigurationError(f"unknown config key {k!r}")
            typed[k] = _coerce(k, v)
        cfg = replace(cfg, **typed)
    return cfg
