"""Run configuration: a flat ``key = value`` file mirroring the CLI flags."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

from .tree_learn.search import PUBLISHED_LEARNING_RATES, PUBLISHED_N_ESTIMATORS, HyperGrid

# keys that do not influence any output byte
_NOT_HASHED = {"output_dir", "force"}


@dataclass(frozen=True)
class RunConfig:
    input_csv: str = "cookiepopup.csv"
    output_dir: str = "out"
    seed: int = 42
    seeds_count: int = 10
    train_fraction: Fraction = Fraction(2, 3)
    k_clusters: int = 6
    grid_rates: tuple[float, ...] = PUBLISHED_LEARNING_RATES
    grid_estimators: tuple[int, ...] = PUBLISHED_N_ESTIMATORS
    cv_folds: int = 3
    max_depth: int = 3
    importance_trees: int = 100
    lexicon: str | None = None
    column_map: str | None = None
    provider: str = "offline-default"
    provider_fallback: bool = True
    force: bool = field(default=False, compare=False)

    @property
    def grid(self) -> HyperGrid:
        return HyperGrid(tuple(self.grid_rates), tuple(self.grid_estimators), self.cv_folds, self.max_depth)

    @property
    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.seeds_count)]

    def to_text(self, hashed_only: bool = False) -> str:
        lines = []
        for f in fields(self):
            if hashed_only and f.name in _NOT_HASHED:
                continue
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **values) -> "RunConfig":
        values = {k: v for k, v in values.items() if v is not None}
        return replace(self, **{k: _coerce(k, v) for k, v in values.items()})

    def config_hash(self) -> str:
        """Digest of every output-relevant setting plus the bytes of the input files."""
        h = hashlib.sha256()
        for f in fields(self):
            if f.name in _NOT_HASHED:
                continue
            h.update(f"{f.name}={_format(getattr(self, f.name))}\n".encode())
        for path in (self.input_csv, self.lexicon, self.column_map):
            if path and Path(path).is_file():
                h.update(hashlib.sha256(Path(path).read_bytes()).digest())
        return h.hexdigest()[:16]


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    return str(value)


_TYPES = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, value):
    if key not in _TYPES:
        raise KeyError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        if key == "train_fraction":
            return Fraction(value)
        if key in ("grid_rates", "grid_estimators"):
            return tuple(value)
        return value
    text = value.strip()
    if key in ("seed", "seeds_count", "k_clusters", "cv_folds", "max_depth", "importance_trees"):
        return int(text)
    if key == "train_fraction":
        return Fraction(text)
    if key == "grid_rates":
        return tuple(float(x) for x in text.split(",") if x.strip())
    if key == "grid_estimators":
        return tuple(int(x) for x in text.split(",") if x.strip())
    if key in ("provider_fallback", "force"):
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key} expects a boolean, got {text!r}")
        return text.lower() in ("true", "1", "yes")
    if key in ("lexicon", "column_map"):
        return text or None
    return text


def parse_config(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), value)
    return values


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Defaults, then the file (if any), then non-None ``overrides``."""
    cfg = RunConfig()
    if path is not None:
        cfg = replace(cfg, **parse_config(Path(path).read_text(encoding="utf-8")))
    return cfg.with_overrides(**overrides)
