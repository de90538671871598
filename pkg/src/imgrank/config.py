"""Run configuration: ``key = value`` lines with ``#`` comments."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    nmf_rank: int = 30
    pca_dims: int = 30
    nmf_max_iter: int = 500
    nmf_tol: float = 1e-6
    graph_k: int = 10
    alpha: float = 0.99
    sigma: object = "AUTO"
    n_folds: int = 10
    seed: int = 42

    def __post_init__(self):
        if self.nmf_rank < 1:
            raise ConfigError("nmf_rank must be >= 1")
        if self.pca_dims < 1:
            raise ConfigError("pca_dims must be >= 1")
        if self.nmf_max_iter < 1:
            raise ConfigError("nmf_max_iter must be >= 1")
        if self.nmf_tol < 0:
            raise ConfigError("nmf_tol must be >= 0")
        if self.graph_k < 1:
            raise ConfigError("graph_k must be >= 1")
        if not 0 <= self.alpha < 1:
            raise ConfigError("alpha must lie in [0, 1)")
        if self.sigma != "AUTO" and not (isinstance(self.sigma, float) and self.sigma > 0):
            raise ConfigError("sigma must be AUTO or a positive real")
        if self.n_folds < 2:
            raise ConfigError("n_folds must be ≥ 2")

    def lines(self) -> list[str]:
        return [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]


def _convert(key, raw, default):
    if key == "sigma":
        if raw.upper() == "AUTO":
            return "AUTO"
        return float(raw)
    if isinstance(default, int):
        return int(raw)
    return float(raw)


def parse_config(text: str) -> Config:
    defaults = {f.name: f.default for f in fields(Config)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (t.strip() for t in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"unknown config key '{key}'")
        try:
            values[key] = _convert(key, raw, defaults[key])
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {raw!r}") from None
    return Config(**values)


def load_config(path) -> Config:
    return parse_config(Path(path).read_text(encoding="utf-8"))
