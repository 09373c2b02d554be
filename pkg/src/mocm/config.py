"""Run configuration shared by the pipeline and the command line."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import tomli

from .engine import OptimizerConfig
from .mapping import MappingKind


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    population_size: int = 50
    max_iterations: int = 1000
    max_same: int = 5
    seed: int = 0
    kappa: float = 0.05
    no_predecessor_i2: float = 0.0
    swap_indicator_args: bool = False
    mapping: str = "linear"
    gamma: Optional[float] = None
    svd_dim: Optional[int] = None
    alpha: float = 1.0
    lambda_orth: float = 1.0
    warm_start: bool = False
    repair: str = "soft"
    freeze_rotation: bool = False
    threads: int = 1
    data: Optional[str] = None
    out: Optional[str] = None
    verbosity: str = "WARNING"

    def validate(self) -> "RunConfig":
        try:
            self.optimizer()
            MappingKind(self.mapping)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.mapping == MappingKind.SVD.value and not (self.svd_dim and self.svd_dim > 0):
            raise ConfigError("svd mapping needs a positive svd_dim")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.lambda_orth < 0:
            raise ConfigError("lambda_orth must be nonnegative")
        if self.repair not in ("soft", "hard"):
            raise ConfigError("repair must be 'soft' or 'hard'")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def optimizer(self, seed: Optional[int] = None) -> OptimizerConfig:
        return OptimizerConfig(
            population_size=self.population_size,
            max_iterations=self.max_iterations,
            max_same=self.max_same,
            seed=self.seed if seed is None else seed,
            kappa=self.kappa,
            no_predecessor_i2=self.no_predecessor_i2,
            swap_indicator_args=self.swap_indicator_args,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_toml(path) -> dict:
    """Flat table of RunConfig keys; a ``[run]`` table is accepted too."""
    with open(path, "rb") as fh:
        try:
            doc = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return doc.get("run", doc)
