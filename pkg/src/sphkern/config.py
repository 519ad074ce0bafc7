"""Experiment configuration files (TOML) with strict validation.

Unknown keys anywhere in the document are errors.  See ``configs/`` for
examples and the README for the full schema.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .kernels import KernelSpec
from .losses import LossWeights
from .optimizer import DEFAULT_REFERENCE_SIZE, OptimConfig


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class KernelSection(_Strict):
    family: Literal["truncated", "rbf", "gendist"]
    q: int = Field(ge=3)
    coefficients: Optional[dict[int, float]] = None
    sigma: Optional[float] = None
    s: Optional[float] = None

    @model_validator(mode="after")
    def _family_fields(self):
        needed = {"truncated": "coefficients", "rbf": "sigma", "gendist": "s"}[self.family]
        if getattr(self, needed) is None:
            raise ValueError(f"kernel family {self.family!r} needs '{needed}'")
        extra = [k for k in ("coefficients", "sigma", "s") if k != needed and getattr(self, k) is not None]
        if extra:
            raise ValueError(f"kernel family {self.family!r} does not take {extra}")
        return self

    def to_spec(self) -> KernelSpec:
        """The centered kernel used by the uniformity loss and MMD measurements."""
        if self.family == "truncated":
            return KernelSpec.truncated(self.q, self.coefficients, centered=True)
        if self.family == "rbf":
            return KernelSpec.rbf(self.q, self.sigma, centered=True)
        return KernelSpec.gendist(self.q, self.s, centered=True)


class LossSection(_Strict):
    kind: Literal["sfrik", "auh", "simclr", "vicreg"] = "sfrik"
    lam: float = Field(1.0, ge=0)
    mu: float = Field(0.5, gt=0)
    tau: float = Field(0.15, gt=0)
    t_scale: float = Field(2.5, gt=0)
    nu: float = Field(1.0, gt=0)
    gamma: float = Field(1.0, gt=0)
    epsilon: float = Field(1e-4, gt=0)

    def to_weights(self) -> LossWeights:
        return LossWeights(**self.model_dump(exclude={"kind"}))


class OptimSection(_Strict):
    steps: int = Field(1000, ge=1)
    step_size: Optional[float] = Field(None, gt=0)
    eval_every: int = Field(100, ge=1)
    reference_size: int = Field(DEFAULT_REFERENCE_SIZE, ge=2)


class DataSection(_Strict):
    n: int = Field(ge=1)
    clusters: int = Field(0, ge=0)
    noise_angle: float = Field(0.0, ge=0)
    init: Literal["views", "antipodal_frames"] = "views"


class OutputSection(_Strict):
    dir: str = "out"
    trajectory: str = "trajectory.csv"
    summary: str = "summary.json"


class ExperimentConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    kernel: KernelSection
    loss: LossSection = LossSection()
    optim: OptimSection = OptimSection()
    data: DataSection
    output: OutputSection = OutputSection()

    def optim_config(self) -> OptimConfig:
        o = self.optim
        return OptimConfig(self.kernel.to_spec(), self.loss.to_weights(), self.loss.kind, o.steps,
                           o.step_size, o.eval_every, self.seed, o.reference_size)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(data)
        cfg.optim_config()
    except (ValidationError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(data)
