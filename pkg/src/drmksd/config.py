"""Experiment configuration: a versioned JSON document with no unknown keys."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import InvalidArgumentError

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DGPSection(_Strict):
    kind: Literal["gaussian1d", "intractable5d", "rbm2d"] = "gaussian1d"
    n: int = Field(200, ge=1)
    theta_true: tuple[float, float] = (1.0, 1.0)  # rbm2d only
    burn_in: int = Field(1000, ge=0)  # rbm2d only


class ModelSection(_Strict):
    family: Literal["gaussian_location", "intractable5d", "rbm2d"] = "gaussian_location"
    dim: int = Field(1, ge=1)  # gaussian_location only
    box: float = Field(10.0, gt=0)


class KernelSection(_Strict):
    family: Literal["imq", "rbf"] = "imq"
    c: float = Field(1.0, gt=0)
    lengthscale: float = Field(0.1, gt=0)
    beta: float = -0.5


class PropensitySection(_Strict):
    kind: Literal["logistic", "constant", "oracle", "corrupted"] = "logistic"
    features: Literal["identity", "squares"] = "identity"
    l2: float = Field(1e-5, ge=0)
    max_iter: int = Field(1000, ge=1)
    tol: float = Field(1e-8, gt=0)
    value: float = Field(0.5, gt=0, lt=1)  # constant only
    distortion: Literal["flip"] | float = "flip"  # corrupted only; applied to the oracle
    clip: float = Field(0.01, gt=0, lt=0.5)


class OutcomeSection(_Strict):
    kind: Literal["cme", "knn", "zero"] = "cme"
    ridge: float = Field(1e-3, gt=0)
    bandwidth: Optional[float] = Field(None, gt=0)
    k: int = Field(1, ge=1)


class OptimizerSection(_Strict):
    method: Literal["auto", "quadratic", "gd"] = "auto"
    steps: int = Field(1000, ge=1)
    step_size: float = Field(1e-2, gt=0)
    theta0: Optional[list[float]] = None


class Axis(_Strict):
    min: float
    max: float
    step: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.max < self.min:
            raise ValueError("axis max must not be below min")
        return self


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    dgp: DGPSection = DGPSection()
    model: ModelSection = ModelSection()
    kernel: KernelSection = KernelSection()
    propensity: PropensitySection = PropensitySection()
    outcome: OutcomeSection = OutcomeSection()
    variant: Literal["dr", "ipw", "pi"] = "dr"
    split: Literal["random", "sequential"] = "random"
    optimizer: OptimizerSection = OptimizerSection()
    grid: Optional[list[Axis]] = None
    level: float = Field(0.95, gt=0, lt=1)
    replications: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    out: Optional[str] = None


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{where}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise InvalidArgumentError(f"invalid config: {_describe(err)}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise InvalidArgumentError(f"cannot read config {path}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise InvalidArgumentError(f"{path}: line {err.lineno} column {err.colno}: {err.msg}") from None
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{path}: config must be a JSON object")
    return parse_config(data)


def dump_config(config: ExperimentConfig) -> str:
    """Serialize with every default spelled out."""
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def override(config: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy with top-level fields replaced (``None`` values are ignored); re-validated."""
    data = config.model_dump(mode="json")
    data.update({k: v for k, v in changes.items() if v is not None})
    return parse_config(data)
