"""Pydantic models for run configurations."""
from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, confloat, conint, root_validator, validator

from .degree import DegreeDistribution, from_descriptor
from .graph import MODES

DIST_ALIASES = {"negbin": "negative_binomial", "nb": "negative_binomial"}


def parse_dist_flag(text: str) -> Dict[str, Any]:
    """``poisson:5``, ``regular:3``, ``negbin:2,0.75`` or ``table:1=0.7,4=0.2,45=0.1``."""
    kind, _, rest = text.partition(":")
    kind = DIST_ALIASES.get(kind.strip(), kind.strip())
    args = [part.strip() for part in rest.split(",") if part.strip()]
    if kind == "poisson" and len(args) == 1:
        return {"kind": kind, "lam": args[0]}
    if kind == "regular" and len(args) == 1:
        return {"kind": kind, "r": args[0]}
    if kind == "negative_binomial" and len(args) == 2:
        return {"kind": kind, "r": args[0], "p": args[1]}
    if kind == "table" and args:
        table = {}
        for item in args:
            degree, sep, mass = item.partition("=")
            if not sep:
                raise ValueError(f"table entry {item!r} is not of the form k=p")
            table[degree.strip()] = mass.strip()
        return {"kind": kind, "table": table}
    raise ValueError(f"cannot parse distribution {text!r}")


def parse_grid(value: Any) -> Any:
    """Comma list ``0.1,0.2`` or range ``start:stop:count`` into a list of floats."""
    if not isinstance(value, str):
        return value
    if value.count(":") == 2:
        start, stop, count = value.split(":")
        return np.linspace(float(start), float(stop), int(count)).tolist()
    return [float(part) for part in value.split(",") if part.strip()]


class DistributionSpec(BaseModel):
    kind: Literal["poisson", "negative_binomial", "regular", "table"]
    lam: Optional[confloat(gt=0)] = None
    r: Optional[conint(ge=0)] = None
    p: Optional[confloat(gt=0, lt=1)] = None
    table: Optional[Dict[int, confloat(ge=0)]] = None

    class Config:
        extra = "forbid"

    @root_validator(skip_on_failure=True)
    def _required_parameters(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        needed = {
            "poisson": ("lam",),
            "negative_binomial": ("r", "p"),
            "regular": ("r",),
            "table": ("table",),
        }[values["kind"]]
        missing = [name for name in needed if values.get(name) is None]
        if missing:
            raise ValueError(f"{values['kind']} distribution needs {', '.join(missing)}")
        if values["kind"] == "negative_binomial" and values["r"] < 1:
            raise ValueError("negative binomial r must be at least 1")
        for name in ("lam", "r", "p", "table"):
            if name not in needed:
                values[name] = None
        return values

    def descriptor(self) -> Dict[str, Any]:
        return {key: value for key, value in self.dict().items() if value is not None}

    def build(self) -> DegreeDistribution:
        return from_descriptor(self.descriptor())


class RunConfig(BaseModel):
    dist: DistributionSpec
    n: conint(ge=1) = 1000
    beta: confloat(ge=0) = 0.5
    alpha_s: confloat(gt=0, le=1) = 0.9
    T: confloat(gt=0) = 2.0
    h: Optional[confloat(gt=0)] = None
    seed: Optional[conint(ge=0)] = None
    replicas: conint(ge=1) = 1
    mode: str = "erased"
    out: Optional[str] = None
    threads: Optional[conint(ge=1)] = None

    class Config:
        extra = "forbid"

    @validator("dist", pre=True)
    def _parse_dist(cls, value: Any) -> Any:
        if isinstance(value, str):
            return parse_dist_flag(value)
        return value

    @validator("mode")
    def _known_mode(cls, value: str) -> str:
        if value not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        return value

    @validator("h")
    def _step_within_horizon(cls, value: Optional[float], values: Dict[str, Any]) -> Optional[float]:
        if value is not None and "T" in values and value > values["T"]:
            raise ValueError("ODE step h exceeds the horizon T")
        return value

    def resolved(self) -> Dict[str, Any]:
        """Config embedded in outputs; execution-only fields are left out so reruns stay byte-identical."""
        return self.dict(exclude={"out", "threads"})


class StochasticConfig(RunConfig):
    seed: conint(ge=0)


class SimulateConfig(StochasticConfig):
    validate_state: bool = False
    export_graph: bool = False


class LlnConfig(RunConfig):
    pass


class FcltConfig(RunConfig):
    ellipse_times: Optional[List[confloat(ge=0)]] = None
    level: confloat(gt=0, lt=1) = 0.95

    _grid = validator("ellipse_times", pre=True, allow_reuse=True)(parse_grid)

    @root_validator(skip_on_failure=True)
    def _times_within_horizon(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        times = values.get("ellipse_times")
        if times and max(times) > values["T"]:
            raise ValueError("ellipse_times exceed the horizon T")
        return values


class ProfileConfig(RunConfig):
    betas: List[confloat(ge=0)]
    time_points: conint(ge=2) = 101
    level: confloat(gt=0) = 0.99
    deadline: Optional[confloat(ge=0)] = None

    _grid = validator("betas", pre=True, allow_reuse=True)(parse_grid)

    @validator("betas")
    def _ascending(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("beta grid is empty")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("beta grid must be strictly ascending")
        return value


class CompareConfig(StochasticConfig):
    replicas: conint(ge=2) = 100
    checkpoints: List[confloat(ge=0)] = [0.5, 1.0]
    mode: str = "multigraph"
    half_width: confloat(gt=0) = 0.05
    initial_covariance: Literal["independent", "empirical", "zero"] = "independent"

    _grid = validator("checkpoints", pre=True, allow_reuse=True)(parse_grid)

    @root_validator(skip_on_failure=True)
    def _checkpoints_within_horizon(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if not values["checkpoints"]:
            raise ValueError("at least one checkpoint is required")
        if max(values["checkpoints"]) > values["T"]:
            raise ValueError("checkpoints exceed the horizon T")
        return values


class CostConfig(RunConfig):
    gamma: confloat(gt=0) = 1.0
    c: Optional[confloat(gt=0)] = None
    method: Literal["monte_carlo", "gaussian"] = "gaussian"
    replicas: conint(ge=1) = 100

    @root_validator(skip_on_failure=True)
    def _seed_for_monte_carlo(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if values["method"] == "monte_carlo" and values.get("seed") is None:
            raise ValueError("seed is required for the monte_carlo method")
        return values


class DiffusionConfig(StochasticConfig):
    replicas: conint(ge=1) = 5
    output_points: conint(ge=2) = 201
