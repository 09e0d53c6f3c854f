"""JSON experiment configuration: schema, loading and diagnostics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError
from pydantic import field_validator, model_validator

from .algebra import TorusElement, is_self_adjoint
from .exceptions import ConfigError, ValidationError
from .gauge import GaugeConfig
from .operators import Perturbation, zero_perturbation
from .spectral import T_MAX, validity_window
from .utils import config_hash

logger = logging.getLogger(__name__)

ExperimentKind = Literal[
    "spectrum",
    "heat-trace",
    "volume-invariance",
    "dixmier",
    "flow",
    "moments",
    "euclidean",
    "curvature-form",
    "full-report",
]

HEAT_TRACE_KINDS = ("heat-trace", "volume-invariance", "full-report")
HERMITIAN_KINDS = ("spectrum", "heat-trace", "volume-invariance", "dixmier", "full-report")


class ElementModel(BaseModel):
    """Wire form of a torus element: ``theta`` and ``[n1, n2, re, im]`` rows."""

    model_config = ConfigDict(extra="forbid")

    theta: float = Field(ge=0.0, lt=1.0)
    coeffs: List[Tuple[int, int, float, float]] = Field(default_factory=list)

    def to_element(self) -> TorusElement:
        return TorusElement.from_json_dict(self.model_dump())


class PerturbationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r1: Optional[ElementModel] = None
    r2: Optional[ElementModel] = None


class MonteCarloConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_paths: int = Field(default=10_000, ge=2)
    dt: Optional[float] = Field(default=None, gt=0)
    steps: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0)
    modes: List[Tuple[int, int]] = Field(default_factory=lambda: [(1, 0), (1, 1), (2, 1)])
    record_times: List[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])
    phase_convention: Literal["natural", "two_pi"] = "natural"
    scheme: Literal["multiplicative", "additive"] = "multiplicative"

    @field_validator("record_times")
    @classmethod
    def _increasing(cls, value: List[float]) -> List[float]:
        return _strictly_increasing(value, allow_zero=True)

    @model_validator(mode="after")
    def _inside_horizon(self) -> "MonteCarloConfig":
        if self.dt is not None and self.record_times and self.record_times[-1] > self.dt * self.steps + 1e-12:
            raise ValueError("record_times must not exceed dt * steps.")
        return self


class MomentsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    lam: float = Field(default=-0.5, alias="lambda", le=0.0)
    max_order: int = Field(default=2, ge=1)
    times: List[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])
    lam0: float = Field(default=-0.5, le=0.0)
    tau: float = -0.1

    @field_validator("times")
    @classmethod
    def _increasing(cls, value: List[float]) -> List[float]:
        return _strictly_increasing(value, allow_zero=True)


class EuclideanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    G1: float = 0.1
    G2: float = 0.2
    t_values: List[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0])
    test_function: Literal["gaussian", "bump"] = "gaussian"
    extent: float = Field(default=16.0, gt=0)
    spacing: float = Field(default=1.0 / 32.0, gt=0)
    convolution_spacing: float = Field(default=0.25, gt=0)

    @field_validator("t_values")
    @classmethod
    def _increasing(cls, value: List[float]) -> List[float]:
        return _strictly_increasing(value)


class DixmierConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    elements: List[ElementModel] = Field(default_factory=list)
    cutoffs: Optional[List[int]] = None


class ExperimentConfig(BaseModel):
    """One run of the laboratory."""

    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    gauge: GaugeConfig = Field(default_factory=GaugeConfig)
    perturbation: Optional[PerturbationConfig] = None
    window_N: int = Field(default=16, ge=4, le=64)
    t_grid: List[float] = Field(default_factory=list)
    mc: MonteCarloConfig = Field(default_factory=MonteCarloConfig)
    moments: MomentsConfig = Field(default_factory=MomentsConfig)
    euclidean: EuclideanConfig = Field(default_factory=EuclideanConfig)
    dixmier: DixmierConfig = Field(default_factory=DixmierConfig)
    output_dir: Optional[Path] = None
    matrix_dump: Literal["none", "csv", "npz"] = "none"

    @field_validator("t_grid")
    @classmethod
    def _t_grid_increasing(cls, value: List[float]) -> List[float]:
        return _strictly_increasing(value)

    @model_validator(mode="after")
    def _perturbation_theta(self) -> "ExperimentConfig":
        if self.perturbation is None:
            return self
        for name in ("r1", "r2"):
            element = getattr(self.perturbation, name)
            if element is not None and element.theta != self.gauge.theta:
                raise ValueError(f"perturbation.{name}.theta must equal gauge.theta.")
        return self

    def perturbation_pair(self) -> Perturbation:
        r1, r2 = zero_perturbation(self.gauge.theta)
        if self.perturbation is not None:
            if self.perturbation.r1 is not None:
                r1 = self.perturbation.r1.to_element()
            if self.perturbation.r2 is not None:
                r2 = self.perturbation.r2.to_element()
        return r1, r2

    def effective_t_grid(self) -> List[float]:
        """``t_grid`` or, when empty, 12 points spanning the validity window."""
        if self.t_grid:
            return list(self.t_grid)
        t_min, t_max = validity_window(self.window_N)
        t_min = min(t_min, t_max / 2)
        step = (t_max - t_min) / 11
        return [t_min + k * step for k in range(12)]

    def payload(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json", by_alias=True)
        data.pop("output_dir", None)
        return data

    def digest(self) -> str:
        return config_hash(self.payload())


def _strictly_increasing(values: Sequence[float], *, allow_zero: bool = False) -> List[float]:
    values = [float(v) for v in values]
    if any(v < 0 or (v == 0 and not allow_zero) for v in values):
        raise ValueError("times must be positive.")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("times must be strictly increasing.")
    return values


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    level: Literal["error", "warning"]
    location: str
    message: str
    line: Optional[int] = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.level}: {where}{self.location}: {self.message}"


def _locate(text: str, loc: Sequence[Any]) -> Optional[int]:
    """1-based line of the deepest named key in ``loc``, if it occurs in ``text``."""
    for part in reversed(loc):
        if isinstance(part, str):
            needle = f'"{part}"'
            for number, line in enumerate(text.splitlines(), start=1):
                if needle in line:
                    return number
    return None


def _schema_diagnostics(exc: PydanticValidationError, text: str) -> List[Diagnostic]:
    out = []
    for error in exc.errors():
        loc = tuple(error.get("loc", ()))
        location = ".".join(str(p) for p in loc) or "<root>"
        out.append(Diagnostic("error", location, error.get("msg", "invalid value"), _locate(text, loc)))
    return out


def semantic_diagnostics(config: ExperimentConfig) -> List[Diagnostic]:
    """Invariant checks that the schema alone does not express."""
    out: List[Diagnostic] = []
    if config.kind in HERMITIAN_KINDS and not config.gauge.is_hermitian:
        out.append(
            Diagnostic("error", "gauge.symbol_mode", f"kind {config.kind!r} needs hermitian mode.")
        )
    if config.gauge.is_hermitian:
        for name, element in zip(("r1", "r2"), config.perturbation_pair()):
            if not is_self_adjoint(element):
                out.append(
                    Diagnostic("error", f"perturbation.{name}", "must be self-adjoint in hermitian mode.")
                )
    if config.kind in HEAT_TRACE_KINDS and config.t_grid:
        t_min, t_max = validity_window(config.window_N)
        below = [t for t in config.t_grid if t < t_min]
        above = [t for t in config.t_grid if t > T_MAX]
        if below:
            out.append(
                Diagnostic(
                    "warning",
                    "t_grid",
                    f"{len(below)} point(s) below t_min(N) = 46/N^2 = {t_min:.6g}; "
                    "the truncated trace undercounts there.",
                )
            )
        if above:
            out.append(
                Diagnostic("warning", "t_grid", f"{len(above)} point(s) above t_max = {t_max:g}.")
            )
    return out


def validate(config: ExperimentConfig) -> List[Diagnostic]:
    """All diagnostics for an already parsed configuration."""
    return semantic_diagnostics(config)


def parse_config(text: str) -> Tuple[Optional[ExperimentConfig], List[Diagnostic]]:
    """Parse JSON text; never raises for invalid input."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, [Diagnostic("error", "<json>", exc.msg, exc.lineno)]
    try:
        config = ExperimentConfig.model_validate(raw)
    except PydanticValidationError as exc:
        return None, _schema_diagnostics(exc, text)
    except ValidationError as exc:
        return None, [Diagnostic("error", "<config>", str(exc))]
    try:
        return config, validate(config)
    except ValidationError as exc:
        return config, [Diagnostic("error", "<config>", str(exc))]


def validate_text(text: str) -> List[Diagnostic]:
    return parse_config(text)[1]


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate a config file; any error-level diagnostic raises ``ConfigError``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    config, diagnostics = parse_config(text)
    errors = [d for d in diagnostics if d.level == "error"]
    if config is None or errors:
        raise ConfigError(f"invalid config {path}", errors or diagnostics)
    for diagnostic in diagnostics:
        logger.warning("%s", diagnostic)
    return config
