"""Gauge-field data and the scalar symbols of the unperturbed magnetic Laplacian.

Two symbol conventions are carried side by side:

- ``literal``: the formulas exactly as printed, with imaginary gauge shifts
  ``n_j - 2*pi*i*G_j`` and the positive ``1/2 |n|^2`` Laplacian symbol. Used
  for algebraic-identity checks.
- ``hermitian``: real gauge shifts ``n_j - 2*pi*G_j`` and the metric form
  ``sum g^{jk} (n_j - 2 pi G_j)(n_k - 2 pi G_k)``. Real and non-positive for a
  negative-definite metric, so it generates a decaying heat semigroup. Used for
  all spectral and heat-trace work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .utils import validate_direction

SymbolMode = Literal["literal", "hermitian"]
ArrayLike = Union[int, float, np.ndarray]

DEFAULT_METRIC: Tuple[Tuple[float, float], Tuple[float, float]] = ((-0.5, 0.0), (0.0, -0.5))


class GaugeConfig(BaseModel):
    """Deformation angle, magnetic field, gauge offsets, metric and symbol mode."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    theta: float = Field(default=0.0, ge=0.0, lt=1.0)
    psi: Tuple[Tuple[int, int], Tuple[int, int]] = ((0, 0), (0, 0))
    beta: Tuple[float, float] = (0.0, 0.0)
    metric: Tuple[Tuple[float, float], Tuple[float, float]] = DEFAULT_METRIC
    symbol_mode: SymbolMode = "hermitian"

    @field_validator("psi")
    @classmethod
    def _psi_antisymmetric(cls, value: Tuple[Tuple[int, int], Tuple[int, int]]):
        if value[0][0] != 0 or value[1][1] != 0:
            raise ValueError("psi must have a zero diagonal (psi_jj = 0).")
        if value[0][1] != -value[1][0]:
            raise ValueError("psi must be antisymmetric (psi_jk = -psi_kj).")
        return value

    @model_validator(mode="after")
    def _metric_matches_mode(self) -> "GaugeConfig":
        if self.symbol_mode != "hermitian":
            return self
        g = self.metric_array
        if g[0, 0] >= 0 or g[1, 1] >= 0:
            raise ValueError("hermitian mode needs negative diagonal metric entries.")
        sym = 0.5 * (g + g.T)
        if np.linalg.eigvalsh(sym).max() >= 0:
            raise ValueError("hermitian mode needs a negative-definite metric.")
        return self

    @property
    def metric_array(self) -> np.ndarray:
        return np.asarray(self.metric, dtype=float)

    @property
    def gauge(self) -> Tuple[float, float]:
        return (float(self.beta[0]), float(self.beta[1]))

    @property
    def is_hermitian(self) -> bool:
        return self.symbol_mode == "hermitian"

    def shift(self, j: int) -> complex:
        """Gauge shift subtracted from ``d_j``: ``2 pi G_j`` or ``2 pi i G_j``."""
        g = gauge_component(self, j)
        return 2 * math.pi * g if self.is_hermitian else 2j * math.pi * g

    def with_mode(self, symbol_mode: SymbolMode) -> "GaugeConfig":
        return self.model_copy(update={"symbol_mode": symbol_mode})


@dataclass(frozen=True)
class MagneticSymbol:
    """Value of the unperturbed magnetic Laplacian symbol on one monomial."""

    mode: Tuple[int, int]
    value: complex


def gauge_component(cfg: GaugeConfig, k: int) -> float:
    """Constant gauge component ``G_k = beta_k`` (affine part evaluated at the origin)."""
    k = validate_direction(k)
    return float(cfg.beta[k - 1])


def gamma_constant(cfg: GaugeConfig) -> complex:
    """Constant produced by the field matrix in the ordered cross terms.

    Each ordered pair ``j != k`` contributes ``-pi*i*g^{jk}*psi_{jk}``; the two
    contributions cancel whenever the metric is symmetric.
    """
    g = cfg.metric_array
    psi = cfg.psi
    return -1j * math.pi * (g[0, 1] * psi[0][1] + g[1, 0] * psi[1][0])


def _split(n: Union[Sequence[int], Tuple[ArrayLike, ArrayLike]]) -> Tuple[ArrayLike, ArrayLike]:
    return n[0], n[1]


def eta_symbol(cfg: GaugeConfig, n) -> complex:
    """Printed gauge correction ``eta(n)`` (literal convention, complex)."""
    n1, n2 = _split(n)
    g = cfg.metric_array
    G1, G2 = cfg.gauge
    pi = math.pi
    diagonal = (1j * pi * G1 * n1 + 2 * pi**2 * G1**2) + (1j * pi * G2 * n2 + 2 * pi**2 * G2**2)
    a1 = n1 - 2j * pi * G1
    a2 = n2 - 2j * pi * G2
    cross = g[0, 1] * a1 * a2 + g[1, 0] * a2 * a1
    return diagonal + cross


def l0_symbol(cfg: GaugeConfig, n) -> complex:
    """Symbol of the gauge-free Laplacian ``L0``."""
    n1, n2 = _split(n)
    if cfg.is_hermitian:
        g = cfg.metric_array
        return g[0, 0] * n1 * n1 + g[1, 1] * n2 * n2
    return 0.5 * (n1 * n1 + n2 * n2)


def l0m_symbol(cfg: GaugeConfig, n) -> complex:
    """Symbol of the unperturbed magnetic Laplacian on the monomial ``n``.

    Works elementwise when ``n`` is a pair of integer arrays.
    """
    n1, n2 = _split(n)
    if cfg.is_hermitian:
        g = cfg.metric_array
        G1, G2 = cfg.gauge
        a1 = n1 - 2 * math.pi * G1
        a2 = n2 - 2 * math.pi * G2
        return g[0, 0] * a1 * a1 + g[1, 1] * a2 * a2 + (g[0, 1] + g[1, 0]) * a1 * a2
    return 0.5 * (n1 * n1 + n2 * n2) + eta_symbol(cfg, (n1, n2)) + gamma_constant(cfg)


def t0_symbol(cfg: GaugeConfig, n) -> complex:
    """Symbol of the gauge correction ``T0 = L0m - L0``."""
    if cfg.is_hermitian:
        return l0m_symbol(cfg, n) - l0_symbol(cfg, n)
    return eta_symbol(cfg, n) + gamma_constant(cfg)


def magnetic_symbol(cfg: GaugeConfig, n: Sequence[int]) -> MagneticSymbol:
    value = complex(l0m_symbol(cfg, n))
    if cfg.is_hermitian:
        value = complex(value.real, 0.0)
    return MagneticSymbol(mode=(int(n[0]), int(n[1])), value=value)


def symbol_table(cfg: GaugeConfig, half_width: int) -> List[MagneticSymbol]:
    """Symbols on the square window ``|n1|, |n2| <= half_width``, row-major."""
    return [
        magnetic_symbol(cfg, (n1, n2))
        for n1 in range(-half_width, half_width + 1)
        for n2 in range(-half_width, half_width + 1)
    ]
