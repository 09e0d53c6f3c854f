"""Helpers shared by the experiment Api classes."""

from __future__ import annotations

from typing import Any, Dict, Optional

from ..config import ExperimentConfig
from ..gauge import GaugeConfig
from ..operators import LatticeWindow, Perturbation


def window(config: ExperimentConfig, N: Optional[int] = None) -> LatticeWindow:
    return LatticeWindow(config.window_N if N is None else N)


def spectrum_params(
    operator: str,
    cfg: GaugeConfig,
    r: Perturbation,
    N: int,
    *,
    vectors: bool = False,
) -> Dict[str, Any]:
    """Canonical cache-key parameters for a spectrum."""
    return {
        "operator": operator,
        "gauge": cfg.model_dump(mode="json"),
        "r": [element.to_json_dict() for element in r],
        "N": N,
        "vectors": vectors,
    }


def kind_of(method_name: str) -> str:
    """``run_heat_trace`` -> ``heat-trace``."""
    return method_name.removeprefix("run_").replace("_", "-")
