"""Moyal-plane experiments: Fourier quadrature, twisted convolution and the magnetic heat trace."""

from __future__ import annotations

import math
from typing import Any, Dict, List

import numpy as np

from ..config import ExperimentConfig, EuclideanConfig
from ..euclidean import (
    MagneticHeatParams,
    fourier_transform,
    gaussian,
    involution,
    inverse_fourier_transform,
    magnetic_heat_trace,
    named_test_function,
    phi_trace_euclidean,
    sample_function,
    twisted_convolve,
    weyl_relation_defect,
)
from ..reporting import Check, ExperimentResult, Table
from ..runner import ComputationRunner

HEAT_TRACE_TOL = 1e-6
FOURIER_TOL = 1e-8
ROUND_TRIP_TOL = 1e-6
TRACE_PROPERTY_TOL = 1e-8
ASSOCIATIVITY_TOL = 1e-6
CONVOLUTION_TOL = 1e-8
WEYL_TOL = 1e-8


def fourier_checks(settings: EuclideanConfig) -> Dict[str, float]:
    """Gaussian self-duality, round trip and ``g^(0) = phi(g)`` on the configured grid."""
    g = sample_function(gaussian(), dim=2, extent=settings.extent, spacing=settings.spacing)
    g_hat = fourier_transform(g)
    exact = sample_function(gaussian(), dim=2, extent=settings.extent, spacing=settings.spacing)
    back = inverse_fourier_transform(g_hat)
    center = (g_hat.center, g_hat.center)
    return {
        "gaussian_transform": float(np.abs(g_hat.values - exact.values).max()),
        "round_trip": float(np.abs(back.values - g.values).max()),
        "zero_frequency": abs(complex(g_hat.values[center]) - phi_trace_euclidean(g)),
    }


def convolution_checks(spacing: float) -> Dict[str, float]:
    """Twisted-product identities on a coarse grid of narrow Fourier-side Gaussians."""

    def modulated(u1, u2):
        return gaussian(0.7)(u1, u2) * np.exp(1j * u1)

    g = sample_function(gaussian(0.7), dim=2, spacing=spacing, domain="fourier")
    h = sample_function(modulated, dim=2, spacing=spacing, domain="fourier")
    k = sample_function(gaussian(0.6), dim=2, spacing=spacing, domain="fourier")
    gh = twisted_convolve(g, h)
    hg = twisted_convolve(h, g)
    left = twisted_convolve(gh, k)
    right = twisted_convolve(g, twisted_convolve(h, k))

    line = sample_function(gaussian(), dim=1, spacing=1.0 / 32.0, domain="fourier")
    ordinary = twisted_convolve(line, line)
    oracle = math.sqrt(math.pi) * np.exp(-line.axis**2 / 4)

    twice = involution(involution(h))
    return {
        "trace_property": abs(phi_trace_euclidean(gh) - phi_trace_euclidean(hg)),
        "associativity": float(np.abs(left.values - right.values).max()),
        "ordinary_convolution": float(np.abs(ordinary.values - oracle).max()),
        "involution": float(np.abs(twice.values - h.values).max()),
    }


def weyl_checks() -> float:
    x = np.linspace(-4.0, 4.0, 257)
    fn = gaussian()
    pairs = [((0.5, 1.0), (-0.3, 0.7)), ((1.2, -0.4), (0.25, 2.0))]
    return max(weyl_relation_defect(u, v, fn, x) for u, v in pairs)


def heat_trace_rows(settings: EuclideanConfig) -> List[Dict[str, Any]]:
    g = sample_function(
        named_test_function(settings.test_function),
        dim=2,
        extent=settings.extent,
        spacing=settings.spacing,
    )
    rows = []
    for G1, G2 in ((0.0, 0.0), (settings.G1, settings.G2)):
        for t in settings.t_values:
            trace = magnetic_heat_trace(MagneticHeatParams(G1, G2, t), g)
            volume = t * trace.analytic
            rows.append(
                {
                    "G1": G1,
                    "G2": G2,
                    "t": t,
                    "analytic": trace.analytic,
                    "quadrature": trace.quadrature,
                    "printed": trace.printed,
                    "g_hat_zero": trace.g_hat_zero,
                    "factor_discrepancy": trace.factor_discrepancy,
                    "volume_form": volume,
                    "dixmier_volume": math.pi * volume,
                }
            )
    return rows


class EuclideanApi:
    """Experiments on the Moyal plane with a uniform magnetic field."""

    async def run_euclidean(
        self, runner: ComputationRunner, config: ExperimentConfig
    ) -> ExperimentResult:
        """Fourier, twisted-product, Weyl-system and magnetic heat-trace checks.

        **Returns**
        - `ExperimentResult` with tables ``euclidean`` (heat traces per gauge and
          time) and ``euclidean-test-function`` (the sampled test function).
        """
        settings = config.euclidean
        result = ExperimentResult(kind="euclidean")
        g = sample_function(
            named_test_function(settings.test_function),
            dim=2,
            extent=settings.extent,
            spacing=settings.spacing,
        )
        result.checks.append(Check("test_function_decays", g.decays(), settings.test_function))

        fourier = await runner.run_blocking(fourier_checks, settings)
        result.checks.append(Check.at_most("gaussian_transform", fourier["gaussian_transform"], FOURIER_TOL))
        result.checks.append(Check.at_most("round_trip", fourier["round_trip"], ROUND_TRIP_TOL))
        result.checks.append(Check.at_most("zero_frequency", fourier["zero_frequency"], FOURIER_TOL))

        convolution = await runner.run_blocking(convolution_checks, settings.convolution_spacing)
        result.checks.append(Check.at_most("trace_property", convolution["trace_property"], TRACE_PROPERTY_TOL))
        result.checks.append(Check.at_most("associativity", convolution["associativity"], ASSOCIATIVITY_TOL))
        result.checks.append(
            Check.at_most("ordinary_convolution", convolution["ordinary_convolution"], CONVOLUTION_TOL)
        )
        result.checks.append(Check("involution", convolution["involution"] == 0.0, convolution["involution"], 0.0))

        weyl = await runner.run_blocking(weyl_checks)
        result.checks.append(Check.at_most("weyl_relation", weyl, WEYL_TOL))

        rows = await runner.run_blocking(heat_trace_rows, settings)
        table = Table(
            ("G1", "G2", "t", "analytic", "quadrature", "printed", "volume_form", "dixmier_volume")
        )
        for row in rows:
            table.add(
                row["G1"], row["G2"], row["t"], row["analytic"], row["quadrature"],
                row["printed"], row["volume_form"], row["dixmier_volume"],
            )
            result.checks.append(
                Check.at_most(
                    f"heat_trace[G=({row['G1']:g},{row['G2']:g}),t={row['t']:g}]",
                    abs(row["quadrature"] - row["analytic"]),
                    HEAT_TRACE_TOL,
                )
            )
        result.checks.append(
            Check(
                "printed_closed_form",
                not any(row["factor_discrepancy"] for row in rows),
                max(abs(row["printed"] - row["analytic"]) for row in rows),
                gating=False,
                detail="closed form without the g^(0) factor",
            )
        )
        result.tables["euclidean"] = table
        result.tables["euclidean-test-function"] = Table(
            ("u1", "u2", "re", "im"), list(g.to_rows())
        )
        result.values = {
            "extent": settings.extent,
            "spacing": settings.spacing,
            "fourier": fourier,
            "convolution": convolution,
            "weyl_relation": weyl,
        }
        return result
