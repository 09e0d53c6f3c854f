"""Dirac-operator experiments: Dixmier volume forms, spectral-triple checks and curvature."""

from __future__ import annotations

import logging
import math
from typing import List, Optional

import numpy as np

from ..algebra import TorusElement
from ..config import ExperimentConfig
from ..gauge import GaugeConfig
from ..operators import (
    DiracOperator,
    LatticeWindow,
    Perturbation,
    assemble_dirac,
    curvature_two_form_check,
    zero_perturbation,
)
from ..reporting import Check, ExperimentResult, Table
from ..runner import ComputationRunner
from ..spectral import (
    DixmierEstimate,
    Spectrum,
    commutator_norm_sweep,
    dirac_matrix,
    dixmier_volume_form,
    gauge_commutator_deviation,
    hermitian_eigen,
    log_cesaro_estimate,
    spectral_triple_report,
)
from .common import spectrum_params, window

logger = logging.getLogger(__name__)

CURVATURE_TOL = 1e-10
DEGENERATE_TOL = 1e-12
BLOCK_TOL = 1e-12
DIXMIER_INVARIANCE_RTOL = 0.10
DIXMIER_IDENTITY_RTOL = 0.10
HARMONIC_RTOL = 0.02
HARMONIC_TERMS = 1_000_000
COMMUTATOR_STABILITY_RTOL = 0.01
COMMUTATOR_SIZES = (16, 32)


def harmonic_calibration(terms: int = HARMONIC_TERMS) -> DixmierEstimate:
    """Log-Cesaro estimate of the harmonic sequence ``1/k``; the exact value is 1."""
    mu = 1.0 / np.arange(1, terms + 1, dtype=float)
    cutoffs = sorted({int(round(R)) for R in np.geomspace(1000, terms, 10)})
    return log_cesaro_estimate(mu, cutoffs)


def default_test_elements(theta: float) -> List[TorusElement]:
    """``1`` and ``(X + X*)/2``."""
    x = TorusElement.x(theta)
    return [TorusElement.identity(theta), 0.5 * (x + x.star)]


class DiracApi:
    """Spectral-triple experiments built on the magnetic Dirac operator."""

    async def dirac_spectrum(self, runner: ComputationRunner, D: DiracOperator) -> Spectrum:
        r = (D.r, TorusElement.zero(D.cfg.theta))
        params = spectrum_params("D", D.cfg, r, D.window.N, vectors=True)
        tol = runner.settings.eigen_reconstruction_tol
        return await runner.spectrum(
            "D", params, lambda: hermitian_eigen(dirac_matrix(D), vectors=True, tol=tol, source="D")
        )

    async def run_dixmier(
        self, runner: ComputationRunner, config: ExperimentConfig
    ) -> ExperimentResult:
        """Dixmier volume forms of test elements for the unperturbed and perturbed Dirac operators.

        The Dirac perturbation is ``perturbation.r1``. Test elements default to
        ``1`` and ``(X + X*)/2``.

        **Checks**
        - harmonic calibration of the log-Cesaro estimator within 2% at ``R = 10^6``;
        - change of each volume form under the perturbation below 10% of
          ``max(|v0|, 1)``;
        - ``v(1)`` near ``pi`` for the gauge-free operator (gating from ``N = 48``).
        """
        cfg, w = config.gauge, window(config)
        r = config.perturbation_pair()[0]
        elements = [e.to_element() for e in config.dixmier.elements] or default_test_elements(cfg.theta)
        D0 = await runner.run_blocking(assemble_dirac, cfg, None, w)
        Dm = await runner.run_blocking(assemble_dirac, cfg, r, w)
        spec0 = await self.dirac_spectrum(runner, D0)
        specm = spec0 if r.is_zero() else await self.dirac_spectrum(runner, Dm)
        cutoffs = config.dixmier.cutoffs

        result = ExperimentResult(kind="dixmier")
        calibration = await runner.run_blocking(harmonic_calibration)
        result.checks.append(
            Check.at_most("harmonic_calibration", abs(calibration.extrapolated - 1.0), HARMONIC_RTOL)
        )
        table = Table(("element", "operator", "R", "partial_sum"))
        per_element = []
        for k, x in enumerate(elements):
            est0 = await runner.run_blocking(dixmier_volume_form, D0, x, w, cutoffs, spectrum=spec0)
            estm = await runner.run_blocking(dixmier_volume_form, Dm, x, w, cutoffs, spectrum=specm)
            for label, est in (("unperturbed", est0), ("perturbed", estm)):
                for R, value in est.partial_sums:
                    table.add(k, label, R, value)
            rel = abs(estm.extrapolated - est0.extrapolated) / max(abs(est0.extrapolated), 1.0)
            result.checks.append(
                Check.at_most(f"volume_form_invariance[{k}]", rel, DIXMIER_INVARIANCE_RTOL)
            )
            per_element.append(
                {
                    "element": x.to_json_dict(),
                    "unperturbed": est0.extrapolated,
                    "unperturbed_uncertainty": est0.uncertainty,
                    "perturbed": estm.extrapolated,
                    "perturbed_uncertainty": estm.uncertainty,
                    "kernel_dimension": est0.kernel_dimension,
                }
            )
            if x.coeffs == {(0, 0): 1 + 0j} and cfg.gauge == (0.0, 0.0):
                rel_pi = abs(est0.extrapolated - math.pi) / math.pi
                result.checks.append(
                    Check.at_most(
                        "identity_volume_pi", rel_pi, DIXMIER_IDENTITY_RTOL, gating=w.N >= 48
                    )
                )
        result.tables["dixmier"] = table
        result.values = {"calibration": calibration.extrapolated, "elements": per_element}
        return result

    async def run_curvature_form(
        self, runner: ComputationRunner, config: ExperimentConfig
    ) -> ExperimentResult:
        """Curvature 2-form shift identity plus its ``r = 0`` and ``G = 0`` degenerate cases."""
        cfg, r, w = config.gauge, config.perturbation_pair(), window(config)
        cases = [
            ("configured", cfg, r),
            ("r_zero", cfg, zero_perturbation(cfg.theta)),
            ("gauge_zero", cfg.model_copy(update={"beta": (0.0, 0.0)}), r),
        ]
        result = ExperimentResult(kind="curvature-form")
        table = Table(("case", "shift_identity", "flatness", "unperturbed"))
        for name, case_cfg, case_r in cases:
            report = await runner.run_blocking(curvature_two_form_check, case_cfg, case_r, w)
            table.add(
                name,
                report.shift_identity_deviation,
                report.flatness_deviation,
                report.unperturbed_deviation,
            )
            tol = CURVATURE_TOL if name == "configured" else DEGENERATE_TOL
            result.checks.append(
                Check.at_most(f"shift_identity[{name}]", report.shift_identity_deviation, tol)
            )
            result.checks.append(
                Check.at_most(f"flatness[{name}]", report.flatness_deviation, tol)
            )
            result.checks.append(
                Check.at_most(f"unperturbed[{name}]", report.unperturbed_deviation, tol)
            )
        result.tables["curvature-form"] = table
        return result

    async def suite(
        self, runner: ComputationRunner, config: ExperimentConfig
    ) -> ExperimentResult:
        """Even spectral-triple checks, kernel dimension, commutator stability and gauge commutators."""
        cfg, w = config.gauge, window(config, min(config.window_N, 16))
        r = config.perturbation_pair()[0]
        result = ExperimentResult(kind="dirac")
        table = Table(("operator", "quantity", "value"))

        free_cfg = cfg.model_copy(update={"beta": (0.0, 0.0)})
        D_free = await runner.run_blocking(assemble_dirac, free_cfg, None, w)
        D0 = await runner.run_blocking(assemble_dirac, cfg, None, w)
        Dm = await runner.run_blocking(assemble_dirac, cfg, r, w)

        reports = {}
        for label, D in (("free", D_free), ("unperturbed", D0), ("perturbed", Dm)):
            spectrum = await self.dirac_spectrum(runner, D) if D.hermitian else None
            report = await runner.run_blocking(spectral_triple_report, D, spectrum)
            reports[label] = report
            for name in (
                "anticommutation",
                "grading_square",
                "grading_selfadjoint",
                "square_offdiagonal",
                "hermiticity_defect",
                "kernel_dimension",
                "smallest_nonzero",
            ):
                table.add(label, name, getattr(report, name))
            result.checks.append(Check(f"anticommutation[{label}]", report.anticommutation == 0.0, report.anticommutation, 0.0))
            result.checks.append(Check.at_most(f"grading[{label}]", max(report.grading_square, report.grading_selfadjoint), 0.0))
            if report.square_block_deviation is not None:
                table.add(label, "square_block_deviation", report.square_block_deviation)
                result.checks.append(
                    Check.at_most(f"square_blocks[{label}]", report.square_block_deviation, BLOCK_TOL)
                )
        result.checks.append(
            Check.at_most("square_offdiagonal[unperturbed]", reports["unperturbed"].square_offdiagonal, BLOCK_TOL)
        )
        kernel = reports["free"].kernel_dimension
        result.checks.append(Check("kernel_dimension_free", kernel == 2, kernel, 2))

        x = TorusElement.x(cfg.theta)
        sweep = await runner.run_blocking(commutator_norm_sweep, D0, x, COMMUTATOR_SIZES)
        for N, norm in sweep:
            table.add("unperturbed", f"commutator_norm[N={N}]", norm)
        norms = [n for _, n in sweep]
        stability = abs(norms[-1] - norms[-2]) / max(norms[-1], 1e-300)
        result.checks.append(Check.at_most("commutator_stability", stability, COMMUTATOR_STABILITY_RTOL))

        independence, unit_gap = await runner.run_blocking(gauge_commutator_deviation, Dm, x)
        table.add("perturbed", "gauge_commutator_independence", independence)
        table.add("perturbed", "magnetic_commutator_unit_gap", unit_gap)
        result.checks.append(Check.at_most("gauge_commutator_independence", independence, BLOCK_TOL))
        result.checks.append(Check.at_most("magnetic_commutator_unit", unit_gap, BLOCK_TOL))

        result.tables["dirac"] = table
        result.values = {
            "kernel_dimension_free": kernel,
            "commutator_norms": [[N, n] for N, n in sweep],
            "smallest_nonzero": {k: v.smallest_nonzero for k, v in reports.items()},
        }
        return result
