"""Stochastic-flow ensembles and scalar-mode moment experiments."""

from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np

from ..algebra import TorusElement, inner_product
from ..config import ExperimentConfig
from ..gauge import l0m_symbol
from ..reporting import Check, ExperimentResult, Table
from ..runner import ComputationRunner
from ..stochastic import (
    FlowEnsemble,
    discrete_mean,
    drift_convergence,
    flow_unperturbed,
    moment_recursion,
    perturbed_expectation,
    sample_brownian,
    simulate_ensemble,
    unperturbed_eigenvalue,
    variance_decomposition,
    variance_report,
)
from .common import window
from .spectrum import SpectrumApi

logger = logging.getLogger(__name__)

SIGMA_MULTIPLE = 3.0
PATH_IDENTITY_TOL = 1e-12
MOMENT_TOL = 1e-8
HOMOMORPHISM_PATHS = 100


def homomorphism_defect(
    m: Tuple[int, int], n: Tuple[int, int], dt: float, steps: int, seed: int
) -> float:
    """``max |j(m) j(n) - j(m + n)|`` over the first paths of the ensemble."""
    worst = 0.0
    total = (m[0] + n[0], m[1] + n[1])
    for path in sample_brownian(dt, steps, HOMOMORPHISM_PATHS, seed):
        product = flow_unperturbed(m, path) * flow_unperturbed(n, path)
        worst = max(worst, float(np.abs(product - flow_unperturbed(total, path)).max()))
    return worst


class FlowApi:
    """Monte Carlo vacuum expectations and moment recursions."""

    def __init__(self) -> None:
        self._spectrum_api = SpectrumApi()

    async def run_flow(
        self, runner: ComputationRunner, config: ExperimentConfig
    ) -> ExperimentResult:
        """Unperturbed and magnetic flow ensembles for each configured mode.

        **Checks**
        - ensemble means within 3 standard errors of the exact means of the
          simulated schemes (the continuous-time oracles are tabulated next to them);
        - ``|j| = 1`` along every path and ``f = j + F`` per path;
        - phase homomorphism ``j(m) j(n) = j(m + n)`` on sample paths.
        """
        mc = config.mc
        dt = mc.dt or runner.settings.default_dt
        cfg = config.gauge
        result = ExperimentResult(kind="flow")
        table = Table(
            (
                "n1",
                "n2",
                "t",
                "mean_unperturbed",
                "stderr_unperturbed",
                "oracle_unperturbed",
                "mean_magnetic",
                "stderr_magnetic",
                "oracle_magnetic",
                "mean_correction",
            )
        )
        ensembles = []
        for mode in mc.modes:
            ensemble: FlowEnsemble = await runner.run_blocking(
                simulate_ensemble,
                tuple(mode),
                cfg,
                dt=dt,
                steps=mc.steps,
                n_paths=mc.n_paths,
                seed=mc.seed,
                record_times=mc.record_times,
                phase_convention=mc.phase_convention,
                scheme=mc.scheme,
            )
            ensembles.append(ensemble)
            lam0 = unperturbed_eigenvalue(ensemble.mode, mc.phase_convention)
            for i, t in enumerate(ensemble.times):
                k = int(round(t / dt))
                ref_j = math.exp(lam0 * k * dt)
                ref_f = discrete_mean(lam0, ensemble.tau, dt, k, mc.scheme)
                table.add(
                    mode[0],
                    mode[1],
                    t,
                    ensemble.unperturbed_mean[i],
                    ensemble.unperturbed_stderr[i],
                    ensemble.unperturbed_reference()[i],
                    ensemble.magnetic_mean[i],
                    ensemble.magnetic_stderr[i],
                    ensemble.magnetic_reference()[i],
                    ensemble.correction_mean[i],
                )
                tag = f"{mode[0]},{mode[1]}@t={t:g}"
                dev_j = abs(ensemble.unperturbed_mean[i] - ref_j)
                dev_f = abs(ensemble.magnetic_mean[i] - ref_f)
                result.checks.append(
                    Check.at_most(
                        f"unperturbed_mean[{tag}]",
                        dev_j,
                        SIGMA_MULTIPLE * ensemble.unperturbed_stderr[i] + 1e-15,
                    )
                )
                result.checks.append(
                    Check.at_most(
                        f"magnetic_mean[{tag}]",
                        dev_f,
                        SIGMA_MULTIPLE * ensemble.magnetic_stderr[i] + 1e-15,
                    )
                )
            result.checks.append(
                Check.at_most(
                    f"unit_modulus[{mode[0]},{mode[1]}]",
                    ensemble.max_unit_modulus_defect,
                    PATH_IDENTITY_TOL,
                )
            )
            result.checks.append(
                Check.at_most(
                    f"telescoping[{mode[0]},{mode[1]}]",
                    ensemble.max_telescoping_defect,
                    PATH_IDENTITY_TOL,
                )
            )
        result.tables["flow"] = table

        if len(mc.modes) >= 2:
            m, n = tuple(mc.modes[0]), tuple(mc.modes[1])
            defect = await runner.run_blocking(homomorphism_defect, m, n, dt, mc.steps, mc.seed)
            result.checks.append(Check.at_most("phase_homomorphism", defect, PATH_IDENTITY_TOL))

        drift = {}
        for ensemble in ensembles:
            coarse, fine, ratio = drift_convergence(ensemble.tau, ensemble.times[-1], dt)
            drift[f"{ensemble.mode[0]},{ensemble.mode[1]}"] = {
                "error_dt": coarse,
                "error_half_dt": fine,
                "ratio": ratio,
            }
        result.values = {"dt": dt, "n_paths": mc.n_paths, "scheme": mc.scheme, "drift": drift}

        if cfg.is_hermitian:
            result.tables["flow-perturbed"] = await self._perturbed_table(runner, config)
        return result

    async def _perturbed_table(self, runner: ComputationRunner, config: ExperimentConfig) -> Table:
        """``<X, exp(t Lm) X>`` against the unperturbed ``exp(t l0m(1, 0))``."""
        cfg, r, w = config.gauge, config.perturbation_pair(), window(config, min(config.window_N, 16))
        spectrum = await self._spectrum_api.lm_spectrum(runner, cfg, r, w, vectors=True)
        x = TorusElement.x(cfg.theta)
        lam = float(np.real(l0m_symbol(cfg, (1, 0))))
        table = Table(("t", "perturbed", "unperturbed"))
        for t in config.mc.record_times:
            evolved = await runner.run_blocking(
                perturbed_expectation, cfg, r, x, w, t, spectrum=spectrum
            )
            table.add(t, inner_product(evolved, x), math.exp(t * lam))
        return table

    async def run_moments(
        self, runner: ComputationRunner, config: ExperimentConfig
    ) -> ExperimentResult:
        """Moment recursion up to ``max_order``, both variance routes and the decomposition."""
        mom = config.moments
        substeps = runner.settings.quadrature_substeps
        result = ExperimentResult(kind="moments")
        table = Table(("order", "t", "value", "reference", "stderr"))
        for order in range(1, mom.max_order + 1):
            report = await runner.run_blocking(
                moment_recursion, order, mom.lam, mom.times, substeps=substeps
            )
            for t, v, ref, err in zip(report.times, report.values, report.reference, report.mc_stderr):
                table.add(order, t, v, ref, err)
            result.checks.append(
                Check.at_most(f"moment_order_{order}", report.max_deviation, MOMENT_TOL)
            )
        result.tables["moments"] = table

        if mom.lam != 0:
            variance = await runner.run_blocking(variance_report, mom.lam, mom.times, substeps=substeps)
            vtable = Table(
                ("t", "recursion", "printed", "discrepancy", "second_moment", "printed_second_moment")
            )
            for row in zip(
                variance.times,
                variance.values,
                variance.reference,
                variance.discrepancy,
                variance.second_moment,
                variance.printed_second_moment,
            ):
                vtable.add(*row)
            result.tables["moments-variance"] = vtable
            exact = [math.exp(t * mom.lam) - math.exp(2 * t * mom.lam) for t in variance.times]
            result.checks.append(
                Check.at_most(
                    "variance_recursion",
                    max(abs(v - e) for v, e in zip(variance.values, exact)),
                    MOMENT_TOL,
                )
            )
            result.checks.append(
                Check(
                    "variance_routes_agree",
                    max(abs(d) for d in variance.discrepancy) <= MOMENT_TOL,
                    max(abs(d) for d in variance.discrepancy),
                    MOMENT_TOL,
                    gating=False,
                    detail="printed closed form against the recursion",
                )
            )

        decomposition = variance_decomposition(mom.lam0, mom.tau, mom.times)
        dtable = Table(("t", "var_unperturbed", "m_y", "var_magnetic"))
        for row in zip(
            decomposition.times,
            decomposition.var_unperturbed,
            decomposition.m_y,
            decomposition.var_magnetic,
        ):
            dtable.add(*row)
        result.tables["moments-decomposition"] = dtable
        return result
