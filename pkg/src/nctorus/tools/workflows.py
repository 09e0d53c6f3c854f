"""The full-report workflow: every experiment family in one run."""

from __future__ import annotations

import asyncio
import logging
from typing import Awaitable, Callable, List, Tuple

from ..config import ExperimentConfig
from ..exceptions import NCTorusError
from ..reporting import Check, ExperimentResult
from ..runner import ComputationRunner
from .algebra import AlgebraApi
from .dirac import DiracApi
from .euclidean import EuclideanApi
from .flow import FlowApi
from .spectrum import SpectrumApi

logger = logging.getLogger(__name__)

MAX_WORKFLOW_CONCURRENCY = 8

Step = Callable[[ComputationRunner, ExperimentConfig], Awaitable[ExperimentResult]]


class WorkflowApi:
    """Orchestrates the other Api classes."""

    def __init__(self) -> None:
        self._algebra_api = AlgebraApi()
        self._spectrum_api = SpectrumApi()
        self._dirac_api = DiracApi()
        self._flow_api = FlowApi()
        self._euclidean_api = EuclideanApi()

    def steps(self) -> List[Tuple[str, Step]]:
        """Sub-experiments in report order."""
        return [
            ("algebra", self._algebra_api.suite),
            ("identities", self._spectrum_api.identities),
            ("spectrum", self._spectrum_api.run_spectrum),
            ("heat-trace", self._spectrum_api.run_heat_trace),
            ("volume-invariance", self._spectrum_api.run_volume_invariance),
            ("dirac", self._dirac_api.suite),
            ("dixmier", self._dirac_api.run_dixmier),
            ("curvature-form", self._dirac_api.run_curvature_form),
            ("flow", self._flow_api.run_flow),
            ("moments", self._flow_api.run_moments),
            ("euclidean", self._euclidean_api.run_euclidean),
        ]

    async def run_full_report(
        self,
        runner: ComputationRunner,
        config: ExperimentConfig,
        max_concurrency: int = 4,
    ) -> ExperimentResult:
        """Run every sub-experiment concurrently and merge the results in a fixed order.

        **Parameters**
        - `runner` (`ComputationRunner`): shared runner; spectra computed by one
          step are reused by the others.
        - `config` (`ExperimentConfig`): the run configuration; each step reads the
          sections it needs.
        - `max_concurrency` (`int`): sub-experiments in flight at once.

        **Returns**
        - `ExperimentResult` with checks prefixed by the step name. A step that
          raises becomes a single failed check carrying the error message.
        """
        if max_concurrency < 1:
            raise NCTorusError("max_concurrency must be >= 1.")
        if max_concurrency > MAX_WORKFLOW_CONCURRENCY:
            raise NCTorusError(f"max_concurrency must be <= {MAX_WORKFLOW_CONCURRENCY}.")

        semaphore = asyncio.Semaphore(max_concurrency)
        steps = self.steps()

        async def run_step(name: str, step: Step) -> ExperimentResult:
            async with semaphore:
                logger.info("full-report: starting %s", name)
                return await step(runner, config)

        outcomes = await asyncio.gather(
            *(run_step(name, step) for name, step in steps),
            return_exceptions=True,
        )

        report = ExperimentResult(kind="full-report")
        for (name, _), outcome in zip(steps, outcomes):
            if isinstance(outcome, BaseException):
                if not isinstance(outcome, Exception):
                    raise outcome
                logger.error("full-report: %s failed: %s", name, outcome)
                report.checks.append(Check(f"{name}.completed", False, str(outcome)))
                continue
            report.merge(outcome, prefix=name)
        return report
