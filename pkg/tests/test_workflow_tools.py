import asyncio

import pytest

from nctorus.config import ExperimentConfig
from nctorus.exceptions import NCTorusError, ValidationError
from nctorus.gauge import GaugeConfig
from nctorus.reporting import Check, ExperimentResult, Table
from nctorus.tools import DiracApi, EuclideanApi, FlowApi, SpectrumApi, WorkflowApi
from nctorus.tools.workflows import MAX_WORKFLOW_CONCURRENCY

THETA = 0.3

# X/20 + X*/20 + 1/10: self-adjoint at any theta
SMALL_PERTURBATION = {
    "r1": {"theta": THETA, "coeffs": [[0, 0, 0.1, 0.0], [1, 0, 0.05, 0.0], [-1, 0, 0.05, 0.0]]},
    "r2": {"theta": THETA, "coeffs": [[0, 1, 0.05, 0.0], [0, -1, 0.05, 0.0]]},
}


def _checks(result):
    return {c.name: c for c in result.checks}


@pytest.mark.asyncio
async def test_spectrum_of_unperturbed_operator_matches_symbol(runner):
    config = ExperimentConfig(kind="spectrum", window_N=4, gauge={"theta": THETA, "beta": (0.1, 0.2)})
    result = await SpectrumApi().run_spectrum(runner, config)
    assert result.passed
    assert "symbol_spectrum" in _checks(result)
    assert len(result.tables["spectrum"].rows) == 81
    assert result.values["dimension"] == 81


@pytest.mark.asyncio
async def test_spectra_are_shared_through_the_runner_cache(runner):
    api = SpectrumApi()
    config = ExperimentConfig(
        kind="volume-invariance",
        window_N=4,
        gauge={"theta": THETA},
        perturbation=SMALL_PERTURBATION,
    )
    spectrum = await api.run_spectrum(runner, config.model_copy(update={"perturbation": None}))
    assert spectrum.passed
    assert runner.cache_size == 1
    result = await api.run_volume_invariance(runner, config)
    assert runner.cache_size == 3
    assert result.values["reference"]["perturbation"]["coeffs"] == [[0, -1, 0.3, 0.0], [0, 1, 0.3, 0.0]]
    assert not _checks(result)["curvature_shift[reference]"].gating


@pytest.mark.asyncio
async def test_perturbed_spectrum_checks_trace(runner):
    config = ExperimentConfig(
        kind="spectrum", window_N=4, gauge={"theta": THETA}, perturbation=SMALL_PERTURBATION
    )
    result = await SpectrumApi().run_spectrum(runner, config)
    assert _checks(result)["trace_equals_eigenvalue_sum"].passed


@pytest.mark.asyncio
async def test_flat_heat_trace_gates_on_volume_inside_window(runner):
    config = ExperimentConfig(
        kind="heat-trace", window_N=24, t_grid=[0.08, 0.084, 0.088, 0.092, 0.096, 0.1]
    )
    result = await SpectrumApi().run_heat_trace(runner, config)
    checks = _checks(result)
    assert checks["trace_decreasing"].passed
    assert checks["flat_volume"].gating
    assert checks["flat_volume"].passed
    assert result.values["fit"]["volume"] == pytest.approx(6.283185307179586, rel=0.01)
    assert [row[0] for row in result.tables["heat-trace"].rows] == config.t_grid


def test_identity_suite_on_small_window():
    result = SpectrumApi().identity_suite(GaugeConfig(theta=THETA, beta=(0.1, 0.2)), N=6)
    checks = _checks(result)
    assert checks["eigenvalue_formula[hermitian]"].passed
    assert checks["L0m_split[literal]"].passed
    assert checks["splitting[0]"].passed
    assert len(result.values["relative_compactness"]) == 3


@pytest.mark.asyncio
async def test_curvature_form_reports_all_cases(runner):
    config = ExperimentConfig(
        kind="curvature-form",
        window_N=6,
        gauge={"theta": THETA, "beta": (0.1, 0.2)},
        perturbation=SMALL_PERTURBATION,
    )
    result = await DiracApi().run_curvature_form(runner, config)
    assert [row[0] for row in result.tables["curvature-form"].rows] == [
        "configured",
        "r_zero",
        "gauge_zero",
    ]
    checks = _checks(result)
    assert checks["shift_identity[configured]"].passed
    assert checks["flatness[configured]"].passed


@pytest.mark.asyncio
async def test_dixmier_volume_forms_are_invariant_without_perturbation(runner):
    config = ExperimentConfig(kind="dixmier", window_N=8, gauge={"theta": THETA})
    result = await DiracApi().run_dixmier(runner, config)
    checks = _checks(result)
    assert checks["harmonic_calibration"].passed
    assert checks["volume_form_invariance[0]"].passed
    assert checks["volume_form_invariance[1]"].passed
    assert not checks["identity_volume_pi"].gating
    assert len(result.values["elements"]) == 2


@pytest.mark.asyncio
async def test_dixmier_volume_forms_survive_small_perturbation(runner):
    config = ExperimentConfig(
        kind="dixmier",
        window_N=16,
        gauge={"theta": THETA},
        perturbation={"r1": {"theta": THETA, "coeffs": [[1, 0, 0.05, 0.0], [-1, 0, 0.05, 0.0]]}},
    )
    result = await DiracApi().run_dixmier(runner, config)
    checks = _checks(result)
    assert checks["volume_form_invariance[0]"].passed
    assert checks["volume_form_invariance[1]"].passed
    identity, cosine = result.values["elements"]
    assert identity["element"]["coeffs"] == [[0, 0, 1.0, 0.0]]
    assert identity["unperturbed"] == pytest.approx(3.141592653589793, rel=0.1)
    assert abs(cosine["unperturbed"]) < 1e-12
    assert checks["volume_form_invariance[1]"].measured < 1e-6


@pytest.mark.asyncio
async def test_flow_ensembles_hold_pathwise_identities(runner):
    config = ExperimentConfig(
        kind="flow",
        window_N=4,
        gauge={"theta": THETA, "beta": (0.05, 0.1)},
        mc={
            "n_paths": 256,
            "dt": 0.02,
            "steps": 50,
            "seed": 1,
            "modes": [(1, 0), (1, 1)],
            "record_times": [0.5, 1.0],
        },
    )
    result = await FlowApi().run_flow(runner, config)
    checks = _checks(result)
    for name in ("unit_modulus[1,0]", "telescoping[1,1]", "phase_homomorphism"):
        assert checks[name].passed
    assert len(result.tables["flow"].rows) == 4
    assert [row[0] for row in result.tables["flow-perturbed"].rows] == [0.5, 1.0]
    assert set(result.values["drift"]) == {"1,0", "1,1"}


@pytest.mark.asyncio
async def test_moments_follow_exponential_law(runner):
    config = ExperimentConfig(kind="moments", moments={"lambda": -0.5, "max_order": 2})
    result = await FlowApi().run_moments(runner, config)
    checks = _checks(result)
    assert checks["moment_order_1"].passed
    assert checks["moment_order_2"].passed
    assert checks["variance_recursion"].passed
    assert not checks["variance_routes_agree"].gating
    assert result.passed
    assert set(result.tables) == {"moments", "moments-variance", "moments-decomposition"}
    assert result.tables["moments-variance"].columns[-2:] == ("second_moment", "printed_second_moment")


@pytest.mark.asyncio
async def test_euclidean_checks_pass_and_flag_printed_form(runner):
    config = ExperimentConfig(kind="euclidean", euclidean={"t_values": [0.5, 1.0]})
    result = await EuclideanApi().run_euclidean(runner, config)
    assert result.passed
    checks = _checks(result)
    assert not checks["printed_closed_form"].passed
    assert not checks["printed_closed_form"].gating
    assert len(result.tables["euclidean"].rows) == 4


def _fake_step(name, *, delay=0.0, fail=False, tracker=None):
    async def step(runner, config):
        if tracker is not None:
            tracker["active"] += 1
            tracker["peak"] = max(tracker["peak"], tracker["active"])
        try:
            await asyncio.sleep(delay)
            if fail:
                raise ValidationError(f"{name} exploded")
            return ExperimentResult(
                kind=name,
                checks=[Check("ok", True, 0.0, 0.0)],
                tables={name: Table(("x",), [(1.0,)]), "extra": Table(("y",), [(2.0,)])},
                values={"name": name},
            )
        finally:
            if tracker is not None:
                tracker["active"] -= 1

    return step


@pytest.mark.asyncio
async def test_full_report_merges_in_step_order(runner, monkeypatch):
    api = WorkflowApi()
    steps = [("b", _fake_step("b", delay=0.02)), ("a", _fake_step("a")), ("c", _fake_step("c", delay=0.01))]
    monkeypatch.setattr(api, "steps", lambda: steps)
    report = await api.run_full_report(runner, ExperimentConfig(kind="full-report"))
    assert report.kind == "full-report"
    assert [c.name for c in report.checks] == ["b.ok", "a.ok", "c.ok"]
    assert list(report.values) == ["b", "a", "c"]
    assert sorted(report.tables) == ["a", "a-extra", "b", "b-extra", "c", "c-extra"]
    assert report.passed


@pytest.mark.asyncio
async def test_failing_step_becomes_failed_check(runner, monkeypatch):
    api = WorkflowApi()
    steps = [("good", _fake_step("good")), ("bad", _fake_step("bad", fail=True))]
    monkeypatch.setattr(api, "steps", lambda: steps)
    report = await api.run_full_report(runner, ExperimentConfig(kind="full-report"))
    checks = _checks(report)
    assert checks["good.ok"].passed
    assert not checks["bad.completed"].passed
    assert checks["bad.completed"].measured == "bad exploded"
    assert not report.passed


@pytest.mark.asyncio
async def test_full_report_respects_concurrency_limit(runner, monkeypatch):
    api = WorkflowApi()
    tracker = {"active": 0, "peak": 0}
    steps = [(f"s{k}", _fake_step(f"s{k}", delay=0.01, tracker=tracker)) for k in range(6)]
    monkeypatch.setattr(api, "steps", lambda: steps)
    await api.run_full_report(runner, ExperimentConfig(kind="full-report"), max_concurrency=2)
    assert tracker["peak"] == 2


@pytest.mark.asyncio
@pytest.mark.parametrize("limit", [0, MAX_WORKFLOW_CONCURRENCY + 1])
async def test_full_report_validates_concurrency(runner, limit):
    with pytest.raises(NCTorusError, match="max_concurrency"):
        await WorkflowApi().run_full_report(runner, ExperimentConfig(kind="full-report"), max_concurrency=limit)


def test_steps_cover_every_experiment_family():
    names = [name for name, _ in WorkflowApi().steps()]
    assert names == [
        "algebra",
        "identities",
        "spectrum",
        "heat-trace",
        "volume-invariance",
        "dirac",
        "dixmier",
        "curvature-form",
        "flow",
        "moments",
        "euclidean",
    ]


@pytest.mark.slow
@pytest.mark.asyncio
async def test_full_report_completes_every_step(runner):
    config = ExperimentConfig(
        kind="full-report",
        window_N=8,
        gauge={"theta": THETA, "beta": (0.1, 0.2)},
        perturbation=SMALL_PERTURBATION,
        mc={"n_paths": 512, "dt": 0.01, "steps": 100, "record_times": [0.5, 1.0]},
    )
    report = await WorkflowApi().run_full_report(runner, config)
    assert not [c.name for c in report.checks if c.name.endswith(".completed")]
    assert {name.split(".")[0] for name in (c.name for c in report.checks)} >= {
        "algebra",
        "spectrum",
        "euclidean",
    }
