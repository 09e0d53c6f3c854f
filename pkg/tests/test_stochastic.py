import math

import numpy as np
import pytest

from nctorus.algebra import TorusElement
from nctorus.exceptions import InvertibilityError, ValidationError
from nctorus.gauge import GaugeConfig, l0m_symbol, t0_symbol
from nctorus.operators import LatticeWindow, zero_perturbation
from nctorus.stochastic import (
    BLOCK_PATHS,
    discrete_mean,
    drift_convergence,
    flow_magnetic,
    flow_unperturbed,
    magnetic_mean_oracle,
    moment_recursion,
    perturbed_expectation,
    sample_brownian,
    simulate_ensemble,
    unperturbed_eigenvalue,
    vacuum_expectation,
    variance_decomposition,
    variance_report,
)

# Ensemble means are compared against exact references within this many
# standard errors; a complex mean lands outside 4 sigma with probability e^-16.
SIGMA = 4.0


def test_paths_are_reproducible_and_independent_of_ensemble_size():
    small = sample_brownian(0.01, 20, 5, seed=7)
    large = sample_brownian(0.01, 20, BLOCK_PATHS + 5, seed=7)
    again = sample_brownian(0.01, 20, 5, seed=7)
    for a, b, c in zip(small, large, again):
        np.testing.assert_array_equal(a.increments, b.increments)
        np.testing.assert_array_equal(a.increments, c.increments)
    assert [p.index for p in large[BLOCK_PATHS - 1 : BLOCK_PATHS + 1]] == [BLOCK_PATHS - 1, BLOCK_PATHS]


def test_different_seeds_give_different_paths():
    a = sample_brownian(0.01, 10, 1, seed=0)[0]
    b = sample_brownian(0.01, 10, 1, seed=1)[0]
    assert not np.array_equal(a.increments, b.increments)


def test_increments_have_variance_dt():
    dt = 0.01
    paths = sample_brownian(dt, 100, 1000, seed=3)
    increments = np.stack([p.increments for p in paths])
    assert increments.var() == pytest.approx(dt, rel=0.02)
    assert paths[0].positions.shape == (2, 101)
    assert np.all(paths[0].positions[:, 0] == 0)


def test_sampling_rejects_invalid_arguments():
    with pytest.raises(ValidationError, match="dt must be > 0"):
        sample_brownian(0.0, 10, 1, seed=0)
    with pytest.raises(ValidationError, match="n_paths"):
        sample_brownian(0.01, 10, 0, seed=0)


def test_unperturbed_flow_is_unit_modulus_and_starts_at_one():
    path = sample_brownian(0.01, 50, 1, seed=0)[0]
    j = flow_unperturbed((2, -1), path)
    assert j.shape == (51,)
    assert j[0] == 1
    np.testing.assert_allclose(np.abs(j), 1.0, atol=1e-12)


def test_unperturbed_flow_is_a_phase_homomorphism():
    for path in sample_brownian(0.01, 50, 20, seed=5):
        product = flow_unperturbed((1, 0), path) * flow_unperturbed((1, 1), path)
        np.testing.assert_allclose(product, flow_unperturbed((2, 1), path), atol=1e-12)


def test_eigenvalue_follows_phase_convention():
    assert unperturbed_eigenvalue((1, 1)) == -1.0
    assert unperturbed_eigenvalue((1, 0), "two_pi") == pytest.approx(-2 * math.pi**2)
    with pytest.raises(ValidationError, match="phase convention"):
        unperturbed_eigenvalue((1, 0), "degrees")


@pytest.mark.parametrize("scheme", ["multiplicative", "additive"])
def test_magnetic_flow_splits_into_phase_and_correction(scheme):
    cfg = GaugeConfig(beta=(0.1, 0.2))
    path = sample_brownian(0.01, 40, 1, seed=2)[0]
    sample = flow_magnetic((1, 0), cfg, path, scheme=scheme)
    assert sample.tau == pytest.approx(complex(t0_symbol(cfg, (1, 0))))
    np.testing.assert_allclose(sample.values - sample.correction, sample.path_values, atol=1e-15)
    assert sample.correction[0] == 0


def test_gauge_free_flow_has_no_correction():
    path = sample_brownian(0.01, 40, 1, seed=2)[0]
    sample = flow_magnetic((1, 1), GaugeConfig(), path)
    assert not np.any(sample.correction)


def test_vacuum_expectation_validates_ensemble_and_horizon():
    path = sample_brownian(0.01, 10, 1, seed=0)[0]
    sample = flow_magnetic((1, 0), GaugeConfig(), path)
    with pytest.raises(ValidationError, match="nonempty"):
        vacuum_expectation([], 0.05)
    with pytest.raises(ValidationError, match="horizon"):
        vacuum_expectation([sample], 0.5)
    mean, stderr = vacuum_expectation([sample], 0.0)
    assert mean == 1
    assert stderr == 0.0


def test_unperturbed_ensemble_mean_matches_heat_semigroup():
    ensemble = simulate_ensemble(
        (1, 0), None, dt=0.01, steps=100, n_paths=4096, seed=11, record_times=[0.5, 1.0]
    )
    for t, mean, err in zip(ensemble.times, ensemble.unperturbed_mean, ensemble.unperturbed_stderr):
        assert abs(mean - math.exp(-0.5 * t)) <= SIGMA * err
    assert ensemble.max_unit_modulus_defect <= 1e-12
    assert ensemble.max_telescoping_defect <= 1e-12


@pytest.mark.parametrize("scheme", ["multiplicative", "additive"])
def test_magnetic_ensemble_mean_matches_exact_discrete_mean(scheme):
    cfg = GaugeConfig(beta=(0.05, 0.1))
    dt = 0.01
    ensemble = simulate_ensemble(
        (1, 1), cfg, dt=dt, steps=100, n_paths=4096, seed=5, record_times=[0.5, 1.0], scheme=scheme
    )
    lam0 = unperturbed_eigenvalue((1, 1))
    for t, mean, err in zip(ensemble.times, ensemble.magnetic_mean, ensemble.magnetic_stderr):
        reference = discrete_mean(lam0, ensemble.tau, dt, int(round(t / dt)), scheme)
        assert abs(mean - reference) <= SIGMA * err


def test_ensemble_is_bit_reproducible():
    kwargs = dict(dt=0.02, steps=25, n_paths=BLOCK_PATHS + 17, seed=3, record_times=[0.5])
    cfg = GaugeConfig(beta=(0.1, 0.0))
    first = simulate_ensemble((1, 0), cfg, **kwargs)
    second = simulate_ensemble((1, 0), cfg, **kwargs)
    assert first == second


def test_record_times_must_lie_within_horizon():
    with pytest.raises(ValidationError, match="horizon"):
        simulate_ensemble((1, 0), None, dt=0.01, steps=10, n_paths=2, seed=0, record_times=[1.0])


@pytest.mark.parametrize("scheme", ["multiplicative", "additive"])
def test_discrete_mean_converges_to_continuous_oracle(scheme):
    lam0, tau, dt = -1.0, -0.3, 1e-4
    k = int(round(1.0 / dt))
    discrete = discrete_mean(lam0, tau, dt, k, scheme)
    assert abs(discrete - magnetic_mean_oracle(lam0, tau, 1.0, scheme)) <= 1e-3


def test_additive_oracle_handles_resonant_gauge():
    lam0 = -0.5
    value = magnetic_mean_oracle(lam0, lam0, 2.0, "additive")
    assert value == pytest.approx(math.exp(-1.0) * (1 - 1.0))
    near = magnetic_mean_oracle(lam0, lam0 + 1e-7, 2.0, "additive")
    assert abs(near - value) <= 1e-5


def test_drift_error_is_first_order_in_step():
    coarse, fine, ratio = drift_convergence(-0.4, 1.0, 0.01)
    assert fine < coarse
    assert ratio == pytest.approx(2.0, rel=0.02)


def test_perturbed_expectation_reduces_to_symbol_without_perturbation():
    cfg = GaugeConfig(theta=0.3, beta=(0.1, 0.2))
    x = TorusElement.x(0.3)
    w = LatticeWindow(3)
    evolved = perturbed_expectation(cfg, zero_perturbation(0.3), x, w, 0.7)
    expected = math.exp(0.7 * float(np.real(l0m_symbol(cfg, (1, 0)))))
    assert evolved.coefficient(1, 0) == pytest.approx(expected, rel=1e-12)
    assert perturbed_expectation(cfg, zero_perturbation(0.3), x, w, 0.0) is x


def test_perturbed_expectation_agrees_with_magnetic_flow_ensemble():
    cfg = GaugeConfig(theta=0.3, beta=(0.05, 0.1))
    t = 0.5
    samples = [flow_magnetic((1, 0), cfg, path) for path in sample_brownian(0.01, 50, 2000, seed=13)]
    mean, stderr = vacuum_expectation(samples, t)
    evolved = perturbed_expectation(cfg, zero_perturbation(0.3), TorusElement.x(0.3), LatticeWindow(3), t)
    assert abs(mean - evolved.coefficient(1, 0)) <= 3 * stderr


def test_ensemble_stderr_scales_with_inverse_square_root_of_paths():
    errors = []
    for n_paths in (1_000, 10_000, 100_000):
        ensemble = simulate_ensemble(
            (1, 0), None, dt=0.05, steps=10, n_paths=n_paths, seed=21, record_times=[0.5]
        )
        errors.append(ensemble.unperturbed_stderr[0])
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine == pytest.approx(math.sqrt(10), rel=0.2)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_moment_recursion_matches_exponential(order):
    report = moment_recursion(order, -0.5, [0.1, 0.5, 1.0])
    assert report.max_deviation <= 1e-8
    assert all(err > 0 for err in report.mc_stderr)
    assert report.reference[-1] == pytest.approx(math.exp(-0.5))


def test_moment_recursion_validates_inputs():
    with pytest.raises(ValidationError, match="r_order"):
        moment_recursion(0, -0.5, [1.0])
    with pytest.raises(ValidationError, match="lambda"):
        moment_recursion(1, 0.5, [1.0])
    with pytest.raises(ValidationError, match="strictly increasing"):
        moment_recursion(1, -0.5, [1.0, 0.5])


def test_zero_generator_gives_constant_moments():
    report = moment_recursion(2, 0.0, [0.5, 1.0])
    assert report.values == (1.0, 1.0)


def test_variance_routes_differ_by_the_constant_term():
    report = variance_report(-0.5, [0.1, 0.5, 1.0])
    for t, value, d in zip(report.times, report.values, report.discrepancy):
        assert value == pytest.approx(math.exp(-0.5 * t) - math.exp(-t), abs=1e-8)
        assert d == pytest.approx(1.0, abs=1e-8)
    for t, second, printed in zip(report.times, report.second_moment, report.printed_second_moment):
        assert second == pytest.approx(math.exp(-0.5 * t), abs=1e-8)
        assert printed == pytest.approx(second - 1.0, abs=1e-8)


def test_variance_needs_invertible_generator():
    with pytest.raises(InvertibilityError, match="invertible"):
        variance_report(0.0, [1.0])


def test_variance_decomposition_without_gauge_is_unperturbed_variance():
    decomposition = variance_decomposition(-0.5, 0.0, [0.5, 1.0])
    assert decomposition.m_y == (0.0, 0.0)
    assert decomposition.var_magnetic == decomposition.var_unperturbed
    with_gauge = variance_decomposition(-0.5, -0.1, [0.5, 1.0])
    assert all(m != 0 for m in with_gauge.m_y)


@pytest.mark.slow
def test_large_ensemble_reaches_oracle_at_desk_scale():
    cfg = GaugeConfig(beta=(0.1, 0.2))
    ensemble = simulate_ensemble(
        (2, 1), cfg, dt=1e-3, steps=1000, n_paths=100_000, seed=0, record_times=[0.1, 0.5, 1.0]
    )
    lam0 = unperturbed_eigenvalue((2, 1))
    for t, mean, err in zip(ensemble.times, ensemble.magnetic_mean, ensemble.magnetic_stderr):
        assert abs(mean - discrete_mean(lam0, ensemble.tau, 1e-3, int(round(t / 1e-3)), "multiplicative")) <= SIGMA * err
        assert err < 5e-3
