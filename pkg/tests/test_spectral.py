import math

import numpy as np
import pytest
import scipy.linalg as la

from nctorus.algebra import TorusElement, random_self_adjoint
from nctorus.exceptions import ValidationError
from nctorus.gauge import GaugeConfig, l0m_symbol
from nctorus.operators import LatticeWindow, assemble_dirac, assemble_L0m, assemble_Lm
from nctorus.spectral import (
    HeatTraceSeries,
    commutator_norm_sweep,
    compare_fits,
    dixmier_volume_form,
    fit_weyl_asymptotics,
    gauge_commutator_deviation,
    heat_trace,
    heat_trace_series,
    hermitian_eigen,
    invariance_report,
    log_cesaro_estimate,
    spectral_triple_report,
    validity_window,
)
from nctorus.tools.dirac import harmonic_calibration
from nctorus.tools.spectrum import reference_perturbation

from .conftest import THETA_RATIONAL, gauge_perturbation

THETA = THETA_RATIONAL


def _grid(N, points=12):
    t_min, t_max = validity_window(N)
    return list(np.linspace(t_min, t_max, points))


def test_validity_window_scales_with_inverse_square_of_window():
    assert validity_window(16) == (46.0 / 256.0, 0.1)
    assert validity_window(48)[0] == pytest.approx(0.019965277777777776)


def test_diagonal_spectrum_is_sorted_symbol():
    cfg = GaugeConfig(theta=THETA, beta=(0.1, 0.2))
    w = LatticeWindow(6)
    spectrum = hermitian_eigen(assemble_L0m(cfg, w))
    np.testing.assert_array_equal(spectrum.eigenvalues, np.sort(np.real(l0m_symbol(cfg, w.modes))))
    assert spectrum.dim == w.dim


def test_block_eigensolver_matches_dense_solver(rng):
    cfg = GaugeConfig(theta=THETA, beta=(0.1, 0.2))
    r = (random_self_adjoint(rng, THETA), random_self_adjoint(rng, THETA))
    op = assemble_Lm(cfg, r, LatticeWindow(5))
    spectrum = hermitian_eigen(op, vectors=True)
    dense = la.eigvalsh(op.to_dense())
    np.testing.assert_allclose(spectrum.eigenvalues, dense, atol=1e-10)
    assert spectrum.reconstruction_error <= 1e-9


def test_spectrum_apply_reproduces_matrix_exponential(rng):
    cfg = GaugeConfig(theta=THETA)
    r = gauge_perturbation(THETA, 0.2)
    op = assemble_Lm(cfg, r, LatticeWindow(4))
    spectrum = hermitian_eigen(op, vectors=True)
    v = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
    expected = la.expm(0.3 * op.to_dense()) @ v
    np.testing.assert_allclose(spectrum.apply(lambda lam: np.exp(0.3 * lam), v), expected, atol=1e-10)


def test_spectrum_without_vectors_cannot_apply_functions():
    spectrum = hermitian_eigen(assemble_L0m(GaugeConfig(), LatticeWindow(2)))
    with pytest.raises(ValidationError, match="without eigenvectors"):
        spectrum.apply(np.exp, np.ones(spectrum.dim))


def test_non_hermitian_operator_is_rejected():
    cfg = GaugeConfig(beta=(0.1, 0.0), symbol_mode="literal")
    with pytest.raises(ValidationError, match="not flagged Hermitian"):
        hermitian_eigen(assemble_L0m(cfg, LatticeWindow(2)))


def test_heat_trace_requires_positive_time():
    spectrum = hermitian_eigen(assemble_L0m(GaugeConfig(), LatticeWindow(2)))
    with pytest.raises(ValidationError, match="t must be > 0"):
        heat_trace(spectrum, 0.0)


def test_fit_recovers_exact_weyl_law():
    times = np.linspace(0.02, 0.1, 10)
    series = HeatTraceSeries(tuple((t, 3.0 / t + 0.6) for t in times), window_N=64)
    fit = fit_weyl_asymptotics(series, t_min=0.02, t_max=0.1)
    assert fit.volume == pytest.approx(3.0, rel=1e-12)
    assert fit.curvature == pytest.approx(0.1, rel=1e-10)
    assert fit.reliable
    assert fit.n_samples == 10


def test_fit_needs_four_samples_in_window():
    series = HeatTraceSeries(((0.05, 1.0), (0.06, 0.9), (0.07, 0.8)), window_N=64)
    with pytest.raises(ValidationError, match="at least 4 samples"):
        fit_weyl_asymptotics(series, t_min=0.01, t_max=0.1)


def test_fit_flags_poor_residual_instead_of_raising():
    times = np.linspace(0.02, 0.1, 8)
    series = HeatTraceSeries(tuple((t, 1.0 / t + math.sin(100 * t)) for t in times), window_N=64)
    fit = fit_weyl_asymptotics(series, t_min=0.02, t_max=0.1)
    assert not fit.reliable


def test_flat_heat_trace_has_volume_two_pi_and_no_curvature():
    N = 24
    spectrum = hermitian_eigen(assemble_L0m(GaugeConfig(), LatticeWindow(N)))
    series = heat_trace_series(spectrum, _grid(N), N)
    assert series.is_decreasing()
    fit = fit_weyl_asymptotics(series)
    assert fit.volume == pytest.approx(2 * math.pi, rel=0.01)
    assert abs(fit.curvature) < 0.05


def test_perturbation_leaves_volume_invariant():
    N = 24
    cfg = GaugeConfig(theta=THETA, beta=(0.1, 0.2))
    report = invariance_report(cfg, reference_perturbation(THETA), LatticeWindow(N), _grid(N))
    assert abs(report.delta_volume_rel) < 0.02
    assert report.unperturbed.volume == pytest.approx(2 * math.pi, rel=0.02)


def test_reference_perturbation_shifts_curvature_but_gauge_does_not():
    N = 48
    cfg = GaugeConfig(theta=THETA)
    w = LatticeWindow(N)
    shifted = invariance_report(cfg, reference_perturbation(THETA), w, _grid(N))
    assert shifted.curvature_shift_detected
    assert abs(shifted.delta_volume_rel) < 0.02

    gauge = invariance_report(cfg, gauge_perturbation(THETA), w, _grid(N))
    assert abs(gauge.delta_volume_rel) < 1e-9
    assert abs(gauge.delta_curvature) < 1e-8


def test_volume_is_stable_under_window_growth():
    cfg = GaugeConfig(theta=THETA, beta=(0.1, 0.2))
    grid = _grid(40)
    volumes = []
    for N in (40, 48):
        spectrum = hermitian_eigen(assemble_Lm(cfg, reference_perturbation(THETA), LatticeWindow(N)))
        volumes.append(fit_weyl_asymptotics(heat_trace_series(spectrum, grid, N)).volume)
    assert abs(volumes[1] - volumes[0]) / volumes[1] < 0.005


def test_fit_survives_halving_grid_spacing():
    N = 24
    cfg = GaugeConfig(theta=THETA, beta=(0.1, 0.2))
    spectrum = hermitian_eigen(assemble_Lm(cfg, reference_perturbation(THETA), LatticeWindow(N)))
    coarse = fit_weyl_asymptotics(heat_trace_series(spectrum, _grid(N, 12), N))
    fine = fit_weyl_asymptotics(heat_trace_series(spectrum, _grid(N, 23), N))
    assert fine.volume == pytest.approx(coarse.volume, rel=1e-4)
    assert abs(fine.curvature - coarse.curvature) < 1e-3


def test_compare_fits_honours_explicit_window():
    times = np.linspace(0.01, 0.1, 10)
    a = HeatTraceSeries(tuple((t, 2.0 / t) for t in times), window_N=8)
    b = HeatTraceSeries(tuple((t, 2.2 / t + 1.0) for t in times), window_N=8)
    report = compare_fits(a, b, t_min=0.01, t_max=0.1)
    assert report.delta_volume_rel == pytest.approx(0.1, rel=1e-10)
    assert report.delta_curvature == pytest.approx(1.0 / 6.0, rel=1e-8)


def test_log_cesaro_estimator_calibrates_on_harmonic_series():
    estimate = harmonic_calibration()
    assert abs(estimate.extrapolated - 1.0) < 0.02
    assert len(estimate.partial_sums) == 10


def test_log_cesaro_estimator_rejects_bad_cutoffs():
    with pytest.raises(ValidationError, match=">= 2"):
        log_cesaro_estimate(np.ones(10), [1, 5])
    with pytest.raises(ValidationError, match="exceeds"):
        log_cesaro_estimate(np.ones(10), [5, 50])


def test_free_dirac_triple_is_even_with_two_dimensional_kernel():
    D = assemble_dirac(GaugeConfig(theta=THETA), None, LatticeWindow(6))
    report = spectral_triple_report(D)
    assert report.anticommutation == 0.0
    assert report.grading_square == 0.0
    assert report.kernel_dimension == 2
    assert report.smallest_nonzero == pytest.approx(1.0)
    assert report.square_block_deviation is not None
    assert report.square_block_deviation <= 1e-12


def test_identity_volume_form_of_free_dirac_operator_is_near_pi():
    D = assemble_dirac(GaugeConfig(theta=THETA), None, LatticeWindow(16))
    estimate = dixmier_volume_form(D, TorusElement.identity(THETA))
    assert estimate.kernel_dimension == 2
    assert abs(estimate.extrapolated - math.pi) / math.pi < 0.15


@pytest.mark.slow
def test_identity_volume_form_converges_at_large_window():
    D = assemble_dirac(GaugeConfig(theta=THETA), None, LatticeWindow(48))
    estimate = dixmier_volume_form(D, TorusElement.identity(THETA))
    assert abs(estimate.extrapolated - math.pi) / math.pi < 0.10


def test_volume_form_of_zero_element_vanishes():
    D = assemble_dirac(GaugeConfig(theta=THETA), None, LatticeWindow(8))
    estimate = dixmier_volume_form(D, TorusElement.zero(THETA))
    assert estimate.extrapolated == 0.0


def test_commutator_with_generator_stays_bounded():
    D = assemble_dirac(GaugeConfig(theta=THETA), None, LatticeWindow(4))
    sweep = commutator_norm_sweep(D, TorusElement.x(THETA), sizes=(4, 8))
    assert [N for N, _ in sweep] == [4, 8]
    for _, norm in sweep:
        assert norm == pytest.approx(1.0, abs=1e-10)


def test_gauge_field_drops_out_of_commutators(rng):
    cfg = GaugeConfig(theta=THETA, beta=(0.1, 0.2))
    r = random_self_adjoint(rng, THETA, terms=2, max_mode=1)
    D = assemble_dirac(cfg, r, LatticeWindow(6))
    independence, unit_gap = gauge_commutator_deviation(D, TorusElement.x(THETA))
    assert independence <= 1e-12
    assert unit_gap <= 1e-12
