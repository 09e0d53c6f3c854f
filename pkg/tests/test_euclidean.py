import math

import numpy as np
import pytest

from nctorus.config import EuclideanConfig
from nctorus.euclidean import (
    MagneticHeatParams,
    bump,
    fourier_transform,
    gaussian,
    involution,
    magnetic_heat_trace,
    named_test_function,
    phi_trace_euclidean,
    sample_function,
    twisted_convolve,
    weyl_relation_defect,
)
from nctorus.exceptions import ValidationError
from nctorus.tools.euclidean import convolution_checks, fourier_checks, weyl_checks


def test_unit_gaussian_is_its_own_fourier_transform():
    checks = fourier_checks(EuclideanConfig())
    assert checks["gaussian_transform"] <= 1e-8
    assert checks["round_trip"] <= 1e-6
    assert checks["zero_frequency"] <= 1e-8


def test_canonical_trace_of_gaussian_is_one():
    g = sample_function(gaussian(), dim=2)
    assert phi_trace_euclidean(g) == pytest.approx(1.0, abs=1e-10)


def test_fourier_side_trace_reads_zero_frequency():
    g_hat = fourier_transform(sample_function(gaussian(2.0), dim=2, extent=32, spacing=1 / 8))
    assert phi_trace_euclidean(g_hat) == g_hat.values[g_hat.center, g_hat.center]


def test_twisted_product_identities_on_coarse_grid():
    checks = convolution_checks(0.25)
    assert checks["trace_property"] <= 1e-8
    assert checks["associativity"] <= 1e-6
    assert checks["ordinary_convolution"] <= 1e-8
    assert checks["involution"] == 0.0


def test_one_dimensional_convolution_is_ordinary_convolution():
    line = sample_function(gaussian(), dim=1, spacing=1 / 16, domain="fourier")
    out = twisted_convolve(line, line)
    np.testing.assert_allclose(out.values, math.sqrt(math.pi) * np.exp(-line.axis**2 / 4), atol=1e-8)


def test_twisted_product_requires_matching_grids():
    a = sample_function(gaussian(), dim=1, spacing=1 / 4, domain="fourier")
    b = sample_function(gaussian(), dim=1, spacing=1 / 8, domain="fourier")
    with pytest.raises(ValidationError, match="share grid"):
        twisted_convolve(a, b)


def test_involution_conjugates_and_reflects():
    g = sample_function(lambda u1, u2: (u1 + 2j * u2) * np.exp(-(u1**2 + u2**2)), dim=2, spacing=1 / 4)
    star = involution(g)
    np.testing.assert_array_equal(star.values, np.conj(g.values[::-1, ::-1]))
    np.testing.assert_array_equal(involution(star).values, g.values)


def test_weyl_operators_satisfy_the_weyl_relation():
    assert weyl_checks() <= 1e-8
    x = np.linspace(-3, 3, 61)
    assert weyl_relation_defect((0.0, 0.0), (0.4, -1.1), gaussian(), x) <= 1e-14


@pytest.mark.parametrize("gauge", [(0.0, 0.0), (0.1, 0.2)])
@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_magnetic_heat_trace_quadrature_matches_closed_form(gauge, t):
    g = sample_function(gaussian(), dim=2)
    trace = magnetic_heat_trace(MagneticHeatParams(gauge[0], gauge[1], t), g)
    assert abs(trace.quadrature - trace.analytic) <= 1e-6
    assert trace.g_hat_zero == pytest.approx(1.0, abs=1e-10)


def test_gauge_free_heat_trace_is_flat_volume():
    g = sample_function(gaussian(), dim=2)
    trace = magnetic_heat_trace(MagneticHeatParams(0.0, 0.0, 0.5), g)
    assert trace.analytic == pytest.approx(4 * math.pi, rel=1e-9)
    assert not trace.factor_discrepancy


def test_printed_closed_form_discrepancy_is_flagged():
    g = sample_function(gaussian(), dim=2)
    trace = magnetic_heat_trace(MagneticHeatParams(0.1, 0.2, 0.5), g)
    assert trace.factor_discrepancy
    assert trace.printed != pytest.approx(trace.analytic)


def test_heat_trace_params_are_validated():
    with pytest.raises(ValidationError, match="t must be > 0"):
        MagneticHeatParams(0.0, 0.0, 0.0)
    with pytest.raises(ValidationError, match="d = 1"):
        MagneticHeatParams(0.0, 0.0, 1.0, d=2)
    line = sample_function(gaussian(), dim=1)
    with pytest.raises(ValidationError, match="2-d"):
        magnetic_heat_trace(MagneticHeatParams(0.0, 0.0, 1.0), line)


def test_grid_must_have_even_number_of_intervals():
    with pytest.raises(ValidationError, match="even integer"):
        sample_function(gaussian(), dim=1, extent=3.0, spacing=1.0)


def test_decay_check_separates_test_functions():
    assert sample_function(bump(), dim=2, spacing=1 / 8).decays()
    assert sample_function(named_test_function("gaussian"), dim=2, spacing=1 / 8).decays()
    assert not sample_function(lambda u1, u2: np.ones_like(u1), dim=2, spacing=1 / 8).decays()


def test_unknown_test_function_is_rejected():
    with pytest.raises(ValidationError, match="unknown test function"):
        named_test_function("lorentzian")


def test_rows_follow_grid_order():
    g = sample_function(gaussian(), dim=2, extent=2.0, spacing=0.5)
    rows = list(g.to_rows())
    assert len(rows) == 25
    assert rows[0][:2] == (-1.0, -1.0)
    assert rows[1][:2] == (-1.0, -0.5)
    assert rows[12][2] == pytest.approx(1.0)
