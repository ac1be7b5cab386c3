import numpy as np
import pytest

from cfinsler import first_variation, metric_from_config, second_variation, total_curvatures
from cfinsler.fiber import build_fiber_rule, grid_for
from cfinsler.grid import TorusGrid
from cfinsler.functionals import (ConstraintError, PreconditionError, VariationDirection, VariationResult,
                                  base_fields, check_direction, make_direction, stability)

from oracles import FAMILIES

RULE = build_fiber_rule(2, 12, 24)


def test_flat_totals_vanish():
    m = metric_from_config(FAMILIES["flat"])
    r = total_curvatures(m, grid_for(m, 4), RULE)
    assert abs(r.total_K) < 1e-13 and abs(r.total_R) < 1e-13
    assert r.kahler and r.kappa_constant and r.stable_K and r.stable_R
    assert np.isclose(r.lambda1_h, np.pi ** 2) and np.isclose(r.lambda1_g, 2 * np.pi ** 2)


def test_torsion_corrected_totals_agree():
    m = metric_from_config(FAMILIES["z_twisted_general"])
    r = total_curvatures(m, grid_for(m, 12), RULE, with_lambda=False)
    assert abs(r.total_K - r.total_K_theta) < 1e-8 * max(1.0, abs(r.total_K))
    assert abs(r.total_R - r.total_R_theta) < 1e-8 * max(1.0, abs(r.total_R))
    assert r.kahler is False and r.stable_K is None


def test_direction_projection_and_constraints():
    m = metric_from_config(FAMILIES["hermitian_conformal"])
    fields = base_fields(m, grid_for(m, 8), RULE)
    d = make_direction(fields, "1 + cos(2*pi*x1)")
    assert abs(fields.integrate(d.nu)) < 1e-12
    assert abs(fields.integrate(d.psi + 2 * d.nu ** 2)) < 1e-12
    bad = VariationDirection(d.grid, d.nu + 1.0, d.psi)
    with pytest.raises(ConstraintError):
        check_direction(fields, bad)
    with pytest.raises(ConstraintError):
        make_direction(fields, "abs2(v1)")


def test_second_variation_requires_kahler():
    m = metric_from_config(FAMILIES["z_twisted_general"])
    fields = base_fields(m, grid_for(m, 6), RULE)
    d = make_direction(fields, "cos(2*pi*x1)")
    with pytest.raises(PreconditionError):
        second_variation(fields, d, finite_difference=False)
    with pytest.raises(PreconditionError):
        stability(fields)


def test_flat_second_variation_closed_form():
    m = metric_from_config(FAMILIES["flat"])
    fields = base_fields(m, TorusGrid(2, (8, 1, 1, 1)), RULE)
    d = make_direction(fields, "cos(2*pi*x1)")
    # kappa = 0 and h = I, so the form is int |d_z1 nu|^2 dmu_M = (pi^2 / 2) vol
    res = second_variation(fields, d, "K", finite_difference=False)
    assert np.isclose(res.closed_form, np.pi ** 2 / 2 * fields.volume)


def test_first_variation_matches_finite_difference_hermitian():
    m = metric_from_config(FAMILIES["hermitian_conformal"])
    fields = base_fields(m, grid_for(m, 12), RULE)
    d = make_direction(fields, "sin(2*pi*x1)")
    res = first_variation(fields, d, "R")
    assert res.relative_error < 1e-6


def test_relative_error_is_floored():
    assert VariationResult("K", 1, 1e-13, 2e-13).relative_error == pytest.approx(1e-13)
    assert VariationResult("K", 1, 11.0, 10.0).relative_error == pytest.approx(0.1)
    assert VariationResult("K", 1, 1.0).relative_error is None
