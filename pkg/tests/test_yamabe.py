import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfinsler import metric_from_config, minimize, yamabe_quotient
from cfinsler.fiber import build_fiber_rule, grid_for
from cfinsler.yamabe import (DomainError, assemble_base_geometry, bubble_test, conformal_C, critical_exponent,
                             holder_floor, sobolev_constant, sobolev_constant_closed)

from oracles import FAMILIES

RULE = build_fiber_rule(2, 12, 24)


@pytest.fixture(scope="module")
def twisted():
    m = metric_from_config(FAMILIES["z_twisted"])
    return assemble_base_geometry(m, grid_for(m, 8), RULE)


@pytest.mark.parametrize("m", [3, 4, 6, 8])
def test_sobolev_constant_quadrature(m):
    assert np.isclose(sobolev_constant(m), sobolev_constant_closed(m), rtol=1e-10)


def test_sobolev_constant_four_dimensions():
    # 8 (|S^3| B(2, 2) / 2)^{1/2} with |S^3| = 2 pi^2 and B(2, 2) = 1/6; equals 2 (|S^4|)^{1/2}
    assert np.isclose(sobolev_constant_closed(4), 8 * np.pi / np.sqrt(6))
    assert np.isclose(sobolev_constant_closed(4), 2 * np.sqrt(8 * np.pi ** 2 / 3))


def test_critical_exponent():
    assert critical_exponent(2) == 4.0
    assert critical_exponent(3) == 3.0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10.0))
def test_quotient_is_scale_invariant(c):
    m = metric_from_config(FAMILIES["z_twisted"])
    fields = assemble_base_geometry(m, grid_for(m, 8), RULE)
    phi = 1.0 + 0.3 * np.cos(2 * np.pi * fields.grid.mesh[0])
    assert np.isclose(yamabe_quotient(fields, c * phi), yamabe_quotient(fields, phi), rtol=1e-12)


def test_holder_floor_bounds_quotient(twisted):
    rng = np.random.default_rng(3)
    x = twisted.grid.mesh[0]
    for _ in range(10):
        a, b = rng.uniform(-0.5, 0.5, 2)
        phi = 1 + a * np.cos(2 * np.pi * x) + b * np.sin(4 * np.pi * x)
        assert yamabe_quotient(twisted, phi) >= holder_floor(twisted) - 1e-12


def test_minimizer_beats_constants(twisted):
    state = minimize(twisted)
    assert state.quotient <= yamabe_quotient(twisted, np.ones(twisted.grid.shape)) + 1e-14
    assert np.all(state.phi > 0)


def test_schedule_must_end_at_critical_exponent(twisted):
    with pytest.raises(ValueError):
        minimize(twisted, schedule=[2.0, 3.0])


def test_positivity_is_enforced(twisted):
    with pytest.raises(DomainError):
        yamabe_quotient(twisted, -np.ones(twisted.grid.shape))


def test_flat_volume_ratio_is_constant():
    m = metric_from_config(FAMILIES["flat"])
    fields = assemble_base_geometry(m, grid_for(m, 4), RULE)
    assert conformal_C(fields) > 0
    assert np.ptp(fields.mu_g / fields.mu) < 1e-14


def test_bubbles_approach_the_sobolev_level():
    m = metric_from_config(FAMILIES["flat"])
    fields = assemble_base_geometry(m, grid_for(m, 4), RULE)
    out = bubble_test(fields, (0.5, 0.25), resolution=24)
    qc = [row["quotient_times_C"] for row in out["rows"]]
    assert qc[1] < qc[0]


def test_bound_is_independent_of_volume_normalization():
    from cfinsler import conformal_invariants
    m = metric_from_config(FAMILIES["z_twisted"])
    grid = grid_for(m, 8)
    prods = []
    for norm in ("none", "projective", "fiber"):
        rule = build_fiber_rule(2, 12, 24, norm)
        r = conformal_invariants(m, grid, rule)
        prods.append(r.Y_estimate * r.C_value)
    assert np.allclose(prods, prods[0], rtol=1e-8)
