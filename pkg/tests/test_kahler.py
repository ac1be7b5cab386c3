import numpy as np

from cfinsler import conformal_kahler_test, kahler_check, metric_from_config
from cfinsler.fiber import grid_for
from cfinsler.grid import TorusGrid
from cfinsler.kahler import decide_from_one_form, lee_potential

from oracles import FAMILIES, KAHLER, sample


def test_kahler_families_are_kahler():
    z, v = sample(2, 16, 20)
    for name in KAHLER:
        assert kahler_check(metric_from_config(FAMILIES[name]), z, v).kahler, name


def test_non_kahler_families():
    z, v = sample(2, 16, 21)
    for name in ("hermitian_general", "z_twisted_general", "z_twisted"):
        assert not kahler_check(metric_from_config(FAMILIES[name]), z, v).kahler, name


def test_conformally_flat_hermitian_metric():
    m = metric_from_config(FAMILIES["hermitian_conformal"])
    res = conformal_kahler_test(m, grid_for(m, 16))
    assert res.status == "globally_conformal_kahler"
    x = grid_for(m, 16).mesh[0]
    f = 0.1 * np.sin(2 * np.pi * x)
    assert np.max(np.abs(res.factor.f + f)) < 1e-10


def test_kahler_metric_reports_kahler():
    m = metric_from_config(FAMILIES["quartic"])
    assert conformal_kahler_test(m, grid_for(m, 4)).status == "kahler"


def test_general_hermitian_is_rejected():
    m = metric_from_config(FAMILIES["hermitian_general"])
    res = conformal_kahler_test(m, TorusGrid(2, (4, 4, 4, 4)))
    assert res.status == "not_conformal_kahler"
    assert res.witness is not None or res.verdict.closedness_residual > 1e-5


def test_lee_potential_and_periods():
    grid = TorusGrid(2, (12, 1, 1, 12))
    x1, _, _, y2 = grid.mesh
    f = np.cos(2 * np.pi * x1) * np.sin(2 * np.pi * y2)
    form = -np.stack([grid.derivative(f, a) for a in range(4)], -1)  # (n-1) df = -form with n = 2
    fac = lee_potential(grid, form, 2)
    assert np.max(np.abs(fac.f - f)) < 1e-12
    status, closed, _ = decide_from_one_form(grid, form, 2)
    assert status == "globally_conformal_kahler" and closed < 1e-10
    shifted = form + np.array([0.3, 0.0, 0.0, 0.0])
    assert decide_from_one_form(grid, shifted, 2)[0] == "locally_conformal_kahler"
    curl = form.copy()
    curl[..., 0] += np.sin(2 * np.pi * y2)
    assert decide_from_one_form(grid, curl, 2)[0] == "not_conformal_kahler"
