import numpy as np
import pytest

from cfinsler import (conformal_curvature_check, curvature_at, hh_curvature, holomorphic_curvature,
                      kobayashi_matrix, metric_from_config, ricci)
from cfinsler.curvature import contraction_residual, log_hessian_frame_residual
from cfinsler.expressions import as_expression

from oracles import FAMILIES, HermitianOracle, rel_err, sample


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_kobayashi_is_hermitian_and_contracts(name):
    m = metric_from_config(FAMILIES[name])
    z, v = sample(2, 10, 12)
    K = kobayashi_matrix(m, z, v)
    assert np.allclose(K, np.conj(np.swapaxes(K, -1, -2)), atol=1e-12)
    assert contraction_residual(m, z, v) < 1e-9


def test_flat_curvatures_vanish():
    m = metric_from_config(FAMILIES["flat"])
    z, v = sample(2, 6, 13)
    c = curvature_at(m, z, v, with_hh=True)
    for arr in (c.K_matrix, c.K_hol, c.ric, c.R_hh):
        assert np.max(np.abs(arr)) < 1e-13


def test_scalar_curvatures_from_matrix():
    m = metric_from_config(FAMILIES["z_twisted_general"])
    z, v = sample(2, 8, 14)
    K = kobayashi_matrix(m, z, v)
    c = curvature_at(m, z, v)
    G = m.value(z, v)
    assert np.allclose(holomorphic_curvature(m, z, v), np.einsum("pij,pi,pj->p", K, v, np.conj(v)).real / G ** 2)
    assert np.allclose(ricci(m, z, v), c.ric)


def test_conformal_hermitian_curvature_against_sympy():
    spec = FAMILIES["hermitian_conformal"]
    m = metric_from_config(spec)
    z, v = sample(2, 20, 15)
    ref = HermitianOracle(spec["h"]).at(z, v)
    assert rel_err(hh_curvature(m, z, v), ref["R_hh"]) < 1e-10


def test_log_hessian_frame():
    m = metric_from_config(FAMILIES["quartic"])
    z, v = sample(2, 6, 16)
    assert max(log_hessian_frame_residual(m, z, v).values()) < 1e-9


def test_conformal_laws_for_non_hermitian_metric():
    m = metric_from_config(FAMILIES["z_twisted_general"])
    z, v = sample(2, 10, 17)
    res = conformal_curvature_check(m, as_expression("0.4*cos(2*pi*(x1 + y2))", 2), z, v)
    assert max(res.values()) < 1e-9
