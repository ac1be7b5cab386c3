import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfinsler import geometry_at, metric_from_config
from cfinsler.geometry import PseudoconvexityError

from oracles import FAMILIES, HERMITIAN, sample

NAMES = sorted(FAMILIES)


@pytest.mark.parametrize("name", NAMES)
def test_structural_identities(name):
    m = metric_from_config(FAMILIES[name])
    z, v = sample(2, 12, 5)
    g = geometry_at(m, z, v, 4)
    assert np.allclose(g.levi @ g.levi_inv, np.eye(2), atol=1e-12)
    assert np.allclose(np.einsum("pij,pi,pj->p", g.levi, v, np.conj(v)).real, g.G, rtol=1e-12)
    assert np.allclose(np.einsum("pijk,pj->pik", g.gamma, v), g.N, atol=1e-11)
    assert np.allclose(g.theta, -np.swapaxes(g.theta, -1, -2), atol=1e-11)
    assert np.allclose(np.einsum("pmkm->pk", g.theta), g.vartheta, atol=1e-11)
    # Cartan tensor is annihilated by the radial direction
    assert np.allclose(np.einsum("pijk,pj->pik", g.C, v), 0.0, atol=1e-10)


@pytest.mark.parametrize("name", HERMITIAN)
def test_hermitian_metrics_have_no_fiber_dependence(name):
    m = metric_from_config(FAMILIES[name])
    z, v = sample(2, 8, 6)
    a = geometry_at(m, z, v, 4)
    b = geometry_at(m, z, np.roll(v, 1, axis=0), 4)
    assert np.allclose(a.gamma, b.gamma, atol=1e-12)
    assert np.allclose(a.levi, b.levi, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(0, 2 * np.pi))
def test_connection_is_scale_invariant(r, phase):
    m = metric_from_config(FAMILIES["z_twisted_general"])
    z, v = sample(2, 3, 7)
    lam = r * np.exp(1j * phase)
    a, b = geometry_at(m, z, v, 4), geometry_at(m, z, lam * v, 4)
    assert np.allclose(a.gamma, b.gamma, atol=1e-10)
    assert np.allclose(lam * a.N, b.N, atol=1e-10)
    assert np.allclose(b.G, abs(lam) ** 2 * a.G, rtol=1e-12)


def test_non_convex_metric_raises_with_witness():
    m = metric_from_config({"family": "quartic_perturbation", "n": 2, "lambda": -0.9})
    z, v = sample(2, 64, 8)
    with pytest.raises(PseudoconvexityError) as info:
        geometry_at(m, z, v, 2)
    assert info.value.witness is not None
