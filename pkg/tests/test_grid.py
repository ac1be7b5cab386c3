import numpy as np
import pytest

from cfinsler.grid import GridField, TorusGrid


def trig(grid):
    x1, x2, y1, y2 = grid.mesh
    return np.cos(2 * np.pi * x1) * np.sin(2 * np.pi * y2 / grid.periods[3]) + 0.5 * np.sin(4 * np.pi * x2)


def test_construction_errors():
    with pytest.raises(ValueError):
        TorusGrid(2, (4, 4, 4))
    with pytest.raises(ValueError):
        TorusGrid(2, (4, 0, 4, 4))


def test_integration_is_exact_for_trig_polynomials():
    g = TorusGrid(2, (8, 8, 1, 8), (1.0, 1.0, 1.0, 2.0))
    assert np.isclose(g.integrate(np.ones(g.shape)), 2.0)
    assert abs(g.integrate(trig(g))) < 1e-14
    assert np.isclose(g.integrate(trig(g) ** 2), 2.0 * (0.25 + 0.125))


def test_spectral_derivative():
    g = TorusGrid(2, (8, 1, 1, 1))
    x = g.mesh[0]
    assert np.allclose(g.derivative(np.sin(2 * np.pi * x), 0), 2 * np.pi * np.cos(2 * np.pi * x))
    assert np.allclose(g.derivative(np.sin(2 * np.pi * x), 1), 0.0)
    f = np.exp(1j * 2 * np.pi * x)  # z-holomorphic pieces: d_zbar(e^{2 pi i x}) = i pi e^{...}
    assert np.allclose(g.d_zbar(f, 0), 1j * np.pi * f)


def test_resample_and_tile():
    coarse = TorusGrid(2, (6, 1, 1, 6))
    fine = TorusGrid(2, (12, 4, 4, 12))
    assert np.allclose(coarse.resample(np.cos(2 * np.pi * coarse.mesh[0]), fine),
                       np.cos(2 * np.pi * fine.mesh[0]))
    tiled = coarse.resample(np.ones(coarse.shape + (2, 2)), fine)
    assert tiled.shape == fine.shape + (2, 2)


def test_bandlimit_removes_nyquist():
    g = TorusGrid(2, (4, 1, 1, 1))
    x = g.mesh[0]
    assert np.allclose(g.bandlimit(np.cos(4 * np.pi * x)), 0.0)  # (-1)^j
    assert np.allclose(g.bandlimit(np.cos(2 * np.pi * x)), np.cos(2 * np.pi * x))


def test_grid_field_jet_interpolates():
    from cfinsler.expressions import JetPoint
    g = TorusGrid(2, (16, 1, 1, 1))
    phi = np.sin(2 * np.pi * g.mesh[0])
    field = GridField(g, phi, "phi")
    z = g.z_points()
    jet = field.jet(JetPoint(z, np.ones_like(z), g, g.flat_index()), 2)
    assert np.allclose(jet.value, phi.ravel())
    assert np.allclose(jet.partial({0: 1}), 2 * np.pi * np.cos(2 * np.pi * z[:, 0].real))
