"""Quadrature over the projectivized fibers CP^{n-1} and fiber moments.

The fiber over z is covered by the max-modulus cells
``U_i = {[v] : |v^i| >= |v^j| for all j}``; in the affine chart ``v^i = 1``
the cell is the closed unit polydisc in ``w = (v^j)_{j != i}``.  Each ``w_j``
gets polar nodes: Gauss-Legendre in the radius (mapped to [0, 1]) times
equispaced angles.

Conventions for densities against real Lebesgue measure:

* fiber measure ``dsigma = omega_V^{n-1}/(n-1)!`` has density
  ``2^{n-1} det[(log G)_{j kbar}]_{j,k != i}`` in the real chart coordinates;
* ``omega_H^n/n!`` has density ``2^n det(G_{i jbar})`` against ``dx dy``;
* hence ``dmu_M`` has density ``2^n * int det(G_{i jbar}) dsigma``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import factorial, pi

import numpy as np

from .expressions import JetPoint, as_expression
from .geometry import BundleGeometry
from .grid import TorusGrid
from .jets import Coordinates, d_z

#: Number of (base x fiber) points handled per jet evaluation.
POINT_BUDGET = 16384

_WORKERS = 1


def set_workers(count):
    """Evaluate fiber-integration chunks on ``count`` threads (results are placed by chunk index)."""
    global _WORKERS
    if int(count) < 1:
        raise ValueError("worker count must be >= 1")
    _WORKERS = int(count)


class ProjectivityError(ValueError):
    """A fiber integrand is not invariant under v -> lambda v."""


@dataclass(frozen=True)
class FiberRule:
    """Quadrature nodes and weights on CP^{n-1}.

    Attributes
    ----------
    v : ndarray, shape (size, n)
        Representative fiber vectors (chart coordinate ``v^i = 1``).
    weights : ndarray, shape (size,)
        Real Lebesgue weights of the chart coordinates (polar Jacobian included).
    chart : ndarray of int, shape (size,)
        Chart index ``i`` of each node.
    normalization : str
        Convention for the induced volume density ``mu_M``: ``"none"`` (undivided),
        ``"projective"`` (divided by the Fubini-Study volume of CP^{n-1}) or
        ``"fiber"`` (divided by the fiber volume at each base point).
    """

    n: int
    radial_order: int
    angular_order: int
    v: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    chart: np.ndarray = field(repr=False)
    normalization: str = "none"

    @property
    def size(self):
        return len(self.weights)

    def chart_slices(self):
        """(chart index, slice of nodes, other coordinate indices) per chart."""
        per = self.size // self.n
        return [(i, slice(i * per, (i + 1) * per), [j for j in range(self.n) if j != i]) for i in range(self.n)]


NORMALIZATIONS = ("none", "projective", "fiber")


def build_fiber_rule(n, radial_order=16, angular_order=32, normalization="none"):
    """Tensor-product polar rule on each max-modulus chart cell.

    Node count is ``n * (radial_order * angular_order)**(n-1)``.
    """
    if n < 2:
        raise ValueError("fiber rules need n >= 2")
    if radial_order < 2 or angular_order < 2:
        raise ValueError("quadrature orders must be >= 2")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {', '.join(NORMALIZATIONS)}")
    xi, wr = np.polynomial.legendre.leggauss(radial_order)
    r = 0.5 * (xi + 1.0)
    wr = 0.5 * wr * r * (2 * pi / angular_order)
    ang = 2 * pi * np.arange(angular_order) / angular_order
    w1 = (r[:, None] * np.exp(1j * ang)[None, :]).ravel()
    wt1 = np.repeat(wr, angular_order)
    m = n - 1
    grids = np.meshgrid(*([np.arange(len(w1))] * m), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=-1)
    wpts = w1[idx]
    wts = np.prod(wt1[idx], axis=-1)
    vs, ws, cs = [], [], []
    for i in range(n):
        v = np.empty((len(wts), n), complex)
        v[:, i] = 1.0
        others = [j for j in range(n) if j != i]
        v[:, others] = wpts
        vs.append(v)
        ws.append(wts)
        cs.append(np.full(len(wts), i))
    return FiberRule(n, radial_order, angular_order, np.concatenate(vs), np.concatenate(ws), np.concatenate(cs),
                     normalization)


def fubini_study_volume(n):
    """Closed-form volume of CP^{n-1} for omega_V of the flat metric."""
    return (2 * pi) ** (n - 1) / factorial(n - 1)


def fiber_density(geo, rule):
    """2^{n-1} det of the chart minor of (log G)_{j kbar} at nodes, shape (..., size)."""
    fs = geo.fiber_fubini_study
    n = rule.n
    out = np.empty(fs.shape[:-2], float)
    for i, sl, others in rule.chart_slices():
        sub = fs[..., sl, :, :][..., others, :][..., :, others]
        out[..., sl] = np.linalg.det(sub).real if n > 2 else sub[..., 0, 0].real
    return out * 2 ** (n - 1)


# ----------------------------------------------------------------------------
# the chunked integration engine


def integrate_over_fibers(metric, z, rule, integrand, order=2, grid=None, index=None, budget=POINT_BUDGET):
    """Sum ``integrand(geo)`` against the fiber measure, for many base points.

    Parameters
    ----------
    z : ndarray, shape (nb, n)
    integrand : callable
        Receives a :class:`BundleGeometry` on batch (chunk, size) and returns
        a dict of arrays with leading shape (chunk, size).
    grid, index
        Grid and per-point integer indices, needed for grid-field metrics.

    Returns
    -------
    dict of ndarray with leading shape (nb,)
    """
    z = np.asarray(z, complex).reshape(-1, metric.n)
    nb = len(z)
    chunk = max(1, budget // rule.size)

    def evaluate(s):
        e = min(nb, s + chunk)
        idx = None if index is None else tuple(np.asarray(ix)[s:e, None] for ix in index)
        point = JetPoint(z[s:e, None, :], rule.v[None, :, :], grid, idx)
        geo = BundleGeometry(metric, point, order)
        meas = fiber_density(geo, rule) * rule.weights
        out = {}
        for name, val in integrand(geo).items():
            val = np.asarray(val)
            tail = val.shape[2:]
            w = meas.reshape(meas.shape + (1,) * len(tail))
            out[name] = np.sum(np.broadcast_to(val, meas.shape + tail) * w, axis=1)
        return s, e, out

    starts = range(0, nb, chunk)
    if _WORKERS > 1 and len(starts) > 1:
        with ThreadPoolExecutor(_WORKERS) as pool:
            parts = list(pool.map(evaluate, starts))
    else:
        parts = [evaluate(s) for s in starts]
    results = {}
    for s, e, out in parts:
        for name, part in out.items():
            if name not in results:
                results[name] = np.empty((nb,) + part.shape[1:], dtype=part.dtype)
            results[name][s:e] = part
    return results


def fiber_integrate(metric, z, integrand, rule, check_points=4):
    """Integrate a projectively invariant function of (z, v) over the fiber at z.

    ``integrand`` is an expression (string or :class:`Expression`) or a
    callable ``f(z, v) -> array``.
    """
    z = np.asarray(z, complex)
    if not callable(integrand) or hasattr(integrand, "jet"):
        expr = as_expression(integrand, metric.n)
        func = lambda zz, vv: expr.jet(JetPoint(zz, vv), 0).value  # noqa: E731
    else:
        func = integrand
    probe = rule.v[np.linspace(0, rule.size - 1, check_points).astype(int)]
    zz = np.broadcast_to(z.reshape(-1, metric.n)[0], probe.shape)
    lam = 1.7 * np.exp(0.3j)
    a, b = np.asarray(func(zz, probe)), np.asarray(func(zz, lam * probe))
    if np.max(np.abs(a - b)) > 1e-9 * max(1.0, float(np.max(np.abs(a)))):
        raise ProjectivityError("integrand changes under v -> lambda v")

    def fn(geo):
        return {"I": func(geo.point.z, geo.point.v)}

    out = integrate_over_fibers(metric, z.reshape(-1, metric.n), rule, fn)["I"]
    return out.reshape(z.shape[:-1])


# ----------------------------------------------------------------------------
# fiber moments


@dataclass
class FiberMoments:
    """Fiber averages at a set of base points (leading axes = point shape).

    ``mu_M_density`` is the density of the induced volume form against the
    real coordinate measure; ``omega_M[..., i, j]`` is the unweighted fiber
    integral of ``G_{i jbar}`` (the coefficients of omega_M up to the
    constant factor (n-1)!).
    """

    vol: np.ndarray
    mu_M_density: np.ndarray
    kappa: np.ndarray
    rho: np.ndarray
    h_inv: np.ndarray
    g_inv: np.ndarray
    omega_M: np.ndarray
    kappa_theta: np.ndarray = None
    rho_theta: np.ndarray = None

    def reshape(self, shape):
        def r(a, tail):
            return None if a is None else a.reshape(tuple(shape) + a.shape[a.ndim - tail:])
        return FiberMoments(r(self.vol, 0), r(self.mu_M_density, 0), r(self.kappa, 0), r(self.rho, 0),
                            r(self.h_inv, 2), r(self.g_inv, 2), r(self.omega_M, 2),
                            r(self.kappa_theta, 0), r(self.rho_theta, 0))


def torsion_corrections(geo):
    """Pointwise correction terms of the vartheta-mean curvatures.

    Returns (c_K, c_R) with
    ``c_K = (|vartheta_i v^i|^2 + Re(vartheta_{i,jbar} v^i vbar^j)) / G`` and
    ``c_R = ||vartheta||_G^2 + Re(vartheta_{i,jbar} G^{i jbar})``.
    """
    th = geo.vartheta
    thz = geo.vartheta_zbar
    v = np.broadcast_to(geo.point.v, th.shape)
    G = geo.G.value
    tv = np.sum(th * v, axis=-1)
    radial = np.einsum("...ij,...i,...j->...", thz, v, np.conj(v))
    c_K = (np.abs(tv) ** 2 + radial.real) / G
    norm = np.einsum("...ij,...i,...j->...", geo.contra, th, np.conj(th)).real
    tr = np.einsum("...ij,...ij->...", thz, geo.contra).real
    return c_K, norm + tr


def _moment_integrand(with_torsion):
    def fn(geo):
        det = geo.levi_det
        G = geo.G.value
        v = np.broadcast_to(geo.point.v, G.shape + (geo.n,))
        out = {
            "vol": np.ones_like(det),
            "W": det,
            "K": geo.holomorphic_curvature * det,
            "Ric": geo.ricci * det,
            "h": (2.0 / G)[..., None, None] * v[..., :, None] * np.conj(v)[..., None, :] * det[..., None, None],
            "g": 2.0 * geo.contra * det[..., None, None],
            "omega": geo.levi,
        }
        if with_torsion:
            c_K, c_R = torsion_corrections(geo)
            out["cK"] = c_K * det
            out["cR"] = c_R * det
        return out
    return fn


def fiber_moments(metric, z, rule, with_torsion=True, grid=None, index=None):
    """Fiber volume, induced volume density, mean curvatures and induced metrics.

    ``z`` has shape (..., n); every output carries the leading shape ``...``.
    """
    z = np.asarray(z, complex)
    shape = z.shape[:-1]
    n = metric.n
    order = 4 if with_torsion else 2
    raw = integrate_over_fibers(metric, z.reshape(-1, n), rule, _moment_integrand(with_torsion), order, grid, index)
    W = raw["W"].real
    vol = raw["vol"].real
    scale = {"none": 1.0, "projective": fubini_study_volume(n), "fiber": vol}[rule.normalization]
    m = FiberMoments(
        vol=vol,
        mu_M_density=2 ** n * W / scale,
        kappa=raw["K"].real / W,
        rho=raw["Ric"].real / W,
        h_inv=raw["h"] / W[:, None, None],
        g_inv=raw["g"] / W[:, None, None],
        omega_M=raw["omega"],
    )
    if with_torsion:
        m.kappa_theta = m.kappa - raw["cK"].real / W / (n - 1)
        m.rho_theta = m.rho - raw["cR"].real / W / (n - 1)
    return m.reshape(shape)


def grid_for(metric, resolution, extra=()):
    """Torus grid keeping only the base axes the data depends on."""
    deps = set(metric.base_variables())
    for e in extra:
        deps |= {a for a in e.variables() if a < 2 * metric.n}
    return TorusGrid.for_dependencies(metric.n, resolution, deps, metric.periods)


def grid_moments(metric, grid, rule, with_torsion=True):
    """:func:`fiber_moments` at every grid point (outputs in grid shape)."""
    m = fiber_moments(metric, grid.z_points(), rule, with_torsion, grid, grid.flat_index())
    return m.reshape(grid.shape)


def omega_M_closedness(grid, omega):
    """max |d_k a_{i jbar} - d_i a_{k jbar}| for omega with coefficients ``omega`` on the grid."""
    n = grid.n
    d = np.stack([np.stack([np.stack([grid.d_z(omega[..., i, j], k) for j in range(n)], -1)
                            for i in range(n)], -2) for k in range(n)], -3)  # [k, i, j]
    res = 0.0
    for k in range(n):
        for i in range(n):
            res = max(res, float(np.max(np.abs(d[..., k, i, :] - d[..., i, k, :]))))
    return res


# ----------------------------------------------------------------------------
# divergence identities


class TestForm:
    """Horizontal (1,0)-form alpha_i(z, v) built from base expressions.

    ``alpha_i = coefficients_i(z) + d_i potential(z) + nu(z) * vartheta_i(z, v)``;
    any part may be omitted.
    """

    __test__ = False

    def __init__(self, n, coefficients=None, potential=None, nu_vartheta=None):
        self.n = n
        self.coefficients = None if coefficients is None else [as_expression(c, n) for c in coefficients]
        self.potential = None if potential is None else as_expression(potential, n)
        self.nu = None if nu_vartheta is None else as_expression(nu_vartheta, n)

    def expressions(self):
        out = list(self.coefficients or [])
        out += [e for e in (self.potential, self.nu) if e is not None]
        return out

    def jets(self, geo):
        """alpha_i as jets of order geo.w (needs a geometry of order >= 4)."""
        n, c, w = self.n, geo.coords, geo.w
        terms = [None] * n
        point = geo.point

        def add(i, j):
            terms[i] = j if terms[i] is None else terms[i] + j

        if self.coefficients is not None:
            for i, e in enumerate(self.coefficients):
                add(i, e.jet(point, w))
        if self.potential is not None:
            pj = self.potential.jet(point, w + 1)
            for i in range(n):
                add(i, d_z(pj, c, i))
        if self.nu is not None:
            nj = self.nu.jet(point, w)
            for i in range(n):
                add(i, nj * geo.vartheta_jets[i])
        return terms


def divergence_residual(metric, grid, rule, alpha):
    """Integrals over P(TM) of the two divergence identities for ``alpha``.

    Returns ``(|int G^{i jbar}(alpha_{i,jbar} + alpha_i conj(vartheta_j)) dmu|,
    |int (alpha_{i,jbar} v^i vbar^j + alpha_i v^i conj(vartheta_j v^j))/G dmu|)``
    together with the integrals of the absolute integrands as a scale.
    """
    n = metric.n
    if alpha is None or not alpha.expressions():
        return 0.0, 0.0, {"scale1": 0.0, "scale2": 0.0}

    def fn(geo):
        a = alpha.jets(geo)
        a0 = np.stack([np.broadcast_to(j.value, geo.G.value.shape) for j in a], -1)
        azb = np.stack([np.stack([np.broadcast_to(geo.delta_bar(a[i], j).value, geo.G.value.shape)
                                  for j in range(n)], -1) for i in range(n)], -2)
        th = geo.vartheta
        v = np.broadcast_to(geo.point.v, th.shape)
        det = geo.levi_det
        I1 = np.einsum("...ij,...ij->...", geo.contra, azb + a0[..., :, None] * np.conj(th)[..., None, :])
        rad = np.einsum("...ij,...i,...j->...", azb, v, np.conj(v))
        I2 = (rad + np.sum(a0 * v, -1) * np.conj(np.sum(th * v, -1))) / geo.G.value
        return {"I1": I1 * det, "I2": I2 * det, "A1": np.abs(I1) * det, "A2": np.abs(I2) * det}

    raw = integrate_over_fibers(metric, grid.z_points(), rule, fn, 4, grid, grid.flat_index())
    tot = {k: grid.integrate(2 ** n * v.reshape(grid.shape)) for k, v in raw.items()}
    return abs(tot["I1"]), abs(tot["I2"]), {"scale1": float(tot["A1"].real), "scale2": float(tot["A2"].real)}
