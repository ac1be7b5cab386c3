"""Kobayashi, holomorphic and Ricci curvature, the hh-curvature, and conformal laws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expressions import JetPoint, as_expression
from .geometry import BundleGeometry
from .jets import Coordinates, d_v, d_z, d_zbar
from .metrics import ConformalMetric


def _geometry(metric, z, v, order):
    geo = BundleGeometry(metric, JetPoint(z, v), order)
    geo.check_pseudoconvex()
    return geo


def kobayashi_matrix(metric, z, v):
    """K_{i jbar} at (z, v); needs only second derivatives of G."""
    return _geometry(metric, z, v, 2).kobayashi


def holomorphic_curvature(metric, z, v):
    return _geometry(metric, z, v, 2).holomorphic_curvature


def ricci(metric, z, v):
    """Holomorphic Ricci curvature G^{i jbar} K_{i jbar} / G."""
    return _geometry(metric, z, v, 2).ricci


def hh_curvature(metric, z, v):
    """R^i_{j,k mbar} as an array indexed [..., i, j, k, m]."""
    return _geometry(metric, z, v, 4).hh_curvature


@dataclass(frozen=True)
class CurvatureSample:
    K_matrix: np.ndarray
    K_hol: np.ndarray
    ric: np.ndarray
    R_hh: np.ndarray = None


def curvature_at(metric, z, v, with_hh=False):
    geo = _geometry(metric, z, v, 4 if with_hh else 2)
    return CurvatureSample(geo.kobayashi, geo.holomorphic_curvature, geo.ricci,
                           geo.hh_curvature if with_hh else None)


def contraction_residual(metric, z, v):
    """max |G_{i lbar} R^i_{j,k mbar} v^j vbar^l - K_{k mbar}|."""
    geo = _geometry(metric, z, v, 4)
    vv = np.broadcast_to(np.asarray(v, complex), geo.G.value.shape + (metric.n,))
    lhs = np.einsum("...il,...ijkm,...j,...l->...km", geo.levi, geo.hh_curvature, vv, np.conj(vv))
    return float(np.max(np.abs(lhs - geo.kobayashi)))


def log_hessian_frame_residual(metric, z, v):
    """Componentwise check of i dd̄ log G = omega_V - Theta in the (dz, δv) frame.

    With dv = δv - N dz the z z̄-block becomes
    ``A - B conj(N) - N^T C + N^T D conj(N)`` and must equal ``-K/G``;
    the z v̄-block ``B - N^T D`` must vanish; the v v̄-block must equal
    the fiber Fubini-Study matrix.  Returns the three max residuals.
    """
    geo = _geometry(metric, z, v, 3)
    A, B, C, D = geo.log_hessian_blocks
    N = geo.N
    Nt = np.swapaxes(N, -1, -2)
    Nb = np.conj(N)
    zz = A - B @ Nb - Nt @ C + Nt @ D @ Nb
    G = geo.G.value[..., None, None]
    r_zz = np.max(np.abs(zz + geo.kobayashi / G))
    r_zv = np.max(np.abs(B - Nt @ D))
    r_vv = np.max(np.abs(D - geo.fiber_fubini_study))
    return {"zz": float(r_zz), "zv": float(r_zv), "vv": float(r_vv)}


# ----------------------------------------------------------------------------
# conformal laws


def base_derivatives(f, point, n):
    """(f, f_i, f_{i jbar}) values of a base function at the points of ``point``."""
    c = Coordinates(n)
    fj = as_expression(f, n).jet(point, 2).real
    grad = [d_z(fj, c, i) for i in range(n)]
    hess = np.stack([np.stack([np.broadcast_to(d_zbar(grad[i], c, j).value, fj.value.shape)
                               for j in range(n)], axis=-1) for i in range(n)], axis=-2)
    g = np.stack([np.broadcast_to(gi.value, fj.value.shape) for gi in grad], axis=-1)
    return fj.value, g, hess


def _rel(a, b):
    """Max of |a - b| / max(|b|, 1) over all entries."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))) if a.size else 0.0


def conformal_curvature_check(metric, f, z, v):
    """Residuals of every conformal transformation law at the samples (z, v).

    Compares the geometry of ``exp(f) * metric`` computed directly against
    the prediction from the geometry of ``metric`` for: the Levi matrix and
    its determinant, the nonlinear and Chern-Finsler connections, the
    horizontal derivative, the fiber Fubini-Study form, the Kobayashi
    matrix, holomorphic and Ricci curvature, and the torsion (both its
    transformation law and the invariance of its trace-free part).
    """
    n = metric.n
    point = JetPoint(z, v)
    base = BundleGeometry(metric, point, 4)
    hat = BundleGeometry(ConformalMetric(n, f, metric), JetPoint(z, v), 4)
    f0, fi, fij = base_derivatives(f, point, n)
    ef = np.exp(f0)
    shape = base.G.value.shape
    f0 = np.broadcast_to(f0, shape)
    ef = np.broadcast_to(ef, shape)
    fi = np.broadcast_to(fi, shape + (n,))
    fij = np.broadcast_to(fij, shape + (n, n))
    vv = np.broadcast_to(np.asarray(v, complex), shape + (n,))
    G = base.G.value
    eye = np.eye(n)
    res = {}
    res["levi"] = _rel(hat.levi, ef[..., None, None] * base.levi)
    res["levi_det"] = _rel(hat.levi_det, np.exp(n * f0) * base.levi_det)
    res["N"] = _rel(hat.N, base.N + vv[..., :, None] * fi[..., None, :])
    # Gamma-hat^i_{k,j} = Gamma^i_{k,j} + f_j delta^i_k
    res["gamma"] = _rel(hat.gamma, base.gamma + eye[:, :, None] * fi[..., None, None, :])
    # delta-hat_j Q = delta_j Q - f_j v^i dv_i Q, tested on Q = G (the unscaled metric)
    c = Coordinates(n)
    Q = base.G
    pred = []
    got = []
    for j in range(n):
        radial = sum(vv[..., i] * d_v(Q, c, i).value for i in range(n))
        pred.append(base.delta(Q, j).value - fi[..., j] * radial)
        got.append(hat.delta(Q, j).value)
    res["delta"] = _rel(np.stack(got, -1), np.stack(pred, -1))
    res["fubini_study"] = _rel(hat.fiber_fubini_study, base.fiber_fubini_study)
    res["kobayashi"] = _rel(hat.kobayashi, ef[..., None, None] * (base.kobayashi - fij * G[..., None, None]))
    fvv = np.einsum("...ij,...i,...j->...", fij, vv, np.conj(vv)).real
    res["holomorphic"] = _rel(hat.holomorphic_curvature, (base.holomorphic_curvature - fvv / G) / ef)
    trace = np.einsum("...ij,...ij->...", base.contra, fij).real
    res["ricci"] = _rel(hat.ricci, (base.ricci - trace) / ef)
    # theta-hat^i_{jk} = theta^i_{jk} + f_j delta^i_k - f_k delta^i_j
    law = base.theta + eye[:, None, :] * fi[..., None, :, None] - eye[:, :, None] * fi[..., None, None, :]
    res["torsion_law"] = _rel(hat.theta, law)
    res["vartheta_law"] = _rel(hat.vartheta, base.vartheta + (n - 1) * fi)
    res["torsion_tracefree"] = _rel(trace_free_torsion(hat.theta, hat.vartheta, n),
                                    trace_free_torsion(base.theta, base.vartheta, n))
    return res


def trace_free_torsion(theta, vartheta, n):
    """theta^i_{jk} - (vartheta_j delta^i_k - vartheta_k delta^i_j)/(n-1)."""
    eye = np.eye(n)
    red = eye[:, None, :] * vartheta[..., None, :, None] - eye[:, :, None] * vartheta[..., None, None, :]
    return theta - red / (n - 1)
