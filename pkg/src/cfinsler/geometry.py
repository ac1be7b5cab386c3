"""Connection, torsion and curvature of a complex Finsler metric from one jet.

Index conventions
-----------------
* ``levi[..., i, j] = G_{i jbar} = d_v^i d_vbar^j G``.
* ``G^{i kbar}`` is the inverse with ``G^{i kbar} G_{j kbar} = delta^i_j``;
  as a matrix ``levi_inv = inv(levi)`` this is ``G^{i kbar} = levi_inv[..., k, i]``.
  The array ``contra[..., i, k] = G^{i kbar}`` is stored alongside.
* ``N[..., i, j] = N^i_j``, ``gamma[..., i, j, k] = Gamma^i_{j,k}``,
  ``C[..., i, j, k] = C^i_{jk}``, ``theta[..., i, j, k] = theta^i_{jk}``.

Everything is derived from a single Taylor jet of ``G``.  Quantities that
need derivatives of connection coefficients (such as ``delta_jbar`` of the
torsion or the hh-curvature) keep their own jets one order lower, so the
chain rule through ``G^{i jbar}`` and ``N`` is automatic.  Jet order 2 suffices
for the Kobayashi matrix, 3 for the connection and torsion, and 4 for
``delta_jbar`` of the torsion and the hh-curvature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .expressions import JetPoint
from .jets import Coordinates, JetOrderError, RealJet, d_v, d_vbar, d_z, d_zbar
from .wirtinger import DomainError


class PseudoconvexityError(ArithmeticError):
    """The Levi matrix is not positive definite (or G is not positive)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def jet_matrix_inverse(A):
    """Gauss-Jordan inverse of a small matrix of jets (no pivoting)."""
    n = len(A)
    order = min(a.order for row in A for a in row)
    M = [[A[i][j].truncate(order) for j in range(n)] for i in range(n)]
    one = RealJet.constant(1.0, order)
    zero = RealJet.constant(0.0, order)
    inv = [[one if i == j else zero for j in range(n)] for i in range(n)]
    for c in range(n):
        piv = M[c][c].reciprocal()
        M[c] = [x * piv for x in M[c]]
        inv[c] = [x * piv for x in inv[c]]
        for r in range(n):
            if r == c:
                continue
            fac = M[r][c]
            M[r] = [M[r][k] - fac * M[c][k] for k in range(n)]
            inv[r] = [inv[r][k] - fac * inv[c][k] for k in range(n)]
    return inv


def values(jets):
    """Values of a nested list of jets as an array with tensor axes last."""
    def rec(obj):
        if isinstance(obj, RealJet):
            return obj.value
        return [rec(o) for o in obj]
    return _to_array(rec(jets))


def _to_array(nested):
    arr, _ = _stack_nested(nested)
    return arr


def _stack_nested(nested):
    if isinstance(nested, list):
        parts = [_stack_nested(p) for p in nested]
        depth = parts[0][1]
        shape = np.broadcast_shapes(*[p[0].shape for p in parts])
        stacked = np.stack([np.broadcast_to(p[0], shape) for p in parts], axis=len(shape) - depth)
        return stacked, depth + 1
    return np.asarray(nested), 0


class BundleGeometry:
    """Lazily evaluated geometry of ``metric`` at a batch of bundle points.

    Parameters
    ----------
    metric : FinslerMetric
    point : JetPoint
    order : int
        Jet order of ``G``; see the module notes for what each order supports.
    """

    def __init__(self, metric, point: JetPoint, order=4):
        if order < 2:
            raise JetOrderError("geometry needs a jet of order >= 2")
        if np.any(np.all(point.v == 0, axis=-1)):
            raise DomainError("the fiber vector v must be non-zero")
        self.metric = metric
        self.point = point
        self.order = int(order)
        self.n = metric.n
        self.coords = Coordinates(self.n)
        self.G = metric.jet(point, self.order)
        if np.any(self.G.value <= 0):
            raise PseudoconvexityError("G is not positive at some sample")
        # working order of connection-level jets
        self.w = max(self.order - 3, 0)

    # --- derivatives of G -----------------------------------------------
    @cached_property
    def dv(self):
        return [d_v(self.G, self.coords, i) for i in range(self.n)]

    @cached_property
    def levi_jets(self):
        c, n = self.coords, self.n
        return [[d_vbar(self.dv[i], c, j) for j in range(n)] for i in range(n)]

    @cached_property
    def levi(self):
        return values(self.levi_jets)

    @cached_property
    def contra_jets(self):
        """G^{i kbar} as jets of the working order."""
        n = self.n
        low = [[a.truncate(self.w) for a in row] for row in self.levi_jets]
        M = jet_matrix_inverse(low)
        return [[M[k][i] for k in range(n)] for i in range(n)]

    @cached_property
    def contra(self):
        return values(self.contra_jets)

    @cached_property
    def levi_inv(self):
        return np.swapaxes(self.contra, -1, -2)

    @cached_property
    def levi_det(self):
        return np.linalg.det(self.levi).real

    def check_pseudoconvex(self):
        eig = np.linalg.eigvalsh(self.levi)
        if np.any(eig[..., 0] <= 0):
            bad = np.argwhere(eig[..., 0] <= 0)[0]
            raise PseudoconvexityError("Levi matrix is not positive definite", tuple(int(b) for b in bad))
        return eig[..., 0]

    @cached_property
    def _dz_dvbar(self):
        """d_z^j d_vbar^k G as jets of the working order: [j][k]."""
        c, n = self.coords, self.n
        dvb = [d_vbar(self.G, c, k) for k in range(n)]
        return [[d_z(dvb[k], c, j).truncate(self.w) for k in range(n)] for j in range(n)]

    # --- nonlinear connection and horizontal derivatives --------------------
    @cached_property
    def N_jets(self):
        n = self.n
        Gi = self.contra_jets
        H = self._dz_dvbar
        out = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = Gi[i][0] * H[j][0]
                for k in range(1, n):
                    acc = acc + Gi[i][k] * H[j][k]
                out[i][j] = acc
        return out

    @cached_property
    def N(self):
        return values(self.N_jets)

    def delta(self, Q, k):
        """delta_k Q = d_k Q - N^m_k dv_m Q."""
        c = self.coords
        out = d_z(Q, c, k)
        for m in range(self.n):
            out = out - self.N_jets[m][k] * d_v(Q, c, m)
        return out

    def delta_bar(self, Q, k):
        """delta_kbar Q = d_kbar Q - conj(N^m_k) dvbar_m Q."""
        c = self.coords
        out = d_zbar(Q, c, k)
        for m in range(self.n):
            out = out - self.N_jets[m][k].conj() * d_vbar(Q, c, m)
        return out

    def _need(self, order, what):
        if self.order < order:
            raise JetOrderError(f"{what} needs a jet of order >= {order}, have {self.order}")

    # --- Chern-Finsler connection ------------------------------------------
    @cached_property
    def gamma_jets(self):
        self._need(3, "the horizontal connection")
        n = self.n
        Gi = self.contra_jets
        dA = [[[self.delta(self.levi_jets[j][l], k) for l in range(n)] for k in range(n)] for j in range(n)]
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    acc = Gi[i][0] * dA[j][k][0]
                    for l in range(1, n):
                        acc = acc + Gi[i][l] * dA[j][k][l]
                    out[i][j][k] = acc
        return out

    @cached_property
    def gamma(self):
        return values(self.gamma_jets)

    @cached_property
    def C_jets(self):
        self._need(3, "the vertical connection")
        n, c = self.n, self.coords
        Gi = self.contra_jets
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for j in range(n):
            dA = [[d_v(self.levi_jets[j][l], c, k) for l in range(n)] for k in range(n)]
            for i in range(n):
                for k in range(n):
                    acc = Gi[i][0] * dA[k][0]
                    for l in range(1, n):
                        acc = acc + Gi[i][l] * dA[k][l]
                    out[i][j][k] = acc
        return out

    @cached_property
    def C(self):
        return values(self.C_jets)

    # --- torsion --------------------------------------------------------------
    @cached_property
    def theta_jets(self):
        n, g = self.n, self.gamma_jets
        return [[[g[i][k][j] - g[i][j][k] for k in range(n)] for j in range(n)] for i in range(n)]

    @cached_property
    def theta(self):
        return values(self.theta_jets)

    @cached_property
    def vartheta_jets(self):
        n, t = self.n, self.theta_jets
        out = []
        for k in range(n):
            acc = t[0][k][0]
            for m in range(1, n):
                acc = acc + t[m][k][m]
            out.append(acc)
        return out

    @cached_property
    def vartheta(self):
        return values(self.vartheta_jets)

    @cached_property
    def vartheta_zbar_jets(self):
        """theta_{i, jbar} = delta_jbar theta_i."""
        self._need(4, "delta_jbar of the torsion")
        n = self.n
        return [[self.delta_bar(self.vartheta_jets[i], j) for j in range(n)] for i in range(n)]

    @cached_property
    def vartheta_zbar(self):
        return values(self.vartheta_zbar_jets)

    @cached_property
    def vartheta_vertical(self):
        """(dv_m vartheta_i, dvbar_m vartheta_i) as arrays [..., i, m]."""
        self._need(4, "vertical derivatives of the torsion")
        n, c = self.n, self.coords
        dv_ = [[d_v(self.vartheta_jets[i], c, m).value for m in range(n)] for i in range(n)]
        dvb = [[d_vbar(self.vartheta_jets[i], c, m).value for m in range(n)] for i in range(n)]
        return _to_array(dv_), _to_array(dvb)

    # --- curvature ---------------------------------------------------------------
    @cached_property
    def kobayashi(self):
        """K_{i jbar} = -d_i d_jbar G + G^{k mbar} (d_i dv_mbar G)(d_jbar dv_k G)."""
        n, c = self.n, self.coords
        G2 = self.G.truncate(2)
        dzb = [d_zbar(G2, c, j) for j in range(n)]
        hess = _to_array([[d_z(dzb[j], c, i).value for j in range(n)] for i in range(n)])
        dvb = [d_vbar(G2, c, m) for m in range(n)]
        mixed = _to_array([[d_z(dvb[m], c, i).value for m in range(n)] for i in range(n)])  # [i, m]
        contra0 = self.contra  # [k, m] = G^{k mbar}
        # d_jbar dv_k G = conj(d_j dv_kbar G)
        conj_mixed = np.conj(mixed)  # [j, k]
        corr = np.einsum("...km,...im,...jk->...ij", contra0, mixed, conj_mixed)
        return -hess + corr

    @cached_property
    def holomorphic_curvature(self):
        v = np.broadcast_to(self.point.v, self.kobayashi.shape[:-2] + (self.n,))
        num = np.einsum("...ij,...i,...j->...", self.kobayashi, v, np.conj(v))
        return num.real / self.G.value ** 2

    @cached_property
    def ricci(self):
        num = np.einsum("...ij,...ij->...", self.contra, self.kobayashi)
        return num.real / self.G.value

    @cached_property
    def hh_curvature(self):
        """R^i_{j,k mbar} = -delta_mbar Gamma^i_{j,k} - C^i_{js} delta_mbar N^s_k, array [..., i, j, k, m]."""
        self._need(4, "the hh-curvature")
        n = self.n
        dN = [[[self.delta_bar(self.N_jets[s][k], m).value for m in range(n)] for k in range(n)] for s in range(n)]
        dN = _to_array(dN)  # [s, k, m]
        dG = [[[[self.delta_bar(self.gamma_jets[i][j][k], m).value for m in range(n)]
                for k in range(n)] for j in range(n)] for i in range(n)]
        dG = _to_array(dG)
        C0 = self.C
        return -dG - np.einsum("...ijs,...skm->...ijkm", C0, dN)

    # --- log G Hessian blocks ------------------------------------------------
    @cached_property
    def log_hessian_blocks(self):
        """Second Wirtinger derivatives of log G: (zz̄, z v̄, v z̄, v v̄) blocks."""
        n, c = self.n, self.coords
        L = self.G.truncate(2).log()
        dz_ = [d_z(L, c, i) for i in range(n)]
        dv_ = [d_v(L, c, i) for i in range(n)]
        A = _to_array([[d_zbar(dz_[i], c, j).value for j in range(n)] for i in range(n)])
        B = _to_array([[d_vbar(dz_[i], c, j).value for j in range(n)] for i in range(n)])
        Cb = _to_array([[d_zbar(dv_[i], c, j).value for j in range(n)] for i in range(n)])
        D = _to_array([[d_vbar(dv_[i], c, j).value for j in range(n)] for i in range(n)])
        return A, B, Cb, D

    @cached_property
    def fiber_fubini_study(self):
        """(log G)_{i jbar} = G_{i jbar}/G - G_i G_jbar / G^2 at the points."""
        G = self.G.value[..., None, None]
        Gi = _to_array([d.value for d in self.dv])
        return self.levi / G - Gi[..., :, None] * np.conj(Gi)[..., None, :] / G ** 2

    def sample(self):
        """Collect the standard pointwise tensors into a :class:`GeometrySample`."""
        has_conn = self.order >= 3
        has_zbar = self.order >= 4
        return GeometrySample(
            z=self.point.z, v=self.point.v, G=self.G.value, levi=self.levi, levi_inv=self.levi_inv,
            contra=self.contra, levi_det=self.levi_det, N=self.N if has_conn else None,
            gamma=self.gamma if has_conn else None, C=self.C if has_conn else None,
            theta=self.theta if has_conn else None, vartheta=self.vartheta if has_conn else None,
            vartheta_zbar=self.vartheta_zbar if has_zbar else None,
        )


@dataclass(frozen=True)
class GeometrySample:
    """Pointwise tensors at (z, v); see :mod:`cfinsler.geometry` for index conventions."""

    z: np.ndarray
    v: np.ndarray
    G: np.ndarray
    levi: np.ndarray
    levi_inv: np.ndarray
    contra: np.ndarray
    levi_det: np.ndarray
    N: np.ndarray = None
    gamma: np.ndarray = None
    C: np.ndarray = None
    theta: np.ndarray = None
    vartheta: np.ndarray = None
    vartheta_zbar: np.ndarray = None


def geometry_at(metric, z, v, order=4):
    """All connection and torsion data at (z, v) from one jet expansion.

    ``z`` and ``v`` may carry matching leading batch axes.
    """
    geo = BundleGeometry(metric, JetPoint(z, v), order)
    geo.check_pseudoconvex()
    return geo.sample()
