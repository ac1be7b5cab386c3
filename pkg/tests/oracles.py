"""Independent reference implementations used by the tests.

Nothing here touches the jet machinery: derivatives come from finite
differences of ``metric.value`` or from sympy differentiation of the
Hermitian coefficients.
"""

from __future__ import annotations

import itertools

import numpy as np
import sympy as sp

# ----------------------------------------------------------------------------
# metric families used throughout the suite

A_EXPR = "exp(0.1*sin(2*pi*x1))"
B_EXPR = "exp(0.15*cos(2*pi*y2))"

FAMILIES = {
    "flat": {"family": "flat", "n": 2},
    "hermitian_conformal": {"family": "hermitian", "n": 2,
                            "h": [["exp(0.1*sin(2*pi*x1))", "0"], ["0", "exp(0.1*sin(2*pi*x1))"]]},
    "hermitian_general": {"family": "hermitian", "n": 2,
                          "h": [["2 + 0.5*sin(2*pi*x1)", "0.3*exp(2*pi*I*y1)*cos(2*pi*x2)"],
                                ["0", "1.5 + 0.4*cos(2*pi*y2)*sin(2*pi*x2)"]]},
    "quartic": {"family": "quartic_perturbation", "n": 2, "lambda": 0.1},
    "z_twisted": {"family": "z_twisted", "n": 2, "a": A_EXPR, "b": "1", "lambda": 0.05, "c": "1"},
    "z_twisted_general": {"family": "z_twisted", "n": 2, "a": A_EXPR, "b": "exp(0.2*cos(2*pi*x1))",
                          "lambda": 0.3, "c": "1 + 0.5*sin(2*pi*x1)"},
    "z_twisted_kahler": {"family": "z_twisted", "n": 2, "a": A_EXPR, "b": B_EXPR, "lambda": 0.05,
                         "c": f"({A_EXPR})*({B_EXPR})"},
}

HERMITIAN = ("flat", "hermitian_conformal", "hermitian_general")
KAHLER = ("flat", "quartic", "z_twisted_kahler")


def sample(n, count, seed):
    rng = np.random.default_rng(seed)
    z = rng.random((count, n)) + 1j * rng.random((count, n))
    v = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    return z, v / np.linalg.norm(v, axis=1, keepdims=True)


# ----------------------------------------------------------------------------
# finite-difference Wirtinger partials

_STENCIL = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))


FD_STEPS = {1: 1e-3, 2: 2e-3, 3: 3e-3}


class FiniteDifferencePartials:
    """Wirtinger partials of ``func(z, v)`` at fixed samples by nested 4th-order central differences.

    Each factor d/dz^k = (d_x - i d_y)/2 (and its relatives) is expanded into
    real directions; every real mixed partial uses a tensor-product stencil
    and is cached, since many Wirtinger indices share them.  The step grows
    with the order to balance truncation against roundoff.
    """

    def __init__(self, func, z, v, steps=None):
        self.func, self.z, self.v = func, np.asarray(z, complex), np.asarray(v, complex)
        self.n = self.z.shape[-1]
        self.steps = dict(FD_STEPS if steps is None else steps)
        self._cache = {}

    def real_partial(self, dirs):
        """Mixed partial along real directions ``(space, i, imaginary)``; space 0 = z, 1 = v."""
        dirs = tuple(sorted(dirs))
        if dirs in self._cache:
            return self._cache[dirs]
        n = self.n
        if not dirs:
            return self.func(self.z, self.v)
        h = self.steps.get(len(dirs), 3e-3)
        acc = 0.0
        for stencil in itertools.product(_STENCIL, repeat=len(dirs)):
            w = 1.0
            dz = np.zeros(n, complex)
            dv = np.zeros(n, complex)
            for (space, i, im), (s, ws) in zip(dirs, stencil):
                w *= ws
                step = s * h * (1j if im else 1.0)
                if space == 0:
                    dz[i] += step
                else:
                    dv[i] += step
            acc = acc + w * self.func(self.z + dz, self.v + dv)
        out = acc / h ** len(dirs)
        self._cache[dirs] = out
        return out

    def wirtinger(self, index):
        n = self.n
        ops = []
        for block in range(4):
            for i, c in enumerate(index[block * n:(block + 1) * n]):
                sign = -1.0 if block in (0, 2) else 1.0
                ops += [(block // 2, i, sign)] * c
        total = 0.0
        for choice in itertools.product((0, 1), repeat=len(ops)):
            coeff = 1.0 + 0j
            dirs = []
            for (space, i, sign), c in zip(ops, choice):
                coeff *= 0.5 if c == 0 else 0.5j * sign
                dirs.append((space, i, c))
            total = total + coeff * self.real_partial(dirs)
        return total


def fd_wirtinger(func, z, v, index, h=None):
    """One Wirtinger partial by finite differences (see :class:`FiniteDifferencePartials`)."""
    steps = None if h is None else {k: h for k in range(1, 8)}
    return FiniteDifferencePartials(func, z, v, steps).wirtinger(index)


# ----------------------------------------------------------------------------
# classical Hermitian geometry from h(z)

X = sp.symbols("x1:3", real=True)
Y = sp.symbols("y1:3", real=True)


def _sympy_entry(src):
    names = {"x1": X[0], "x2": X[1], "y1": Y[0], "y2": Y[1], "pi": sp.pi, "I": sp.I, "exp": sp.exp,
             "sin": sp.sin, "cos": sp.cos}
    return sp.sympify(src.replace("^", "**"), locals=names)


def _dz(e, k):
    return (sp.diff(e, X[k]) - sp.I * sp.diff(e, Y[k])) / 2


def _dzbar(e, k):
    return (sp.diff(e, X[k]) + sp.I * sp.diff(e, Y[k])) / 2


class HermitianOracle:
    """Chern connection and curvature of ``h_{i jbar}(z)`` by symbolic differentiation."""

    def __init__(self, h):
        n = len(h)
        self.n = n
        H = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                H[i][j] = _sympy_entry(h[i][j])
                if i != j:
                    H[j][i] = sp.conjugate(H[i][j])
        self.H = H
        args = X + Y
        lam = lambda e: sp.lambdify(args, e, "numpy")  # noqa: E731
        self.h = [[lam(H[i][j]) for j in range(n)] for i in range(n)]
        self.dh = [[[lam(_dz(H[j][l], k)) for l in range(n)] for j in range(n)] for k in range(n)]  # [k][j][l]
        self.dbh = [[[lam(_dzbar(H[j][l], m)) for l in range(n)] for j in range(n)] for m in range(n)]
        self.ddh = [[[[lam(_dzbar(_dz(H[j][l], k), m)) for l in range(n)] for j in range(n)] for k in range(n)]
                    for m in range(n)]  # [m][k][j][l]

    def _eval(self, table, z, depth):
        args = [z[:, 0].real, z[:, 1].real, z[:, 0].imag, z[:, 1].imag]

        def rec(t):
            if callable(t):
                return np.broadcast_to(np.asarray(t(*args), complex), (len(z),))
            return np.stack([rec(s) for s in t], axis=-1)
        return rec(table)

    def at(self, z, v):
        """Dict with Gamma, K_matrix, K, Ric, R_hh at the samples."""
        H = self._eval(self.h, z, 2)            # [p, l, j] -> transpose below
        H = np.swapaxes(H, -1, -2)              # H[p, j, l] = h_{j lbar}
        dH = np.moveaxis(self._eval(self.dh, z, 3), [-1, -2, -3], [-3, -2, -1])      # [p, k, j, l]
        dbH = np.moveaxis(self._eval(self.dbh, z, 3), [-1, -2, -3], [-3, -2, -1])    # [p, m, j, l]
        ddH = self._eval(self.ddh, z, 4)        # [p, l, j, k, m]
        ddH = np.transpose(ddH, (0, 4, 3, 2, 1))  # [p, m, k, j, l]
        Hinv = np.linalg.inv(H)                 # Hinv[l, i] = h^{lbar i}
        gamma = np.einsum("pli,pkjl->pijk", Hinv, dH)
        # R_{j lbar k mbar} = -d_k d_mbar h_{j lbar} + h^{s tbar} d_k h_{j tbar} d_mbar h_{s lbar}
        R = -ddH + np.einsum("pts,pkjt,pmsl->pmkjl", Hinv, dH, dbH)
        Kmat = np.einsum("pmkjl,pj,pl->pkm", R, v, np.conj(v))
        G = np.einsum("pjl,pj,pl->p", H, v, np.conj(v)).real
        K = np.einsum("pkm,pk,pm->p", Kmat, v, np.conj(v)).real / G ** 2
        contra = np.swapaxes(Hinv, -1, -2)      # contra[i, k] = G^{i kbar}
        Ric = np.einsum("pik,pik->p", contra, Kmat).real / G
        # R^i_{j,k mbar} = h^{lbar i} R_{j lbar k mbar}
        Rhh = np.einsum("pli,pmkjl->pijkm", Hinv, R)
        return {"gamma": gamma, "K_matrix": Kmat, "K": K, "Ric": Ric, "R_hh": Rhh, "G": G}


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0)))
