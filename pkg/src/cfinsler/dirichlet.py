"""Weighted Hermitian Dirichlet forms on the torus and their first eigenvalue.

For a Hermitian coefficient field ``c^{i jbar}(z)`` and a positive density
``w(z)`` the form is

    Q(phi) = int c^{i jbar} phi_i conj(phi_j) w dx,   M(phi) = int |phi|^2 w dx,

discretized on the band-limited (Nyquist-free) trigonometric subspace with
spectral Wirtinger derivatives and the trapezoidal rule.  ``apply`` returns
the Hermitian operator of the discrete form, so discrete critical points are
computed without a separate discretization of the operator.

Coefficients never depend on collapsed grid axes, so the eigenproblem splits
into Fourier modes ``exp(i k . x)`` along those axes.  Each mode gives a
shifted problem on the active grid; modes are scanned in order of a
coercivity lower bound until the bound exceeds the best eigenvalue found.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import eigh

from .grid import TorusGrid

DENSE_LIMIT = 1200


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def _symbols(grid, shift, anti=False):
    """Symbols of shifted d_i (or d_ibar when ``anti``), list of grid-shaped arrays."""
    n = grid.n
    sign = -1.0 if anti else 1.0
    out = []
    for i in range(n):
        kx = np.where(grid.nyquist_masks[i], 0.0, grid.wavenumbers[i])
        ky = np.where(grid.nyquist_masks[n + i], 0.0, grid.wavenumbers[n + i])
        out.append(np.broadcast_to(0.5 * (1j * kx + sign * ky) + shift[i], grid.shape))
    return out


class DirichletForm:
    """Discrete ``Q`` and ``M`` for coefficients (grid + (n, n)) and weight (grid).

    On complex functions ``Q`` is the Hermitian extension of the real form,

        Q(phi) = (1/2) int w (c^{ij} phi_i conj(phi_j) + c^{ij} phi_jbar conj(phi_ibar)),

    which agrees with ``int w c^{ij} phi_i phi_jbar`` on real ``phi``.  For a
    Fourier mode ``exp(i k . x)`` along collapsed axes, ``shift`` and
    ``shift_bar`` are the symbols of ``d_i`` and ``d_ibar`` on that mode.
    """

    def __init__(self, grid: TorusGrid, coeff, weight, shift=None, shift_bar=None):
        self.grid = grid
        self.n = grid.n
        self.coeff = np.asarray(coeff)
        self.weight = np.asarray(weight, float)
        self.cell = grid.cell_volume
        zero = np.zeros(self.n, complex)
        self.shift = zero if shift is None else np.asarray(shift, complex)
        self.shift_bar = zero if shift_bar is None else np.asarray(shift_bar, complex)

    @property
    def shifted(self):
        return bool(np.any(self.shift) or np.any(self.shift_bar))

    def gradient(self, phi):
        """Shifted spectral Wirtinger gradient d_i phi, grid + (n,)."""
        phi = self.grid.bandlimit(phi)
        u = self.grid.wirtinger_gradient(phi)
        if self.shifted:
            u = u + phi[..., None] * self.shift
        return u

    def gradient_bar(self, phi):
        """Shifted d_ibar phi, grid + (n,)."""
        phi = self.grid.bandlimit(phi)
        b = np.stack([self.grid.d_zbar(phi, i) for i in range(self.n)], axis=-1)
        if self.shifted:
            b = b + phi[..., None] * self.shift_bar
        return b

    def energy(self, phi):
        u = self.gradient(phi)
        b = self.gradient_bar(phi)
        d1 = np.einsum("...ij,...i,...j->...", self.coeff, u, np.conj(u)).real
        d2 = np.einsum("...ij,...j,...i->...", self.coeff, b, np.conj(b)).real
        return float(0.5 * np.sum((d1 + d2) * self.weight) * self.cell)

    def mass(self, phi, psi=None):
        psi = phi if psi is None else psi
        return float(np.sum(np.conj(phi) * psi * self.weight).real * self.cell)

    def apply(self, phi):
        """Hermitian A with ``vdot(phi, A phi) * cell = Q(phi)`` on the band-limited subspace."""
        g = self.grid
        u = self.gradient(phi)
        b = self.gradient_bar(phi)
        flux = self.weight[..., None] * np.einsum("...ij,...i->...j", self.coeff, u)
        flux_bar = self.weight[..., None] * np.einsum("...ij,...j->...i", self.coeff, b)
        out = np.zeros(g.shape, complex)
        for j in range(self.n):
            out += -g.d_zbar(flux[..., j], j) + np.conj(self.shift[j]) * flux[..., j]
            out += -g.d_z(flux_bar[..., j], j) + np.conj(self.shift_bar[j]) * flux_bar[..., j]
        out = 0.5 * g.bandlimit(out)
        return out.real if np.isrealobj(phi) and not self.shifted else out

    def symbol(self):
        """Fourier symbol of the form with averaged coefficients (preconditioner)."""
        n = self.n
        cbar = np.mean(self.coeff.reshape(-1, n, n), axis=0)
        wbar = float(np.mean(self.weight))
        ls = _symbols(self.grid, self.shift)
        lb = _symbols(self.grid, self.shift_bar, anti=True)
        sym = np.zeros(self.grid.shape)
        for i in range(n):
            for j in range(n):
                sym = sym + (cbar[i, j] * (ls[i] * np.conj(ls[j]) + lb[j] * np.conj(lb[i]))).real
        return 0.5 * wbar * sym


# ----------------------------------------------------------------------------
# linear algebra


def pcg(A, b, Pinv, rtol=1e-13, max_iters=500):
    """Preconditioned conjugate gradients for a Hermitian positive semi-definite A.

    Stops on the relative residual or when the search direction degenerates.
    """
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    r = b.copy()
    zr = Pinv(r)
    p = zr.copy()
    rz = np.vdot(r, zr).real
    for _ in range(max_iters):
        Ap = A(p)
        pAp = np.vdot(p, Ap).real
        if pAp <= 0.0 or rz <= 0.0:
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        if np.linalg.norm(r) <= rtol * bnorm:
            break
        zr = Pinv(r)
        rz_new = np.vdot(r, zr).real
        p = zr + (rz_new / rz) * p
        rz = rz_new
    return x


def _ritz(Ga, Gm):
    Ga = 0.5 * (Ga + Ga.conj().T)
    Gm = 0.5 * (Gm + Gm.conj().T)
    return eigh(Ga, Gm)


def _inverse_iteration(form, exclude_constant, block, tol, max_iters, seed):
    """Lowest eigenpair of A relative to M by block inverse iteration with Rayleigh-Ritz."""
    grid = form.grid
    size = grid.size
    w = form.weight.reshape(-1)
    total = w.sum()
    dtype = complex if form.shifted else float

    def band(x):
        return grid.bandlimit(x.reshape(grid.shape)).reshape(-1)

    def project(x):
        x = band(x)
        return x - np.dot(w, x) / total if exclude_constant else x

    sym = form.symbol()
    keep = grid.bandlimit_mask & (sym > 1e-14 * max(float(sym.max()), 1.0))
    sym_inv = np.where(keep, 1.0 / np.where(keep, sym, 1.0), 0.0)

    def A(x):
        return form.apply(x.reshape(grid.shape)).reshape(-1)

    def Pinv(x):
        out = grid.ifft(grid.fft(x.reshape(grid.shape)) * sym_inv).reshape(-1)
        return out.real if dtype is float else out

    rng = np.random.Generator(np.random.PCG64(seed))
    k = min(block, max(1, size - 1))
    X = rng.standard_normal((size, k))
    if dtype is complex:
        X = X + 1j * rng.standard_normal((size, k))
    X = np.stack([project(X[:, c]) for c in range(k)], axis=1)
    lam_prev = np.inf
    for it in range(1, max_iters + 1):
        Y = np.empty_like(X)
        for c in range(k):
            rhs = band(w * X[:, c])
            if exclude_constant:
                rhs = rhs - rhs.sum() / size
            Y[:, c] = project(pcg(A, rhs, Pinv))
        Gm = Y.conj().T @ (w[:, None] * Y)
        Ga = Y.conj().T @ np.stack([A(Y[:, c]) for c in range(k)], axis=1)
        evals, vecs = _ritz(Ga, Gm)
        X = Y @ vecs
        lam = float(evals[0])
        if abs(lam - lam_prev) <= tol * max(abs(lam), 1.0):
            x0 = X[:, 0]
            mx = band(w * x0)
            resid = float(np.linalg.norm(A(x0) - lam * mx) / max(np.linalg.norm(mx), 1e-300))
            return lam, x0.reshape(grid.shape), {"iterations": it, "residual": resid}
        lam_prev = lam
    raise ConvergenceError(f"inverse iteration did not converge in {max_iters} steps")


def _dense(form, exclude_constant):
    """Lowest eigenpair by assembling the form in the band-limited Fourier basis."""
    grid = form.grid
    n = form.n
    shape = grid.shape
    modes = np.flatnonzero(grid.bandlimit_mask.reshape(-1))
    idx = np.array(np.unravel_index(modes, shape))
    L = np.stack([s.reshape(-1)[modes] for s in _symbols(grid, form.shift)])
    Lb = np.stack([s.reshape(-1)[modes] for s in _symbols(grid, form.shift_bar, anti=True)])
    # entry [r, c] pairs conj(mode r) with mode c: weights enter at offset c - r
    offset = tuple((idx[a][None, :] - idx[a][:, None]) % shape[a] for a in range(2 * n))
    W = np.fft.ifftn(form.weight) * grid.size
    Mmat = W[offset] * form.cell
    Amat = np.zeros_like(Mmat)
    for i in range(n):
        for j in range(n):
            C = np.fft.ifftn(form.weight * form.coeff[..., i, j]) * grid.size
            Cf = C[offset] * (0.5 * form.cell)
            Amat += np.conj(L[j])[:, None] * Cf * L[i][None, :]
            Amat += np.conj(Lb[i])[:, None] * Cf * Lb[j][None, :]
    evals, vecs = _ritz(Amat, Mmat)
    pick = 1 if exclude_constant else 0
    if len(evals) <= pick:
        return np.inf, None, {"dense": True, "size": len(modes)}
    coef = np.zeros(grid.size, complex)
    coef[modes] = vecs[:, pick]
    phi = np.fft.ifftn(coef.reshape(shape)) * grid.size
    return float(evals[pick]), phi, {"dense": True, "size": len(modes)}


def lowest_eigenpair(form, exclude_constant, block=10, tol=1e-12, max_iters=200, seed=0):
    """Lowest eigenpair of the form (above the constants when ``exclude_constant``)."""
    size = int(np.count_nonzero(form.grid.bandlimit_mask))
    if size <= DENSE_LIMIT:
        return _dense(form, exclude_constant)
    return _inverse_iteration(form, exclude_constant, block, tol, max_iters, seed)


# ----------------------------------------------------------------------------
# first eigenvalue over the full torus


def coercivity_constant(coeff, weight):
    """min eig(c) * min w / max w, so that Q >= const * |kappa(k)|^2 * M on mode k."""
    n = coeff.shape[-1]
    lo = float(np.min(np.linalg.eigvalsh(coeff.reshape(-1, n, n))))
    w = np.asarray(weight, float)
    return lo * float(w.min()) / float(w.max())


def _collapsed_modes(grid, radius):
    axes = [a for a in range(2 * grid.n) if grid.shape[a] == 1]
    out = []
    for k in itertools.product(range(-radius, radius + 1), repeat=len(axes)):
        nz = [c for c in k if c]
        if nz and nz[0] < 0:
            continue  # k and -k have conjugate eigenfunctions
        out.append(dict(zip(axes, k)))
    return axes, out


def mode_shift(grid, k):
    """Symbols of d_i and d_ibar on exp(i k . x) along the collapsed axes."""
    n = grid.n
    shift = np.zeros(n, complex)
    shift_bar = np.zeros(n, complex)
    for a, c in k.items():
        kk = 2 * np.pi * c / grid.periods[a]
        shift[a % n] += 0.5j * kk if a < n else 0.5 * kk
        shift_bar[a % n] += 0.5j * kk if a < n else -0.5 * kk
    return shift, shift_bar


def rayleigh_lambda1(grid, coeff, weight, max_modes=5000, **kwargs):
    """First non-zero eigenvalue of Q relative to M on the full torus.

    Coefficients and weight live on a (possibly collapsed) grid.  Zero-mean
    test functions range over the band-limited space of the active axes
    times all Fourier modes of the collapsed axes.

    Returns
    -------
    lam : float
    info : dict
        ``mode`` (the minimizing collapsed wave vector), ``phi`` (the
        eigenfunction on the active grid, complex for non-zero modes),
        ``modes_scanned`` and solver diagnostics.
    """
    coeff = np.asarray(coeff)
    weight = np.asarray(weight, float)
    bound_c = coercivity_constant(coeff, weight)
    if bound_c <= 0:
        raise ValueError("coefficient field is not positive definite")

    def kappa2(k):
        return 0.25 * sum((2 * np.pi * c / grid.periods[a]) ** 2 for a, c in k.items())

    best = (np.inf, None, {})
    radius = 1
    seen = set()
    scanned = 0
    while True:
        axes, modes = _collapsed_modes(grid, radius)
        for k in sorted(modes, key=kappa2):
            key = tuple(sorted(k.items()))
            if key in seen:
                continue
            seen.add(key)
            if bound_c * kappa2(k) > best[0]:
                continue
            form = DirichletForm(grid, coeff, weight, *mode_shift(grid, k))
            lam, phi, info = lowest_eigenpair(form, not any(k.values()), **kwargs)
            scanned += 1
            if scanned > max_modes:
                raise ConvergenceError("too many collapsed modes below the coercivity bound")
            if lam < best[0]:
                best = (lam, k, dict(info, phi=phi))
        if not axes:
            break
        edge = min(0.25 * (2 * np.pi * (radius + 1) / grid.periods[a]) ** 2 for a in axes)
        if bound_c * edge > best[0]:
            break
        radius *= 2
    lam, k, info = best
    return lam, dict(info, mode=k, modes_scanned=scanned)
