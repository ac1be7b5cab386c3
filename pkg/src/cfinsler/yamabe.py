"""Yamabe-type problem: constant mean Ricci curvature in a conformal class.

With ``G_hat = phi^{2/(n-1)} G`` the total Ricci curvature becomes the energy

    E(phi) = int ((2/(n-1)) g^{i jbar} phi_i phi_jbar + rho_theta phi^2) dmu_M,

and the quotient ``E(phi) / ||phi||_t^2`` (``t <= p = 2n/(n-1)``) is minimized
over positive band-limited grid functions by preconditioned projected gradient
descent.  The descent direction is the exact gradient of the discrete energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.special import beta, roots_legendre

from .dirichlet import ConvergenceError, DirichletForm
from .fiber import build_fiber_rule, grid_moments
from .grid import GridField, TorusGrid
from .metrics import ConformalMetric


class GeometryError(ValueError):
    """Induced base fields are degenerate."""


class DomainError(ValueError):
    """A conformal factor is not positive."""


class StepFailure(RuntimeError):
    """Backtracking could not find an admissible descent step."""


def critical_exponent(n):
    return 2.0 * n / (n - 1)


def default_schedule(n, steps=5):
    return [float(t) for t in np.linspace(2.0, critical_exponent(n), steps)]


# ----------------------------------------------------------------------------
# base fields


@dataclass
class YamabeFields:
    """Grid fields entering the energy.

    ``curvature`` is ``rho_theta`` by default (or ``kappa_theta`` for the
    holomorphic-curvature analogue).  ``mu_g = 2^n det(g_{i jbar})`` uses the
    same volume convention as ``mu``; ``tau = mu / mu_g``.
    """

    grid: TorusGrid
    n: int
    g_inv: np.ndarray = field(repr=False)
    curvature: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    mu_g: np.ndarray = field(repr=False)
    which: str = "rho"

    @property
    def tau(self):
        return self.mu / self.mu_g

    @property
    def form(self):
        return DirichletForm(self.grid, self.g_inv, self.mu)

    def integrate(self, values):
        return float(self.grid.integrate(np.asarray(values), self.mu))

    @property
    def volume(self):
        return self.integrate(np.ones(self.grid.shape))

    def resampled(self, grid):
        """The same fields interpolated to a finer grid."""
        r = self.grid.resample
        return YamabeFields(grid, self.n, r(self.g_inv, grid), r(self.curvature, grid), r(self.mu, grid),
                            r(self.mu_g, grid), self.which)


def assemble_base_geometry(metric, grid, rule=None, curvature="rho"):
    """Induced metric ``g``, mean curvature, volume densities for the Yamabe energy."""
    if curvature not in ("rho", "kappa"):
        raise ValueError("curvature must be 'rho' or 'kappa'")
    rule = build_fiber_rule(metric.n) if rule is None else rule
    m = grid_moments(metric, grid, rule, True)
    return fields_from_moments(grid, metric.n, m, curvature)


def fields_from_moments(grid, n, m, curvature="rho"):
    g_inv = 0.5 * (m.g_inv + np.conj(np.swapaxes(m.g_inv, -1, -2)))
    lo = np.linalg.eigvalsh(g_inv.reshape(-1, n, n)).min()
    if not lo > 0:
        raise GeometryError(f"induced metric g is not positive definite (min eigenvalue {lo:.3e})")
    det_inv = np.linalg.det(g_inv).real
    mu_g = 2.0 ** n / det_inv
    curv = m.rho_theta if curvature == "rho" else m.kappa_theta
    return YamabeFields(grid, n, g_inv, np.asarray(curv, float), np.asarray(m.mu_M_density, float), mu_g, curvature)


# ----------------------------------------------------------------------------
# functional


def energy(fields, phi):
    """E(phi) with spectral gradients on the band-limited part of ``phi``."""
    phi = fields.grid.bandlimit(np.asarray(phi, float))
    grad = fields.form.energy(phi)
    return 2.0 / (fields.n - 1) * grad + fields.integrate(fields.curvature * phi ** 2)


def energy_scale(fields, phi):
    """Sum of the magnitudes of the energy terms; sets the roundoff level of E."""
    phi = fields.grid.bandlimit(np.asarray(phi, float))
    return 2.0 / (fields.n - 1) * fields.form.energy(phi) + fields.integrate(np.abs(fields.curvature) * phi ** 2)


def lp_norm(fields, phi, t):
    return fields.integrate(np.abs(phi) ** t) ** (1.0 / t)


def _check_positive(phi):
    if not np.all(np.asarray(phi) > 0):
        raise DomainError("conformal factor must be positive")


def yamabe_quotient(fields, phi, t=None):
    """E(phi) / ||phi||_t^2, with t = p by default."""
    _check_positive(phi)
    t = critical_exponent(fields.n) if t is None else t
    return energy(fields, phi) / lp_norm(fields, phi, t) ** 2


def holder_floor(fields):
    """-(int |curvature|^n dmu_M)^{1/n}, a lower bound of the quotient at t = p."""
    return -fields.integrate(np.abs(fields.curvature) ** fields.n) ** (1.0 / fields.n)


def quotient_gradient(fields, phi, t):
    """Gradient of E / ||phi||_t^2 with respect to the grid values, per unit cell volume.

    Projected to the band-limited subspace (an orthogonal projection for the
    plain grid inner product), so ``sum(grad * d) * cell`` is the directional
    derivative along a band-limited ``d``.  Returns (grad, quotient).
    """
    g = fields.grid
    n = fields.n
    phi = g.bandlimit(phi)
    E = energy(fields, phi)
    N = fields.integrate(phi ** t)
    gE = (4.0 / (n - 1)) * fields.form.apply(phi) + 2.0 * fields.mu * fields.curvature * phi
    gN = t * fields.mu * phi ** (t - 1)
    Nt = N ** (2.0 / t)
    grad = gE / Nt - (2.0 / t) * E / (Nt * N) * gN
    return g.bandlimit(grad), E / Nt


def el_residual(fields, grad):
    """Max norm of the stationarity residual in units of the pointwise equation."""
    return float(np.max(np.abs(grad)) / np.mean(fields.mu))


@dataclass
class YamabeState:
    phi: np.ndarray = field(repr=False)
    t: float
    energy: float
    quotient: float
    el_residual: float
    iterations: int
    trace: list = field(default_factory=list, repr=False)


def _preconditioner(fields, t, quotient):
    form = fields.form
    mbar = float(np.mean(fields.mu))
    sym = form.symbol() / mbar
    scale = 4.0 / (fields.n - 1)
    nonzero = sym[sym > 1e-12 * max(float(sym.max()), 1.0)]
    floor = 0.1 * scale * float(nonzero.min()) if nonzero.size else 1.0
    shift = 2.0 * float(np.max(np.abs(fields.curvature))) + 2.0 * (t - 1) * abs(quotient) + floor
    inv = 1.0 / (mbar * (scale * sym + shift))
    grid = fields.grid

    def apply(r):
        return grid.ifft(grid.fft(r) * inv).real
    return apply


def descend(fields, phi, t, tol=1e-10, max_iters=2000, armijo=1e-4, max_backtracks=40, trace=None):
    """Preconditioned projected gradient descent on the quotient at exponent t."""
    grid = fields.grid
    phi = grid.bandlimit(np.asarray(phi, float))
    _check_positive(phi)
    phi = phi / lp_norm(fields, phi, t)
    grad, q = quotient_gradient(fields, phi, t)
    P = _preconditioner(fields, t, q)
    alpha = 1.0
    resid = el_residual(fields, grad)
    it = 0
    for it in range(1, max_iters + 1):
        if resid <= tol:
            break
        s = P(grad)
        slope = float(np.sum(grad * s) * grid.cell_volume)
        noise = 64 * np.finfo(float).eps * energy_scale(fields, phi)
        for _ in range(max_backtracks):
            trial = grid.bandlimit(phi - alpha * s)
            if np.all(trial > 0):
                trial = trial / lp_norm(fields, trial, t)
                q_new = energy(fields, trial)
                if q_new <= q - armijo * alpha * slope + noise:
                    break
            alpha *= 0.5
        else:
            raise StepFailure(f"no admissible step at t={t} after {max_backtracks} halvings")
        if q_new > q + noise:
            raise ConvergenceError("energy increased along an accepted step")
        phi = trial
        grad, q = quotient_gradient(fields, phi, t)
        resid = el_residual(fields, grad)
        alpha = min(1.0, 2.0 * alpha)
        if trace is not None:
            trace.append({"t": t, "iteration": it, "energy": energy(fields, phi), "quotient": q, "residual": resid})
    else:
        if resid > tol:
            raise ConvergenceError(f"descent at t={t} did not reach {tol:g} in {max_iters} steps", resid)
    return YamabeState(phi, t, energy(fields, phi), q, resid, it)


def minimize(fields, schedule=None, phi0=None, tol=1e-10, max_iters=2000):
    """Continuation in t along ``schedule`` (ending at p), starting from phi = 1."""
    schedule = default_schedule(fields.n) if schedule is None else list(schedule)
    p = critical_exponent(fields.n)
    if abs(schedule[-1] - p) > 1e-14:
        raise ValueError("schedule must end at the critical exponent")
    phi = np.ones(fields.grid.shape) if phi0 is None else np.asarray(phi0, float)
    trace = []
    total = 0
    state = None
    for t in schedule:
        state = descend(fields, phi, t, tol=tol, max_iters=max_iters, trace=trace)
        total += state.iterations
        phi = state.phi
    state.iterations = total
    state.trace = trace
    return state


# ----------------------------------------------------------------------------
# invariants


def sphere_area(m):
    """Area of the unit sphere S^{m-1}."""
    return 2.0 * pi ** (m / 2) / gamma(m / 2)


def bubble_radial_integral(m, eps=1.0, nodes=400):
    """int_0^inf (eps/(eps^2+r^2))^m r^{m-1} dr by Gauss-Legendre after r = tan(theta).

    The map does not absorb ``eps``, so agreement across ``eps`` is a check of
    the scale invariance.
    """
    x, w = roots_legendre(nodes)
    theta = 0.25 * pi * (x + 1.0)
    r = np.tan(theta)
    jac = 0.25 * pi / np.cos(theta) ** 2
    f = (eps / (eps ** 2 + r ** 2)) ** m * r ** (m - 1)
    return float(np.sum(w * f * jac))


def sobolev_constant(m, eps=1.0, nodes=400):
    """Best Sobolev constant of R^m: m(m-2) (|S^{m-1}| int u_eps^p)^{2/m} by quadrature."""
    return m * (m - 2) * (sphere_area(m) * bubble_radial_integral(m, eps, nodes)) ** (2.0 / m)


def sobolev_constant_closed(m):
    """Same constant through the Beta integral int_0^inf t^{m-1}/(1+t^2)^m dt = B(m/2, m/2)/2."""
    return m * (m - 2) * (sphere_area(m) * 0.5 * beta(m / 2, m / 2)) ** (2.0 / m)


def conformal_C(fields):
    """C(G) = sup (dmu_g / dmu_M)^{1/n} over the grid."""
    return float(np.max(fields.mu_g / fields.mu) ** (1.0 / fields.n))


@dataclass
class YamabeReport:
    Y_estimate: float
    C_value: float
    C_min: float
    sigma: float
    bound_margin: float
    bound_margin_loose: float
    holder_floor: float
    el_residual: float
    minimizer: np.ndarray = field(repr=False)
    rho_hat_deviation: float = None
    rho_hat_mean: float = None
    iterations: int = 0
    trace: list = field(default_factory=list, repr=False)

    def as_dict(self):
        keys = ["Y_estimate", "C_value", "C_min", "sigma", "bound_margin", "bound_margin_loose",
                "holder_floor", "el_residual", "rho_hat_deviation", "rho_hat_mean", "iterations"]
        return {k: getattr(self, k) for k in keys}


def conformal_invariants(metric, grid, rule=None, schedule=None, verify=False, tol=1e-10, fields=None):
    """Y(G) from the minimizer, C(G), sigma_{2n} and both bound margins.

    ``bound_margin = sigma/(2n-2) - Y C``; ``bound_margin_loose`` uses ``2 sigma/(n-1)``.
    """
    rule = build_fiber_rule(metric.n) if rule is None else rule
    fields = assemble_base_geometry(metric, grid, rule) if fields is None else fields
    n = metric.n
    state = minimize(fields, schedule, tol=tol)
    C = conformal_C(fields)
    sigma = sobolev_constant(2 * n)
    Y = state.quotient
    rep = YamabeReport(
        Y_estimate=Y, C_value=C, C_min=float(np.min(fields.mu_g / fields.mu) ** (1.0 / n)), sigma=sigma,
        bound_margin=sigma / (2 * n - 2) - Y * C, bound_margin_loose=2 * sigma / (n - 1) - Y * C,
        holder_floor=holder_floor(fields), el_residual=state.el_residual, minimizer=state.phi,
        iterations=state.iterations, trace=state.trace,
    )
    if verify:
        dev, mean, _ = constant_rho_verify(metric, state.phi, grid, rule, fields.which)
        rep.rho_hat_deviation, rep.rho_hat_mean = dev, mean
    return rep


def rescaled_metric(metric, phi, grid):
    """G_hat = phi^{2/(n-1)} G with phi a positive grid function."""
    _check_positive(phi)
    f = GridField(grid, 2.0 / (metric.n - 1) * np.log(phi), "yamabe_factor")
    return ConformalMetric(metric.n, f, metric, periods=metric.periods)


def constant_rho_verify(metric, phi, grid, rule=None, curvature="rho"):
    """Max deviation of the mean curvature of G_hat from its dmu_hat mean.

    Returns (deviation, mean, field).
    """
    rule = build_fiber_rule(metric.n) if rule is None else rule
    hat = rescaled_metric(metric, phi, grid)
    m = grid_moments(hat, grid, rule, True)
    curv = m.rho_theta if curvature == "rho" else m.kappa_theta
    mean = float(grid.integrate(curv, m.mu_M_density) / grid.integrate(np.ones(grid.shape), m.mu_M_density))
    return float(np.max(np.abs(curv - mean))), mean, curv


# ----------------------------------------------------------------------------
# bubble diagnostic


def _cutoff(s):
    """Smooth step: 1 for s <= 1, 0 for s >= 2."""
    s = np.clip(s - 1.0, 0.0, 1.0)
    a = np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)
    b = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return a / (a + b)


def bubble_test(fields, eps_fractions=(0.5, 0.35, 0.25, 0.18), radius=None, resolution=32):
    """Quotient of cut-off bubbles transplanted at the point where C(G) is attained.

    The bubble radius is measured in the real metric ``Re g_{i jbar} dz dzbar``; the default
    cutoff radius keeps the support inside one fundamental domain and ``eps`` runs over
    ``eps_fractions`` times the radius.  Returns a
    dict with the per-``eps`` values of ``Q`` and ``Q * C`` and the reference levels
    ``sigma/(2n-2)``, ``sigma/(n-1)`` and ``2 sigma/(n-1)``.
    """
    n = fields.n
    base = fields.grid
    full = TorusGrid(n, (resolution,) * (2 * n), base.periods)
    f = fields.resampled(full)
    ratio = f.mu_g / f.mu
    idx = np.unravel_index(int(np.argmax(ratio)), full.shape)
    g_low = np.linalg.inv(np.swapaxes(f.g_inv[idx], -1, -2))
    mesh = full.mesh
    disp = []
    for a in range(2 * n):
        L = full.periods[a]
        d = mesh[a] - mesh[a][idx]
        disp.append((d + 0.5 * L) % L - 0.5 * L)
    dz = np.stack([disp[i] + 1j * disp[n + i] for i in range(n)], axis=-1)
    r2 = np.einsum("...i,ij,...j->...", dz, g_low, np.conj(dz)).real
    r = np.sqrt(np.maximum(r2, 0.0))
    if radius is None:
        lam_min = float(np.linalg.eigvalsh(0.5 * (g_low + g_low.conj().T)).min())
        radius = 0.9 * np.sqrt(lam_min) * min(full.periods) / 4
    m = 2 * n
    C = conformal_C(f)
    sigma = sobolev_constant(m)
    rows = []
    for eps in (radius * e for e in eps_fractions):
        u = (eps / (eps ** 2 + r ** 2)) ** ((m - 2) / 2) * _cutoff(r / radius)
        u = u + 1e-12 * float(u.max())
        q = yamabe_quotient(f, u)
        rows.append({"eps": float(eps), "quotient": q, "quotient_times_C": q * C})
    return {"rows": rows, "C": C, "sigma": sigma, "level_tight": sigma / (2 * n - 2),
            "level_bubble": sigma / (n - 1), "level_stated": 2 * sigma / (n - 1), "radius": float(radius),
            "resolution": resolution}
