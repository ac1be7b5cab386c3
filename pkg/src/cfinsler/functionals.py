"""Total holomorphic and Ricci curvature, their conformal variations and stability.

All integrals over the base are trapezoidal sums on a torus grid against the
induced volume density ``mu_M`` (see :class:`cfinsler.fiber.FiberMoments`).
Variations are taken along ``exp(f(t)) G`` with ``f(t) = t nu + t^2 psi / 2``;
closed forms are checked against Richardson-extrapolated central differences
of the functional itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dirichlet import rayleigh_lambda1
from .expressions import Expression, as_expression
from .fiber import build_fiber_rule, grid_for, grid_moments
from .grid import GridField, TorusGrid
from .kahler import POINTWISE_TOL, kahler_check
from .metrics import ConformalMetric, metric_periods, sample_points

FD_STEPS = (1e-3, 5e-4)
MEAN_TOL = 1e-10
CONSTANT_TOL = 1e-8


class ConstraintError(ValueError):
    """A variation direction violates the volume constraint."""


class PreconditionError(ValueError):
    """The metric does not satisfy the hypothesis a formula relies on."""


# ----------------------------------------------------------------------------
# base fields


@dataclass
class BaseFields:
    """Fiber moments of one metric on a grid, with base integration helpers."""

    metric: object
    grid: TorusGrid
    rule: object
    moments: object

    @property
    def mu(self):
        return self.moments.mu_M_density

    def integrate(self, values):
        return float(self.grid.integrate(np.asarray(values), self.mu))

    @property
    def volume(self):
        return self.integrate(np.ones(self.grid.shape))

    def mean(self, values):
        return self.integrate(values) / self.volume

    def resampled(self, grid):
        """The same fields interpolated (or tiled along collapsed axes) onto ``grid``."""
        m = self.moments
        r = lambda a: None if a is None else self.grid.resample(a, grid)  # noqa: E731
        moments = type(m)(r(m.vol), r(m.mu_M_density), r(m.kappa), r(m.rho), r(m.h_inv), r(m.g_inv),
                          r(m.omega_M), r(m.kappa_theta), r(m.rho_theta))
        return BaseFields(self.metric, grid, self.rule, moments)


def base_fields(metric, grid, rule=None, with_torsion=True):
    rule = build_fiber_rule(metric.n) if rule is None else rule
    return BaseFields(metric, grid, rule, grid_moments(metric, grid, rule, with_torsion))


def _totals(metric, grid, rule):
    bf = base_fields(metric, grid, rule, False)
    return bf.integrate(bf.moments.kappa), bf.integrate(bf.moments.rho)


# ----------------------------------------------------------------------------
# report


@dataclass
class FunctionalReport:
    """Totals, mean-curvature fields, first eigenvalues and stability verdicts.

    ``stable_K``/``stable_R`` are ``None`` unless the metric is Kähler with
    constant ``kappa`` (resp. ``rho``), the setting where the eigenvalue
    criterion decides stability.
    """

    total_K: float
    total_R: float
    total_K_theta: float
    total_R_theta: float
    volume: float
    kappa_field: np.ndarray = field(repr=False)
    rho_field: np.ndarray = field(repr=False)
    kappa_theta_field: np.ndarray = field(repr=False)
    rho_theta_field: np.ndarray = field(repr=False)
    lambda1_h: float = None
    lambda1_g: float = None
    kahler: bool = None
    kappa_constant: bool = None
    rho_constant: bool = None
    stable_K: bool = None
    stable_R: bool = None

    def as_dict(self):
        keys = ["total_K", "total_R", "total_K_theta", "total_R_theta", "volume", "lambda1_h", "lambda1_g",
                "kahler", "kappa_constant", "rho_constant", "stable_K", "stable_R"]
        return {k: getattr(self, k) for k in keys}

    def fields(self):
        return {"kappa": self.kappa_field, "rho": self.rho_field,
                "kappa_theta": self.kappa_theta_field, "rho_theta": self.rho_theta_field}


def _is_constant(values, tol=CONSTANT_TOL):
    values = np.asarray(values)
    return float(np.max(values) - np.min(values)) <= tol * max(1.0, float(np.max(np.abs(values))))


def total_curvatures(metric, grid, rule=None, with_lambda=True, sample_count=16, seed=0):
    """Evaluate both total curvatures, their torsion-corrected representations and stability data."""
    bf = base_fields(metric, grid, rule, True)
    m = bf.moments
    report = FunctionalReport(
        total_K=bf.integrate(m.kappa),
        total_R=bf.integrate(m.rho),
        total_K_theta=bf.integrate(m.kappa_theta),
        total_R_theta=bf.integrate(m.rho_theta),
        volume=bf.volume,
        kappa_field=m.kappa, rho_field=m.rho,
        kappa_theta_field=m.kappa_theta, rho_theta_field=m.rho_theta,
    )
    zs, vs = sample_points(metric.n, sample_count, seed, metric_periods(metric))
    report.kahler = kahler_check(metric, zs, vs).kahler
    report.kappa_constant = _is_constant(m.kappa)
    report.rho_constant = _is_constant(m.rho)
    if with_lambda:
        report.lambda1_h = rayleigh_lambda1(grid, m.h_inv, bf.mu)[0]
        report.lambda1_g = rayleigh_lambda1(grid, m.g_inv, bf.mu)[0]
        if report.kahler and report.kappa_constant:
            report.stable_K = bool(np.mean(m.kappa) <= report.lambda1_h)
        if report.kahler and report.rho_constant:
            report.stable_R = bool(np.mean(m.rho) <= report.lambda1_g)
    return report


# ----------------------------------------------------------------------------
# variation directions


@dataclass
class VariationDirection:
    """Conformal direction ``nu`` (dmu_M-mean zero) and second-order part ``psi``.

    ``nu_source``/``psi_source`` are expression strings when available, so the
    finite-difference oracle can use exact jets; otherwise grid fields are used.
    """

    grid: TorusGrid
    nu: np.ndarray
    psi: np.ndarray
    nu_source: str = None
    psi_source: str = None

    def factor(self, t):
        """Base function f(t) = t nu + t^2 psi / 2 for the conformal family."""
        if self.nu_source is not None and self.psi_source is not None:
            return f"({float(t)!r})*({self.nu_source}) + ({0.5 * float(t) ** 2!r})*({self.psi_source})"
        return GridField(self.grid, t * self.nu + 0.5 * t * t * self.psi, "f_t")


def _grid_values(value, grid, n):
    if isinstance(value, np.ndarray):
        return np.broadcast_to(value, grid.shape).astype(float), None
    expr = as_expression(value, n)
    if expr.depends_on_fiber():
        raise ConstraintError("variation directions must be functions of the base point")
    z = grid.z_points()
    vals = np.asarray(expr.value(z), complex)
    if np.max(np.abs(vals.imag)) > 1e-12:
        raise ConstraintError("variation directions must be real")
    vals = np.broadcast_to(vals.real, (grid.size,)).reshape(grid.shape)
    return vals, expr.source if isinstance(expr, Expression) else None


def make_direction(fields: BaseFields, nu, psi=None):
    """Project ``nu`` to dmu_M-mean zero and build ``psi``.

    ``psi`` defaults to ``-n nu^2``; a supplied ``psi`` is shifted by a constant
    so that ``int (psi + n nu^2) dmu_M = 0``.
    """
    grid = fields.grid
    n = grid.n
    nu_vals, nu_src = _grid_values(nu, grid, n)
    c = fields.mean(nu_vals)
    nu_vals = nu_vals - c
    if nu_src is not None:
        nu_src = f"(({nu_src}) - ({c!r}))"
    if psi is None:
        psi_vals = -n * nu_vals ** 2
        psi_src = None if nu_src is None else f"(-{n})*({nu_src})^2"
    else:
        psi_vals, psi_src = _grid_values(psi, grid, n)
        c2 = fields.mean(psi_vals + n * nu_vals ** 2)
        psi_vals = psi_vals - c2
        if psi_src is not None:
            psi_src = f"(({psi_src}) - ({c2!r}))"
    d = VariationDirection(grid, nu_vals, psi_vals, nu_src, psi_src)
    check_direction(fields, d)
    return d


def check_direction(fields, direction, tol=MEAN_TOL):
    """Raise :class:`ConstraintError` unless both volume constraints hold to ``tol``."""
    n = fields.grid.n
    scale = fields.integrate(np.abs(direction.nu)) + 1e-300
    if abs(fields.integrate(direction.nu)) > tol * max(scale, 1.0):
        raise ConstraintError("nu is not dmu_M-mean zero; project it first")
    resid = fields.integrate(direction.psi + n * direction.nu ** 2)
    if abs(resid) > tol * max(fields.integrate(np.abs(direction.psi)), 1.0):
        raise ConstraintError("psi violates int (psi + n nu^2) dmu_M = 0")


# ----------------------------------------------------------------------------
# variations


@dataclass
class VariationResult:
    """Closed form against the finite-difference oracle; the relative error is floored at scale 1."""

    which: str
    order: int
    closed_form: float
    finite_difference: float = None

    @property
    def relative_error(self):
        if self.finite_difference is None:
            return None
        return abs(self.closed_form - self.finite_difference) / max(abs(self.finite_difference), 1.0)

    def as_dict(self):
        return {"which": self.which, "order": self.order, "closed_form": self.closed_form,
                "finite_difference": self.finite_difference, "relative_error": self.relative_error}


def _functional_along(metric, direction, grid, rule, which):
    def F(t):
        if t == 0.0:
            g = metric
        else:
            g = ConformalMetric(metric.n, direction.factor(t), metric, periods=metric.periods)
        K, R = _totals(g, grid, rule)
        return K if which == "K" else R
    return F


def richardson_first(F, steps=FD_STEPS):
    h1, h2 = steps
    d1 = (F(h1) - F(-h1)) / (2 * h1)
    d2 = (F(h2) - F(-h2)) / (2 * h2)
    r = (h1 / h2) ** 2
    return (r * d2 - d1) / (r - 1)


def richardson_second(F, steps=FD_STEPS):
    h1, h2 = steps
    f0 = F(0.0)
    s1 = (F(h1) - 2 * f0 + F(-h1)) / h1 ** 2
    s2 = (F(h2) - 2 * f0 + F(-h2)) / h2 ** 2
    r = (h1 / h2) ** 2
    return (r * s2 - s1) / (r - 1)


def _check_which(which):
    if which not in ("K", "R"):
        raise ValueError(f"unknown functional {which!r}; use 'K' or 'R'")


def first_variation(fields: BaseFields, direction: VariationDirection, which="K", finite_difference=True):
    """d/dt at 0 of K (or R) along exp(t nu) G: (n-1) int nu kappa_theta dmu_M."""
    _check_which(which)
    check_direction(fields, direction)
    n = fields.grid.n
    m = fields.moments
    if m.kappa_theta is None:
        raise PreconditionError("fiber moments were assembled without torsion terms")
    mean_curv = m.kappa_theta if which == "K" else m.rho_theta
    closed = (n - 1) * fields.integrate(direction.nu * mean_curv)
    res = VariationResult(which, 1, float(closed))
    if finite_difference:
        linear = VariationDirection(direction.grid, direction.nu, np.zeros_like(direction.nu),
                                    direction.nu_source, None if direction.nu_source is None else "0")
        F = _functional_along(fields.metric, linear, fields.grid, fields.rule, which)
        res.finite_difference = float(richardson_first(F))
    return res


def require_kahler(metric, sample_count=16, seed=0, tolerance=POINTWISE_TOL):
    zs, vs = sample_points(metric.n, sample_count, seed, metric_periods(metric))
    verdict = kahler_check(metric, zs, vs, tolerance)
    if not verdict.kahler:
        raise PreconditionError(f"metric is not Kähler (max torsion {verdict.torsion_max:.3e})")
    return verdict


def hermitian_energy_density(coeff, grid, nu):
    """c^{i jbar} nu_i nu_jbar for a real field nu (spectral gradient)."""
    u = grid.wirtinger_gradient(nu)
    return np.einsum("...ij,...i,...j->...", coeff, u, np.conj(u)).real


def second_variation(fields: BaseFields, direction: VariationDirection, which="K", finite_difference=True,
                     check=True):
    """d^2/dt^2 at 0 of K (or R) along exp(t nu + t^2 psi / 2) G for a Kähler metric.

    Closed form ``(n-1) int (h^{ij} nu_i nu_jbar + (psi + (n-1) nu^2) kappa) dmu_M``
    (``g`` and ``rho`` for R), which reduces to ``(n-1) int (h nu nu - nu^2 kappa)``
    for the default ``psi = -n nu^2``.
    """
    _check_which(which)
    if check:
        require_kahler(fields.metric)
    check_direction(fields, direction)
    n = fields.grid.n
    m = fields.moments
    coeff, curv = (m.h_inv, m.kappa) if which == "K" else (m.g_inv, m.rho)
    grad = hermitian_energy_density(coeff, fields.grid, direction.nu)
    dens = grad + (direction.psi + (n - 1) * direction.nu ** 2) * curv
    closed = (n - 1) * fields.integrate(dens)
    res = VariationResult(which, 2, float(closed))
    if finite_difference:
        F = _functional_along(fields.metric, direction, fields.grid, fields.rule, which)
        res.finite_difference = float(richardson_second(F))
    return res


def stability(fields: BaseFields, which="K"):
    """First eigenvalue and the stability verdict ``curvature <= lambda_1`` for a critical Kähler metric.

    Returns a dict with ``lambda1``, ``curvature`` (the constant mean curvature),
    ``critical`` and ``stable`` (``None`` when the metric is not critical).
    """
    _check_which(which)
    require_kahler(fields.metric)
    m = fields.moments
    coeff, curv = (m.h_inv, m.kappa) if which == "K" else (m.g_inv, m.rho)
    lam, info = rayleigh_lambda1(fields.grid, coeff, fields.mu)
    critical = _is_constant(curv)
    mean = float(fields.mean(curv))
    return {"which": which, "lambda1": lam, "curvature": mean, "critical": critical,
            "stable": bool(mean <= lam) if critical else None, "mode": info["mode"]}


def variation_grid(metric, resolution, *directions):
    """Grid covering the axes of the metric and of expression directions."""
    extra = [as_expression(d, metric.n) for d in directions if not isinstance(d, np.ndarray)]
    return grid_for(metric, resolution, extra)
