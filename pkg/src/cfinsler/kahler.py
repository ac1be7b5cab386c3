"""Kähler, weakly Kähler and conformally Kähler diagnostics.

The conformal test follows the torsion characterisation: the horizontal
torsion must be reducible, the mean torsion must not depend on the fiber
direction, and the real one-form ``vartheta + conj(vartheta)`` must be closed
and exact on the torus.  When it is, ``(n-1) df = -(vartheta + conj(vartheta))``
is integrated by Fourier division and ``exp(f) * G`` is checked to be Kähler.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvature import trace_free_torsion
from .expressions import JetPoint
from .geometry import BundleGeometry
from .grid import GridField, TorusGrid
from .metrics import ConformalMetric, metric_periods, sample_points

POINTWISE_TOL = 1e-8
GRID_TOL = 1e-5


@dataclass
class KahlerVerdict:
    torsion_max: float
    weak_residual_max: float
    reducibility_residual: float
    vartheta_v_dependence: float
    closedness_residual: float = None
    tolerance: float = POINTWISE_TOL
    grid_tolerance: float = GRID_TOL

    @property
    def kahler(self):
        return self.torsion_max <= self.tolerance

    @property
    def weakly_kahler(self):
        return self.weak_residual_max <= self.tolerance

    @property
    def reducible(self):
        return self.reducibility_residual <= self.tolerance

    @property
    def vartheta_on_base(self):
        return self.vartheta_v_dependence <= self.tolerance

    @property
    def closed(self):
        return None if self.closedness_residual is None else self.closedness_residual <= self.grid_tolerance

    def as_dict(self):
        return {
            "torsion_max": self.torsion_max, "weak_residual_max": self.weak_residual_max,
            "reducibility_residual": self.reducibility_residual,
            "vartheta_v_dependence": self.vartheta_v_dependence,
            "closedness_residual": self.closedness_residual,
            "kahler": self.kahler, "weakly_kahler": self.weakly_kahler, "reducible": self.reducible,
            "vartheta_on_base": self.vartheta_on_base, "closed": self.closed,
        }


def weak_kahler_residual(geo):
    """max_k |theta^m_{ik} G_{m jbar} v^i vbar^j| per point."""
    v = np.broadcast_to(geo.point.v, geo.vartheta.shape)
    r = np.einsum("...mik,...mj,...i,...j->...k", geo.theta, geo.levi, v, np.conj(v))
    return np.max(np.abs(r), axis=-1)


def _vertical_dependence(geo):
    dv, dvb = geo.vartheta_vertical
    return np.maximum(np.max(np.abs(dv), axis=(-1, -2)), np.max(np.abs(dvb), axis=(-1, -2)))


def kahler_check(metric, z, v, tolerance=POINTWISE_TOL):
    """Torsion-based verdicts at the samples (z, v)."""
    geo = BundleGeometry(metric, JetPoint(z, v), 4)
    geo.check_pseudoconvex()
    n = metric.n
    red = trace_free_torsion(geo.theta, geo.vartheta, n)
    return KahlerVerdict(
        torsion_max=float(np.max(np.abs(geo.theta))),
        weak_residual_max=float(np.max(weak_kahler_residual(geo))),
        reducibility_residual=float(np.max(np.abs(red))),
        vartheta_v_dependence=float(np.max(_vertical_dependence(geo))),
        tolerance=tolerance,
    )


def reference_direction(n):
    return np.ones(n, complex) / np.sqrt(n)


# ----------------------------------------------------------------------------
# Lee form and conformal factor


def real_one_form(vartheta):
    """Components of vartheta + conj(vartheta) along (dx^1..dx^n, dy^1..dy^n)."""
    return np.concatenate([2 * vartheta.real, -2 * vartheta.imag], axis=-1)


def exterior_derivative_residual(grid, form):
    """max over pairs a < b of |d_a A_b - d_b A_a| (spectral)."""
    dims = 2 * grid.n
    res = 0.0
    d = [[grid.derivative(form[..., b], a) for b in range(dims)] for a in range(dims)]
    for a in range(dims):
        for b in range(a + 1, dims):
            res = max(res, float(np.max(np.abs(d[a][b] - d[b][a]))))
    return res


@dataclass
class ConformalFactorField:
    """Mean-zero conformal factor on a grid and how well it integrates the form."""

    grid: TorusGrid
    f: np.ndarray
    exactness_residual: float
    mean_modes: np.ndarray = field(default=None)

    def as_grid_field(self, name="f"):
        return GridField(self.grid, self.f, name)


def lee_potential(grid, form, n):
    """Least-squares solution of (n-1) df = -form by Fourier division.

    ``form`` has shape grid + (2n,) (real components along dx, dy).  The
    solution is mean-zero.  Modes with no spectral derivative (Nyquist) are
    dropped.  Returns a :class:`ConformalFactorField`; ``mean_modes`` holds
    the torus periods (mean coefficients) of the one-form.
    """
    target = -np.asarray(form, float) / (n - 1)
    dims = 2 * n
    num = np.zeros(grid.shape, complex)
    den = np.zeros(grid.shape)
    for a in range(dims):
        k = grid.wavenumbers[a]
        sym = np.where(grid.nyquist_masks[a], 0.0, 1j * k)
        num = num + np.conj(sym) * grid.fft(target[..., a])
        den = den + np.abs(sym) ** 2
    fhat = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    fhat.flat[0] = 0.0
    f = grid.ifft(fhat).real
    grad = np.stack([grid.derivative(f, a) for a in range(dims)], axis=-1)
    res = float(np.max(np.abs((n - 1) * grad + form)))
    means = np.mean(form.reshape(-1, dims), axis=0)
    return ConformalFactorField(grid, f, res, means)


@dataclass
class ConformalKahlerResult:
    """Outcome of the conformal Kähler decision procedure.

    ``status`` is one of ``"kahler"``, ``"globally_conformal_kahler"``,
    ``"locally_conformal_kahler"``, ``"not_conformal_kahler"``.
    """

    status: str
    reason: str
    verdict: KahlerVerdict
    factor: ConformalFactorField = None
    revalidation: KahlerVerdict = None
    witness: dict = None

    @property
    def conformally_kahler(self):
        return self.status in ("kahler", "globally_conformal_kahler")

    def as_dict(self):
        out = {"status": self.status, "reason": self.reason, "verdict": self.verdict.as_dict()}
        if self.factor is not None:
            out["factor"] = {"exactness_residual": self.factor.exactness_residual,
                             "mean_modes": self.factor.mean_modes.tolist()}
        if self.revalidation is not None:
            out["revalidation"] = self.revalidation.as_dict()
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def decide_from_one_form(grid, form, n, tolerance=GRID_TOL):
    """Closedness / exactness decision for a real one-form sampled on the grid.

    Returns (status, closedness residual, factor or None).
    """
    closed = exterior_derivative_residual(grid, form)
    factor = lee_potential(grid, form, n)
    if closed > tolerance:
        return "not_conformal_kahler", closed, factor
    if np.max(np.abs(factor.mean_modes)) > tolerance:
        return "locally_conformal_kahler", closed, factor
    return "globally_conformal_kahler", closed, factor


def conformal_kahler_test(metric, grid, tolerance=POINTWISE_TOL, grid_tolerance=GRID_TOL,
                          sample_count=64, seed=0):
    """Decide whether ``metric`` is globally conformal to a Kähler metric.

    Gates, in order: reducibility of the torsion at random samples,
    fiber-independence of the mean torsion on the grid, closedness of the
    real one-form, vanishing of its periods.  On success the conformal factor
    is recovered and ``exp(f) * metric`` re-validated.
    """
    n = metric.n
    zs, vs = sample_points(n, sample_count, seed, metric_periods(metric))
    samples = kahler_check(metric, zs, vs, tolerance)
    z = grid.z_points()
    v0 = reference_direction(n)
    geo = BundleGeometry(metric, JetPoint(z, v0, grid, grid.flat_index()), 4)
    ref_dep = float(np.max(_vertical_dependence(geo)))
    red_grid = float(np.max(np.abs(trace_free_torsion(geo.theta, geo.vartheta, n))))
    verdict = KahlerVerdict(
        torsion_max=max(samples.torsion_max, float(np.max(np.abs(geo.theta)))),
        weak_residual_max=max(samples.weak_residual_max, float(np.max(weak_kahler_residual(geo)))),
        reducibility_residual=max(samples.reducibility_residual, red_grid),
        vartheta_v_dependence=max(samples.vartheta_v_dependence, ref_dep),
        tolerance=tolerance, grid_tolerance=grid_tolerance,
    )
    if verdict.kahler:
        verdict.closedness_residual = 0.0
        zero = ConformalFactorField(grid, np.zeros(grid.shape), 0.0, np.zeros(2 * n))
        return ConformalKahlerResult("kahler", "torsion vanishes", verdict, zero)
    if not verdict.reducible:
        return ConformalKahlerResult("not_conformal_kahler", "horizontal torsion is not reducible", verdict,
                                     witness={"reducibility_residual": verdict.reducibility_residual})
    if not verdict.vartheta_on_base:
        return ConformalKahlerResult("not_conformal_kahler", "mean torsion depends on the fiber direction",
                                     verdict, witness={"vartheta_v_dependence": verdict.vartheta_v_dependence})
    form = real_one_form(geo.vartheta).reshape(grid.shape + (2 * n,))
    status, closed, factor = decide_from_one_form(grid, form, n, grid_tolerance)
    verdict.closedness_residual = closed
    if status == "not_conformal_kahler":
        return ConformalKahlerResult(status, "the real mean-torsion form is not closed", verdict, factor)
    if status == "locally_conformal_kahler":
        return ConformalKahlerResult(status, "the Lee form is closed but has non-zero periods", verdict, factor)
    rescaled = ConformalMetric(n, factor.as_grid_field(), metric, periods=metric.periods)
    idx = grid.flat_index()
    pts = np.broadcast_to(z[:, None, :], (len(z), 4, n)).reshape(-1, n)
    fib = np.concatenate([v0[None], vs[:3]], axis=0)
    fibs = np.broadcast_to(fib[None], (len(z), 4, n)).reshape(-1, n)
    ridx = tuple(np.repeat(ix, 4) for ix in idx)
    g2 = BundleGeometry(rescaled, JetPoint(pts, fibs, grid, ridx), 4)
    reval = KahlerVerdict(
        torsion_max=float(np.max(np.abs(g2.theta))),
        weak_residual_max=float(np.max(weak_kahler_residual(g2))),
        reducibility_residual=float(np.max(np.abs(trace_free_torsion(g2.theta, g2.vartheta, n)))),
        vartheta_v_dependence=float(np.max(_vertical_dependence(g2))),
        tolerance=tolerance,
    )
    if not reval.kahler:
        return ConformalKahlerResult("not_conformal_kahler", "rescaled metric retains torsion", verdict, factor, reval)
    return ConformalKahlerResult("globally_conformal_kahler", "closed exact Lee form", verdict, factor, reval)
