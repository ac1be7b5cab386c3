"""Sampled validation of the complex Finsler axioms for a metric declaration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expressions import JetPoint
from .geometry import BundleGeometry, PseudoconvexityError
from .metrics import metric_periods, sample_points

HOMOGENEITY_TOL = 1e-12
SCALES = (2.0, 1.0 + 1.0j, np.exp(1.0j))


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_metric`.

    ``witness`` is the (z, v) sample with the smallest Levi eigenvalue.
    """

    sample_count: int
    seed: int
    min_levi_eigenvalue: float
    max_homogeneity_residual: float
    max_euler_residual: float
    min_G: float
    witness: dict
    tolerance: float = HOMOGENEITY_TOL

    @property
    def pseudoconvex(self):
        return self.min_levi_eigenvalue > 0

    @property
    def passed(self):
        return (self.pseudoconvex and self.min_G > 0
                and self.max_homogeneity_residual <= self.tolerance
                and self.max_euler_residual <= self.tolerance)

    def raise_for_failure(self):
        """Raise :class:`PseudoconvexityError` naming the witness if the Levi matrix degenerates."""
        if not self.pseudoconvex:
            raise PseudoconvexityError(
                f"Levi matrix is not positive definite at z={self.witness['z']}, v={self.witness['v']}",
                self.witness)
        return self

    def as_dict(self):
        """Plain-JSON view; non-finite numbers (degenerate samples) become ``None``."""
        num = lambda x: float(x) if np.isfinite(x) else None  # noqa: E731
        return {
            "sample_count": self.sample_count, "seed": self.seed,
            "min_levi_eigenvalue": num(self.min_levi_eigenvalue),
            "max_homogeneity_residual": num(self.max_homogeneity_residual),
            "max_euler_residual": num(self.max_euler_residual), "min_G": num(self.min_G),
            "pseudoconvex": self.pseudoconvex, "passed": self.passed, "witness": self.witness,
        }


def _complex_pairs(a):
    return [[float(x.real), float(x.imag)] for x in np.ravel(a)]


def validate_metric(metric, sample_count=256, seed=0, tolerance=HOMOGENEITY_TOL):
    """Check positivity, homogeneity and strong pseudoconvexity at random samples.

    Parameters
    ----------
    metric : FinslerMetric
    sample_count : int
        Number of deterministic pseudo-random (z, v) samples, at least 1.
    seed : int
    tolerance : float
        Bound on the relative homogeneity residuals.

    Returns
    -------
    ValidationReport
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = metric.n
    z, v = sample_points(n, sample_count, seed, metric_periods(metric))
    G = metric.jet(JetPoint(z, v), 2).value.real
    homog = np.max([np.abs(metric.value(z, lam * v) - abs(lam) ** 2 * G) for lam in SCALES], axis=0)
    homog = homog / np.maximum(np.abs(G), 1e-300)
    min_G = float(np.min(G))
    if min_G <= 0:
        k = int(np.argmin(G))
        return ValidationReport(sample_count, seed, -np.inf, float(np.max(homog)), np.inf, min_G,
                                {"z": _complex_pairs(z[k]), "v": _complex_pairs(v[k])}, tolerance)
    geo = BundleGeometry(metric, JetPoint(z, v), 2)
    levi = geo.levi
    eig = np.linalg.eigvalsh(levi)[:, 0]
    euler = np.einsum("pij,pi,pj->p", levi, v, np.conj(v)).real
    euler_res = np.abs(euler - G) / G
    k = int(np.argmin(eig))
    return ValidationReport(
        sample_count=sample_count, seed=seed, min_levi_eigenvalue=float(eig[k]),
        max_homogeneity_residual=float(np.max(homog)), max_euler_residual=float(np.max(euler_res)),
        min_G=min_G, witness={"z": _complex_pairs(z[k]), "v": _complex_pairs(v[k])}, tolerance=tolerance)
