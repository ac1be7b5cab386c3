"""Numerical complex Finsler geometry on complex tori.

Truncated Taylor jets supply every derivative of a metric ``G(z, v)``; on
top of them the package computes the Chern-Finsler connection, torsion and
curvatures, integrates over the projectivized fibers, decides conformal
Kähler-ness, evaluates total-curvature functionals with their variations,
and minimizes a Yamabe-type quotient for constant mean Ricci curvature.
"""

from .curvature import (conformal_curvature_check, curvature_at, hh_curvature, holomorphic_curvature,
                        kobayashi_matrix, ricci)
from .fiber import build_fiber_rule, divergence_residual, fiber_integrate, fiber_moments
from .functionals import first_variation, rayleigh_lambda1, second_variation, total_curvatures
from .geometry import geometry_at
from .kahler import conformal_kahler_test, kahler_check
from .metrics import metric_from_config
from .validation import validate_metric
from .wirtinger import expand_jet, wirtinger_partial
from .yamabe import (assemble_base_geometry, conformal_invariants, constant_rho_verify, minimize,
                     yamabe_quotient)

__version__ = "0.1.0"

__all__ = [
    "assemble_base_geometry", "build_fiber_rule", "conformal_curvature_check", "conformal_invariants",
    "conformal_kahler_test", "constant_rho_verify", "curvature_at", "divergence_residual", "expand_jet",
    "fiber_integrate", "fiber_moments", "first_variation", "geometry_at", "hh_curvature",
    "holomorphic_curvature", "kahler_check", "kobayashi_matrix", "metric_from_config", "minimize",
    "rayleigh_lambda1", "ricci", "second_variation", "total_curvatures", "validate_metric",
    "wirtinger_partial", "yamabe_quotient",
]
