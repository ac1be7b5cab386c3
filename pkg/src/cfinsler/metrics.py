"""Complex Finsler metric families on a torus base.

Every family exposes ``jet(point, order)``, returning the Taylor jet of the
real function ``G(z, v)`` at a :class:`~cfinsler.expressions.JetPoint`, and
``base_variables()``, the real base coordinates it depends on (used to
collapse grid axes that nothing depends on).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expressions import Expression, ExpressionError, JetPoint, as_expression
from .jets import RealJet


class MetricError(ValueError):
    """A metric declaration is inconsistent."""


def _fiber_abs2(point, i, order):
    return point.abs2_var("v", i, order)


def _base_function(value, n, what):
    expr = as_expression(value, n)
    if isinstance(expr, Expression) and expr.depends_on_fiber():
        raise MetricError(f"{what} must depend on the base coordinates only: {expr.source!r}")
    return expr


def _base_vars(n, *exprs):
    out = set()
    for e in exprs:
        out |= {a for a in e.variables() if a < 2 * n}
    return out


class FinslerMetric:
    """Base class; subclasses implement :meth:`jet`."""

    n: int
    periods: tuple = None

    def jet(self, point: JetPoint, order: int) -> RealJet:
        raise NotImplementedError

    def base_variables(self) -> set:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def is_hermitian(self) -> bool:
        return False

    def value(self, z, v):
        """G at arrays of points (no derivatives)."""
        return self.jet(JetPoint(z, v), 0).value.real

    def conformal(self, f):
        return ConformalMetric(self.n, f, self, periods=self.periods)


@dataclass
class HermitianMetric(FinslerMetric):
    """G = h_{i j̄}(z) v^i v̄^j from a Hermitian matrix of base functions.

    Only the diagonal and upper triangle of ``h`` are read; the lower
    triangle is the conjugate by construction.
    """

    n: int
    h: list
    periods: tuple = None
    _entries: dict = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.h) != self.n or any(len(row) != self.n for row in self.h):
            raise MetricError(f"hermitian coefficient matrix must be {self.n}x{self.n}")
        self._entries = {}
        for i in range(self.n):
            for j in range(i, self.n):
                self._entries[i, j] = _base_function(self.h[i][j], self.n, f"h[{i + 1}][{j + 1}]")

    def is_hermitian(self):
        return True

    def base_variables(self):
        return _base_vars(self.n, *self._entries.values())

    def coefficient_jets(self, point, order):
        """Matrix of jets h_{ij̄}(z) (full, lower triangle conjugated)."""
        n = self.n
        out = [[None] * n for _ in range(n)]
        for (i, j), e in self._entries.items():
            jt = e.jet(point, order)
            if i == j:
                jt = jt.real
            out[i][j] = jt
            if i != j:
                out[j][i] = jt.conj()
        return out

    def jet(self, point, order):
        total = None
        for (i, j), e in self._entries.items():
            h = e.jet(point, order)
            if i == j:
                term = h.real * _fiber_abs2(point, i, order)
            else:
                prod = point.complex_var("v", i, order) * point.complex_var("v", j, order).conj()
                term = (h * prod).real * 2.0
            total = term if total is None else total + term
        return total

    def describe(self):
        return {"family": "hermitian", "n": self.n,
                "h": [[_src(self.h[i][j]) for j in range(self.n)] for i in range(self.n)]}


def flat_metric(n, periods=None):
    """The flat metric |v|^2."""
    h = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
    return HermitianMetric(n, h, periods=periods)


@dataclass
class QuarticPerturbation(FinslerMetric):
    """G = |v|^2 + lam * sum_i |v^i|^4 / |v|^2 (z-independent)."""

    n: int
    lam: float
    periods: tuple = None

    def base_variables(self):
        return set()

    def jet(self, point, order):
        sq = [_fiber_abs2(point, i, order) for i in range(self.n)]
        norm2 = sq[0]
        quart = sq[0] * sq[0]
        for s in sq[1:]:
            norm2 = norm2 + s
            quart = quart + s * s
        return norm2 + quart * norm2.reciprocal() * float(self.lam)

    def describe(self):
        return {"family": "quartic_perturbation", "n": self.n, "lambda": float(self.lam)}


@dataclass
class ZTwistedMetric(FinslerMetric):
    """G = a|v1|^2 + b|v2|^2 + lam*c*|v1|^2|v2|^2 / (a|v1|^2 + b|v2|^2), n = 2."""

    a: object
    b: object
    lam: float
    c: object = "1"
    periods: tuple = None
    n: int = 2

    def __post_init__(self):
        if self.n != 2:
            raise MetricError("z_twisted is defined for n = 2 only")
        self._a = _base_function(self.a, 2, "a")
        self._b = _base_function(self.b, 2, "b")
        self._c = _base_function(self.c, 2, "c")

    def base_variables(self):
        return _base_vars(2, self._a, self._b, self._c)

    def jet(self, point, order):
        s1, s2 = _fiber_abs2(point, 0, order), _fiber_abs2(point, 1, order)
        a = self._a.jet(point, order).real
        b = self._b.jet(point, order).real
        c = self._c.jet(point, order).real
        quad = a * s1 + b * s2
        return quad + (c * s1 * s2) * quad.reciprocal() * float(self.lam)

    def describe(self):
        return {"family": "z_twisted", "n": 2, "a": _src(self.a), "b": _src(self.b),
                "lambda": float(self.lam), "c": _src(self.c)}


@dataclass
class ConformalMetric(FinslerMetric):
    """G = exp(f(z)) * inner(z, v)."""

    n: int
    f: object
    inner: FinslerMetric
    periods: tuple = None

    def __post_init__(self):
        if self.inner.n != self.n:
            raise MetricError("conformal factor and inner metric differ in dimension")
        self._f = _base_function(self.f, self.n, "conformal factor")
        if self.periods is None:
            self.periods = self.inner.periods

    def is_hermitian(self):
        return self.inner.is_hermitian()

    def base_variables(self):
        return _base_vars(self.n, self._f) | self.inner.base_variables()

    def factor_jet(self, point, order):
        return self._f.jet(point, order).real

    def jet(self, point, order):
        return self.inner.jet(point, order) * self.factor_jet(point, order).exp()

    def describe(self):
        f = self.f.describe() if hasattr(self.f, "describe") else _src(self.f)
        return {"family": "conformal", "n": self.n, "f": f, "inner": self.inner.describe()}


@dataclass
class ExpressionMetric(FinslerMetric):
    """G given directly as a real expression in z, v."""

    n: int
    G: object
    periods: tuple = None

    def __post_init__(self):
        self._G = as_expression(self.G, self.n)

    def base_variables(self):
        return _base_vars(self.n, self._G)

    def jet(self, point, order):
        return self._G.jet(point, order).real

    def describe(self):
        return {"family": "expression", "n": self.n, "G": _src(self.G)}


def _src(value):
    if isinstance(value, Expression):
        return value.source
    if isinstance(value, (int, float)):
        return value
    return str(value)


# ----------------------------------------------------------------------------
# declarative construction


def metric_from_config(spec: dict) -> FinslerMetric:
    """Build a metric from its JSON declaration.

    Examples
    --------
    >>> metric_from_config({"family": "quartic_perturbation", "n": 2, "lambda": 0.1})
    QuarticPerturbation(n=2, lam=0.1, periods=None)
    """
    if not isinstance(spec, dict) or "family" not in spec:
        raise MetricError("metric declaration must be an object with a 'family' key")
    family = spec["family"]
    n = int(spec.get("n", 2))
    if n < 2:
        raise MetricError("complex dimension n must be >= 2")
    periods = spec.get("periods")
    if periods is not None:
        periods = tuple(float(p) for p in periods)
        if len(periods) != 2 * n or any(p <= 0 for p in periods):
            raise MetricError(f"periods must be {2 * n} positive numbers")
    try:
        if family == "flat":
            return flat_metric(n, periods)
        if family == "hermitian":
            return HermitianMetric(n, spec["h"], periods=periods)
        if family == "quartic_perturbation":
            return QuarticPerturbation(n, float(spec.get("lambda", 0.0)), periods=periods)
        if family == "z_twisted":
            if n != 2:
                raise MetricError("z_twisted is defined for n = 2 only")
            return ZTwistedMetric(spec.get("a", "1"), spec.get("b", "1"), float(spec.get("lambda", 0.0)),
                                  spec.get("c", "1"), periods=periods)
        if family == "conformal":
            inner = dict(spec["inner"])
            inner.setdefault("n", n)
            if periods is not None:
                inner.setdefault("periods", list(periods))
            return ConformalMetric(n, spec["f"], metric_from_config(inner), periods=periods)
        if family == "expression":
            return ExpressionMetric(n, spec["G"], periods=periods)
    except KeyError as exc:
        raise MetricError(f"metric family {family!r} is missing field {exc.args[0]!r}") from None
    except ExpressionError as exc:
        raise MetricError(str(exc)) from None
    raise MetricError(f"unknown metric family {family!r}")


def metric_periods(metric):
    return metric.periods if metric.periods is not None else (1.0,) * (2 * metric.n)


def sample_points(n, count, seed, periods=None):
    """Deterministic pseudo-random (z, v) samples: z uniform on the torus, v on the unit sphere.

    Uses numpy's PCG64 generator seeded with ``seed``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    periods = np.asarray(periods if periods is not None else (1.0,) * (2 * n))
    real = rng.random((count, 2 * n)) * periods
    z = real[:, :n] + 1j * real[:, n:]
    v = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return z, v
