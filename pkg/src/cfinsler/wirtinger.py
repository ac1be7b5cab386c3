"""Wirtinger partial derivatives of a metric at a point.

A Wirtinger multi-index is a tuple of ``4n`` non-negative integers giving
the derivative orders in ``(z^1..z^n, zbar^1..zbar^n, v^1..v^n, vbar^1..vbar^n)``.
:func:`wirtinger_index` builds one from a readable string such as
``"v1 vbar2"`` or ``"z1^2 zbar1"``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .expressions import JetPoint
from .jets import Coordinates, JetOrderError, RealJet, monomials, wirtinger_operator_coefficients


class DomainError(ValueError):
    """Evaluation requested outside the slit bundle (v = 0)."""


DEFAULT_ORDER = 5
MAX_ORDER = 8

_TOKEN = re.compile(r"^(z|zbar|v|vbar)([1-9][0-9]*)(?:\^([0-9]+))?$")


def wirtinger_index(text, n):
    """Parse ``"v1 vbar1 z2^2"`` into a 4n-tuple of derivative orders."""
    counts = [0] * (4 * n)
    for tok in text.split():
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"bad Wirtinger index token {tok!r}")
        kind, i, power = m.group(1), int(m.group(2)) - 1, int(m.group(3) or 1)
        if i >= n:
            raise ValueError(f"index {tok!r} exceeds dimension {n}")
        block = ("z", "zbar", "v", "vbar").index(kind)
        counts[block * n + i] += power
    return tuple(counts)


def conjugate_index(index, n):
    """Swap z <-> zbar and v <-> vbar orders."""
    z, zb, v, vb = (tuple(index[k * n:(k + 1) * n]) for k in range(4))
    return zb + z + vb + v


@dataclass(frozen=True)
class WirtingerJet:
    """Jet of a real function of (z, v) viewed through Wirtinger derivatives.

    Attributes
    ----------
    real_jet : RealJet
        Underlying Taylor table in the real coordinates (batch shape ``()``
        for a single point, or any batch shape).
    n : int
    """

    real_jet: RealJet
    n: int

    @property
    def order(self):
        return self.real_jet.order

    @property
    def value(self):
        return self.real_jet.value

    def partial(self, index):
        return wirtinger_partial(self, index)

    @cached_property
    def partials(self):
        """Every Wirtinger partial up to the jet order, keyed by 4n-tuple."""
        table = monomials(4 * self.n, self.order)
        return {tuple(int(e) for e in row): wirtinger_partial(self, tuple(row)) for row in table}


def expand_jet(metric, z, v, order=DEFAULT_ORDER):
    """Expand ``G`` at ``(z, v)`` into a :class:`WirtingerJet` of the given order.

    Raises
    ------
    DomainError
        If ``v = 0``.
    SingularityError
        If the metric expression is not smooth at the point.
    """
    if order < 0 or order > MAX_ORDER:
        raise JetOrderError(f"jet order must lie in [0, {MAX_ORDER}], got {order}")
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if np.any(np.all(v == 0, axis=-1)):
        raise DomainError("the fiber vector v must be non-zero")
    jet = metric.jet(JetPoint(z, v), order)
    return WirtingerJet(jet, metric.n)


def wirtinger_partial(jet, index):
    """Mixed Wirtinger partial from the real-coordinate Taylor table.

    Each pair (d/dz^i)^a (d/dzbar^i)^b is expanded into real partials
    d_x^(a+b-k) d_y^k with the coefficients of ((d_x - i d_y)/2)^a ((d_x + i d_y)/2)^b.
    """
    n = jet.n
    if isinstance(index, str):
        index = wirtinger_index(index, n)
    index = tuple(int(c) for c in index)
    if len(index) != 4 * n:
        raise ValueError(f"Wirtinger index needs {4 * n} entries")
    if sum(index) > jet.order:
        raise JetOrderError(f"index of total order {sum(index)} exceeds jet order {jet.order}")
    coords = Coordinates(n)
    pairs = []
    for i in range(n):
        pairs.append((coords.x(i), coords.y(i), index[i], index[n + i]))
    for i in range(n):
        pairs.append((coords.p(i), coords.q(i), index[2 * n + i], index[3 * n + i]))
    expansions = []
    for re_var, im_var, a, b in pairs:
        c = wirtinger_operator_coefficients(a, b)
        expansions.append([(c[k], re_var, im_var, a + b - k, k) for k in range(a + b + 1) if c[k] != 0])
    rj: RealJet = jet.real_jet
    total = 0.0
    for combo in itertools.product(*expansions):
        coeff = 1.0 + 0j
        exps = {}
        for c, re_var, im_var, ex, ey in combo:
            coeff = coeff * c
            if ex:
                exps[re_var] = ex
            if ey:
                exps[im_var] = ey
        total = total + coeff * rj.partial(exps)
    return total
