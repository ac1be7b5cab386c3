"""Truncated multivariate Taylor arithmetic over real coordinates.

A :class:`RealJet` stores the Taylor coefficients of a (real- or
complex-valued) function of the ``4n`` real coordinates
``x^1..x^n, y^1..y^n, p^1..p^n, q^1..q^n`` where ``z = x + iy`` and
``v = p + iq``.  Only the coordinates a jet actually depends on (its
*support*) are stored, which keeps products of base-only and fiber-only
factors cheap.

Coefficients live on the LAST axis of ``coef`` so that jets evaluated on
differently shaped batches (base points x fiber nodes) broadcast against
each other with ordinary numpy rules.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial

import numpy as np


class JetOrderError(ValueError):
    """Requested derivative exceeds the order carried by a jet."""


class SingularityError(ArithmeticError):
    """A jet operation hit a non-smooth point (zero denominator, log of 0)."""

    def __init__(self, message, subexpression=None):
        super().__init__(message)
        self.subexpression = subexpression


# ----------------------------------------------------------------------------
# monomial bookkeeping


@lru_cache(maxsize=None)
def monomials(k: int, d: int) -> np.ndarray:
    """Exponent table of all monomials in ``k`` variables of degree <= d.

    Rows are sorted by total degree, then lexicographically (descending).
    """
    rows = []
    for deg in range(d + 1):
        rows.extend(_compositions(deg, k))
    out = np.array(rows, dtype=np.int64).reshape(len(rows), k)
    out.setflags(write=False)
    return out


def _compositions(total, k):
    if k == 0:
        return [()] if total == 0 else []
    if k == 1:
        return [(total,)]
    res = []
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, k - 1):
            res.append((first,) + rest)
    return res


@lru_cache(maxsize=None)
def _code_lookup(k: int, d: int):
    mons = monomials(k, d)
    base = d + 1
    codes = mons @ (base ** np.arange(k, dtype=np.int64)) if k else np.zeros(1, np.int64)
    order = np.argsort(codes, kind="stable")
    return codes[order], order, base


def _index_of(k, d, exps):
    """Indices of exponent rows ``exps`` (m x k) in ``monomials(k, d)``."""
    codes_sorted, order, base = _code_lookup(k, d)
    if k == 0:
        return np.zeros(len(exps), dtype=np.int64)
    c = exps @ (base ** np.arange(k, dtype=np.int64))
    pos = np.searchsorted(codes_sorted, c)
    return order[pos]


@lru_cache(maxsize=None)
def _embed_table(src_vars, src_d, dst_vars, dst_d):
    """Map coefficients from (src_vars, src_d) into (dst_vars, dst_d).

    ``dst_vars`` must contain ``src_vars`` and ``dst_d <= src_d``.
    Returns (src_idx, dst_idx).
    """
    ms = monomials(len(src_vars), src_d)
    keep = ms.sum(axis=1) <= dst_d
    pos = [dst_vars.index(v) for v in src_vars]
    exps = np.zeros((int(keep.sum()), len(dst_vars)), dtype=np.int64)
    if pos:
        exps[:, pos] = ms[keep]
    dst_idx = _index_of(len(dst_vars), dst_d, exps)
    return np.nonzero(keep)[0], dst_idx


@lru_cache(maxsize=None)
def _mul_table(vars_a, vars_b, d):
    """Pair table for the truncated product of two jets of order >= d.

    Returns (out_vars, groups) where groups is a list of tuples
    (a_index, b_indices, out_indices) -- one per monomial of the jet with
    the smaller table, so a product is a short loop of vectorised
    gather/multiply/scatter steps without duplicate scatter targets.
    """
    out_vars = tuple(sorted(set(vars_a) | set(vars_b)))
    ma = monomials(len(vars_a), d)
    mb = monomials(len(vars_b), d)
    ka, kb = len(out_vars), len(out_vars)
    ea = np.zeros((len(ma), ka), dtype=np.int64)
    eb = np.zeros((len(mb), kb), dtype=np.int64)
    if vars_a:
        ea[:, [out_vars.index(v) for v in vars_a]] = ma
    if vars_b:
        eb[:, [out_vars.index(v) for v in vars_b]] = mb
    deg_a = ma.sum(axis=1)
    deg_b = mb.sum(axis=1)
    swap = len(ma) > len(mb)
    groups = []
    if not swap:
        for ia in range(len(ma)):
            ib = np.nonzero(deg_b <= d - deg_a[ia])[0]
            out = _index_of(len(out_vars), d, ea[ia] + eb[ib])
            groups.append((ia, ib, out))
    else:
        for ib in range(len(mb)):
            ia = np.nonzero(deg_a <= d - deg_b[ib])[0]
            out = _index_of(len(out_vars), d, ea[ia] + eb[ib])
            groups.append((ib, ia, out))
    return out_vars, swap, groups


@lru_cache(maxsize=None)
def _deriv_table(k, d, pos):
    """For d/d(var at position pos): target monomials of order d-1."""
    mt = monomials(k, d - 1)
    src = mt.copy()
    src[:, pos] += 1
    return _index_of(k, d, src), (mt[:, pos] + 1).astype(float)


@lru_cache(maxsize=None)
def _factorials(k, d):
    mons = monomials(k, d)
    return np.array([np.prod([factorial(int(e)) for e in row]) for row in mons], dtype=float)


# ----------------------------------------------------------------------------
# the jet type


class RealJet:
    """Truncated Taylor expansion in a subset of the real coordinates.

    Parameters
    ----------
    coef : ndarray, shape (..., ncoef)
        Taylor coefficients ordered as ``monomials(len(vars), order)``.
    vars : tuple of int
        Sorted indices of the real coordinates the jet depends on.
    order : int
        Truncation degree.
    """

    __slots__ = ("coef", "vars", "order")
    __array_priority__ = 1000

    def __init__(self, coef, vars, order):
        self.coef = coef
        self.vars = tuple(vars)
        self.order = int(order)

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, value, order):
        value = np.asarray(value)
        return cls(value[..., None], (), order)

    @classmethod
    def variable(cls, index, value, order):
        """Jet of the coordinate function ``index`` expanded at ``value``."""
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (order + 1,))
        coef[..., 0] = value
        if order >= 1:
            coef[..., 1] = 1.0
        return cls(coef, (index,), order)

    # basic properties ---------------------------------------------------
    @property
    def value(self):
        return self.coef[..., 0]

    @property
    def batch_shape(self):
        return self.coef.shape[:-1]

    def __repr__(self):
        return f"RealJet(order={self.order}, vars={self.vars}, batch={self.batch_shape})"

    def is_real(self):
        return not np.iscomplexobj(self.coef)

    def recast(self, vars, order):
        """Re-express on a larger support and/or lower order."""
        vars = tuple(vars)
        if vars == self.vars and order == self.order:
            return self
        if order > self.order:
            raise JetOrderError("cannot raise the order of a jet")
        src, dst = _embed_table(self.vars, self.order, vars, order)
        out = np.zeros(self.coef.shape[:-1] + (len(monomials(len(vars), order)),), dtype=self.coef.dtype)
        out[..., dst] = self.coef[..., src]
        return RealJet(out, vars, order)

    def truncate(self, order):
        return self.recast(self.vars, min(order, self.order))

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, RealJet):
            return other
        return RealJet.constant(other, self.order)

    def __add__(self, other):
        other = self._coerce(other)
        d = min(self.order, other.order)
        if not self.vars and other.vars:
            return other + self
        if not other.vars:
            a = self.truncate(d).coef
            shape = np.broadcast_shapes(a.shape[:-1], other.coef.shape[:-1]) + a.shape[-1:]
            coef = np.zeros(shape, dtype=np.result_type(a, other.coef))
            coef[...] = a
            coef[..., 0] += other.coef[..., 0]
            return RealJet(coef, self.vars, d)
        vars = tuple(sorted(set(self.vars) | set(other.vars)))
        a = self.recast(vars, d)
        b = other.recast(vars, d)
        return RealJet(a.coef + b.coef, vars, d)

    __radd__ = __add__

    def __neg__(self):
        return RealJet(-self.coef, self.vars, self.order)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, factor):
        """Multiply by a per-batch scalar array (no jet dependence)."""
        factor = np.asarray(factor)
        return RealJet(self.coef * factor[..., None], self.vars, self.order)

    def __mul__(self, other):
        if not isinstance(other, RealJet):
            if np.isscalar(other) or np.ndim(other) == 0:
                return RealJet(self.coef * other, self.vars, self.order)
            return self.scale(other)
        if not other.vars:
            d = min(self.order, other.order)
            return RealJet(self.truncate(d).coef * other.coef[..., :1], self.vars, d)
        if not self.vars:
            return other * self
        d = min(self.order, other.order)
        out_vars, swap, groups = _mul_table(self.vars, other.vars, d)
        a = self.truncate(d).coef
        b = other.truncate(d).coef
        if swap:
            a, b = b, a
        nout = len(monomials(len(out_vars), d))
        batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        # coefficient-major layout makes every gather/scatter below contiguous
        nd = len(batch)
        a = a.reshape((1,) * (nd - a.ndim + 1) + a.shape)
        b = b.reshape((1,) * (nd - b.ndim + 1) + b.shape)
        at = np.moveaxis(a, -1, 0)
        bt = np.ascontiguousarray(np.moveaxis(b, -1, 0))
        out = np.zeros((nout,) + batch, dtype=np.result_type(a, b))
        for ia, ib, io in groups:
            out[io] += at[ia] * bt[ib]
        return RealJet(np.moveaxis(out, 0, -1), out_vars, d)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, RealJet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, RealJet):
            return (self.log() * exponent).exp()
        if float(exponent).is_integer() and exponent >= 0:
            return self._int_power(int(exponent))
        return self.power(float(exponent))

    def _int_power(self, k):
        result = RealJet.constant(np.ones_like(self.value), self.order)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def conj(self):
        if self.is_real():
            return self
        return RealJet(np.conj(self.coef), self.vars, self.order)

    @property
    def real(self):
        return RealJet(np.real(self.coef).copy(), self.vars, self.order)

    @property
    def imag(self):
        return RealJet(np.imag(self.coef).copy(), self.vars, self.order)

    def abs2(self):
        """|u|^2 computed as Re(u)^2 + Im(u)^2 so the result is exactly real."""
        if self.is_real():
            return self * self
        re, im = self.real, self.imag
        return re * re + im * im

    # unary functions via Taylor series in the nilpotent part -------------
    def _series(self, coeffs):
        """sum_k coeffs[k] * (self - value)^k by Horner's rule."""
        h = RealJet(self.coef.copy(), self.vars, self.order)
        h.coef[..., 0] = 0
        acc = RealJet.constant(coeffs[-1], self.order)
        for c in reversed(coeffs[:-1]):
            acc = acc * h
            acc = acc + RealJet.constant(c, self.order)
        if not acc.vars and self.vars:
            acc = acc.recast(self.vars, self.order)
        return acc

    def exp(self):
        e = np.exp(self.value)
        return self._series([e / factorial(k) for k in range(self.order + 1)])

    def log(self):
        u0 = self.value
        if np.any(u0 == 0):
            raise SingularityError("log of zero")
        coeffs = [np.log(u0)] + [(-1.0) ** (k + 1) / (k * u0 ** k) for k in range(1, self.order + 1)]
        return self._series(coeffs)

    def reciprocal(self):
        u0 = self.value
        if np.any(u0 == 0):
            raise SingularityError("division by zero")
        inv = 1.0 / u0
        coeffs = [(-1.0) ** k * inv ** (k + 1) for k in range(self.order + 1)]
        return self._series(coeffs)

    def power(self, a):
        u0 = self.value
        if np.any(u0 == 0) and not (float(a).is_integer() and a >= 0):
            raise SingularityError("non-integer power of zero")
        coeffs = [_gbinom(a, k) * u0 ** (a - k) for k in range(self.order + 1)]
        return self._series(coeffs)

    def sqrt(self):
        return self.power(0.5)

    def sin(self):
        u0 = self.value
        s, c = np.sin(u0), np.cos(u0)
        cyc = [s, c, -s, -c]
        return self._series([cyc[k % 4] / factorial(k) for k in range(self.order + 1)])

    def cos(self):
        u0 = self.value
        s, c = np.sin(u0), np.cos(u0)
        cyc = [c, -s, -c, s]
        return self._series([cyc[k % 4] / factorial(k) for k in range(self.order + 1)])

    # differentiation ----------------------------------------------------
    def deriv(self, var):
        """Partial derivative along real coordinate ``var`` (order drops by 1)."""
        if self.order < 1:
            raise JetOrderError("jet of order 0 cannot be differentiated")
        if var not in self.vars:
            return RealJet(np.zeros(self.coef.shape[:-1] + (1,), dtype=self.coef.dtype), (), self.order - 1)
        src, fac = _deriv_table(len(self.vars), self.order, self.vars.index(var))
        return RealJet(self.coef[..., src] * fac, self.vars, self.order - 1)

    def partial(self, exponents):
        """Real partial derivative for a {var: count} mapping."""
        total = sum(exponents.values())
        if total > self.order:
            raise JetOrderError(f"derivative of order {total} exceeds jet order {self.order}")
        if any(v not in self.vars for v, c in exponents.items() if c):
            return np.zeros(self.batch_shape, dtype=self.coef.dtype)
        row = np.zeros((1, len(self.vars)), dtype=np.int64)
        for v, c in exponents.items():
            if c:
                row[0, self.vars.index(v)] = c
        idx = _index_of(len(self.vars), self.order, row)[0]
        scale = float(np.prod([factorial(c) for c in exponents.values()]))
        return self.coef[..., idx] * scale


def _gbinom(a, k):
    out = 1.0
    for j in range(k):
        out *= (a - j) / (j + 1)
    return out


# ----------------------------------------------------------------------------
# Wirtinger operators on jets


class Coordinates:
    """Index layout of the 4n real coordinates for complex dimension n."""

    def __init__(self, n):
        self.n = n

    def x(self, i):
        return i

    def y(self, i):
        return self.n + i

    def p(self, i):
        return 2 * self.n + i

    def q(self, i):
        return 3 * self.n + i

    def base_vars(self):
        return tuple(range(2 * self.n))

    def fiber_vars(self):
        return tuple(range(2 * self.n, 4 * self.n))

    def name(self, var):
        n = self.n
        kind = "xypq"[var // n]
        return f"{kind}{var % n + 1}"


def _wirtinger(jet, re_var, im_var, sign):
    dre = jet.deriv(re_var)
    dim = jet.deriv(im_var)
    if not dim.vars and not np.any(dim.coef):
        return dre * 0.5
    if not dre.vars and not np.any(dre.coef):
        return dim * (0.5j * sign)
    return (dre + dim * (1j * sign)) * 0.5


def d_z(jet, coords, i):
    """d/dz^i = (d/dx - i d/dy)/2."""
    return _wirtinger(jet, coords.x(i), coords.y(i), -1)


def d_zbar(jet, coords, i):
    return _wirtinger(jet, coords.x(i), coords.y(i), +1)


def d_v(jet, coords, i):
    return _wirtinger(jet, coords.p(i), coords.q(i), -1)


def d_vbar(jet, coords, i):
    return _wirtinger(jet, coords.p(i), coords.q(i), +1)


def wirtinger_operator_coefficients(a, b):
    """Expand d_z^a d_zbar^b into real partials d_x^(a+b-k) d_y^k.

    Returns an array c with c[k] the coefficient of d_x^(a+b-k) d_y^k.
    """
    zpoly = np.array([1.0 + 0j])
    for _ in range(a):
        zpoly = np.convolve(zpoly, np.array([0.5, -0.5j]))
    for _ in range(b):
        zpoly = np.convolve(zpoly, np.array([0.5, 0.5j]))
    return zpoly


def count_monomials(k, d):
    return comb(k + d, d)
