"""A small, safe expression language for metric data.

Expressions are strings such as ``"1 + 0.3*sin(2*pi*x1)*cos(2*pi*y2)"`` or
``"abs2(v1)^2 + abs2(v2)^2"``.  They are parsed with :mod:`ast`, checked
against a whitelist, and evaluated directly into jets.

Recognised names (for complex dimension n, indices 1..n):

* ``x1``, ``y1``: real base coordinates, ``z1 = x1 + i*y1``
* ``p1``, ``q1``: real fiber coordinates, ``v1 = p1 + i*q1``
* ``pi``, ``e``, ``I`` (imaginary unit), plus any user-supplied constants
  or :class:`~cfinsler.grid.GridField` objects passed as ``fields``

Functions: ``exp log sin cos sqrt conj abs2 re im``.  ``^`` means power.
"""

from __future__ import annotations

import ast
import re
from math import e as _E, pi as _PI

import numpy as np

from .jets import Coordinates, RealJet, SingularityError


class ExpressionError(ValueError):
    """The expression text is malformed or uses unsupported constructs."""


_FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt", "conj", "abs2", "re", "im")
_COORD = re.compile(r"^([xyzvpq])([1-9][0-9]*)$")


class JetPoint:
    """Expansion point for jet evaluation.

    Parameters
    ----------
    z, v : array_like, complex, shape (..., n)
        Base and fiber coordinates; batch shapes must broadcast.
    grid, index
        Optional :class:`TorusGrid` and tuple of integer index arrays (with
        the batch shape of ``z``) locating the base points on the grid.
        Needed only when grid fields are evaluated.
    """

    def __init__(self, z, v, grid=None, index=None):
        self.z = np.asarray(z, dtype=complex)
        self.v = np.asarray(v, dtype=complex)
        if self.z.shape[-1] != self.v.shape[-1]:
            raise ValueError("base and fiber coordinates differ in dimension")
        self.n = self.z.shape[-1]
        self.coords = Coordinates(self.n)
        self.grid = grid
        self.index = index
        self._cache = {}

    @property
    def batch_shape(self):
        return np.broadcast_shapes(self.z.shape[:-1], self.v.shape[:-1])

    def var(self, var, order):
        key = (var, order)
        if key not in self._cache:
            kind, i = divmod(var, self.n)
            src = self.z if kind < 2 else self.v
            val = src[..., i].real if kind % 2 == 0 else src[..., i].imag
            self._cache[key] = RealJet.variable(var, val, order)
        return self._cache[key]

    def complex_var(self, kind, i, order):
        """Jet of z^i (kind 'z') or v^i (kind 'v')."""
        c = self.coords
        if kind == "z":
            return self.var(c.x(i), order) + self.var(c.y(i), order) * 1j
        return self.var(c.p(i), order) + self.var(c.q(i), order) * 1j

    def abs2_var(self, kind, i, order):
        c = self.coords
        re_, im_ = (c.x(i), c.y(i)) if kind == "z" else (c.p(i), c.q(i))
        a, b = self.var(re_, order), self.var(im_, order)
        return a * a + b * b


# ----------------------------------------------------------------------------


class Expression:
    """Compiled scalar expression in base and fiber coordinates.

    Parameters
    ----------
    source : str or number
        Expression text.
    n : int
        Complex dimension (bounds the coordinate indices).
    constants : dict, optional
        Extra named numeric constants.
    fields : dict, optional
        Named grid fields usable as base functions.
    """

    def __init__(self, source, n, constants=None, fields=None):
        if isinstance(source, Expression):
            source = source.source
        self.source = str(source)
        self.n = int(n)
        self.constants = {"pi": _PI, "e": _E, "I": 1j}
        self.constants.update(constants or {})
        self.fields = dict(fields or {})
        text = self.source.replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        self._tree = tree.body
        self._deps = set()
        self._check(self._tree)

    def __repr__(self):
        return f"Expression({self.source!r})"

    # validation / dependency analysis -------------------------------------
    def _coordinate(self, name):
        m = _COORD.match(name)
        if not m:
            return None
        kind, idx = m.group(1), int(m.group(2)) - 1
        if idx >= self.n:
            raise ExpressionError(f"{name!r} exceeds dimension n={self.n} in {self.source!r}")
        return kind, idx

    def _vars_of(self, kind, i):
        c = Coordinates(self.n)
        return {
            "x": {c.x(i)},
            "y": {c.y(i)},
            "z": {c.x(i), c.y(i)},
            "p": {c.p(i)},
            "q": {c.q(i)},
            "v": {c.p(i), c.q(i)},
        }[kind]

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float, complex)) or isinstance(node.value, bool):
                raise ExpressionError(f"unsupported literal {node.value!r} in {self.source!r}")
            return
        if isinstance(node, ast.Name):
            coord = self._coordinate(node.id)
            if coord is not None:
                self._deps |= self._vars_of(*coord)
            elif node.id in self.fields:
                self._deps |= set(self.fields[node.id].variables())
            elif node.id not in self.constants:
                raise ExpressionError(f"unknown name {node.id!r} in {self.source!r}")
            return
        if isinstance(node, ast.BinOp):
            if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
                raise ExpressionError(f"unsupported operator in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
            return
        if isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError(f"unsupported unary operator in {self.source!r}")
            self._check(node.operand)
            return
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ExpressionError(f"unsupported function call in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
            return
        raise ExpressionError(f"unsupported syntax {ast.dump(node)[:40]} in {self.source!r}")

    def variables(self):
        """Real coordinate indices the expression depends on."""
        return set(self._deps)

    def depends_on_fiber(self):
        return any(v >= 2 * self.n for v in self._deps)

    def is_constant(self):
        return not self._deps

    # evaluation -------------------------------------------------------------
    def jet(self, point, order):
        """Evaluate as a :class:`RealJet` (or a plain number if constant)."""
        out = self._eval(self._tree, point, order)
        if not isinstance(out, RealJet):
            out = RealJet.constant(np.broadcast_to(np.asarray(out), point.batch_shape), order)
        return out

    def value(self, z, v=None):
        """Numeric value at base points ``z`` (and fiber ``v``)."""
        z = np.asarray(z, dtype=complex)
        if v is None:
            v = np.zeros_like(z)
        return self.jet(JetPoint(z, v), 0).value

    def _eval(self, node, point, order):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            coord = self._coordinate(node.id)
            if coord is None:
                if node.id in self.fields:
                    return self.fields[node.id].jet(point, order)
                return self.constants[node.id]
            kind, i = coord
            c = point.coords
            if kind == "x":
                return point.var(c.x(i), order)
            if kind == "y":
                return point.var(c.y(i), order)
            if kind == "p":
                return point.var(c.p(i), order)
            if kind == "q":
                return point.var(c.q(i), order)
            return point.complex_var(kind, i, order)
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, point, order)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.BinOp):
            return self._binop(node, point, order)
        if isinstance(node, ast.Call):
            return self._call(node, point, order)
        raise ExpressionError("unreachable")  # pragma: no cover

    def _binop(self, node, point, order):
        a = self._eval(node.left, point, order)
        b = self._eval(node.right, point, order)
        op = node.op
        try:
            if isinstance(op, ast.Add):
                return a + b
            if isinstance(op, ast.Sub):
                return a - b
            if isinstance(op, ast.Mult):
                return a * b
            if isinstance(op, ast.Div):
                if not isinstance(b, RealJet):
                    if b == 0:
                        raise SingularityError("division by zero")
                    return a * (1.0 / b)
                if not isinstance(a, RealJet):
                    return b.reciprocal() * a
                return a / b
            if isinstance(op, ast.Pow):
                if isinstance(a, RealJet):
                    return a ** b
                if isinstance(b, RealJet):
                    return (b * np.log(a)).exp()
                return a ** b
        except SingularityError as exc:
            raise SingularityError(str(exc), ast.unparse(node)) from None
        except ZeroDivisionError:
            raise SingularityError("division by zero", ast.unparse(node)) from None
        raise ExpressionError("unreachable")  # pragma: no cover

    def _call(self, node, point, order):
        name = node.func.id
        arg_node = node.args[0]
        # |v_i|^2 and |z_i|^2 directly from real variables keeps the jet exactly real
        if name == "abs2" and isinstance(arg_node, ast.Name):
            coord = self._coordinate(arg_node.id)
            if coord is not None and coord[0] in "zv":
                return point.abs2_var(coord[0], coord[1], order)
        arg = self._eval(arg_node, point, order)
        try:
            if not isinstance(arg, RealJet):
                return _scalar_function(name, arg)
            if name == "conj":
                return arg.conj()
            if name == "re":
                return arg.real
            if name == "im":
                return arg.imag
            if name == "abs2":
                return arg.abs2()
            return getattr(arg, name)()
        except SingularityError as exc:
            raise SingularityError(str(exc), ast.unparse(node)) from None


def _scalar_function(name, x):
    if name in ("log", "sqrt") and x == 0:
        raise SingularityError(f"{name} of zero")
    if name == "conj":
        return np.conj(x)
    if name == "re":
        return np.real(x)
    if name == "im":
        return np.imag(x)
    if name == "abs2":
        return abs(x) ** 2
    return getattr(np, name)(x)


def as_expression(value, n, fields=None):
    """Coerce strings, numbers, expressions or grid fields to something with ``.jet``."""
    if hasattr(value, "jet") and hasattr(value, "variables"):
        return value
    return Expression(value, n, fields=fields)
