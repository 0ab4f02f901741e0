"""Closed-form expression grammar used by tensor fields, scenarios and maps.

Expressions are plain text such as ``"2*(r-1)^2*sin(th)"``.  The grammar:

* numbers, ``+ - * /``, ``^`` or ``**`` for powers, parentheses;
* variables ``r``, ``th`` (polar angle from the z axis in 3D, the polar
  angle in 2D), ``ph`` (azimuth, 3D only), ``x``, ``y``, ``z``;
* functions ``sin cos tan sqrt exp log abs``, the constant ``pi``;
* any extra names declared as parameters (``rho``, ``epsilon``, ...) which
  must be bound when the expression is compiled.

Parsing goes through sympy with a whitelist of names, so expressions can be
differentiated exactly and compiled to numpy callables.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

COORD_NAMES = ("r", "th", "ph", "x", "y", "z")
_FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sqrt": sp.sqrt,
    "exp": sp.exp,
    "log": sp.log,
    "abs": sp.Abs,
    "pi": sp.pi,
}
_TRANSFORMS = standard_transformations + (convert_xor,)
# no builtins: parse_expr evaluates generated code
_GLOBALS = {"__builtins__": {}, "Integer": sp.Integer, "Float": sp.Float,
            "Rational": sp.Rational, "Symbol": sp.Symbol}


class ExpressionError(ValueError):
    pass


class Expression:
    """A parsed closed-form expression with bound parameters.

    Parameters
    ----------
    source : str or number
        Expression text.
    params : dict, optional
        Values for non-coordinate names appearing in ``source``.
    """

    def __init__(self, source, params=None):
        self.source = str(source)
        self.params = dict(params or {})
        local = dict(_FUNCTIONS)
        for name in COORD_NAMES + tuple(self.params):
            local[name] = sp.Symbol(name, real=True)
        try:
            parsed = parse_expr(self.source, local_dict=local,
                                global_dict=dict(_GLOBALS),
                                transformations=_TRANSFORMS, evaluate=True)
        except Exception as exc:  # sympy raises a zoo of types here
            raise ExpressionError(f"cannot parse {self.source!r}: {exc}") from exc
        parsed = sp.sympify(parsed)
        unknown = {s.name for s in parsed.free_symbols} - set(COORD_NAMES) - set(self.params)
        if unknown:
            raise ExpressionError(
                f"unknown names {sorted(unknown)} in {self.source!r}")
        subs = {sp.Symbol(k, real=True): v for k, v in self.params.items()}
        self.sym = parsed.subs(subs)

    @classmethod
    def from_sympy(cls, sym):
        obj = cls.__new__(cls)
        obj.sym = sym
        obj.params = {}
        obj.source = str(sym).replace("**", "^")
        return obj

    @property
    def variables(self):
        return sorted(s.name for s in self.sym.free_symbols)

    @cached_property
    def _fn(self):
        args = [sp.Symbol(n, real=True) for n in COORD_NAMES]
        return sp.lambdify(args, self.sym, modules="numpy")

    def __call__(self, r=0.0, th=0.0, ph=0.0, x=0.0, y=0.0, z=0.0):
        out = self._fn(r, th, ph, x, y, z)
        shape = np.broadcast(r, th, ph, x, y, z).shape
        return np.broadcast_to(np.asarray(out, dtype=float), shape) if shape else float(out)

    @cached_property
    def radial(self):
        """Fast one-argument callable ``f(r)``; only valid if ``r`` is the sole variable."""
        extra = set(self.variables) - {"r"}
        if extra:
            raise ExpressionError(f"{self.source!r} depends on {sorted(extra)}, not only r")
        f = sp.lambdify([sp.Symbol("r", real=True)], self.sym, modules="numpy")
        if self.is_constant():
            c = float(self.sym)
            return lambda r: c + 0.0 * np.asarray(r, dtype=float) if np.ndim(r) else c
        return f

    def at_point(self, point):
        """Evaluate at a Cartesian point (2D or 3D), deriving r, th, ph."""
        return self(**coordinate_values(point))

    def diff(self, var):
        return Expression.from_sympy(sp.diff(self.sym, sp.Symbol(var, real=True)))

    def is_constant(self):
        return not self.sym.free_symbols

    def __repr__(self):
        return f"Expression({self.source!r})"


def coordinate_values(point):
    """Map a Cartesian point to the named variables of the grammar."""
    p = np.asarray(point, dtype=float)
    if p.shape[-1] == 2:
        x, y = p[..., 0], p[..., 1]
        return dict(r=np.hypot(x, y), th=np.arctan2(y, x), ph=0.0, x=x, y=y, z=0.0)
    if p.shape[-1] == 3:
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        r = np.sqrt(x * x + y * y + z * z)
        th = np.arctan2(np.hypot(x, y), z)
        return dict(r=r, th=th, ph=np.arctan2(y, x), x=x, y=y, z=z)
    raise ValueError(f"points must be 2D or 3D, got shape {p.shape}")
