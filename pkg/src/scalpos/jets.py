"""Batched second-order forward-mode jets.

A :class:`Jet` carries, for a batch of ``B`` evaluation points, the value of a
scalar function together with its gradient and Hessian with respect to ``n``
seed variables.  Arithmetic and the common numpy ufuncs propagate all three by
the chain rule, so a chart written with plain numpy calls can be evaluated on
jets without modification.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet", "seed", "apply_scalar", "value_of", "is_jet", "where"]


def _outer(g, h):
    return g[..., :, None] * h[..., None, :]


class Jet:
    """Value, gradient and Hessian of a scalar quantity over a batch.

    Shapes: ``val`` (B,), ``grad`` (B, n), ``hess`` (B, n, n).
    """

    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 1000

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]

    def __repr__(self) -> str:
        return f"Jet(batch={self.val.shape[0]}, nvars={self.nvars})"

    # --- arithmetic -----------------------------------------------------
    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        c = np.broadcast_to(np.asarray(other, dtype=float), self.val.shape)
        return Jet(c, np.zeros_like(self.grad), np.zeros_like(self.hess))

    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.val + other, self.grad, self.hess)
        return Jet(self.val + other.val, self.grad + other.grad, self.hess + other.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __sub__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.val - other, self.grad, self.hess)
        return Jet(self.val - other.val, self.grad - other.grad, self.hess - other.hess)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            return Jet(self.val * c, self.grad * c[..., None], self.hess * c[..., None, None])
        a, b = self, other
        hess = (
            a.hess * b.val[:, None, None]
            + b.hess * a.val[:, None, None]
            + _outer(a.grad, b.grad)
            + _outer(b.grad, a.grad)
        )
        return Jet(a.val * b.val, a.grad * b.val[:, None] + b.grad * a.val[:, None], hess)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.val
        return apply_scalar(self, 1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return np.exp(p * np.log(self))
        p = float(p)
        if p == 2.0:
            return self * self
        v = self.val
        return apply_scalar(self, v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    # --- numpy ufunc dispatch -------------------------------------------
    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        binary = {
            np.add: lambda a, b: a + b,
            np.subtract: lambda a, b: a - b,
            np.multiply: lambda a, b: a * b,
            np.true_divide: lambda a, b: a / b,
            np.power: lambda a, b: a**b,
        }
        if ufunc in binary:
            a, b = inputs
            if not isinstance(a, Jet):
                a = b._lift(a)
            return binary[ufunc](a, b)
        if ufunc is np.arctan2:
            y, x = inputs
            y = y if isinstance(y, Jet) else x._lift(y)
            x = x if isinstance(x, Jet) else y._lift(x)
            r2 = x * x + y * y
            num = x.val[:, None] * y.grad - y.val[:, None] * x.grad
            # d(num) up to an antisymmetric part, which the final symmetrization removes
            dnum = x.val[:, None, None] * y.hess - y.val[:, None, None] * x.hess
            hess = dnum / r2.val[:, None, None] - _outer(r2.grad, num) / (r2.val**2)[:, None, None]
            return Jet(np.arctan2(y.val, x.val), num / r2.val[:, None], 0.5 * (hess + np.swapaxes(hess, -1, -2)))
        (x,) = inputs
        v = x.val
        if ufunc is np.negative:
            return -x
        if ufunc is np.square:
            return x * x
        if ufunc is np.sin:
            s, c = np.sin(v), np.cos(v)
            return apply_scalar(x, s, c, -s)
        if ufunc is np.cos:
            s, c = np.sin(v), np.cos(v)
            return apply_scalar(x, c, -s, -c)
        if ufunc is np.tan:
            t = np.tan(v)
            d = 1.0 + t * t
            return apply_scalar(x, t, d, 2.0 * t * d)
        if ufunc is np.exp:
            e = np.exp(v)
            return apply_scalar(x, e, e, e)
        if ufunc is np.log:
            return apply_scalar(x, np.log(v), 1.0 / v, -1.0 / v**2)
        if ufunc is np.sqrt:
            r = np.sqrt(v)
            return apply_scalar(x, r, 0.5 / r, -0.25 / (r * v))
        if ufunc is np.arctan:
            d = 1.0 / (1.0 + v * v)
            return apply_scalar(x, np.arctan(v), d, -2.0 * v * d * d)
        if ufunc is np.sinh:
            s, c = np.sinh(v), np.cosh(v)
            return apply_scalar(x, s, c, s)
        if ufunc is np.cosh:
            s, c = np.sinh(v), np.cosh(v)
            return apply_scalar(x, c, s, c)
        if ufunc is np.tanh:
            t = np.tanh(v)
            d = 1.0 - t * t
            return apply_scalar(x, t, d, -2.0 * t * d)
        return NotImplemented


def apply_scalar(x, f0, f1, f2):
    """Compose a scalar function with known derivatives ``f0, f1, f2`` at ``x``.

    Works on plain arrays too, in which case only ``f0`` is returned.
    """
    if not isinstance(x, Jet):
        return f0
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    grad = f1[:, None] * x.grad
    hess = f2[:, None, None] * _outer(x.grad, x.grad) + f1[:, None, None] * x.hess
    return Jet(np.asarray(f0, dtype=float), grad, hess)


def seed(points: np.ndarray) -> list[Jet]:
    """Independent coordinate jets for a (B, n) batch of points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    b, n = points.shape
    eye = np.eye(n)
    zero = np.zeros((b, n, n))
    return [Jet(points[:, i].copy(), np.broadcast_to(eye[i], (b, n)).copy(), zero.copy()) for i in range(n)]


def is_jet(x) -> bool:
    return isinstance(x, Jet)


def value_of(x):
    return x.val if isinstance(x, Jet) else x


def where(cond, a, b):
    """Elementwise select between two jets (or arrays) on a batch mask."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.where(cond, a, b)
    ref = a if isinstance(a, Jet) else b
    a = ref._lift(a) if not isinstance(a, Jet) else a
    b = ref._lift(b) if not isinstance(b, Jet) else b
    c = np.asarray(cond, dtype=bool)
    return Jet(
        np.where(c, a.val, b.val),
        np.where(c[:, None], a.grad, b.grad),
        np.where(c[:, None, None], a.hess, b.hess),
    )
