"""Forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a value array of batch shape ``S``, a gradient of shape
``S + (n,)`` and optionally a Hessian of shape ``S + (n, n)``.  Seeding the
Hessian gives truncated second-order Taylor arithmetic (hyper-dual numbers),
which the sphere machinery needs for derivatives of tangent lifts.

Every arithmetic operator accepts plain floats and ndarrays on either side, so
one generic function serves value evaluation, first and second derivatives.
"""

from __future__ import annotations

import numpy as np


def _is_entries(x) -> bool:
    return isinstance(x, np.ndarray) and x.dtype == object


def _entrywise(arr, f):
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(*arr.shape):
        out[idx] = f(arr[idx])
    return out


class Dual:
    __slots__ = ("val", "grad", "hess")
    # keeps ndarray.__mul__ from broadcasting over a Dual element by element
    __array_ufunc__ = None

    def __init__(self, val, grad, hess=None):
        self.val = val
        self.grad = grad
        self.hess = hess

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    def __repr__(self) -> str:
        return f"Dual(val={self.val!r}, grad={self.grad!r})"

    # -- chain rule helpers -------------------------------------------------
    def _unary(self, f0, f1, f2):
        g = np.asarray(f1)[..., None] * self.grad
        h = None
        if self.hess is not None:
            f1e = np.asarray(f1)[..., None, None]
            f2e = np.asarray(f2)[..., None, None]
            h = f1e * self.hess + f2e * (self.grad[..., :, None] * self.grad[..., None, :])
        return Dual(f0, g, h)

    def _scale(self, k):
        k = np.asarray(k)
        h = None if self.hess is None else k[..., None, None] * self.hess
        return Dual(self.val * k, k[..., None] * self.grad, h)

    # -- arithmetic ---------------------------------------------------------
    def __neg__(self):
        h = None if self.hess is None else -self.hess
        return Dual(-self.val, -self.grad, h)

    def __pos__(self):
        return self

    def __add__(self, other):
        if _is_entries(other):
            return _entrywise(other, lambda x: self + x)
        if isinstance(other, Dual):
            h = None
            if self.hess is not None and other.hess is not None:
                h = self.hess + other.hess
            return Dual(self.val + other.val, self.grad + other.grad, h)
        val = self.val + other
        shape = np.shape(val)
        grad = np.broadcast_to(self.grad, shape + self.grad.shape[-1:])
        hess = None
        if self.hess is not None:
            hess = np.broadcast_to(self.hess, shape + self.hess.shape[-2:])
        return Dual(val, grad, hess)

    __radd__ = __add__

    def __sub__(self, other):
        if _is_entries(other):
            return _entrywise(other, lambda x: self - x)
        return self + (-other)

    def __rsub__(self, other):
        if _is_entries(other):
            return _entrywise(other, lambda x: x - self)
        return (-self) + other

    def __mul__(self, other):
        if _is_entries(other):
            return _entrywise(other, lambda x: self * x)
        if isinstance(other, Dual):
            a, b = self, other
            val = a.val * b.val
            grad = a.grad * np.asarray(b.val)[..., None] + b.grad * np.asarray(a.val)[..., None]
            hess = None
            if a.hess is not None and b.hess is not None:
                outer = a.grad[..., :, None] * b.grad[..., None, :]
                hess = (
                    a.hess * np.asarray(b.val)[..., None, None]
                    + b.hess * np.asarray(a.val)[..., None, None]
                    + outer
                    + np.swapaxes(outer, -1, -2)
                )
            return Dual(val, grad, hess)
        return self._scale(other)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.val
        return self._unary(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if _is_entries(other):
            return _entrywise(other, lambda x: self / x)
        if isinstance(other, Dual):
            return self * other.reciprocal()
        return self._scale(1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        if _is_entries(other):
            return _entrywise(other, lambda x: x / self)
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        p = float(p)
        if p == 0.0:
            return Dual(np.ones_like(self.val, dtype=float), np.zeros_like(self.grad),
                        None if self.hess is None else np.zeros_like(self.hess))
        if p == 1.0:
            return self
        v = self.val
        if p == 2.0:
            return self * self
        f1 = p * v ** (p - 1.0)
        f2 = p * (p - 1.0) * v ** (p - 2.0) if self.hess is not None else 0.0
        return self._unary(v**p, f1, f2)

    def __rpow__(self, base):
        return exp(self * np.log(base))


def value(x):
    """Value part of a Dual, or ``x`` itself."""
    return x.val if isinstance(x, Dual) else x


def _dispatch(x, f, f1, f2):
    if isinstance(x, Dual):
        v = x.val
        return x._unary(f(v), f1(v), f2(v) if x.hess is not None else 0.0)
    return f(x)


def sin(x):
    return _dispatch(x, np.sin, np.cos, lambda v: -np.sin(v))


def cos(x):
    return _dispatch(x, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v))


def exp(x):
    return _dispatch(x, np.exp, np.exp, np.exp)


def log(x):
    return _dispatch(x, np.log, lambda v: 1.0 / v, lambda v: -1.0 / v**2)


def sqrt(x):
    return _dispatch(x, np.sqrt, lambda v: 0.5 / np.sqrt(v), lambda v: -0.25 / v**1.5)


def where(mask, a, b):
    """Elementwise select that keeps derivative parts consistent."""
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.where(mask, a, b)
    ref = a if isinstance(a, Dual) else b
    n = ref.grad.shape[-1]

    def parts(x):
        if isinstance(x, Dual):
            return x.val, x.grad, x.hess
        return x, 0.0, 0.0

    av, ag, ah = parts(a)
    bv, bg, bh = parts(b)
    m = np.asarray(mask)
    val = np.where(m, av, bv)
    grad = np.where(m[..., None], np.broadcast_to(ag, np.shape(val) + (n,)),
                    np.broadcast_to(bg, np.shape(val) + (n,)))
    hess = None
    if ref.hess is not None:
        hshape = np.shape(val) + (n, n)
        hess = np.where(m[..., None, None], np.broadcast_to(ah, hshape), np.broadcast_to(bh, hshape))
    return Dual(val, grad, hess)


def seed(points, order: int = 1):
    """Independent variables for every coordinate of ``points`` (shape ``S + (n,)``)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[-1]
    batch = points.shape[:-1]
    out = []
    for k in range(n):
        g = np.zeros(batch + (n,))
        g[..., k] = 1.0
        h = np.zeros(batch + (n, n)) if order >= 2 else None
        out.append(Dual(points[..., k].copy(), g, h))
    return out


def order_of(entries) -> int:
    o = 0
    for x in entries:
        if isinstance(x, Dual):
            o = max(o, x.order)
    return o


def split(x, batch, n, order):
    """Return ``(val, grad, hess)`` arrays for an entry, broadcasting constants."""
    if isinstance(x, Dual):
        val = np.broadcast_to(x.val, batch)
        grad = np.broadcast_to(x.grad, batch + (n,))
        hess = None
        if order >= 2:
            hess = np.broadcast_to(x.hess, batch + (n, n)) if x.hess is not None else np.zeros(batch + (n, n))
        return val, grad, hess
    val = np.broadcast_to(np.asarray(x, dtype=float), batch)
    return val, np.zeros(batch + (n,)), (np.zeros(batch + (n, n)) if order >= 2 else None)
