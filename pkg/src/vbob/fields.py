"""Tensor-valued fields over a coordinate box with exact derivatives.

A :class:`Field` maps points of shape ``batch + (dim,)`` to arrays of shape
``batch + shape``.  Fields built from expressions or from Dual-generic Python
callables differentiate by forward-mode AD (:mod:`vbob.dual`), up to second
order.  Fields composed from other fields stay differentiable because
:meth:`Field.apply` accepts Dual inputs and chains through.

Fields that only know how to produce values (``ad=False``) fall back to
central finite differences and advertise it through ``exact_derivatives``.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from . import dual
from .dual import Dual
from .expr import compile_expression

FD_STEP = 1e-5


def empty(shape) -> np.ndarray:
    return np.empty(shape, dtype=object)


def as_entries(out, shape) -> np.ndarray:
    """Normalise a nested list / object array / scalar to an object array of ``shape``."""
    arr = empty(shape)
    if shape == ():
        arr[()] = out[()] if isinstance(out, np.ndarray) and out.dtype == object else out
        return arr
    for idx in itertools.product(*(range(n) for n in shape)):
        x = out
        for i in idx:
            x = x[i]
        arr[idx] = x
    return arr


def entries(a) -> np.ndarray:
    """A numeric array as an object array of scalar entries (safe to combine with Duals)."""
    a = np.asarray(a, dtype=float)
    return as_entries(a.tolist() if a.shape else float(a), a.shape)


def smul(x, arr) -> np.ndarray:
    """Scalar entry ``x`` times every entry of the object array ``arr``.

    Plain ``x * arr`` would broadcast a batch-valued ``x`` against the entry axes.
    """
    out = empty(arr.shape)
    for idx in np.ndindex(*arr.shape):
        out[idx] = x * arr[idx]
    return out


def _batch_shape(X) -> tuple:
    shapes = [np.shape(dual.value(x)) for x in X]
    return np.broadcast_shapes(*shapes) if shapes else ()


class Field:
    """A field of fixed ``shape`` over ``dim`` coordinates.

    Parameters
    ----------
    dim : int
        Number of input coordinates.
    shape : tuple
        Output tensor shape (``()`` for scalars).
    fn : callable, optional
        ``fn(X)`` with ``X`` a list of ``dim`` coordinate entries (floats, arrays or
        Duals) returning entries arranged as ``shape``.  Must be written with the
        generic operations of :mod:`vbob.dual` to support AD.
    ad : bool
        Whether ``fn`` is Dual-generic.
    label : str
        Free-form description used in reports.
    """

    def __init__(self, dim: int, shape: tuple, fn: Callable | None, ad: bool = True, label: str = ""):
        self.dim = int(dim)
        self.shape = tuple(shape)
        self.fn = fn
        self.ad = ad
        self.label = label

    def __repr__(self) -> str:
        return f"Field(dim={self.dim}, shape={self.shape}, label={self.label!r})"

    @property
    def exact_derivatives(self) -> bool:
        return self.ad

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, label: str = "constant") -> "Field":
        value = np.asarray(value, dtype=float)
        entries = as_entries(value.tolist() if value.shape else float(value), value.shape)
        return cls(dim, value.shape, lambda X: entries, label=label)

    @classmethod
    def zeros(cls, dim: int, shape: tuple) -> "Field":
        return cls.constant(np.zeros(shape), dim, label="zero")

    @classmethod
    def from_expressions(cls, exprs, variables: Sequence[str], label: str = "") -> "Field":
        """Build a field from a (nested) list of expression strings."""
        arr = np.asarray(exprs, dtype=object)
        shape = arr.shape
        compiled = empty(shape)
        for idx in itertools.product(*(range(n) for n in shape)):
            item = arr[idx]
            compiled[idx] = item if callable(item) else compile_expression(str(item), variables)

        def fn(X, compiled=compiled):
            out = empty(shape)
            for idx in itertools.product(*(range(n) for n in shape)):
                out[idx] = compiled[idx](X)
            return out

        return cls(len(variables), shape, fn, label=label or "expression")

    # -- evaluation --------------------------------------------------------
    def apply(self, X: Sequence) -> np.ndarray:
        """Evaluate on coordinate entries, returning an object array of ``shape``."""
        if len(X) != self.dim:
            raise ValueError(f"field expects {self.dim} coordinates, got {len(X)}")
        if self.fn is not None and self.ad:
            return as_entries(self.fn(list(X)), self.shape)
        order = dual.order_of(X)
        if order == 0:
            if self.fn is not None:
                return as_entries(self.fn(list(X)), self.shape)
            batch = _batch_shape(X)
            pts = np.stack([np.broadcast_to(np.asarray(x, float), batch) for x in X], axis=-1)
            vals = self.evaluate(pts)
            out = empty(self.shape)
            for idx in np.ndindex(*self.shape):
                out[idx] = vals[(Ellipsis,) + idx]
            return out
        return self._chain(X, order)

    def _chain(self, X, order):
        batch = _batch_shape(X)
        n = next(x for x in X if isinstance(x, Dual)).grad.shape[-1]
        parts = [dual.split(x, batch, n, order) for x in X]
        pts = np.stack([p[0] for p in parts], axis=-1)
        jets = self.jet(pts, order=order)
        vals, J = jets[0], jets[1]
        H = jets[2] if order >= 2 else None
        Xg = np.stack([p[1] for p in parts], axis=-2)  # batch + (dim, n)
        out = empty(self.shape)
        lead = (slice(None),) * len(batch)
        for idx in np.ndindex(*self.shape):
            sl = lead + idx
            Jk = J[sl]  # batch + (dim,)
            grad = np.einsum("...k,...kn->...n", Jk, Xg)
            hess = None
            if order >= 2:
                Xh = np.stack([p[2] for p in parts], axis=-3)  # batch + (dim, n, n)
                hess = np.einsum("...k,...kab->...ab", Jk, Xh)
                hess = hess + np.einsum("...kl,...ka,...lb->...ab", H[sl], Xg, Xg)
            out[idx] = Dual(vals[sl], grad, hess)
        return out

    def evaluate(self, points) -> np.ndarray:
        """Values at ``points`` (shape ``batch + (dim,)``) as ``batch + shape``."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.dim:
            raise ValueError(f"points must have trailing dimension {self.dim}")
        batch = points.shape[:-1]
        X = [points[..., k] for k in range(self.dim)]
        if self.fn is None:
            raise NotImplementedError("field has no value function")
        entries = as_entries(self.fn(X), self.shape)
        out = np.empty(batch + self.shape)
        for idx in np.ndindex(*self.shape):
            out[(Ellipsis,) + idx] = np.broadcast_to(np.asarray(dual.value(entries[idx]), float), batch)
        return out

    __call__ = evaluate

    def jet(self, points, order: int = 1):
        """Values and derivatives.

        Returns ``(val, grad)`` or ``(val, grad, hess)`` with shapes
        ``batch + shape``, ``batch + shape + (dim,)``, ``batch + shape + (dim, dim)``.
        """
        points = np.asarray(points, dtype=float)
        if not self.ad or self.fn is None:
            return self._fd_jet(points, order)
        batch = points.shape[:-1]
        X = dual.seed(points, order=order)
        entries = as_entries(self.fn(X), self.shape)
        n = self.dim
        val = np.empty(batch + self.shape)
        grad = np.empty(batch + self.shape + (n,))
        hess = np.empty(batch + self.shape + (n, n)) if order >= 2 else None
        for idx in np.ndindex(*self.shape):
            v, g, h = dual.split(entries[idx], batch, n, order)
            sl = (Ellipsis,) + idx
            val[sl] = v
            grad[sl + (slice(None),)] = g
            if order >= 2:
                hess[sl + (slice(None), slice(None))] = h
        return (val, grad) if order < 2 else (val, grad, hess)

    def _fd_jet(self, points, order):
        h = FD_STEP
        val = self.evaluate(points)
        n = self.dim
        grads = []
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            grads.append((self.evaluate(points + e) - self.evaluate(points - e)) / (2 * h))
        grad = np.stack(grads, axis=-1)
        if order < 2:
            return val, grad
        hh = 1e-4
        hess = np.empty(grad.shape + (n,))
        for k in range(n):
            e = np.zeros(n)
            e[k] = hh
            gp = self._fd_jet(points + e, 1)[1]
            gm = self._fd_jet(points - e, 1)[1]
            hess[..., k] = (gp - gm) / (2 * hh)
        return val, grad, hess

    # -- derived fields ----------------------------------------------------
    def partial(self, k: int) -> "Field":
        """The partial derivative along coordinate ``k`` as a new field."""
        return DerivativeField(self, k)

    def scaled(self, factor: float) -> "Field":
        base = self
        return Field(self.dim, self.shape, lambda X: base.apply(X) * factor, ad=True,
                     label=f"{factor}*{self.label}")


class DerivativeField(Field):
    """``d parent / d x_k``; values come from the parent's jets one order up."""

    def __init__(self, parent: Field, k: int):
        super().__init__(parent.dim, parent.shape, None, ad=False, label=f"d{k}({parent.label})")
        self.parent = parent
        self.k = k

    @property
    def exact_derivatives(self) -> bool:
        return self.parent.exact_derivatives

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        return self.parent.jet(points, order=1)[1][..., self.k]

    def jet(self, points, order: int = 1):
        points = np.asarray(points, dtype=float)
        if order >= 2:
            # third derivatives of the parent are not tracked
            return self._fd_jet(points, order)
        _, g, h = self.parent.jet(points, order=2)
        return g[..., self.k], h[..., self.k, :]


def callable_field(fn: Callable, dim: int, shape: tuple, label: str = "", ad: bool = True) -> Field:
    return Field(dim, shape, fn, ad=ad, label=label)


def matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix (or matrix-vector) product of object arrays of entries.

    Entries are combined at the Python level.  ``np.dot`` on object arrays hands
    borrowed entries to the array operators, and numpy's temporary elision then
    overwrites entries of batch size >= 2**15 in place.
    """
    A = np.asarray(A, dtype=object)
    B = np.asarray(B, dtype=object)
    vec = B.ndim == 1
    Bm = B.reshape(-1, 1) if vec else B
    n, k = A.shape
    if Bm.shape[0] != k:
        raise ValueError(f"cannot multiply {A.shape} by {B.shape}")
    out = empty((n, Bm.shape[1]))
    for i in range(n):
        for j in range(Bm.shape[1]):
            acc = 0.0
            for l in range(k):
                a, b = A[i, l], Bm[l, j]
                acc = a * b if l == 0 else acc + a * b
            out[i, j] = acc
    return out[:, 0] if vec else out


def entries_to_array(entries: np.ndarray, batch: tuple) -> np.ndarray:
    """Stack value parts of an object array into a float array ``batch + shape``."""
    out = np.empty(batch + entries.shape)
    for idx in np.ndindex(*entries.shape):
        out[(Ellipsis,) + idx] = np.broadcast_to(np.asarray(dual.value(entries[idx]), float), batch)
    return out
