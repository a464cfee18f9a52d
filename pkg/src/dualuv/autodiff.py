"""Vectorized forward-mode differentiation with dual numbers.

A :class:`Dual` carries a value array ``val`` of shape ``S`` and a tangent
array ``eps`` of shape ``S + (P,)``: one directional derivative per free
parameter. Seeding an ``(P,)`` parameter vector with the identity tangent
makes every downstream quantity carry its full gradient, which is cheap for
the few hundred parameters of a body fit.

The module-level functions (``sqrt``, ``einsum``, ``stack`` ...) accept both
plain arrays and duals so the same model code serves value-only and
gradient evaluations.
"""

import numpy as np


class Dual:
    __slots__ = ("val", "eps")
    __array_ufunc__ = None  # make numpy defer to the reflected dual operators

    def __init__(self, val, eps):
        self.val = np.asarray(val, dtype=np.float64)
        self.eps = np.asarray(eps, dtype=np.float64)

    # -- construction -------------------------------------------------
    @classmethod
    def seed(cls, x):
        """Independent variables: tangent is the identity."""
        x = np.asarray(x, dtype=np.float64).ravel()
        return cls(x.copy(), np.eye(x.size))

    @classmethod
    def constant(cls, x, nparams):
        x = np.asarray(x, dtype=np.float64)
        return cls(x, np.zeros(x.shape + (nparams,)))

    # -- shape ---------------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    @property
    def nparams(self):
        return self.eps.shape[-1]

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(shape={self.shape}, nparams={self.nparams})"

    def _lift(self, other):
        if isinstance(other, Dual):
            return other
        return Dual.constant(other, self.nparams)

    def _wrap(self, val, eps):
        eps = np.broadcast_to(eps, np.shape(val) + (self.nparams,))
        return Dual(val, eps)

    # -- arithmetic ----------------------------------------------------
    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __add__(self, other):
        if isinstance(other, Dual):
            return self._wrap(self.val + other.val, self.eps + other.eps)
        val = self.val + np.asarray(other)
        return self._wrap(val, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return self._wrap(self.val - other.val, self.eps - other.eps)
        return self._wrap(self.val - np.asarray(other), self.eps)

    def __rsub__(self, other):
        return self._wrap(np.asarray(other) - self.val, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return self._wrap(
                self.val * other.val,
                self.eps * other.val[..., None] + self.val[..., None] * other.eps,
            )
        c = np.asarray(other, dtype=np.float64)
        return self._wrap(self.val * c, self.eps * c[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            val = self.val / other.val
            eps = (self.eps - val[..., None] * other.eps) / other.val[..., None]
            return self._wrap(val, eps)
        c = np.asarray(other, dtype=np.float64)
        return self._wrap(self.val / c, self.eps / c[..., None])

    def __rtruediv__(self, other):
        c = np.asarray(other, dtype=np.float64)
        val = c / self.val
        return self._wrap(val, -(val / self.val)[..., None] * self.eps)

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        p = float(p)
        if p == 2.0:
            return self * self
        return self._wrap(self.val**p, (p * self.val ** (p - 1.0))[..., None] * self.eps)

    # -- indexing and reductions ---------------------------------------
    def _eps_index(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            used = sum(
                np.ndim(i) if isinstance(i, np.ndarray) and i.dtype == bool else 1
                for i in idx
                if i is not Ellipsis and i is not None
            )
            k = idx.index(Ellipsis)
            idx = idx[:k] + (slice(None),) * (self.ndim - used) + idx[k + 1 :]
        return idx

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.eps[self._eps_index(idx)])

    def _axis(self, axis):
        if axis is None:
            return None
        if isinstance(axis, tuple):
            return tuple(a % self.ndim for a in axis)
        return axis % self.ndim

    def sum(self, axis=None):
        if axis is None:
            return Dual(self.val.sum(), self.eps.reshape(-1, self.nparams).sum(axis=0))
        ax = self._axis(axis)
        return Dual(self.val.sum(axis=ax), self.eps.sum(axis=ax))

    def mean(self, axis=None):
        n = self.val.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(self._axis(axis))])
        return self.sum(axis) / float(n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        val = self.val.reshape(shape)
        return Dual(val, self.eps.reshape(val.shape + (self.nparams,)))

    def swapaxes(self, a, b):
        a, b = self._axis(a), self._axis(b)
        return Dual(np.swapaxes(self.val, a, b), np.swapaxes(self.eps, a, b))

    @property
    def T(self):
        return self.swapaxes(0, 1)

    @property
    def grad(self):
        """Tangent of a scalar dual as a flat gradient vector."""
        if self.val.size != 1:
            raise ValueError("grad is defined for scalar duals only")
        return self.eps.reshape(self.nparams).copy()


def is_dual(x):
    return isinstance(x, Dual)


def value(x):
    return x.val if isinstance(x, Dual) else np.asarray(x)


def _unary(x, f, df):
    if isinstance(x, Dual):
        v = f(x.val)
        return Dual(v, df(x.val, v)[..., None] * x.eps)
    return f(np.asarray(x, dtype=np.float64))


def sqrt(x):
    return _unary(x, np.sqrt, lambda a, v: 0.5 / v)


def sin(x):
    return _unary(x, np.sin, lambda a, v: np.cos(a))


def cos(x):
    return _unary(x, np.cos, lambda a, v: -np.sin(a))


def exp(x):
    return _unary(x, np.exp, lambda a, v: v)


def log(x):
    return _unary(x, np.log, lambda a, v: 1.0 / a)


def abs(x):  # noqa: A001 - mirrors numpy naming
    return _unary(x, np.abs, lambda a, v: np.sign(a))


def _nparams(items):
    for it in items:
        if isinstance(it, Dual):
            return it.nparams
    return None


def _lift_all(items, n):
    return [it if isinstance(it, Dual) else Dual.constant(it, n) for it in items]


def stack(items, axis=0):
    n = _nparams(items)
    if n is None:
        return np.stack(items, axis=axis)
    items = _lift_all(items, n)
    nd = items[0].ndim + 1
    ax = axis % nd
    return Dual(np.stack([i.val for i in items], axis=ax), np.stack([i.eps for i in items], axis=ax))


def concatenate(items, axis=0):
    n = _nparams(items)
    if n is None:
        return np.concatenate(items, axis=axis)
    items = _lift_all(items, n)
    ax = axis % items[0].ndim
    return Dual(
        np.concatenate([i.val for i in items], axis=ax),
        np.concatenate([i.eps for i in items], axis=ax),
    )


def where(cond, a, b):
    cond = np.asarray(value(cond), dtype=bool)
    n = _nparams([a, b])
    if n is None:
        return np.where(cond, a, b)
    a, b = _lift_all([a, b], n)
    val = np.where(cond, a.val, b.val)
    shape = val.shape + (n,)
    eps = np.where(cond[..., None], np.broadcast_to(a.eps, shape), np.broadcast_to(b.eps, shape))
    return Dual(val, eps)


def einsum(spec, a, b):
    """Two-operand einsum with product-rule tangents."""
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.einsum(spec, a, b)
    ins, out = spec.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    t = next(c for c in "ZYXWVUTS" if c not in spec)
    if isinstance(a, Dual) and isinstance(b, Dual):
        val = np.einsum(spec, a.val, b.val)
        eps = np.einsum(f"{sa}{t},{sb}->{out}{t}", a.eps, b.val) + np.einsum(
            f"{sa},{sb}{t}->{out}{t}", a.val, b.eps
        )
    elif isinstance(a, Dual):
        val = np.einsum(spec, a.val, b)
        eps = np.einsum(f"{sa}{t},{sb}->{out}{t}", a.eps, b)
    else:
        val = np.einsum(spec, a, b.val)
        eps = np.einsum(f"{sa},{sb}{t}->{out}{t}", a, b.eps)
    return Dual(val, eps)


def dot_last(a, b):
    """Inner product over the last axis."""
    return (a * b).sum(axis=-1)


def norm_last(a):
    return sqrt(dot_last(a, a))
