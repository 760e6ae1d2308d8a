"""Vectorized second-order forward-mode jets.

A :class:`Jet` carries, for M points at once, the value of a scalar function
together with its Euclidean gradient (M, n) and Hessian (M, n, n).  The order
is 0, 1 or 2; derivatives above the order are simply not tracked.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet", "coordinates", "constant", "exp", "log", "sqrt", "power", "compose"]


class Jet:
    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad=None, hess=None):
        self.val = val
        self.grad = grad
        self.hess = hess if grad is not None else None

    @property
    def order(self) -> int:
        if self.grad is None:
            return 0
        return 1 if self.hess is None else 2

    def __repr__(self):
        return f"Jet(order={self.order}, points={np.shape(self.val)[0]})"

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        if order == 0:
            return Jet(self.val)
        return Jet(self.val, self.grad)

    # -- arithmetic -----------------------------------------------------------

    def __neg__(self):
        return Jet(
            -self.val,
            None if self.grad is None else -self.grad,
            None if self.hess is None else -self.hess,
        )

    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.val + other, self.grad, self.hess)
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        return Jet(
            a.val + b.val,
            None if order < 1 else a.grad + b.grad,
            None if order < 2 else a.hess + b.hess,
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other)
            if c.ndim == 0:
                return Jet(
                    self.val * c,
                    None if self.grad is None else self.grad * c,
                    None if self.hess is None else self.hess * c,
                )
            return Jet(
                self.val * c,
                None if self.grad is None else self.grad * c[:, None],
                None if self.hess is None else self.hess * c[:, None, None],
            )
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        val = a.val * b.val
        if order == 0:
            return Jet(val)
        grad = a.grad * b.val[:, None] + b.grad * a.val[:, None]
        if order == 1:
            return Jet(val, grad)
        cross = a.grad[:, :, None] * b.grad[:, None, :]
        hess = (
            a.hess * b.val[:, None, None]
            + b.hess * a.val[:, None, None]
            + cross
            + np.swapaxes(cross, 1, 2)
        )
        return Jet(val, grad, hess)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * power(other, -1.0)

    def __rtruediv__(self, other):
        return power(self, -1.0) * other

    def __pow__(self, a):
        return power(self, a)


def coordinates(points: np.ndarray, order: int = 2) -> list[Jet]:
    """Jets of the coordinate functions x_1..x_n at ``points`` (M, n)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    M, n = points.shape
    out = []
    for i in range(n):
        grad = hess = None
        if order >= 1:
            grad = np.zeros((M, n))
            grad[:, i] = 1.0
        if order >= 2:
            hess = np.zeros((M, n, n))
        out.append(Jet(points[:, i].copy(), grad, hess))
    return out


def constant(value, M: int, n: int, order: int = 2) -> Jet:
    val = np.broadcast_to(np.asarray(value, dtype=float), (M,)).copy()
    grad = np.zeros((M, n)) if order >= 1 else None
    hess = np.zeros((M, n, n)) if order >= 2 else None
    return Jet(val, grad, hess)


def compose(u: Jet, d0, d1=None, d2=None) -> Jet:
    """Chain rule: jet of phi(u) given phi(u), phi'(u), phi''(u)."""
    if u.order == 0:
        return Jet(d0)
    grad = u.grad * d1[:, None]
    if u.order == 1:
        return Jet(d0, grad)
    hess = d2[:, None, None] * (u.grad[:, :, None] * u.grad[:, None, :]) + d1[:, None, None] * u.hess
    return Jet(d0, grad, hess)


def exp(u: Jet) -> Jet:
    e = np.exp(u.val)
    return compose(u, e, e, e)


def log(u: Jet) -> Jet:
    inv = 1.0 / u.val
    return compose(u, np.log(u.val), inv, -inv * inv)


def power(u: Jet, a: float) -> Jet:
    a = float(a)
    if a == 0.0:
        z = np.zeros_like(u.val)
        return compose(u, np.ones_like(u.val), z, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        v0 = u.val**a
        v1 = a * u.val ** (a - 1.0) if u.order >= 1 else None
        v2 = a * (a - 1.0) * u.val ** (a - 2.0) if u.order >= 2 else None
    return compose(u, v0, v1, v2)


def sqrt(u: Jet) -> Jet:
    return power(u, 0.5)
