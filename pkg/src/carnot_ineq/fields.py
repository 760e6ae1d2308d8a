"""Scalar fields with exact second-order jets."""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import jets
from .jets import Jet

__all__ = [
    "SupportDescriptor",
    "ScalarField",
    "HorizontalVectorField",
    "zero_field",
    "from_jet_function",
    "EvaluationError",
    "SMOOTH_EVERYWHERE",
    "SMOOTH_AWAY_FROM_X0",
]

SMOOTH_EVERYWHERE = "SmoothEverywhere"
SMOOTH_AWAY_FROM_X0 = "SmoothAwayFromX0"


class EvaluationError(ValueError):
    """A field or operator could not be evaluated at a point."""


@dataclass(frozen=True)
class SupportDescriptor:
    """Where a field may be nonzero.

    ``inner_radius``: the field vanishes for |x'| <= inner_radius.
    ``box``: per-coordinate bounds outside of which the field vanishes
    (None = unbounded support).
    ``outer_radius``: the field vanishes for |x'| >= outer_radius, if known.
    """

    inner_radius: float = 0.0
    box: tuple[tuple[float, float], ...] | None = None
    outer_radius: float | None = None

    @property
    def bounded(self) -> bool:
        return self.box is not None

    def first_stratum_outer(self, N: int) -> float:
        """An upper bound for |x'| on the support."""
        bound = np.inf
        if self.box is not None:
            corner = [max(abs(lo), abs(hi)) for lo, hi in self.box[:N]]
            bound = float(np.linalg.norm(corner))
        if self.outer_radius is not None:
            bound = min(bound, self.outer_radius)
        return bound

    def contains_box(self, box) -> bool:
        """True when the support box lies inside ``box``."""
        if self.box is None:
            return False
        return all(l0 <= l1 and h1 <= h0 for (l0, h0), (l1, h1) in zip(box, self.box))


def _digest(points: np.ndarray) -> bytes:
    return hashlib.blake2b(np.ascontiguousarray(points).view(np.uint8), digest_size=16).digest()


class ScalarField:
    """A smooth real-valued function on R^n evaluated through jets.

    ``fn(points, order)`` must return a :class:`Jet` of the requested order
    at the (M, n) array ``points``.  Evaluation is pure; a small thread-safe
    memo avoids recomputing jets when several integrals are taken over the
    same nodes.
    """

    cache_size = 8
    # the calculus memo holds one entry per quadrature chunk and order
    memo_size = 64

    def __init__(
        self,
        fn: Callable[[np.ndarray, int], Jet],
        n: int,
        support: SupportDescriptor | None = None,
        smoothness: str = SMOOTH_EVERYWHERE,
        label: str = "field",
    ):
        self._fn = fn
        self.n = n
        self.support = support or SupportDescriptor()
        self.smoothness = smoothness
        self.label = label
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        # arbitrary per-field memo used by the calculus layer
        self.memo: OrderedDict = OrderedDict()
        self.memo_lock = threading.Lock()

    def __repr__(self):
        return f"ScalarField({self.label!r}, n={self.n})"

    def _points(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n:
            raise EvaluationError(f"{self.label}: expected points in R^{self.n}, got {x.shape[1]} coordinates")
        return x

    def jet(self, x, order: int = 2) -> Jet:
        pts = self._points(x)
        key = (_digest(pts), pts.shape, order)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        out = self._fn(pts, order)
        if out.order < order:
            raise EvaluationError(f"{self.label}: jet of order {order} unavailable")
        out = out.truncate(order)
        with self._lock:
            self._cache[key] = out
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        v = self.jet(x, 0).val
        return v[0] if x.ndim == 1 else v

    def jet2(self, x):
        """(value, gradient, Hessian) at a single point or an array of points."""
        x = np.asarray(x, dtype=float)
        J = self.jet(x, 2)
        if x.ndim == 1:
            return J.val[0], J.grad[0], J.hess[0]
        return J.val, J.grad, J.hess

    # -- algebra --------------------------------------------------------------

    def _combine(self, other, op, label):
        if isinstance(other, ScalarField):
            def fn(x, order):
                return op(self.jet(x, order), other.jet(x, order))
            support = _merge_support(self.support, other.support, op_is_product=(op is _mul))
            smooth = SMOOTH_EVERYWHERE if SMOOTH_AWAY_FROM_X0 not in (self.smoothness, other.smoothness) else SMOOTH_AWAY_FROM_X0
            return ScalarField(fn, self.n, support, smooth, label)
        c = float(other)

        def fn(x, order):
            return op(self.jet(x, order), c)
        support = self.support if op is _mul else SupportDescriptor()
        return ScalarField(fn, self.n, support, self.smoothness, label)

    def __add__(self, other):
        return self._combine(other, _add, f"({self.label}+{_lbl(other)})")

    __radd__ = __add__

    def __mul__(self, other):
        return self._combine(other, _mul, f"({self.label}*{_lbl(other)})")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)


def _lbl(o):
    return o.label if isinstance(o, ScalarField) else repr(o)


def _add(a, b):
    return a + b


def _mul(a, b):
    return a * b


def _merge_support(s1: SupportDescriptor, s2: SupportDescriptor, op_is_product: bool) -> SupportDescriptor:
    if op_is_product:
        inner = max(s1.inner_radius, s2.inner_radius)
        if s1.box is None or s2.box is None:
            box = s1.box if s2.box is None else s2.box
        else:
            box = tuple((max(a[0], b[0]), min(a[1], b[1])) for a, b in zip(s1.box, s2.box))
        outs = [r for r in (s1.outer_radius, s2.outer_radius) if r is not None]
        return SupportDescriptor(inner, box, min(outs) if outs else None)
    inner = min(s1.inner_radius, s2.inner_radius)
    if s1.box is None or s2.box is None:
        box = None
    else:
        box = tuple((min(a[0], b[0]), max(a[1], b[1])) for a, b in zip(s1.box, s2.box))
    outer = None
    if s1.outer_radius is not None and s2.outer_radius is not None:
        outer = max(s1.outer_radius, s2.outer_radius)
    return SupportDescriptor(inner, box, outer)


def from_jet_function(
    fn: Callable[[Sequence[Jet]], Jet],
    n: int,
    support: SupportDescriptor | None = None,
    smoothness: str = SMOOTH_EVERYWHERE,
    label: str = "field",
) -> ScalarField:
    """Wrap ``fn(coordinate_jets) -> Jet`` written with jet arithmetic."""

    def wrapped(x, order):
        xs = jets.coordinates(x, order)
        out = fn(xs)
        if not isinstance(out, Jet):
            out = jets.constant(out, x.shape[0], n, order)
        return out

    return ScalarField(wrapped, n, support, smoothness, label)


def zero_field(n: int) -> ScalarField:
    def fn(x, order):
        return jets.constant(0.0, x.shape[0], n, order)

    return ScalarField(fn, n, SupportDescriptor(inner_radius=np.inf, box=tuple((0.0, 0.0) for _ in range(n))), label="zero")


class HorizontalVectorField:
    """N scalar components paired against X_1..X_N."""

    def __init__(self, components: Sequence[ScalarField], label: str = "V"):
        self.components = list(components)
        self.label = label

    def __len__(self):
        return len(self.components)
