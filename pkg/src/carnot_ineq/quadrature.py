"""Adaptive tensor Gauss-Legendre quadrature over boxes.

Each cell is integrated with the o-point and the (o-1)-point tensor
Gauss-Legendre rules; the fine value is kept and the coarse/fine difference
is the cell's error estimate.  Integrands may be vector valued; all
components share the nodes and the refinement, which lets a single pass
evaluate every integral of an inequality.

Summation order is fixed by the cell order, and chunks of cells are cut
independently of the number of workers, so results are bitwise identical for
any thread count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ConfigurationError",
    "IntegrationError",
    "DomainSpec",
    "QuadratureSpec",
    "IntegralValue",
    "integrate",
    "integrate_many",
    "weighted_lp_integral",
    "weighted_lp_norm",
    "oracle_integrate",
]

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """A domain, quadrature or check configuration is inadmissible."""


class IntegrationError(ArithmeticError):
    """The integrand produced a non-finite value."""


@dataclass(frozen=True)
class DomainSpec:
    """Truncation box with an optional excised tube |x'| < excision.

    ``first_dim`` is the number N of first-stratum coordinates used by the
    excision; it defaults to the full dimension.
    """

    box: tuple[tuple[float, float], ...]
    excision: float = 0.0
    first_dim: int | None = None

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        object.__setattr__(self, "box", box)
        if not box:
            raise ConfigurationError("domain box has no coordinates")
        for i, (lo, hi) in enumerate(box):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigurationError(f"domain box axis {i} is empty or unbounded: ({lo}, {hi})")
        if self.excision < 0:
            raise ConfigurationError("excision radius must be nonnegative")
        N = self.N
        if not 1 <= N <= len(box):
            raise ConfigurationError(f"first_dim={N} incompatible with a {len(box)}-dimensional box")
        if self.excision > 0 and self.excision >= self.inscribed_radius():
            raise ConfigurationError(
                f"excision radius {self.excision} is not smaller than the inscribed first-stratum radius {self.inscribed_radius()}"
            )

    @property
    def n(self) -> int:
        return len(self.box)

    @property
    def N(self) -> int:
        return self.n if self.first_dim is None else int(self.first_dim)

    def inscribed_radius(self) -> float:
        """Radius of the largest x'-ball around 0 in the first-stratum box
        (0 when the box does not contain the origin)."""
        r = [min(-lo, hi) for lo, hi in self.box[: self.N]]
        return max(0.0, min(r))

    def sup_first_stratum(self) -> float:
        """sup |x'| over the box."""
        return float(np.linalg.norm([max(abs(lo), abs(hi)) for lo, hi in self.box[: self.N]]))

    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.box]))

    def to_dict(self) -> dict:
        out = {"box": [list(b) for b in self.box], "excision": self.excision}
        if self.first_dim is not None:
            out["first_dim"] = self.first_dim
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        return cls(tuple(tuple(b) for b in d["box"]), float(d.get("excision", 0.0)), d.get("first_dim"))

    @classmethod
    def cube(cls, n: int, half: float, excision: float = 0.0, first_dim: int | None = None) -> "DomainSpec":
        return cls(tuple((-half, half) for _ in range(n)), excision, first_dim)


@dataclass(frozen=True)
class QuadratureSpec:
    base_cells_per_axis: int = 4
    max_refinement_depth: int = 6
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    order: int = 7
    max_cells: int = 20000
    chunk_points: int = 1 << 15
    workers: int = 1

    def __post_init__(self):
        if self.base_cells_per_axis < 1:
            raise ConfigurationError("base_cells_per_axis must be >= 1")
        if self.max_refinement_depth < 0:
            raise ConfigurationError("max_refinement_depth must be >= 0")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigurationError("tolerances must be positive")
        if self.order < 2:
            raise ConfigurationError("Gauss-Legendre order must be >= 2")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def with_workers(self, workers: int) -> "QuadratureSpec":
        return QuadratureSpec(**{**self.to_dict(), "workers": int(workers)})

    def to_dict(self) -> dict:
        return dict(
            base_cells_per_axis=self.base_cells_per_axis,
            max_refinement_depth=self.max_refinement_depth,
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            order=self.order,
            max_cells=self.max_cells,
            chunk_points=self.chunk_points,
            workers=self.workers,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "QuadratureSpec":
        return cls(**d)


@dataclass
class IntegralValue:
    value: float
    err_estimate: float
    cells_used: int
    converged: bool = True
    extra: dict = field(default_factory=dict, repr=False)

    def __float__(self):
        return float(self.value)


# -- rules ---------------------------------------------------------------------

@lru_cache(maxsize=None)
def _rule_nd(order: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes (P, n) and weights (P,) on the unit cube."""
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([t] * n), indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=1)
    W = w
    for _ in range(n - 1):
        W = np.multiply.outer(W, w).ravel()
    U.setflags(write=False)
    W.setflags(write=False)
    return U, W


# -- evaluation ------------------------------------------------------------------

def _excise(dom: DomainSpec, pts: np.ndarray) -> np.ndarray | None:
    if dom.excision <= 0:
        return None
    r2 = np.einsum("mi,mi->m", pts[:, : dom.N], pts[:, : dom.N])
    return r2 >= dom.excision**2


def _eval_points(f, dom: DomainSpec, pts: np.ndarray) -> np.ndarray:
    keep = _excise(dom, pts)
    if keep is None:
        vals = np.asarray(f(pts), dtype=float)
    else:
        # an all-excised chunk still needs the component count of f
        probe = pts[keep] if keep.any() else pts[:1]
        sub = np.asarray(f(probe), dtype=float)
        vals = np.zeros((pts.shape[0],) + sub.shape[1:])
        if keep.any():
            vals[keep] = sub
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != pts.shape[0]:
        raise IntegrationError(f"integrand returned {vals.shape[0]} values for {pts.shape[0]} points")
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad.any(axis=1)))
        raise IntegrationError(f"non-finite integrand value {vals[i].tolist()} at point {pts[i].tolist()}")
    return vals


def _cell_rules(f, dom, q, lo, width, pool) -> tuple[np.ndarray, np.ndarray]:
    """Fine (order o) and coarse (order o-1) cell integrals, shapes (C, K)."""
    n = lo.shape[1]
    U1, W1 = _rule_nd(q.order, n)
    U0, W0 = _rule_nd(q.order - 1, n)
    U = np.concatenate([U1, U0])
    P1, P = U1.shape[0], U1.shape[0] + U0.shape[0]
    per_chunk = max(1, q.chunk_points // P)
    vol = np.prod(width, axis=1)
    starts = list(range(0, lo.shape[0], per_chunk))

    def job(s):
        e = min(s + per_chunk, lo.shape[0])
        pts = (lo[s:e, None, :] + width[s:e, None, :] * U[None]).reshape(-1, n)
        vals = _eval_points(f, dom, pts).reshape(e - s, P, -1)
        fine = np.einsum("p,cpk->ck", W1, vals[:, :P1]) * vol[s:e, None]
        coarse = np.einsum("p,cpk->ck", W0, vals[:, P1:]) * vol[s:e, None]
        return fine, coarse

    if pool is None:
        parts = [job(s) for s in starts]
    else:
        parts = list(pool.map(job, starts))
    return np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts])


def _children(lo, width):
    C, n = lo.shape
    offs = np.array(np.meshgrid(*([[0.0, 0.5]] * n), indexing="ij")).reshape(n, -1).T
    half = width / 2
    new_lo = (lo[:, None, :] + offs[None] * width[:, None, :]).reshape(-1, n)
    new_w = np.repeat(half, offs.shape[0], axis=0)
    return new_lo, new_w


def integrate_many(f: Callable[[np.ndarray], np.ndarray], dom: DomainSpec, q: QuadratureSpec) -> list[IntegralValue]:
    """Integrate every component of a vector integrand f: (M, n) -> (M, K)."""
    n = dom.n
    lo_b = np.array([b[0] for b in dom.box])
    hi_b = np.array([b[1] for b in dom.box])
    m = q.base_cells_per_axis
    idx = np.array(np.meshgrid(*([np.arange(m)] * n), indexing="ij")).reshape(n, -1).T
    width0 = (hi_b - lo_b) / m
    lo = lo_b + idx * width0
    width = np.broadcast_to(width0, lo.shape).copy()
    depth = np.zeros(lo.shape[0], dtype=int)

    pool = ThreadPoolExecutor(q.workers) if q.workers > 1 else None
    try:
        hi_v, lo_v = _cell_rules(f, dom, q, lo, width, pool)
        err = np.abs(hi_v - lo_v)
        converged = False
        while True:
            total = hi_v.sum(axis=0)
            tot_err = err.sum(axis=0)
            tol = np.maximum(q.abs_tol, q.rel_tol * np.abs(total))
            if np.all(tot_err <= tol):
                converged = True
                break
            score = (err / tol).max(axis=1)
            can = depth < q.max_refinement_depth
            n_kids = 2**n
            budget = (q.max_cells - lo.shape[0]) // (n_kids - 1)
            if not can.any() or budget <= 0:
                break
            cand = np.nonzero(can)[0]
            order = cand[np.argsort(-score[cand], kind="stable")]
            cum = np.cumsum(score[order])
            k = int(np.searchsorted(cum, 0.5 * score.sum())) + 1
            k = max(1, min(k, budget, order.size))
            pick = np.sort(order[:k])
            c_lo, c_w = _children(lo[pick], width[pick])
            c_hi, c_lov = _cell_rules(f, dom, q, c_lo, c_w, pool)
            keep = np.ones(lo.shape[0], dtype=bool)
            keep[pick] = False
            lo = np.concatenate([lo[keep], c_lo])
            width = np.concatenate([width[keep], c_w])
            depth = np.concatenate([depth[keep], np.repeat(depth[pick] + 1, n_kids)])
            hi_v = np.concatenate([hi_v[keep], c_hi])
            err = np.concatenate([err[keep], np.abs(c_hi - c_lov)])
    finally:
        if pool is not None:
            pool.shutdown()

    total = hi_v.sum(axis=0)
    tot_err = err.sum(axis=0)
    if not converged:
        log.debug("quadrature stopped at %d cells without reaching tolerance", lo.shape[0])
    tol = np.maximum(q.abs_tol, q.rel_tol * np.abs(total))
    return [
        IntegralValue(float(total[k]), float(tot_err[k]), int(lo.shape[0]), bool(tot_err[k] <= tol[k]))
        for k in range(total.shape[0])
    ]


def integrate(f: Callable[[np.ndarray], np.ndarray], dom: DomainSpec, q: QuadratureSpec) -> IntegralValue:
    """Adaptive estimate of the integral of a scalar integrand over ``dom``."""
    out = integrate_many(f, dom, q)
    if len(out) != 1:
        raise IntegrationError(f"integrate expects a scalar integrand, got {len(out)} components")
    return out[0]


def _power_weight(r, gamma_w):
    with np.errstate(divide="ignore", invalid="ignore"):
        return r ** (-gamma_w)


def weighted_lp_integral(G, f, p: float, gamma_w: float, dom: DomainSpec, q: QuadratureSpec) -> IntegralValue:
    """Integral of |f|^p / |x'|^gamma_w over ``dom``."""
    if p < 1:
        raise ConfigurationError(f"Lp norm needs p >= 1, got {p}")
    if gamma_w > 0 and f.support.inner_radius <= 0 and dom.excision <= 0:
        raise ConfigurationError(
            f"weight |x'|^-{gamma_w} is singular on x'=0 and neither the support of {f.label} nor the domain avoids it"
        )
    N = G.N

    def integrand(x):
        v = np.abs(f(x)) ** p
        r = np.linalg.norm(x[:, :N], axis=1)
        return np.where(v == 0, 0.0, v * _power_weight(r, gamma_w))

    return integrate(integrand, dom, q)


def weighted_lp_norm(G, f, p: float, gamma_w: float, dom: DomainSpec, q: QuadratureSpec) -> float:
    """(integral of |f|^p / |x'|^gamma_w)^(1/p)."""
    return float(max(weighted_lp_integral(G, f, p, gamma_w, dom, q).value, 0.0) ** (1.0 / p))


def oracle_integrate(f, dom: DomainSpec, resolution: int | Sequence[int], chunk: int = 1 << 16):
    """Composite midpoint rule on a uniform grid (test oracle).

    Returns a float for scalar integrands and an array otherwise.
    """
    n = dom.n
    res = [int(resolution)] * n if np.ndim(resolution) == 0 else [int(r) for r in resolution]
    axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k for (lo, hi), k in zip(dom.box, res)]
    cell = float(np.prod([(hi - lo) / k for (lo, hi), k in zip(dom.box, res)]))
    total = None
    count = int(np.prod(res))
    for s in range(0, count, chunk):
        idx = np.unravel_index(np.arange(s, min(s + chunk, count)), res)
        pts = np.stack([axes[i][idx[i]] for i in range(n)], axis=1)
        part = _eval_points(f, dom, pts).sum(axis=0)
        total = part if total is None else total + part
    total = total * cell
    return float(total[0]) if total.shape[0] == 1 else total
