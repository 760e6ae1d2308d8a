"""Horizontal calculus on stratified groups.

All operators take jets of a field in the Euclidean frame and push them
through the coefficient matrices of the generators:

    X_k f        = A_k . grad f
    X_j X_k f    = A_j Hess(f) A_k^T + sum_{a,b} A_ja (d_a A_kb) d_b f
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import EvaluationError, HorizontalVectorField, ScalarField, _digest
from .groups import StratifiedGroup, first_stratum_norm
from . import jets

__all__ = [
    "DELTA_REG",
    "SingularPointError",
    "HorizontalSample",
    "sample",
    "apply_field",
    "horizontal_gradient",
    "horizontal_divergence",
    "sub_laplacian",
    "p_sub_laplacian",
    "weighted_p_sub_laplacian",
    "horizontal_gradient_of_norm",
    "identity_residuals",
    "plap_values",
    "weighted_plap_values",
    "grad_norm_gradient_values",
]

DELTA_REG = 1e-12


class SingularPointError(EvaluationError):
    """|grad_H f| vanished where the operator needs to divide by it."""


@dataclass
class HorizontalSample:
    """Jets of a field at M points, expressed in the horizontal frame."""

    x: np.ndarray
    r: np.ndarray  # |x'|
    val: np.ndarray
    egrad: np.ndarray  # Euclidean gradient (M, n)
    hgrad: np.ndarray  # (X_1 f, ..., X_N f), shape (M, N)
    hhess: np.ndarray | None  # H[j, k] = X_j X_k f, shape (M, N, N)

    @property
    def hgrad_norm(self) -> np.ndarray:
        return np.linalg.norm(self.hgrad, axis=1)


def _memo_get(f: ScalarField, key):
    with f.memo_lock:
        hit = f.memo.get(key)
        if hit is not None:
            f.memo.move_to_end(key)
        return hit


def _memo_put(f: ScalarField, key, value):
    with f.memo_lock:
        f.memo[key] = value
        while len(f.memo) > f.memo_size:
            f.memo.popitem(last=False)


def sample(G: StratifiedGroup, f: ScalarField, x, order: int = 2) -> HorizontalSample:
    """Evaluate f and its horizontal derivatives up to ``order`` at ``x``."""
    x = np.atleast_2d(G.check_point(x))
    if f.n != G.n:
        raise EvaluationError(f"field {f.label} lives on R^{f.n}, group {G} on R^{G.n}")
    digest = _digest(x)
    # a cached higher-order sample serves lower-order requests
    for o in range(2, order - 1, -1):
        hit = _memo_get(f, ("hsample", G.key, digest, x.shape, o))
        if hit is not None:
            return hit
    key = ("hsample", G.key, digest, x.shape, order)
    J = f.jet(x, max(order, 1))
    A = G.coefficients(x)
    hgrad = np.matmul(A, J.grad[:, :, None])[:, :, 0]
    hhess = None
    if order >= 2:
        hhess = np.matmul(np.matmul(A, J.hess), np.swapaxes(A, 1, 2))
        if G.step > 1:
            D = G.coefficient_gradients()
            # sum_a A_ja dA_kb/dx_a d_b f
            # (D . grad)[m, k, a] = sum_b dA_kb/dx_a d_b f
            Dg = np.einsum("kba,mb->mka", D, J.grad, optimize=True)
            hhess = hhess + np.matmul(A, np.swapaxes(Dg, 1, 2))
    out = HorizontalSample(x, first_stratum_norm(G, x), J.val, J.grad, hgrad, hhess)
    _memo_put(f, key, out)
    return out


def _single(x, values):
    return values[0] if np.ndim(x) == 1 else values


def apply_field(G: StratifiedGroup, k: int, f: ScalarField, x):
    """(X_k f)(x) for the 1-based generator index k."""
    if not 1 <= k <= G.N:
        raise EvaluationError(f"generator index {k} out of range 1..{G.N}")
    s = sample(G, f, x, order=1)
    return _single(x, s.hgrad[:, k - 1])


def horizontal_gradient(G: StratifiedGroup, f: ScalarField, x):
    s = sample(G, f, x, order=1)
    return _single(x, s.hgrad)


def horizontal_divergence(G: StratifiedGroup, V: HorizontalVectorField, x):
    if len(V) != G.N:
        raise EvaluationError(f"vector field has {len(V)} components, group needs N={G.N}")
    pts = np.atleast_2d(G.check_point(x))
    A = G.coefficients(pts)
    total = np.zeros(pts.shape[0])
    for k, comp in enumerate(V.components):
        J = comp.jet(pts, 1)
        total += np.einsum("mb,mb->m", A[:, k, :], J.grad)
    return _single(x, total)


def sub_laplacian(G: StratifiedGroup, f: ScalarField, x):
    s = sample(G, f, x, order=2)
    return _single(x, np.trace(s.hhess, axis1=1, axis2=2))


def _flat(s: HorizontalSample, gn: np.ndarray) -> np.ndarray:
    """Points where both horizontal gradient and Hessian vanish."""
    return (gn <= DELTA_REG) & (np.abs(s.hhess).max(axis=(1, 2)) <= DELTA_REG)


def plap_values(s: HorizontalSample, p: float) -> tuple[np.ndarray, np.ndarray]:
    """L_p f at the sample points and the mask of low-gradient points.

    Uses L_p f = |g|^{p-2} (tr H + (p-2) g^T H g / |g|^2) with g = grad_H f,
    which only divides by |g| itself and is exact whenever g != 0.

    The mask flags points with |g| <= DELTA_REG whose 2-jet is not flat
    (only for p < 2, where |g|^{p-2} blows up).  At such points the closed
    form is still returned when g != 0; where g == 0 exactly the value is
    undefined and comes back as NaN.  Points where the whole 2-jet is below
    DELTA_REG are locally flat and get 0, as do all small-gradient points
    when p > 2.
    """
    g = s.hgrad
    H = s.hhess
    gn = np.linalg.norm(g, axis=1)
    tr = np.trace(H, axis1=1, axis2=2)
    if p == 2:
        return tr, np.zeros(gn.shape, dtype=bool)
    zero = gn == 0
    safe = np.where(zero, 1.0, gn)
    quad = np.einsum("mj,mjk,mk->m", g, H, g) / safe**2
    val = safe ** (p - 2.0) * (tr + (p - 2.0) * quad)
    small = gn <= DELTA_REG
    low = np.zeros(gn.shape, dtype=bool)
    if small.any():
        flat = _flat(s, gn)
        if p > 2:
            # |g|^{p-2} times a bounded factor
            val = np.where(small, 0.0, val)
        else:
            val = np.where(flat, 0.0, val)
            low = small & ~flat
            val = np.where(low & zero, np.nan, val)
    return val, low


def weighted_plap_values(s: HorizontalSample, rho: HorizontalSample, p: float):
    """div_H(rho |g|^{p-2} g) = rho L_p f + <grad_H rho, |g|^{p-2} g>."""
    lp, singular = plap_values(s, p)
    gn = np.linalg.norm(s.hgrad, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        flux = np.where(gn[:, None] > 0, gn[:, None] ** (p - 2.0) * s.hgrad, 0.0)
    return rho.val * lp + np.einsum("mk,mk->m", rho.hgrad, flux), singular


def _raise_singular(x, mask, what):
    if mask.any():
        bad = np.atleast_2d(x)[np.argmax(mask)]
        raise SingularPointError(f"{what}: |grad_H f| <= {DELTA_REG:g} at {bad.tolist()}")


def p_sub_laplacian(G: StratifiedGroup, f: ScalarField, p: float, x):
    if not p > 1:
        raise EvaluationError(f"p-sub-Laplacian needs p > 1, got {p}")
    s = sample(G, f, x, order=2)
    val, singular = plap_values(s, p)
    _raise_singular(x, singular, "p-sub-Laplacian")
    return _single(x, val)


def weighted_p_sub_laplacian(G: StratifiedGroup, rho: ScalarField, f: ScalarField, p: float, x):
    if not p > 1:
        raise EvaluationError(f"p-sub-Laplacian needs p > 1, got {p}")
    s = sample(G, f, x, order=2)
    sr = sample(G, rho, x, order=1)
    val, singular = weighted_plap_values(s, sr, p)
    _raise_singular(x, singular, "weighted p-sub-Laplacian")
    return _single(x, val)


def grad_norm_gradient_values(s: HorizontalSample) -> tuple[np.ndarray, np.ndarray]:
    """grad_H |grad_H f| at the sample points, with the low-gradient mask.

    X_k |g| = sum_j g_j X_k g_j / |g| where X_k g_j = X_k X_j f.  The mask
    and the NaN convention follow :func:`plap_values`: the formula is kept
    for 0 < |g| <= DELTA_REG (|X_k |g|| <= |H| there), flat points give 0,
    and g == 0 with a nonzero Hessian has no defined direction (NaN).
    """
    g = s.hgrad
    gn = np.linalg.norm(g, axis=1)
    zero = gn == 0
    safe = np.where(zero, 1.0, gn)
    out = np.einsum("mkj,mj->mk", s.hhess, g) / safe[:, None]
    low = np.zeros(gn.shape, dtype=bool)
    small = gn <= DELTA_REG
    if small.any():
        flat = _flat(s, gn)
        out[small & flat] = 0.0
        low = small & ~flat
        out[low & zero] = np.nan
    return out, low


def horizontal_gradient_of_norm(G: StratifiedGroup, f: ScalarField, x):
    """The iterated gradient grad_H |grad_H f| (norm first, then gradient)."""
    s = sample(G, f, x, order=2)
    out, singular = grad_norm_gradient_values(s)
    _raise_singular(x, singular, "grad_H |grad_H f|")
    return _single(x, out)


# -- the two first-stratum power identities -----------------------------------

def _norm_power_field(G: StratifiedGroup, gamma: float) -> ScalarField:
    N = G.N

    def fn(x, order):
        xs = jets.coordinates(x, order)
        s = xs[0] * xs[0]
        for c in xs[1:N]:
            s = s + c * c
        return jets.power(s, gamma / 2.0)

    return ScalarField(fn, G.n, label=f"|x'|^{gamma}")


def _radial_flux(G: StratifiedGroup, gamma: float) -> HorizontalVectorField:
    N = G.N

    def comp(k):
        def fn(x, order):
            xs = jets.coordinates(x, order)
            s = xs[0] * xs[0]
            for c in xs[1:N]:
                s = s + c * c
            return xs[k] * jets.power(s, -gamma / 2.0)

        return ScalarField(fn, G.n, label=f"x'_{k}/|x'|^{gamma}")

    return HorizontalVectorField([comp(k) for k in range(N)], label=f"x'/|x'|^{gamma}")


def identity_residuals(G: StratifiedGroup, gamma: float, x):
    """Relative residuals of |grad_H |x'|^g| = |g| |x'|^{g-1} and
    div_H(x'/|x'|^g) = (N-g)/|x'|^g.

    Each residual is normalized by the size of the terms entering the
    closed form (|x'|^{g-1}(1+|g|) and |x'|^{-g}(N+|g|)), which keeps the
    cases g = 0 and g = N meaningful.
    """
    pts = np.atleast_2d(G.check_point(x))
    r = first_stratum_norm(G, pts)
    if np.any(r == 0):
        raise EvaluationError("identity residuals need x' != 0")
    grad = horizontal_gradient(G, _norm_power_field(G, gamma), pts)
    lhs_g = np.linalg.norm(grad, axis=1)
    rhs_g = abs(gamma) * r ** (gamma - 1.0)
    r_grad = np.abs(lhs_g - rhs_g) / ((1.0 + abs(gamma)) * r ** (gamma - 1.0))
    div = horizontal_divergence(G, _radial_flux(G, gamma), pts)
    rhs_d = (G.N - gamma) / r**gamma
    r_div = np.abs(div - rhs_d) / ((G.N + abs(gamma)) * r ** (-gamma))
    if np.ndim(x) == 1:
        return float(r_grad[0]), float(r_div[0])
    return r_grad, r_div
