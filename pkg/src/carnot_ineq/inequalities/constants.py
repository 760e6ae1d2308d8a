"""Closed-form constants and the two scalar identities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate as spi
from scipy import special

from ..quadrature import ConfigurationError
from .core import InequalityCase

__all__ = [
    "sharp_constant",
    "A_tilde_alpha",
    "A_tilde_beta",
    "hardy_rellich_constant",
    "lindqvist_cp",
    "lindqvist_gap",
    "davies_identity",
    "DaviesResult",
]


def _prod_factor(N, p, shift, count, what):
    out = 1.0
    for j in range(count):
        fac = abs(N - p * (shift - j))
        if fac == 0:
            raise ConfigurationError(f"{what}: factor |N - p({shift:g} - {j})| vanishes")
        out *= fac
    return out


def A_tilde_alpha(alpha: float, m: int, p: float, N: int) -> float:
    """p^m / prod_{j<m} |N - p(alpha - j)|."""
    return p**m / _prod_factor(N, p, alpha, m, "A~_alpha")


def A_tilde_beta(beta: float, k: int, p: float, N: int) -> float:
    """p^{k(p-1)} / (prod_{j<k} |N - p(beta/(p-1) - j)|)^{p-1}."""
    return p ** (k * (p - 1)) / _prod_factor(N, p, beta / (p - 1), k, "A~_beta") ** (p - 1)


def hardy_rellich_constant(gamma: float, p: float, N: int) -> float:
    return (N + gamma * (p - 1) - p) / p


def sharp_constant(case: InequalityCase) -> float:
    """Constant appearing in the statement selected by ``case``."""
    tag = case.tag
    P = case.params
    N = P.get("N")
    p = P.get("p")
    if N is None or (p is None and tag != "CriticalHardy"):
        raise ConfigurationError(f"{tag}: sharp_constant needs N and p")
    if tag in ("CKN", "BadialeTarantello"):
        return abs(N - case.gamma) / p
    if tag == "WeightedHardy":
        return abs(N - p * (P["alpha"] + 1)) / p
    if tag in ("Hardy", "RellichCorollary"):
        if not p < N:
            raise ConfigurationError(f"{tag}: p/(N-p) needs p < N (use critical-hardy for p = N)")
        return p / (N - p)
    if tag == "HigherOrderCKN":
        return A_tilde_alpha(P["alpha"], int(P.get("m", 0)), p, N) * A_tilde_beta(P["beta"], int(P.get("k", 0)), p, N)
    if tag == "CriticalHardy":
        if N < 2:
            raise ConfigurationError("CriticalHardy needs N >= 2")
        return N / (N - 1)
    if tag == "HardyRellich":
        return hardy_rellich_constant(case.gamma, p, N)
    raise ConfigurationError(f"no closed-form constant for {tag}")


# -- Lindqvist-type constant ---------------------------------------------------

def _gap_2d(p, s, c):
    """(|x+y|^p - |x|^p - p|x|^{p-2} x.y) for |y| = 1, |x| = s, cos(angle) = c."""
    return (s * s + 2 * s * c + 1.0) ** (p / 2) - s**p - p * s ** (p - 1) * c


def lindqvist_gap(p: float, x, y) -> float:
    """Normalized gap of the vector inequality at a pair (x, y), y != 0.

    For p >= 2 this is (|x+y|^p - |x|^p - p|x|^{p-2}x.y)/|y|^p; for 1<p<2 the
    gap is multiplied by (|x|+|y|)^{2-p}/|y|^2, the homogeneous form used with
    the L^2-type middle term.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    dx = 0.0 if nx == 0 else nx ** (p - 2) * float(x @ y)
    d = np.linalg.norm(x + y) ** p - nx**p - p * dx
    if p >= 2:
        return float(d / ny**p)
    return float(d * (nx + ny) ** (2 - p) / ny**2)


@lru_cache(maxsize=64)
def lindqvist_cp(p: float, n_s: int = 1200, n_phi: int = 721, safety: float = 1e-3) -> float:
    """Grid-certified constant C_p of the vector inequality, minus a margin.

    By rotation invariance the infimum over pairs reduces to |y| = 1 and
    x = s(cos phi, sin phi).  s ranges over [0, inf) through s = u/(1-u);
    the s -> inf limit (p(p-1)/2 for p < 2) is included.  The returned
    value is (1 - safety) times the grid minimum, and exactly 1 for p = 2.
    """
    p = float(p)
    if not p > 1:
        raise ConfigurationError(f"C_p needs p > 1, got {p}")
    if p == 2:
        return 1.0
    u = np.linspace(0.0, 1.0, n_s, endpoint=False)
    s = u / (1.0 - u)
    c = np.cos(np.linspace(0.0, np.pi, n_phi))
    S, Cc = np.meshgrid(s, c, indexing="ij")
    D = _gap_2d(p, S, Cc)
    if p < 2:
        D = D * (S + 1.0) ** (2 - p)
        m = min(float(D.min()), p * (p - 1) / 2)
    else:
        m = float(D.min())
    # refine around the grid minimizer
    i, j = np.unravel_index(np.argmin(D), D.shape)
    du = 1.0 / n_s
    uu = np.clip(np.linspace(u[i] - du, u[i] + du, 201), 0.0, 1.0 - 1e-12)
    pp = np.linspace(np.arccos(c[j]) - np.pi / n_phi, np.arccos(c[j]) + np.pi / n_phi, 201)
    S2, C2 = np.meshgrid(uu / (1 - uu), np.cos(pp), indexing="ij")
    D2 = _gap_2d(p, S2, C2)
    if p < 2:
        D2 = D2 * (S2 + 1.0) ** (2 - p)
    m = min(m, float(D2.min()))
    return (1.0 - safety) * m


# -- Davies representation -------------------------------------------------------

@dataclass(frozen=True)
class DaviesResult:
    lhs: float
    rhs: float
    gap: float

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.gap))


def _abs_cos_moment(p: float) -> float:
    """Integral of |cos t|^p over [-pi, pi]."""
    return 2.0 * math.sqrt(math.pi) * math.exp(special.gammaln((p + 1) / 2) - special.gammaln(p / 2 + 1))


def davies_identity(z: complex, p: float) -> DaviesResult:
    """Both sides of |z|^p = (int |cos|^p)^-1 int |Re z cos t + Im z sin t|^p dt."""
    if not p >= 1:
        raise ConfigurationError(f"Davies identity needs p >= 1, got {p}")
    z = complex(z)
    a, b = z.real, z.imag
    lhs = abs(z) ** p
    if lhs == 0:
        return DaviesResult(0.0, 0.0, 0.0)
    # integrand vanishes where tan t = -a/b; split there for accuracy
    t0 = math.atan2(-a, b)
    brk = sorted({((t0 + k * math.pi + math.pi) % (2 * math.pi)) - math.pi for k in range(2)})
    num, _ = spi.quad(
        lambda t: abs(a * math.cos(t) + b * math.sin(t)) ** p,
        -math.pi,
        math.pi,
        points=brk,
        epsabs=0.0,
        epsrel=1e-13,
        limit=200,
    )
    rhs = num / _abs_cos_moment(p)
    return DaviesResult(lhs, rhs, abs(lhs - rhs) / lhs)
