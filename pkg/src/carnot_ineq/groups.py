"""Stratified (homogeneous Carnot) groups of step at most two.

A group is R^n with strata R^{N_1} x ... x R^{N_r}.  Step-2 groups are
parameterized by skew-symmetric N x N matrices B^(m), one per coordinate of
the second stratum, with product

    (x o y)' = x' + y',    (x o y)''_m = x''_m + y''_m + 1/2 <x', B^(m) y'>.

The left-invariant generator X_k then reads

    X_k = d/dx'_k + sum_m 1/2 (x'^T B^(m))_k d/dx''_m,

and the Heisenberg group H^m is the special case N_2 = 1 with the standard
symplectic matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GroupError",
    "StratifiedGroup",
    "make_group",
    "abelian",
    "heisenberg",
    "step2",
    "group_from_spec",
    "dilate",
    "group_product",
    "group_inverse",
    "field_coefficients",
    "first_stratum_norm",
]


class GroupError(ValueError):
    """Invalid group construction or point."""


@dataclass(frozen=True, eq=False)
class StratifiedGroup:
    strata_dims: tuple[int, ...]
    kind: str
    # (N_2, N, N) stack of skew matrices; empty for abelian groups
    B: np.ndarray = field(repr=False)
    label: str = ""

    @property
    def N(self) -> int:
        return self.strata_dims[0]

    @property
    def total_dim(self) -> int:
        return sum(self.strata_dims)

    n = total_dim

    @property
    def hom_dim(self) -> int:
        return sum((k + 1) * d for k, d in enumerate(self.strata_dims))

    Q = hom_dim

    @property
    def step(self) -> int:
        return len(self.strata_dims)

    @property
    def weights(self) -> np.ndarray:
        """Dilation weight of every coordinate (1 on x', 2 on x'', ...)."""
        return np.concatenate(
            [np.full(d, k + 1, dtype=float) for k, d in enumerate(self.strata_dims)]
        )

    @property
    def key(self) -> tuple:
        return (self.kind, self.strata_dims, self.B.tobytes())

    def __str__(self) -> str:
        return self.label or f"{self.kind}{self.strata_dims}"

    def __eq__(self, other):
        return isinstance(other, StratifiedGroup) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def to_spec(self) -> dict:
        if self.kind == "abelian":
            return {"kind": "abelian", "n": self.N}
        if self.kind == "heisenberg":
            return {"kind": "heisenberg", "m": self.N // 2}
        return {"kind": "step2", "N1": self.N, "B": self.B.tolist()}

    # -- vector field coefficients -------------------------------------------

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        """Coefficient matrices of X_1..X_N at the points ``x``.

        Returns shape (M, N, n): row k holds the components of X_k in the
        Euclidean frame d/dx_1..d/dx_n.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        M, N = x.shape[0], self.N
        A = np.zeros((M, N, self.n))
        A[:, :, :N] = np.eye(N)
        if self.step == 2:
            # A[k, N+m] = 1/2 sum_i x_i B^(m)_{ik}
            A[:, :, N:] = 0.5 * np.einsum("mi,sik->mks", x[:, :N], self.B)
        return A

    def coefficient_gradients(self) -> np.ndarray:
        """Constant tensor D[k, b, a] = d(A_kb)/dx_a (shape (N, n, n)).

        Step <= 2 coefficients are linear in x', so the tensor does not depend
        on the point.
        """
        N, n = self.N, self.n
        D = np.zeros((N, n, n))
        if self.step == 2:
            # d/dx_i of 1/2 sum_l x_l B^(m)_{lk} is 1/2 B^(m)_{ik}
            D[:, N:, :N] = 0.5 * np.transpose(self.B, (2, 0, 1))
        return D

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise GroupError(
                f"point has {x.shape[-1]} coordinates, group {self} needs {self.n}"
            )
        return x


def make_group(kind: str, **params) -> StratifiedGroup:
    """Build a group from a kind name: "abelian", "heisenberg" or "step2"."""
    kind = kind.lower()
    if kind == "abelian":
        return abelian(int(params["n"]))
    if kind == "heisenberg":
        return heisenberg(int(params["m"]))
    if kind == "step2":
        return step2(params["B"], N1=params.get("N1"))
    raise GroupError(f"unknown group kind {kind!r}")


def abelian(n: int) -> StratifiedGroup:
    if n < 1:
        raise GroupError("abelian group needs n >= 1")
    return StratifiedGroup((n,), "abelian", np.zeros((0, n, n)), f"Abelian({n})")


def heisenberg(m: int) -> StratifiedGroup:
    """H^m with coordinates (x_1..x_m, y_1..y_m, t)."""
    if m < 1:
        raise GroupError("Heisenberg group needs m >= 1")
    J = np.zeros((2 * m, 2 * m))
    J[:m, m:] = np.eye(m)
    J[m:, :m] = -np.eye(m)
    return StratifiedGroup((2 * m, 1), "heisenberg", J[None], f"Heisenberg({m})")


def step2(B, N1: int | None = None) -> StratifiedGroup:
    """General step-2 group from a list of skew-symmetric N1 x N1 matrices."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 2:
        B = B[None]
    if B.ndim != 3 or B.shape[0] == 0 or B.shape[1] != B.shape[2]:
        raise GroupError("B must be a non-empty list of square matrices")
    N = B.shape[1]
    if N1 is not None and int(N1) != N:
        raise GroupError(f"N1={N1} does not match B matrices of size {N}")
    if N == 0:
        raise GroupError("first stratum must be non-empty")
    if not np.allclose(B, -np.transpose(B, (0, 2, 1)), atol=1e-14):
        raise GroupError("B matrices must be skew-symmetric")
    # the commutators [X_j, X_k] = sum_m B^(m)_jk d/dx''_m must span stratum 2
    if np.linalg.matrix_rank(B.reshape(B.shape[0], -1)) < B.shape[0]:
        raise GroupError("B matrices are linearly dependent; stratum 2 is not generated")
    return StratifiedGroup((N, B.shape[0]), "step2", B, f"Step2({N},{B.shape[0]})")


def group_from_spec(spec: dict | str) -> StratifiedGroup:
    """Parse {"kind": ..., ...} or the short form "heisenberg:1"."""
    if isinstance(spec, str):
        kind, _, arg = spec.partition(":")
        kind = kind.lower()
        if kind == "abelian":
            return abelian(int(arg))
        if kind == "heisenberg":
            return heisenberg(int(arg))
        raise GroupError(f"cannot parse group spec {spec!r}")
    spec = dict(spec)
    return make_group(spec.pop("kind"), **spec)


def dilate(G: StratifiedGroup, lam: float, x) -> np.ndarray:
    if not lam > 0:
        raise GroupError(f"dilation factor must be positive, got {lam}")
    x = G.check_point(x)
    return x * lam ** G.weights


def group_product(G: StratifiedGroup, x, y) -> np.ndarray:
    x, y = G.check_point(x), G.check_point(y)
    z = x + y
    if G.step == 2:
        N = G.N
        z = np.array(z, copy=True)
        z[..., N:] += 0.5 * np.einsum("...i,sij,...j->...s", x[..., :N], G.B, y[..., :N])
    return z


def group_inverse(G: StratifiedGroup, x) -> np.ndarray:
    # the symmetric convention makes the inverse a plain negation
    return -G.check_point(x)


def field_coefficients(G: StratifiedGroup, k: int, x) -> np.ndarray:
    """Coefficient vector of the generator X_k (1-based k) at x."""
    if not 1 <= k <= G.N:
        raise GroupError(f"generator index {k} out of range 1..{G.N}")
    x = G.check_point(x)
    A = G.coefficients(x)[:, k - 1, :]
    return A[0] if x.ndim == 1 else A


def first_stratum_norm(G: StratifiedGroup, x) -> np.ndarray:
    x = G.check_point(x)
    return np.linalg.norm(x[..., : G.N], axis=-1)
