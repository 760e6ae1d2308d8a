"""Both sides of every inequality and identity, as quadrature plans.

Each ``plan_*`` builder returns a :class:`Plan`: a vector integrand whose
columns are the elementary integrals of the statement and a function mapping
their values to (lhs, rhs).  ``check_*`` validates the inputs, runs the plan
on a box domain, and returns an :class:`InequalityReport`.
"""

from __future__ import annotations

import logging

import numpy as np

from .. import calculus
from ..fields import EvaluationError, ScalarField, SupportDescriptor
from ..groups import StratifiedGroup, abelian
from ..jets import Jet
from ..quadrature import ConfigurationError, DomainSpec
from ..test_functions import GFunction
from .constants import A_tilde_alpha, A_tilde_beta, hardy_rellich_constant, lindqvist_cp
from .core import Counter, InequalityReport, Plan, power_weight, run_plan, zero_report

__all__ = [
    "plan_ckn",
    "plan_weighted_hardy",
    "plan_hardy",
    "plan_badiale_tarantello",
    "check_ckn",
    "check_weighted_hardy",
    "check_hardy",
    "check_badiale_tarantello",
    "check_uncertainty",
    "check_critical_hardy",
    "check_abstract_critical",
    "check_poincare",
    "check_higher_order",
    "check_hardy_rellich",
    "check_rellich_corollary",
    "check_weighted_plap",
    "check_lindqvist_p12",
    "remainder_identity_p2",
    "RemainderResult",
    "eta_from_equality",
    "verify_weighted_hypothesis",
    "UNCERTAINTY_KINDS",
]

log = logging.getLogger(__name__)

UNCERTAINTY_KINDS = ("1UP1p", "HPW1", "HPW2", "UP1p")


# -- shared validation -----------------------------------------------------------

def _check_p(p, lo=1.0, what="p"):
    if not (np.isfinite(p) and p > lo):
        raise ConfigurationError(f"{what} must exceed {lo:g}, got {p}")


def _admissible(G: StratifiedGroup, f: ScalarField, dom: DomainSpec, away: bool = True, region: DomainSpec | None = None):
    """f compactly supported inside the domain (and Omega), away from x'=0."""
    if dom.n != G.n or f.n != G.n:
        raise ConfigurationError(f"dimension mismatch: group R^{G.n}, field R^{f.n}, domain R^{dom.n}")
    if dom.excision > 0 and dom.N != G.N:
        raise ConfigurationError(f"domain excision uses first_dim={dom.N}, group has N={G.N}")
    sup = f.support
    if not sup.bounded:
        raise ConfigurationError(f"{f.label} is not compactly supported")
    if not sup.contains_box(dom.box):
        raise ConfigurationError(f"support box of {f.label} is not contained in the domain box")
    if region is not None and not sup.contains_box(region.box):
        raise ConfigurationError(f"support box of {f.label} is not contained in Omega")
    if away and sup.inner_radius <= 0:
        raise ConfigurationError(f"{f.label} must vanish near x'=0 (support inner radius is 0)")
    if dom.excision > sup.inner_radius:
        raise ConfigurationError(
            f"excision radius {dom.excision} cuts into the support of {f.label} (inner radius {sup.inner_radius})"
        )


def _labels(G, f, **params):
    out = {"group": str(G), "field": f.label}
    out.update({k: (float(v) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool) else v) for k, v in params.items()})
    return out


def _root(v, e):
    return max(v, 0.0) ** e


def _hs(G, f, x, order):
    return calculus.sample(G, f, x, order)


def _plap(s, p, counter):
    val, low = calculus.plap_values(s, p)
    counter.add("low_gradient", int(low.sum()))
    bad = ~np.isfinite(val)
    if bad.any():
        counter.add("undefined", int(bad.sum()))
        val = np.where(bad, 0.0, val)
    return val


def _grad_norm_grad(s, counter):
    out, low = calculus.grad_norm_gradient_values(s)
    counter.add("low_gradient", int(low.sum()))
    bad = ~np.isfinite(out).all(axis=1)
    if bad.any():
        counter.add("undefined", int(bad.sum()))
        out = np.where(bad[:, None], 0.0, out)
    return np.linalg.norm(out, axis=1)


# -- CKN family --------------------------------------------------------------------

def plan_ckn(G, f, alpha, beta, p, euclidean_gradient=False, first_dim=None) -> Plan:
    """|N-gamma|/p I[|f|^p r^-gamma] <= I[r^-ap |grad f|^p]^{1/p} I[|f|^p r^{-bp/(p-1)}]^{(p-1)/p}."""
    N = G.N if first_dim is None else first_dim
    gamma = alpha + beta + 1.0
    C = abs(N - gamma) / p
    e3 = beta * p / (p - 1)

    def integrand(x):
        s = _hs(G, f, x, 1)
        r = s.r if first_dim is None else np.linalg.norm(x[:, :N], axis=1)
        fp = np.abs(s.val) ** p
        g = np.linalg.norm(s.egrad if euclidean_gradient else s.hgrad, axis=1)
        gp = g**p
        return np.stack([power_weight(fp, r, gamma), power_weight(gp, r, alpha * p), power_weight(fp, r, e3)], axis=1)

    def assemble(v):
        return C * v[0], _root(v[1], 1 / p) * _root(v[2], (p - 1) / p)

    tag = "BadialeTarantello" if euclidean_gradient else "CKN"
    params = _labels(G, f, alpha=alpha, beta=beta, gamma=gamma, p=p, N=N)
    return Plan(tag, params, C, integrand, assemble)


def plan_weighted_hardy(G, f, alpha, p) -> Plan:
    N = G.N
    C = abs(N - p * (alpha + 1)) / p

    def integrand(x):
        s = _hs(G, f, x, 1)
        fp = np.abs(s.val) ** p
        gp = s.hgrad_norm**p
        return np.stack([power_weight(fp, s.r, (alpha + 1) * p), power_weight(gp, s.r, alpha * p)], axis=1)

    def assemble(v):
        return C * _root(v[0], 1 / p), _root(v[1], 1 / p)

    return Plan("WeightedHardy", _labels(G, f, alpha=alpha, p=p, N=N), C, integrand, assemble)


def plan_hardy(G, f, p) -> Plan:
    N = G.N
    if p == N:
        raise ConfigurationError(f"Hardy with p = N = {N} has no constant: use critical-hardy")
    modulus = p > N
    C = abs(N - p) / p if modulus else p / (N - p)

    def integrand(x):
        s = _hs(G, f, x, 1)
        fp = np.abs(s.val) ** p
        return np.stack([power_weight(fp, s.r, p), s.hgrad_norm**p], axis=1)

    def assemble(v):
        a, b = _root(v[0], 1 / p), _root(v[1], 1 / p)
        return (C * a, b) if modulus else (a, C * b)

    params = _labels(G, f, p=p, N=N, form="modulus" if modulus else "p/(N-p)")
    return Plan("Hardy", params, C, integrand, assemble)


def plan_badiale_tarantello(n, N, f, alpha, beta, p) -> Plan:
    if not 1 <= N <= n:
        raise ConfigurationError(f"Badiale-Tarantello needs 1 <= N <= n, got N={N}, n={n}")
    G = abelian(n)
    plan = plan_ckn(G, f, alpha, beta, p, euclidean_gradient=True, first_dim=N)
    plan.params["n"] = n
    plan.params["group"] = f"R^{n}"
    return plan


def check_ckn(G, f, alpha, beta, p, dom, q) -> InequalityReport:
    _check_p(p)
    _admissible(G, f, dom)
    return run_plan(plan_ckn(G, f, float(alpha), float(beta), float(p)), dom, q)


def check_weighted_hardy(G, f, alpha, p, dom, q) -> InequalityReport:
    _check_p(p)
    _admissible(G, f, dom)
    return run_plan(plan_weighted_hardy(G, f, float(alpha), float(p)), dom, q)


def check_hardy(G, f, p, dom, q) -> InequalityReport:
    _check_p(p)
    _admissible(G, f, dom)
    return run_plan(plan_hardy(G, f, float(p)), dom, q)


def check_badiale_tarantello(n, N, f, alpha, beta, p, dom, q) -> InequalityReport:
    _check_p(p)
    if N > n:
        raise ConfigurationError(f"Badiale-Tarantello needs N <= n, got N={N}, n={n}")
    plan = plan_badiale_tarantello(int(n), int(N), f, float(alpha), float(beta), float(p))
    if dom.n != n or f.n != n:
        raise ConfigurationError("Badiale-Tarantello: field and domain must live on R^n")
    if not f.support.bounded or not f.support.contains_box(dom.box):
        raise ConfigurationError(f"support box of {f.label} is not contained in the domain box")
    if f.support.inner_radius <= 0:
        raise ConfigurationError(f"{f.label} must vanish near x'=0")
    if dom.excision > 0 and dom.N != N:
        raise ConfigurationError("domain excision must use the first N coordinates")
    return run_plan(plan, dom, q)


# -- uncertainty principles ------------------------------------------------------

def check_uncertainty(G, f, p, kind, dom, q, alpha: float = 0.0) -> InequalityReport:
    """The two-factor uncertainty inequalities.

    kind "1UP1p": ||f||_2^2 <= p/(N-p) ||grad f||_p || |x'| f ||_{p'};
    "HPW1" (parameter alpha): |N-ap|/p ||f/r^a||_p^p <= ||grad f/r^a||_p ||r^{1/(p-1)-a} f||_p^{p-1};
    "HPW2": N/p ||f||_p^p <= ||r^p grad f||_p ||f/r||_p^{p-1};
    "UP1p": ||grad f||_p^p <= p/(N-p) ||L_p f||_p || |x'| grad f||_q.
    """
    p = float(p)
    _check_p(p)
    N = G.N
    if kind not in UNCERTAINTY_KINDS:
        raise ConfigurationError(f"unknown uncertainty kind {kind!r}; expected one of {UNCERTAINTY_KINDS}")
    if kind in ("1UP1p", "UP1p") and not p < N:
        raise ConfigurationError(f"{kind} needs 1 < p < N, got p={p}, N={N}")
    _admissible(G, f, dom)
    counter = Counter()
    pc = p / (p - 1)

    if kind == "1UP1p":
        C = p / (N - p)

        def integrand(x):
            s = _hs(G, f, x, 1)
            v = np.abs(s.val)
            return np.stack([v**2, s.hgrad_norm**p, (s.r * v) ** pc], axis=1)

        def assemble(v):
            return v[0], C * _root(v[1], 1 / p) * _root(v[2], 1 / pc)

        tag = "UncertaintyHPW"
    elif kind == "HPW1":
        alpha = float(alpha)
        C = abs(N - alpha * p) / p
        e3 = (1.0 / (p - 1) - alpha) * p

        def integrand(x):
            s = _hs(G, f, x, 1)
            fp = np.abs(s.val) ** p
            return np.stack(
                [power_weight(fp, s.r, alpha * p), power_weight(s.hgrad_norm**p, s.r, alpha * p), power_weight(fp, s.r, -e3)],
                axis=1,
            )

        def assemble(v):
            return C * v[0], _root(v[1], 1 / p) * _root(v[2], (p - 1) / p)

        tag = "UncertaintyHPW"
    elif kind == "HPW2":
        C = N / p

        def integrand(x):
            s = _hs(G, f, x, 1)
            fp = np.abs(s.val) ** p
            return np.stack([fp, (s.r**p * s.hgrad_norm) ** p, power_weight(fp, s.r, p)], axis=1)

        def assemble(v):
            return C * v[0], _root(v[1], 1 / p) * _root(v[2], (p - 1) / p)

        tag = "UncertaintyHPW"
    else:
        C = p / (N - p)

        def integrand(x):
            s = _hs(G, f, x, 2)
            g = s.hgrad_norm
            lp = _plap(s, p, counter)
            return np.stack([g**p, np.abs(lp) ** p, (s.r * g) ** pc], axis=1)

        def assemble(v):
            return v[0], C * _root(v[1], 1 / p) * _root(v[2], 1 / pc)

        tag = "UncertaintyPLap"

    params = _labels(G, f, kind=kind, p=p, N=N)
    if kind == "HPW1":
        params["alpha"] = alpha
    return run_plan(Plan(tag, params, C, integrand, assemble, counter), dom, q)


# -- critical case -----------------------------------------------------------------

def _critical_setup(G, Omega, f, dom):
    N = G.N
    if N < 2:
        raise ConfigurationError("critical inequalities need N >= 2")
    if Omega.n != G.n:
        raise ConfigurationError("Omega must live in the group")
    _admissible(G, f, dom, region=Omega)
    R = Omega.sup_first_stratum()
    outer = f.support.first_stratum_outer(N)
    if not outer < R:
        raise ConfigurationError(f"support of {f.label} reaches |x'| = R = {R:g}; the logarithm vanishes there")
    return N, R


def _radial_part(s):
    """(x'/|x'|) . grad_H f, zero on x' = 0."""
    N = s.hgrad.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.einsum("mk,mk->m", s.x[:, :N], s.hgrad) / s.r
    return np.where(s.r > 0, v, 0.0)


def check_critical_hardy(G, Omega: DomainSpec, f, dom, q) -> InequalityReport:
    """||f/(|x'| log(R/|x'|))||_N <= N/(N-1) ||(x'/|x'|).grad_H f||_N."""
    N, R = _critical_setup(G, Omega, f, dom)
    C = N / (N - 1)

    def integrand(x):
        s = _hs(G, f, x, 1)
        fN = np.abs(s.val) ** N
        with np.errstate(divide="ignore", invalid="ignore"):
            w = s.r * np.log(R / s.r)
        a = np.where(fN == 0, 0.0, fN / np.where(fN == 0, 1.0, w) ** N)
        return np.stack([a, np.abs(_radial_part(s)) ** N], axis=1)

    def assemble(v):
        return _root(v[0], 1 / N), C * _root(v[1], 1 / N)

    params = _labels(G, f, p=N, N=N, R=R)
    return run_plan(Plan("CriticalHardy", params, C, integrand, assemble), dom, q)


def check_abstract_critical(G, Omega: DomainSpec, f, g: GFunction, dom, q, grid=None) -> InequalityReport:
    """((N-1)/N)^N I[|f|^N r^-N (-g')^{N-2} g''] <= I[(-g')^{2(N-1)}/(g'')^{N-1} |x^.grad f|^N],
    with g', g'' evaluated at log(R e/|x'|)."""
    N, R = _critical_setup(G, Omega, f, dom)
    C = ((N - 1) / N) ** N
    sup_ = f.support
    if not sup_.first_stratum_outer(N) > sup_.inner_radius:
        params = _labels(G, f, N=N, p=N, R=R, g=g.name)
        return zero_report("AbstractCritical", params, C, "empty support")
    if grid is None:
        # the t values 1 + log(R/|x'|) met on the support of f
        r_lo = max(sup_.inner_radius, 1e-300)
        t_hi = 1.0 + np.log(R / r_lo) if sup_.inner_radius > 0 else 1.0 + 1e6
        t_lo = 1.0 + np.log(R / sup_.first_stratum_outer(N))
        grid = np.linspace(t_lo, t_hi, 2001)
    ok, bad, sup = g.admissibility(N, grid)
    if not ok:
        raise ConfigurationError(f"g-function {g.name} is inadmissible at t = {bad!r}")

    def integrand(x):
        s = _hs(G, f, x, 1)
        fN = np.abs(s.val) ** N
        rad = np.abs(_radial_part(s)) ** N
        live = ((fN != 0) | (rad != 0)) & (s.r > 0) & (s.r < R)
        out = np.zeros((x.shape[0], 2))
        if live.any():
            r = s.r[live]
            t = 1.0 + np.log(R / r)
            d1, d2 = g.d1(t), g.d2(t)
            out[live, 0] = fN[live] / r**N * (-d1) ** (N - 2) * d2
            out[live, 1] = (-d1) ** (2 * (N - 1)) / d2 ** (N - 1) * rad[live]
        return out

    def assemble(v):
        return C * v[0], v[1]

    params = _labels(G, f, N=N, p=N, R=R, g=g.name, ratio_sup=sup)
    return run_plan(Plan("AbstractCritical", params, C, integrand, assemble), dom, q)


def check_poincare(G, Omega: DomainSpec, f, p, dom, q, variant: str = "auto") -> InequalityReport:
    """p = N: ||f||_N <= R ||grad_H f||_N; otherwise |N-p|/(Rp) ||f||_p <= ||grad_H f||_p."""
    p = float(p)
    _check_p(p)
    N = G.N
    if variant == "auto":
        variant = "LN" if p == N else "Lp"
    if variant not in ("LN", "Lp"):
        raise ConfigurationError(f"unknown Poincare variant {variant!r}")
    if variant == "Lp" and p == N:
        raise ConfigurationError("the L^p Poincare form is trivial for p = N; use the L^N form")
    if variant == "LN" and p != N:
        raise ConfigurationError(f"the L^N Poincare form needs p = N = {N}")
    if Omega.n != G.n:
        raise ConfigurationError("Omega must live in the group")
    _admissible(G, f, dom, away=(variant == "Lp"), region=Omega)
    R = Omega.sup_first_stratum()
    C = R if variant == "LN" else abs(N - p) / (R * p)

    def integrand(x):
        s = _hs(G, f, x, 1)
        return np.stack([np.abs(s.val) ** p, s.hgrad_norm**p], axis=1)

    def assemble(v):
        a, b = _root(v[0], 1 / p), _root(v[1], 1 / p)
        return (a, C * b) if variant == "LN" else (C * a, b)

    tag = "PoincareLN" if variant == "LN" else "PoincareLp"
    return run_plan(Plan(tag, _labels(G, f, p=p, N=N, R=R), C, integrand, assemble), dom, q)


# -- higher order and Hardy-Rellich ---------------------------------------------------

def check_higher_order(G, f, alpha, beta, p, k, m, dom, q) -> InequalityReport:
    """Iterated CKN with gradients grad^{j} f = grad_H |grad^{j-1} f|."""
    p, alpha, beta = float(p), float(alpha), float(beta)
    k, m = int(k), int(m)
    _check_p(p)
    if k < 0 or m < 0:
        raise ConfigurationError("k and m must be nonnegative")
    if k > 1 or m > 1:
        raise ConfigurationError("iterated gradients need jets of order m+1 and k; only k, m <= 1 are available")
    N = G.N
    gamma = alpha + beta + 1.0
    C = abs(N - gamma) / p
    K = A_tilde_alpha(alpha, m, p, N) * A_tilde_beta(beta, k, p, N)
    _admissible(G, f, dom)
    counter = Counter()
    e1 = (alpha - m) * p
    e2 = (beta / (p - 1) - k) * p
    order = 2 if m == 1 else 1

    def integrand(x):
        s = _hs(G, f, x, order)
        fp = np.abs(s.val) ** p
        gnorm = s.hgrad_norm
        top = _grad_norm_grad(s, counter) if m == 1 else gnorm
        low = gnorm if k == 1 else np.abs(s.val)
        return np.stack([power_weight(fp, s.r, gamma), power_weight(top**p, s.r, e1), power_weight(low**p, s.r, e2)], axis=1)

    def assemble(v):
        return C * v[0], K * _root(v[1], 1 / p) * _root(v[2], (p - 1) / p)

    params = _labels(G, f, alpha=alpha, beta=beta, gamma=gamma, p=p, k=k, m=m, N=N, ckn_constant=C)
    return run_plan(Plan("HigherOrderCKN", params, K, integrand, assemble, counter), dom, q)


def check_hardy_rellich(G, f, alpha, beta, p, dom, q, strict_singular: bool = False) -> InequalityReport:
    """(N+gamma(p-1)-p)/p ||grad f / r^{gamma/p}||_p^p <= ||r^-alpha L_p f||_p ||grad f / r^beta||_q."""
    p, alpha, beta = float(p), float(alpha), float(beta)
    _check_p(p)
    N = G.N
    if not p < N:
        log.warning("Hardy-Rellich with p = %g >= N = %d lies outside the supported range 1 < p < N", p, N)
        raise ConfigurationError(f"Hardy-Rellich needs 1 < p < N (p >= N is not covered), got p={p}, N={N}")
    gamma = alpha + beta + 1.0
    lo = (p - N) / (p - 1)
    if not (lo - 1e-12 <= gamma <= 1e-12):
        raise ConfigurationError(f"Hardy-Rellich needs (p-N)/(p-1) = {lo:g} <= gamma <= 0, got gamma={gamma:g}")
    _admissible(G, f, dom)
    C = hardy_rellich_constant(gamma, p, N)
    qq = p / (p - 1)
    counter = Counter()

    def integrand(x):
        s = _hs(G, f, x, 2)
        g = s.hgrad_norm
        lp = _plap(s, p, counter)
        return np.stack(
            [power_weight(g**p, s.r, gamma), power_weight(np.abs(lp) ** p, s.r, alpha * p), power_weight(g**qq, s.r, beta * qq)],
            axis=1,
        )

    def assemble(v):
        return C * v[0], _root(v[1], 1 / p) * _root(v[2], 1 / qq)

    params = _labels(G, f, alpha=alpha, beta=beta, gamma=gamma, p=p, q=qq, N=N)
    return run_plan(Plan("HardyRellich", params, C, integrand, assemble, counter), dom, q, strict_singular)


def check_rellich_corollary(G, f, p, dom, q, homogeneous_only: bool = True) -> InequalityReport:
    """||grad_H f||_p <= p/(N-p) || |x'| L_p f ||_p.

    The two sides scale like |c| and |c|^{p-1} under f -> c f, so the
    statement is scale invariant only for p = 2; other p are rejected unless
    ``homogeneous_only`` is False.
    """
    p = float(p)
    _check_p(p)
    N = G.N
    if not p < N:
        raise ConfigurationError(f"Rellich corollary needs 1 < p < N, got p={p}, N={N}")
    if homogeneous_only and p != 2:
        raise ConfigurationError("Rellich corollary is only scale invariant for p = 2")
    _admissible(G, f, dom)
    C = p / (N - p)
    counter = Counter()

    def integrand(x):
        s = _hs(G, f, x, 2)
        lp = _plap(s, p, counter)
        return np.stack([s.hgrad_norm**p, (s.r * np.abs(lp)) ** p], axis=1)

    def assemble(v):
        return _root(v[0], 1 / p), C * _root(v[1], 1 / p)

    return run_plan(Plan("RellichCorollary", _labels(G, f, p=p, N=N), C, integrand, assemble, counter), dom, q)


# -- weighted p-sub-Laplacian ----------------------------------------------------------

def _field_values(h, x):
    return h.jet(x, 0).val


def verify_weighted_hypothesis(G, rho, F, eta, p, support: SupportDescriptor, points_per_axis: int | None = None, rtol=1e-9):
    """Check eta F^{p-1} <= -L_{p,rho} F on a grid over the support of f.

    Returns the number of grid points tested; raises ConfigurationError
    naming the first violating point, or a point where F <= 0.
    """
    if support.box is None:
        raise ConfigurationError("hypothesis check needs a bounded support")
    n = len(support.box)
    k = points_per_axis or max(3, int(round(2.0e4 ** (1.0 / n))))
    axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k for lo, hi in support.box]
    pts = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    r = np.linalg.norm(pts[:, : G.N], axis=1)
    keep = r > support.inner_radius
    if support.outer_radius is not None:
        keep &= r < support.outer_radius
    pts = pts[keep]
    if pts.shape[0] == 0:
        return 0
    sF = calculus.sample(G, F, pts, 2)
    if np.any(sF.val <= 0):
        i = int(np.argmax(sF.val <= 0))
        raise ConfigurationError(f"F must be positive on the support of f; F = {sF.val[i]:g} at {pts[i].tolist()}")
    sr = calculus.sample(G, rho, pts, 1)
    lpr, _ = calculus.weighted_plap_values(sF, sr, p)
    lhs = _field_values(eta, pts) * sF.val ** (p - 1)
    rhs = -lpr
    bad = ~(lhs <= rhs + rtol * (np.abs(lhs) + np.abs(rhs)) + 1e-300)
    if bad.any():
        i = int(np.argmax(bad))
        raise ConfigurationError(
            f"hypothesis eta F^(p-1) <= -L_(p,rho) F fails at {pts[i].tolist()}: {lhs[i]:.6g} > {rhs[i]:.6g}"
        )
    return int(pts.shape[0])


def _weighted_columns(G, f, rho, F, eta, p, x, middle, signed_eta=False):
    s = _hs(G, f, x, 1)
    sF = _hs(G, F, x, 1)
    rv = _field_values(rho, x)
    ev = _field_values(eta, x)
    if np.any(rv < 0) or (not signed_eta and np.any(ev < 0)):
        raise EvaluationError("rho and eta must be nonnegative")
    fv = s.val
    live = fv != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(live, fv / sF.val, 0.0)
    # F grad(f/F) = grad f - (f/F) grad F
    xg = ratio[:, None] * sF.hgrad
    w = s.hgrad - xg
    wn = np.linalg.norm(w, axis=1)
    a = np.where(ev == 0, 0.0, ev * np.abs(fv) ** p)
    mid = middle(rv, np.linalg.norm(xg, axis=1), wn)
    return np.stack([a, mid, rv * s.hgrad_norm**p], axis=1)


def check_weighted_plap(G, f, rho, F, eta, p, dom, q, C_p: float | None = None, points_per_axis=None) -> InequalityReport:
    """||eta^{1/p} f||_p^p + C_p ||rho^{1/p} F grad_H(f/F)||_p^p <= ||rho^{1/p} grad_H f||_p^p, p >= 2."""
    p = float(p)
    if not p >= 2:
        raise ConfigurationError(f"weighted p-sub-Laplacian inequality needs p >= 2, got {p}; use the 1<p<2 form")
    _admissible(G, f, dom, away=False)
    Cp = lindqvist_cp(p) if C_p is None else float(C_p)
    tested = verify_weighted_hypothesis(G, rho, F, eta, p, f.support, points_per_axis)

    def integrand(x):
        return _weighted_columns(G, f, rho, F, eta, p, x, lambda rv, xn, wn: rv * wn**p)

    def assemble(v):
        return v[0] + Cp * v[1], v[2]

    params = _labels(G, f, p=p, N=G.N, rho=rho.label, F=F.label, eta=eta.label, C_p=Cp, hypothesis_points=tested)
    return run_plan(Plan("WeightedPLap", params, Cp, integrand, assemble, gap=(-1.0, -Cp, 1.0)), dom, q)


def check_lindqvist_p12(G, f, rho, F, eta, p, dom, q, C_p: float | None = None, points_per_axis=None) -> InequalityReport:
    """The 1<p<2 form with middle term C_p I[rho (|f grad F/F| + F|grad(f/F)|)^{p-2} F^2 |grad(f/F)|^2]."""
    p = float(p)
    if not 1 < p < 2:
        raise ConfigurationError(f"the Lindqvist form needs 1 < p < 2, got {p}")
    _admissible(G, f, dom, away=False)
    Cp = lindqvist_cp(p) if C_p is None else float(C_p)
    tested = verify_weighted_hypothesis(G, rho, F, eta, p, f.support, points_per_axis)

    def middle(rv, xn, wn):
        A = xn + wn
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(wn == 0, 0.0, rv * A ** (p - 2) * wn**2)

    def integrand(x):
        return _weighted_columns(G, f, rho, F, eta, p, x, middle)

    def assemble(v):
        return v[0] + Cp * v[1], v[2]

    params = _labels(G, f, p=p, N=G.N, rho=rho.label, F=F.label, eta=eta.label, C_p=Cp, hypothesis_points=tested)
    return run_plan(Plan("LindqvistP12", params, Cp, integrand, assemble, gap=(-1.0, -Cp, 1.0)), dom, q)


def eta_from_equality(G, rho, F, p: float = 2.0) -> ScalarField:
    """eta = -L_{p,rho} F / F^{p-1} (values only)."""

    def fn(x, order):
        if order > 0:
            raise EvaluationError("eta_from_equality provides values only")
        sF = calculus.sample(G, F, x, 2)
        sr = calculus.sample(G, rho, x, 1)
        val, _ = calculus.weighted_plap_values(sF, sr, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            return Jet(-val / sF.val ** (p - 1))

    return ScalarField(fn, G.n, label=f"eta[-L F/F]({F.label})")


class RemainderResult(tuple):
    """(lhs, rhs, gap) with the combined quadrature error in ``err``."""

    def __new__(cls, lhs, rhs, gap, err, report=None):
        obj = super().__new__(cls, (lhs, rhs, gap))
        obj.err = err
        obj.report = report
        return obj

    lhs = property(lambda self: self[0])
    rhs = property(lambda self: self[1])
    gap = property(lambda self: self[2])


def remainder_identity_p2(G, f, rho, F, eta, dom, q) -> RemainderResult:
    """||rho^{1/2} F grad(f/F)||^2 against ||rho^{1/2} grad f||^2 - ||eta^{1/2} f||^2."""
    _admissible(G, f, dom, away=False)
    sup = f.support
    # F must not vanish where f lives
    verify_F = sup.box is not None
    if verify_F:
        n = len(sup.box)
        k = max(3, int(round(4.0e3 ** (1.0 / n))))
        axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k for lo, hi in sup.box]
        pts = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
        Fv = F(pts)
        fv = f(pts)
        if np.any((fv != 0) & (Fv == 0)):
            i = int(np.argmax((fv != 0) & (Fv == 0)))
            raise ConfigurationError(f"F vanishes on the support of f at {pts[i].tolist()}")

    def integrand(x):
        return _weighted_columns(G, f, rho, F, eta, 2.0, x, lambda rv, xn, wn: rv * wn**2, signed_eta=True)

    def assemble(v):
        return v[1], v[2] - v[0]

    plan = Plan("RemainderP2", _labels(G, f, p=2.0, N=G.N, rho=rho.label, F=F.label, eta=eta.label), 1.0, integrand, assemble)
    plan.nonneg = [False, True, True]
    plan.gap = (-1.0, -1.0, 1.0)
    rep = run_plan(plan, dom, q)
    return RemainderResult(rep.lhs, rep.rhs, abs(rep.lhs - rep.rhs), rep.quad_err, rep)
