"""Sharpness probes along cutoff extremizer sequences.

The cutoff extremizers are products h(|x'|) chi(x'') whose radii span many
orders of magnitude, which a box quadrature cannot resolve.  On groups where
the horizontal gradient of such a product only depends on (|x'|, x'') the
integrals reduce to (u, x'') with u = log|x'| and measure
|S^{N-1}| e^{uN} du dx''.  This holds on abelian groups, on every step-2
group with N = 2 and on groups of Heisenberg type; for other groups a
``dom`` must be given and the probe falls back to the box quadrature.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .calculus import sample
from .fields import EvaluationError
from .groups import StratifiedGroup, abelian, group_from_spec
from .inequalities.core import InequalityCase, Plan, _jsonable, run_plan
from .inequalities.checks import plan_badiale_tarantello, plan_ckn, plan_hardy, plan_weighted_hardy
from .quadrature import ConfigurationError, DomainSpec, QuadratureSpec
from .test_functions import CutoffFamily, cutoff_extremizer, extremizer, extremizer_exponent

__all__ = [
    "SHARPNESS_TOL",
    "PROBE_CASES",
    "equality_condition_residual",
    "RatioPoint",
    "RatioTrace",
    "sharpness_probe",
    "probe_family",
    "isotropic",
]

SHARPNESS_TOL = 0.05
PROBE_CASES = ("CKN", "WeightedHardy", "Hardy", "BadialeTarantello")


# -- pointwise equality condition ------------------------------------------------

def equality_condition_residual(G: StratifiedGroup, alpha, beta, p, x):
    """Relative gap between |p/(N-gamma)|^p |grad_H g|^p / r^{alpha p} and
    |g|^p / r^{beta p/(p-1)} for the extremizer g at x."""
    N = G.N
    C, _ = extremizer_exponent(alpha, beta, p, N)
    pts = np.atleast_2d(G.check_point(x))
    r = np.linalg.norm(pts[:, :N], axis=1)
    if np.any(r == 0):
        raise EvaluationError("equality condition needs x' != 0")
    g = extremizer(alpha, beta, p, N, G.n)
    s = sample(G, g, pts, order=1)
    lhs = (s.hgrad_norm / C) ** p * r ** (-alpha * p)
    rhs = np.abs(s.val) ** p * r ** (-beta * p / (p - 1))
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    res = np.where(scale > 0, np.abs(lhs - rhs) / np.where(scale > 0, scale, 1.0), 0.0)
    return float(res[0]) if np.ndim(x) == 1 else res


# -- traces --------------------------------------------------------------------------

@dataclass
class RatioPoint:
    j: int
    eps: float
    R: float
    lhs: float
    rhs: float
    ratio: float
    quad_err: float
    converged: bool


@dataclass
class RatioTrace:
    case: dict
    family: dict
    points: list[RatioPoint] = field(default_factory=list)
    tol: float = SHARPNESS_TOL
    truncated: bool = False

    @property
    def ratios(self) -> np.ndarray:
        return np.array([pt.ratio for pt in self.points])

    @property
    def final_ratio(self) -> float:
        return self.points[-1].ratio if self.points else float("nan")

    @property
    def success(self) -> bool:
        return bool(self.points) and not self.truncated and self.final_ratio >= 1.0 - self.tol

    @property
    def bounded(self) -> bool:
        """No ratio above 1 + 2 quad_err."""
        return all(pt.ratio <= 1.0 + 2.0 * pt.quad_err for pt in self.points)

    @property
    def monotone(self) -> bool:
        """Ratios nondecreasing in j up to twice the quadrature error."""
        pts = self.points
        return all(b.ratio >= a.ratio - 2.0 * (a.quad_err + b.quad_err) for a, b in zip(pts, pts[1:]))

    def to_dict(self) -> dict:
        return _jsonable({
            "case": self.case,
            "family": self.family,
            "tol": self.tol,
            "truncated": self.truncated,
            "success": self.success,
            "bounded": self.bounded,
            "monotone": self.monotone,
            "final_ratio": self.final_ratio,
            "points": [asdict(pt) for pt in self.points],
        })

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "eps", "R", "lhs", "rhs", "ratio"])
        for pt in self.points:
            w.writerow([pt.j, repr(pt.eps), repr(pt.R), repr(pt.lhs), repr(pt.rhs), repr(pt.ratio)])
        return buf.getvalue()


# -- log-radial quadrature ---------------------------------------------------------

def isotropic(G: StratifiedGroup, tol: float = 1e-12) -> bool:
    """True when |sum_s a_s B_s w| is the same for all unit w and all a.

    That is the case iff every B_s^T B_s and every B_s^T B_t + B_t^T B_s is a
    multiple of the identity.
    """
    if G.step == 1 or G.N == 2:
        return True
    B = G.B
    eye = np.eye(G.N)
    for s in range(B.shape[0]):
        for t in range(s, B.shape[0]):
            M = B[s].T @ B[t] + B[t].T @ B[s]
            c = np.trace(M) / G.N
            if np.abs(M - c * eye).max() > tol * max(1.0, abs(c)):
                return False
    return True


def _gauss_panels(lo: float, hi: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _height_nodes(T: float, order: int, refine: int):
    # the height cutoff is 1 on [-T, T] and decays on T <= |t| <= 2T
    parts = [(-2 * T, -T, refine), (-T, T, max(1, refine // 2)), (T, 2 * T, refine)]
    ns, ws = zip(*(_gauss_panels(a, b, k, order) for a, b, k in parts))
    return np.concatenate(ns), np.concatenate(ws)


def _log_radial_integrals(plan: Plan, N: int, n: int, u_lo, u_hi, T, panels, order, refine):
    u, wu = _gauss_panels(u_lo, u_hi, panels, order)
    sphere = 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)
    grids = [u] + [None] * (n - N)
    weights = [wu * sphere * np.exp(N * u)]
    if n > N:
        t, wt = _height_nodes(T, order, refine)
        grids[1:] = [t] * (n - N)
        weights += [wt] * (n - N)
    mesh = np.meshgrid(*grids, indexing="ij")
    wmesh = np.meshgrid(*weights, indexing="ij")
    W = np.prod(np.stack([w.ravel() for w in wmesh]), axis=0)
    pts = np.zeros((W.size, n))
    pts[:, 0] = np.exp(mesh[0].ravel())
    for i in range(n - N):
        pts[:, N + i] = mesh[1 + i].ravel()
    vals = np.asarray(plan.integrand(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ArithmeticError("non-finite integrand in the log-radial quadrature")
    return W @ vals


def probe_family(case: InequalityCase):
    """(group, N, alpha, beta, p) of the extremizer family behind ``case``."""
    if case.tag not in PROBE_CASES:
        raise ConfigurationError(f"no sharpness probe for {case.tag}; supported: {', '.join(PROBE_CASES)}")
    P = case.params
    if case.tag == "BadialeTarantello":
        n, N = int(case.require("n")[0]), int(case.require("N")[0])
        if not 1 <= N <= n:
            raise ConfigurationError(f"Badiale-Tarantello needs 1 <= N <= n, got N={N}, n={n}")
        G = abelian(n)
    else:
        G = P.get("group")
        if G is None:
            raise ConfigurationError(f"{case.tag}: sharpness probe needs a group")
        if not isinstance(G, StratifiedGroup):
            G = group_from_spec(G)
        N = G.N
    p = float(case.require("p")[0])
    if case.tag in ("CKN", "BadialeTarantello"):
        alpha, beta = (float(v) for v in case.require("alpha", "beta"))
    elif case.tag == "WeightedHardy":
        alpha = float(case.require("alpha")[0])
        beta = (alpha + 1.0) * (p - 1.0)
    else:
        if not p < N:
            raise ConfigurationError(f"Hardy sharpness needs p < N = {N} (use critical-hardy for p = N)")
        alpha, beta = 0.0, p - 1.0
    if alpha + beta + 1.0 == N:
        raise ConfigurationError(f"{case.tag}: gamma = N = {N}, the sharp constant is 0 and nothing can be normalized")
    return G, N, alpha, beta, p


def _plan_for(case, G, N, f, alpha, beta, p) -> Plan:
    if case.tag == "CKN":
        return plan_ckn(G, f, alpha, beta, p)
    if case.tag == "BadialeTarantello":
        return plan_badiale_tarantello(G.n, N, f, alpha, beta, p)
    if case.tag == "WeightedHardy":
        return plan_weighted_hardy(G, f, alpha, p)
    return plan_hardy(G, f, p)


def _probe_one(case, fam, j, G, N, alpha, beta, p, dom, q) -> RatioPoint:
    f = cutoff_extremizer(alpha, beta, p, N, fam, j, G.n, signed=True)
    plan = _plan_for(case, G, N, f, alpha, beta, p)
    if dom is not None:
        rep = run_plan(plan, dom, q)
        lhs, rhs = rep.lhs, rep.rhs
        rel = rep.lhs_err / max(abs(lhs), 1e-300) + rep.rhs_err / max(abs(rhs), 1e-300)
        converged = bool(rep.diagnostics.get("converged", True))
    else:
        u_lo, u_hi = math.log(fam.eps(j)), math.log(fam.R(j))
        # panels of width at most log(2) / (4 base_cells_per_axis) in u
        panels = max(8, math.ceil(4 * (u_hi - u_lo) * q.base_cells_per_axis / math.log(2.0)))
        refine = max(2, q.base_cells_per_axis)
        T = fam.height(j)
        fine = _log_radial_integrals(plan, N, G.n, u_lo, u_hi, T, 2 * panels, q.order, 2 * refine)
        coarse = _log_radial_integrals(plan, N, G.n, u_lo, u_hi, T, panels, q.order, refine)
        (lhs, rhs) = plan.assemble(fine)
        (lc, rc) = plan.assemble(coarse)
        el, er = abs(lhs - lc), abs(rhs - rc)
        rel = el / max(abs(lhs), 1e-300) + er / max(abs(rhs), 1e-300)
        converged = el <= max(q.abs_tol, q.rel_tol * abs(lhs)) and er <= max(q.abs_tol, q.rel_tol * abs(rhs))
    ratio = lhs / rhs if rhs > 0 else float("nan")
    return RatioPoint(j, fam.eps(j), fam.R(j), float(lhs), float(rhs), float(ratio), float(abs(ratio) * rel), bool(converged))


def sharpness_probe(
    case: InequalityCase,
    fam: CutoffFamily | None = None,
    j_max: int = 6,
    dom: DomainSpec | None = None,
    q: QuadratureSpec | None = None,
    tol: float = SHARPNESS_TOL,
) -> RatioTrace:
    """Normalized ratios lhs/rhs on the cutoff extremizers j = 1..j_max.

    The statements carry their constant on the side where it belongs, so
    lhs/rhs <= 1 and the sharp value is 1.  Without ``dom`` the log-radial
    quadrature is used; its error estimate compares two panel counts.  The
    trace stops at the first j whose integrals did not converge.
    """
    fam = CutoffFamily() if fam is None else fam
    q = QuadratureSpec(order=8, base_cells_per_axis=2, rel_tol=1e-4) if q is None else q
    if int(j_max) < 1:
        raise ConfigurationError("j_max must be at least 1")
    G, N, alpha, beta, p = probe_family(case)
    if dom is None and not isotropic(G):
        raise ConfigurationError(f"{G} is not of Heisenberg type; give a box domain for the probe")
    js = range(1, int(j_max) + 1)

    def job(j):
        return _probe_one(case, fam, j, G, N, alpha, beta, p, dom, q)

    if q.workers > 1:
        with ThreadPoolExecutor(max_workers=q.workers) as pool:
            pts = list(pool.map(job, js))
    else:
        pts = [job(j) for j in js]
    truncated = False
    kept = []
    for pt in pts:
        kept.append(pt)
        if not pt.converged:
            truncated = True
            break
    params = {k: v for k, v in case.params.items() if k != "group"}
    params["group"] = str(G)
    case_d = {"tag": case.tag, "params": {**params, "alpha": alpha, "beta": beta, "p": p, "N": N}}
    return RatioTrace(case_d, asdict(fam), kept, tol, truncated)
