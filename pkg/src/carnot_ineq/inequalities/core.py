"""Cases, reports and the shared evaluation engine of the checks."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..quadrature import ConfigurationError, DomainSpec, IntegralValue, QuadratureSpec, integrate_many

__all__ = [
    "TAGS",
    "HOLDS",
    "HOLDS_WITHIN_TOLERANCE",
    "VIOLATED",
    "INCONCLUSIVE",
    "InequalityCase",
    "InequalityReport",
    "verdict_for",
    "Plan",
    "run_plan",
    "power_weight",
]

TAGS = (
    "CKN",
    "WeightedHardy",
    "Hardy",
    "BadialeTarantello",
    "UncertaintyHPW",
    "CriticalHardy",
    "AbstractCritical",
    "PoincareLN",
    "PoincareLp",
    "HigherOrderCKN",
    "HardyRellich",
    "RellichCorollary",
    "UncertaintyPLap",
    "WeightedPLap",
    "RemainderP2",
    "LindqvistP12",
    "DaviesIdentity",
)

HOLDS = "Holds"
HOLDS_WITHIN_TOLERANCE = "HoldsWithinTolerance"
VIOLATED = "Violated"
INCONCLUSIVE = "Inconclusive"

TINY = 1e-300


@dataclass(frozen=True)
class InequalityCase:
    """A tag plus the parameters of the statement it refers to."""

    tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ConfigurationError(f"unknown inequality tag {self.tag!r}")
        object.__setattr__(self, "params", dict(self.params))

    def get(self, key, default=None):
        return self.params.get(key, default)

    def require(self, *keys):
        missing = [k for k in keys if k not in self.params]
        if missing:
            raise ConfigurationError(f"{self.tag}: missing parameter(s) {', '.join(missing)}")
        return [self.params[k] for k in keys]

    @property
    def gamma(self) -> float:
        if "gamma" in self.params:
            return float(self.params["gamma"])
        a, b = self.require("alpha", "beta")
        return float(a) + float(b) + 1.0

    def to_dict(self) -> dict:
        return {"tag": self.tag, "params": _jsonable(self.params)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def verdict_for(lhs, rhs, lhs_err, rhs_err, converged=True, singular=0, combined_err=None) -> str:
    """Classify lhs <= rhs given the error bars of both sides.

    Holds when rhs - lhs >= lhs_err + rhs_err; HoldsWithinTolerance when the
    difference lies within the combined error; Violated below that.  A
    check that met undefined operator values, or whose quadrature did not
    converge while the margin is not already safe, is Inconclusive.
    ``combined_err`` replaces lhs_err + rhs_err when a direct estimate of the
    error of rhs - lhs is available.
    """
    d = rhs - lhs
    c = lhs_err + rhs_err if combined_err is None else combined_err
    if not (math.isfinite(d) and math.isfinite(c)):
        return INCONCLUSIVE
    if singular:
        return INCONCLUSIVE
    if d >= c:
        return HOLDS
    if not converged:
        return INCONCLUSIVE
    if d >= -c:
        return HOLDS_WITHIN_TOLERANCE
    return VIOLATED


@dataclass
class InequalityReport:
    case: str
    params: dict
    lhs: float
    rhs: float
    constant: float
    margin: float
    quad_err: float
    verdict: str
    lhs_err: float = 0.0
    rhs_err: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.verdict in (HOLDS, HOLDS_WITHIN_TOLERANCE)

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "case": self.case,
                "params": self.params,
                "lhs": self.lhs,
                "rhs": self.rhs,
                "constant": self.constant,
                "margin": self.margin,
                "quad_err": self.quad_err,
                "verdict": self.verdict,
                "diagnostics": {"lhs_err": self.lhs_err, "rhs_err": self.rhs_err, **self.diagnostics},
            }
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def make(
        cls, case, params, lhs, rhs, constant, lhs_err=0.0, rhs_err=0.0, converged=True, singular=0, diagnostics=None,
        combined_err=None,
    ):
        lhs, rhs = float(lhs), float(rhs)
        margin = (rhs - lhs) / max(abs(rhs), TINY)
        c = lhs_err + rhs_err if combined_err is None else combined_err
        return cls(
            case,
            dict(params),
            lhs,
            rhs,
            float(constant),
            margin,
            float(c),
            verdict_for(lhs, rhs, lhs_err, rhs_err, converged, singular, c),
            float(lhs_err),
            float(rhs_err),
            dict(diagnostics or {}),
        )


def power_weight(a: np.ndarray, r: np.ndarray, e: float) -> np.ndarray:
    """a * r^-e with 0 wherever a == 0 (so 0 * inf never appears)."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(a == 0, 0.0, a * r ** (-e))


class Counter:
    """Thread-safe tally of special nodes seen by an integrand."""

    def __init__(self):
        self._lock = threading.Lock()
        self.counts: dict[str, int] = {}

    def add(self, name: str, k: int):
        if k:
            with self._lock:
                self.counts[name] = self.counts.get(name, 0) + int(k)

    def __getitem__(self, name):
        return self.counts.get(name, 0)


@dataclass
class Plan:
    """Integrand columns plus the map from their integrals to (lhs, rhs)."""

    case: str
    params: dict
    constant: float
    integrand: Callable[[np.ndarray], np.ndarray]
    assemble: Callable[[np.ndarray], tuple[float, float]]
    counter: Counter = field(default_factory=Counter)
    # columns whose integrals are nonnegative by construction
    nonneg: Sequence[bool] | None = None
    # weights w with rhs - lhs = sum_k w_k v_k, for plans linear in the columns;
    # the combination is then integrated as its own column so that the
    # cancellation between the sides also cancels in the error estimate
    gap: Sequence[float] | None = None


def _propagate(assemble, vals, errs, nonneg):
    """First-order worst-case error bars of lhs and rhs."""
    base = np.asarray(assemble(vals), dtype=float)
    dev = np.zeros(2)
    for k in range(len(vals)):
        if errs[k] == 0:
            continue
        for sgn in (-1.0, 1.0):
            v = vals.copy()
            v[k] = v[k] + sgn * errs[k]
            if nonneg[k]:
                v[k] = max(v[k], 0.0)
            out = np.asarray(assemble(v), dtype=float)
            dev = dev + 0.5 * np.abs(out - base)
    return base, dev


def run_plan(plan: Plan, dom: DomainSpec, q: QuadratureSpec, strict_singular: bool = False) -> InequalityReport:
    integrand = plan.integrand
    if plan.gap is not None:
        w = np.asarray(plan.gap, dtype=float)

        def integrand(x):
            cols = plan.integrand(x)
            return np.concatenate([cols, (cols @ w)[:, None]], axis=1)

    ivals: list[IntegralValue] = integrate_many(integrand, dom, q)
    gap_iv = ivals.pop() if plan.gap is not None else None
    vals = np.array([iv.value for iv in ivals])
    errs = np.array([iv.err_estimate for iv in ivals])
    nonneg = plan.nonneg if plan.nonneg is not None else [True] * len(vals)
    vals = np.array([max(v, 0.0) if nn else v for v, nn in zip(vals, nonneg)])
    (lhs, rhs), (lerr, rerr) = _propagate(plan.assemble, vals, errs, nonneg)
    converged = all(iv.converged for iv in ivals)
    singular = plan.counter["undefined"]
    low = plan.counter["low_gradient"]
    if strict_singular:
        singular += low
    diag = {
        "cells": ivals[0].cells_used if ivals else 0,
        "converged": converged,
        "integrals": [float(v) for v in vals],
        "integral_errs": [float(e) for e in errs],
    }
    combined = None
    if gap_iv is not None:
        combined = min(float(lerr + rerr), gap_iv.err_estimate)
        converged = converged and gap_iv.converged
        diag["converged"] = converged
        diag["gap_integral"] = gap_iv.value
        diag["gap_err"] = gap_iv.err_estimate
    if low:
        diag["low_gradient_points"] = low
    if plan.counter["undefined"]:
        diag["undefined_points"] = plan.counter["undefined"]
    return InequalityReport.make(
        plan.case, plan.params, lhs, rhs, plan.constant, lerr, rerr, converged, singular, diag, combined
    )


def zero_report(case: str, params: dict, constant: float, reason: str) -> InequalityReport:
    return InequalityReport.make(case, params, 0.0, 0.0, constant, diagnostics={"note": reason})
