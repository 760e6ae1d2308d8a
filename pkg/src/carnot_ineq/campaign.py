"""Execution of campaign configs: identity grids, checks and probes.

Every task is built and validated before anything runs, so a config error
never leaves half-written reports behind.  Tasks run on a thread pool and the
results are assembled in config order; reports carry no timing data, which
keeps them identical across thread counts.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import jets
from .calculus import identity_residuals
from .config import (
    build_domain,
    build_family,
    build_fields,
    build_group,
    build_pair,
    build_quadrature,
    derive_seed,
    load_config,
)
from .fields import ScalarField
from .groups import StratifiedGroup
from .inequalities import (
    HOLDS,
    HOLDS_WITHIN_TOLERANCE,
    INCONCLUSIVE,
    VIOLATED,
    InequalityCase,
    InequalityReport,
    check_abstract_critical,
    check_badiale_tarantello,
    check_ckn,
    check_critical_hardy,
    check_hardy,
    check_hardy_rellich,
    check_higher_order,
    check_lindqvist_p12,
    check_poincare,
    check_rellich_corollary,
    check_uncertainty,
    check_weighted_hardy,
    check_weighted_plap,
    davies_identity,
    eta_from_equality,
    remainder_identity_p2,
)
from .quadrature import ConfigurationError
from .sharpness import RatioTrace, probe_family, sharpness_probe
from .test_functions import builtin_g

__all__ = [
    "TIMESTAMP_KEY",
    "IDENTITY_THRESHOLD",
    "Task",
    "identity_table",
    "prepare_checks",
    "run_checks",
    "prepare_probes",
    "run_probes",
    "run",
    "write_json",
    "payload",
    "default_threads",
]

log = logging.getLogger(__name__)

TIMESTAMP_KEY = "generated_at"
IDENTITY_THRESHOLD = 1e-9
DEFAULT_GAMMAS = (-3.0, -1.0, 0.0, 0.5, 2.0)


def default_threads() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


def _stamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def payload(doc: dict) -> dict:
    """A report document without its timestamp."""
    return {k: v for k, v in doc.items() if k != TIMESTAMP_KEY}


def write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def _pool_map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- identities ----------------------------------------------------------------------

def identity_table(groups, gammas=DEFAULT_GAMMAS, points: int = 100, seed: int = 0, include_N: bool = True, radius: float = 2.0):
    """Max gradient/divergence identity residuals per (group, gamma).

    Points are drawn uniformly in [-radius, radius]^n with |x'| >= 1e-3.
    """
    rows = []
    for gi, G in enumerate(groups):
        rng = np.random.default_rng(derive_seed(seed, 0, gi))
        x = rng.uniform(-radius, radius, size=(points, G.n))
        r = np.linalg.norm(x[:, : G.N], axis=1)
        small = r < 1e-3
        x[small, 0] += 1e-3 + radius / 2
        gs = list(gammas) + ([float(G.N)] if include_N and float(G.N) not in gammas else [])
        for gamma in gs:
            rg, rd = identity_residuals(G, float(gamma), x)
            rows.append(
                {"group": str(G), "gamma": float(gamma), "points": points, "grad_residual": float(np.max(rg)), "div_residual": float(np.max(rd))}
            )
    return rows


def _identities_doc(section: dict, seed: int, groups=None) -> dict:
    groups = groups or [build_group(g) for g in section.get("groups", ["heisenberg:1"])]
    gammas = tuple(float(g) for g in section.get("gammas", DEFAULT_GAMMAS))
    thr = float(section.get("threshold", IDENTITY_THRESHOLD))
    rows = identity_table(groups, gammas, int(section.get("points", 100)), seed, bool(section.get("include_N", True)), float(section.get("radius", 2.0)))
    worst = max(max(r["grad_residual"], r["div_residual"]) for r in rows)
    return {"seed": seed, "threshold": thr, "max_residual": worst, "passed": bool(worst <= thr), "rows": rows}


# -- checks ----------------------------------------------------------------------------

@dataclass
class Task:
    index: int
    label: str
    fn: Callable[[], object]


def _one(n: int) -> ScalarField:
    return ScalarField(lambda x, order: jets.constant(1.0, x.shape[0], x.shape[1], order), n, label="1")


def _guards(tag: str, P: dict, G: StratifiedGroup):
    """Parameter guards that can be decided before any integration."""
    N = G.N
    p = P.get("p")
    if p is not None and not float(p) > 1:
        raise ConfigurationError(f"{tag}: p must exceed 1, got {p}")
    if tag == "Hardy" and float(p) == N:
        raise ConfigurationError(f"Hardy with p = N = {N} has no constant: use critical-hardy")
    if tag == "RellichCorollary" and float(p) == N:
        raise ConfigurationError(f"RellichCorollary with p = N = {N} has no constant: use critical-hardy")
    if tag in ("CriticalHardy", "AbstractCritical", "PoincareLN") and N < 2:
        raise ConfigurationError(f"{tag} needs N >= 2")
    if tag == "HigherOrderCKN" and (int(P.get("k", 0)) > 1 or int(P.get("m", 0)) > 1):
        raise ConfigurationError("HigherOrderCKN: only k, m <= 1 are available")
    if tag == "WeightedPLap" and not float(p) >= 2:
        raise ConfigurationError(f"WeightedPLap needs p >= 2, got {p}")
    if tag == "LindqvistP12" and not 1 < float(p) < 2:
        raise ConfigurationError(f"LindqvistP12 needs 1 < p < 2, got {p}")
    if tag == "RemainderP2" and p is not None and float(p) != 2:
        raise ConfigurationError("RemainderP2 is the p = 2 identity")


def _req(P: dict, tag: str, *keys):
    missing = [k for k in keys if k not in P]
    if missing:
        raise ConfigurationError(f"{tag}: missing parameter(s) {', '.join(missing)}")
    return [P[k] for k in keys]


def _check_runner(tag: str, P: dict, G: StratifiedGroup, check: dict, dom, q, seed: int, index: int):
    """Callable f -> report for field-based tags."""
    omega = build_domain(check["omega"]) if "omega" in check else dom
    if tag == "CKN":
        a, b, p = _req(P, tag, "alpha", "beta", "p")
        return lambda f: check_ckn(G, f, a, b, p, dom, q)
    if tag == "WeightedHardy":
        a, p = _req(P, tag, "alpha", "p")
        return lambda f: check_weighted_hardy(G, f, a, p, dom, q)
    if tag == "Hardy":
        (p,) = _req(P, tag, "p")
        return lambda f: check_hardy(G, f, p, dom, q)
    if tag == "BadialeTarantello":
        n, N, a, b, p = _req(P, tag, "n", "N", "alpha", "beta", "p")
        return lambda f: check_badiale_tarantello(int(n), int(N), f, a, b, p, dom, q)
    if tag in ("UncertaintyHPW", "UncertaintyPLap"):
        (p,) = _req(P, tag, "p")
        kind = P.get("kind", "UP1p" if tag == "UncertaintyPLap" else "1UP1p")
        alpha = float(P.get("alpha", 0.0))
        return lambda f: check_uncertainty(G, f, p, kind, dom, q, alpha)
    if tag == "CriticalHardy":
        return lambda f: check_critical_hardy(G, omega, f, dom, q)
    if tag == "AbstractCritical":
        g = builtin_g(P.get("g", "neglog"), G.N)
        return lambda f: check_abstract_critical(G, omega, f, g, dom, q)
    if tag in ("PoincareLN", "PoincareLp"):
        p = P.get("p", G.N if tag == "PoincareLN" else None)
        if p is None:
            raise ConfigurationError("PoincareLp: missing parameter(s) p")
        variant = "LN" if tag == "PoincareLN" else "Lp"
        return lambda f: check_poincare(G, omega, f, p, dom, q, variant)
    if tag == "HigherOrderCKN":
        a, b, p = _req(P, tag, "alpha", "beta", "p")
        k, m = int(P.get("k", 1)), int(P.get("m", 0))
        return lambda f: check_higher_order(G, f, a, b, p, k, m, dom, q)
    if tag == "HardyRellich":
        a, b, p = _req(P, tag, "alpha", "beta", "p")
        return lambda f: check_hardy_rellich(G, f, a, b, p, dom, q)
    if tag == "RellichCorollary":
        (p,) = _req(P, tag, "p")
        return lambda f: check_rellich_corollary(G, f, p, dom, q)
    if tag in ("WeightedPLap", "LindqvistP12", "RemainderP2"):
        p = float(P.get("p", 2.0))
        pair = check.get("pair", {"kind": "paraboloid"})
        F, eta = build_pair(pair, p, G.N, G.n)
        rho = _one(G.n)
        if tag == "RemainderP2":
            eta2 = eta_from_equality(G, rho, F, 2.0)

            def rem(f):
                res = remainder_identity_p2(G, f, rho, F, eta2, dom, q)
                rep = res.report
                rep.diagnostics["gap"] = float(res.gap)
                return rep

            return rem
        Cp = P.get("C_p")
        fn = check_weighted_plap if tag == "WeightedPLap" else check_lindqvist_p12
        return lambda f: fn(G, f, rho, F, eta, p, dom, q, Cp)
    raise ConfigurationError(f"{tag} is not a field check")


def _davies_tasks(P: dict, seed: int, index: int):
    if "z" in P:
        z = complex(*P["z"]) if isinstance(P["z"], (list, tuple)) else complex(P["z"])
        p = float(_req(P, "DaviesIdentity", "p")[0])
        pairs = [(z, p)]
    else:
        count = int(P.get("count", 10))
        rng = np.random.default_rng(derive_seed(seed, index))
        pmin, pmax = P.get("p_range", [1.0, 5.0])
        pairs = [(complex(*rng.normal(size=2)), float(rng.uniform(pmin, pmax))) for _ in range(count)]
    tol = float(P.get("tol", 1e-8))

    def job(zp):
        z, p = zp
        res = davies_identity(z, p)
        verdict = HOLDS if res.gap <= tol else VIOLATED
        return InequalityReport(
            "DaviesIdentity", {"z": [z.real, z.imag], "p": p, "tol": tol}, res.lhs, res.rhs, 1.0,
            (res.rhs - res.lhs) / max(abs(res.rhs), 1e-300), 0.0, verdict, diagnostics={"gap": res.gap},
        )

    return pairs, job


def prepare_checks(cfg: dict, seed: int, q_override: dict | None = None) -> list[Task]:
    """Build and validate every check of the config; nothing is evaluated."""
    tasks: list[Task] = []
    default_group = cfg.get("group", "heisenberg:1")
    for ci, check in enumerate(cfg.get("checks", [])):
        case = InequalityCase(check["case"]["tag"], check["case"].get("params", {}))
        tag, P = case.tag, case.params
        q = build_quadrature(cfg.get("quadrature"), check.get("quadrature"), q_override)
        if tag == "DaviesIdentity":
            pairs, job = _davies_tasks(P, seed, ci)
            tasks += [Task(ci, f"{ci}:{tag}[{k}]", (lambda zp=zp: job(zp))) for k, zp in enumerate(pairs)]
            continue
        if tag == "BadialeTarantello":
            n, N = (int(v) for v in _req(P, tag, "n", "N"))
            G = build_group(f"abelian:{n}")
        else:
            G = build_group(check.get("group", default_group))
            N, n = G.N, G.n
        _guards(tag, P, G)
        batch = build_fields(check.get("field", {"family": "random"}), N, n, seed, ci)
        dom = build_domain(check["domain"]) if "domain" in check else batch.domain
        for f in batch.fields:
            sup = f.support
            if sup.box is not None and not sup.contains_box(dom.box):
                raise ConfigurationError(f"checks/{ci}/domain: box does not contain the support of {f.label}")
        runner = _check_runner(tag, P, G, check, dom, q, seed, ci)
        for k, f in enumerate(batch.fields):
            tasks.append(Task(ci, f"{ci}:{tag}:{f.label}", (lambda f=f: runner(f))))
    return tasks


def _run_task(t: Task) -> dict:
    rep = t.fn()
    d = rep.to_dict()
    d["check"] = t.index
    d["label"] = t.label
    return d


def run_checks(tasks: list[Task], threads: int = 1) -> dict:
    reports = _pool_map(_run_task, tasks, threads)
    counts = {v: 0 for v in (HOLDS, HOLDS_WITHIN_TOLERANCE, VIOLATED, INCONCLUSIVE)}
    for r in reports:
        counts[r["verdict"]] = counts.get(r["verdict"], 0) + 1
    return {"summary": counts, "reports": reports}


# -- sharpness -------------------------------------------------------------------------

def prepare_probes(cfg: dict, q_override: dict | None = None) -> list[Task]:
    tasks = []
    default_group = cfg.get("group")
    for pi, probe in enumerate(cfg.get("sharpness", [])):
        params = dict(probe["case"].get("params", {}))
        if probe["case"]["tag"] != "BadialeTarantello":
            params.setdefault("group", probe.get("group", default_group))
        case = InequalityCase(probe["case"]["tag"], params)
        probe_family(case)
        fam = build_family(probe.get("family"))
        j_max = int(probe.get("j_max", 6))
        tol = float(probe.get("tol", 0.05))
        dom = build_domain(probe["domain"]) if "domain" in probe else None
        base = {"order": 8, "base_cells_per_axis": 2, "rel_tol": 1e-4}
        q = build_quadrature(base, cfg.get("quadrature") if dom is not None else None, probe.get("quadrature"), q_override)
        tasks.append(Task(pi, f"{pi}:{case.tag}", (lambda c=case, fm=fam, j=j_max, d=dom, qq=q, t=tol: sharpness_probe(c, fm, j, d, qq, t))))
    return tasks


def run_probes(tasks: list[Task], threads: int = 1) -> list[RatioTrace]:
    return _pool_map(lambda t: t.fn(), tasks, threads)


# -- whole campaign -----------------------------------------------------------------------

def run(config_path, out_dir=None, seed: int | None = None, threads: int | None = None, sections=None) -> int:
    """Execute a config; returns the exit code (0 ok, 1 config error, 2 violated)."""
    try:
        cfg = load_config(config_path)
        run_seed = int(cfg.get("seed", 0) if seed is None else seed)
        threads = default_threads() if threads is None else max(1, int(threads))
        out = Path(out_dir or cfg.get("output_dir", "reports"))
        sections = sections or ("identities", "checks", "sharpness")
        pending = {}
        if "identities" in sections and "identities" in cfg:
            pending["identities"] = cfg["identities"]
        if "checks" in sections and cfg.get("checks"):
            pending["checks"] = prepare_checks(cfg, run_seed)
        if "sharpness" in sections and cfg.get("sharpness"):
            pending["sharpness"] = prepare_probes(cfg)
        if not pending:
            raise ConfigurationError(f"config has no {' / '.join(sections)} section to run")
        status = 0
        if "identities" in pending:
            doc = _identities_doc(pending["identities"], run_seed)
            write_json(out / "identities.json", {TIMESTAMP_KEY: _stamp(), **doc})
            log.info("identities: max residual %.3e", doc["max_residual"])
            if not doc["passed"]:
                status = 2
        if "checks" in pending:
            doc = run_checks(pending["checks"], threads)
            doc = {"seed": run_seed, "config": Path(config_path).name, **doc}
            write_json(out / "report.json", {TIMESTAMP_KEY: _stamp(), **doc})
            log.info("checks: %s", doc["summary"])
            if doc["summary"].get(VIOLATED, 0):
                status = 2
        if "sharpness" in pending:
            traces = run_probes(pending["sharpness"], threads)
            for k, tr in enumerate(traces):
                write_json(out / f"trace-{k}.json", {TIMESTAMP_KEY: _stamp(), **tr.to_dict()})
                (out / f"trace-{k}.csv").write_text(tr.to_csv())
                log.info("sharpness %d: final ratio %.4f (success=%s)", k, tr.final_ratio, tr.success)
                if not tr.bounded:
                    status = 2
        return status
    except ConfigurationError as exc:
        log.error("configuration error: %s", exc)
        return 1
