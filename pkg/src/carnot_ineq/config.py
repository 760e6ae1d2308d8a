"""Campaign configs: loading, schema validation and object builders."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .fields import ScalarField
from .groups import GroupError, StratifiedGroup, group_from_spec
from .quadrature import ConfigurationError, DomainSpec, QuadratureSpec
from .test_functions import (
    BumpSpec,
    CutoffFamily,
    FamilyError,
    RandomFieldSpec,
    bump,
    paraboloid_pair,
    random_field,
    thetacor_pair,
)

__all__ = [
    "SCHEMA_NAME",
    "load_schema",
    "load_config",
    "validate_config",
    "bundled_config",
    "build_group",
    "build_quadrature",
    "build_domain",
    "build_family",
    "FieldBatch",
    "build_fields",
    "build_pair",
    "derive_seed",
]

SCHEMA_NAME = "config.schema.json"


def _configs_dir():
    return resources.files("carnot_ineq") / "configs"


@lru_cache(maxsize=1)
def load_schema() -> dict:
    return json.loads((_configs_dir() / SCHEMA_NAME).read_text())


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. "identities.json"."""
    path = _configs_dir() / name
    if not path.is_file():
        raise ConfigurationError(f"no bundled config named {name!r}")
    return Path(str(path))


def _where(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate_config(cfg: dict) -> dict:
    """Raise ConfigurationError naming the first failing field."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(list(e.absolute_path)), list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        raise ConfigurationError(f"config field {_where(e)}: {e.message}")
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"config {path}: top level must be an object")
    return validate_config(cfg)


# -- builders ----------------------------------------------------------------------

def build_group(spec) -> StratifiedGroup:
    try:
        return group_from_spec(spec)
    except (GroupError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"group {spec!r}: {exc}") from exc


def build_quadrature(*specs: dict | None) -> QuadratureSpec:
    """Merge quadrature dicts left to right over the defaults."""
    merged: dict = {}
    for s in specs:
        if s:
            merged.update(s)
    try:
        return QuadratureSpec.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"quadrature: {exc}") from exc


def build_domain(spec: dict) -> DomainSpec:
    try:
        return DomainSpec.from_dict(spec)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"domain: {exc}") from exc


def build_family(spec: dict | None) -> CutoffFamily:
    spec = dict(spec or {})
    preset = spec.pop("preset", "default")
    base = CutoffFamily.calibrated() if preset == "calibrated" else CutoffFamily()
    try:
        return CutoffFamily(**{**base.__dict__, **spec})
    except FamilyError as exc:
        raise ConfigurationError(f"family: {exc}") from exc


def derive_seed(seed: int, *path: int) -> int:
    """Independent 63-bit seed for position ``path`` under the campaign seed."""
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), *map(int, path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class FieldBatch:
    fields: list[ScalarField]
    domain: DomainSpec
    seeds: list[int] = field(default_factory=list)


def build_fields(spec: dict, N: int, n: int, seed: int, index: int) -> FieldBatch:
    """Fields of a check and the default domain (their common support box)."""
    spec = dict(spec)
    family = spec.pop("family")
    count = int(spec.pop("count", 1))
    base_seed = spec.pop("seed", None)
    N = int(spec.pop("N", N))
    box = tuple(tuple(b) for b in spec.pop("box", [(-0.5, 0.5)] * (n - N)))
    if N + len(box) != n:
        raise ConfigurationError(f"field: {N} first-stratum coordinates plus {len(box)} box intervals do not give n = {n}")
    try:
        if family == "random":
            rs = RandomFieldSpec(N, box, **spec)
            seeds = [
                derive_seed(seed, index, k) if base_seed is None else int(base_seed) + k for k in range(count)
            ]
            fields = [random_field(s, rs) for s in seeds]
            return FieldBatch(fields, DomainSpec(rs.domain_box, 0.0, N), seeds)
        a, b = float(spec.pop("a", 0.2)), float(spec.pop("b", 1.0))
        bs = BumpSpec(a, b, N, box, **spec)
        f = bump(bs)
        dom_box = tuple((-b, b) for _ in range(N)) + box
        return FieldBatch([f] * count, DomainSpec(dom_box, 0.0, N), [])
    except (FamilyError, TypeError) as exc:
        raise ConfigurationError(f"field: {exc}") from exc


def build_pair(spec: dict, p: float, N: int, n: int):
    """(F, eta) for the weighted checks, with rho = 1."""
    spec = dict(spec)
    kind = spec.pop("kind")
    p = float(spec.pop("p", p))
    try:
        if kind == "thetacor":
            theta = float(spec.get("theta", 2.0 + N - 0.5))
            return thetacor_pair(theta, p, float(spec.get("eps", 0.05)), N, n)
        return paraboloid_pair(float(spec.get("R0", 1.5)), p, N, n, kappa=float(spec.get("kappa", 0.9)))
    except FamilyError as exc:
        raise ConfigurationError(f"pair: {exc}") from exc
