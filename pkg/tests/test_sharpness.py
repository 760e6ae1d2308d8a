"""Equality condition of the extremizers and the cutoff ratio probes."""

import csv
import io
import json

import numpy as np
import pytest

from carnot_ineq.fields import EvaluationError
from carnot_ineq.groups import abelian, dilate, heisenberg
from carnot_ineq.inequalities import InequalityCase
from carnot_ineq.quadrature import ConfigurationError, DomainSpec, QuadratureSpec
from carnot_ineq.sharpness import equality_condition_residual, isotropic, probe_family, sharpness_probe
from carnot_ineq.test_functions import CutoffFamily

from conftest import step2_group


def points_off_axis(G, rng, m=50):
    x = rng.uniform(-2, 2, size=(m, G.n))
    x[:, 0] += np.where(x[:, 0] >= 0, 0.1, -0.1)
    return x


@pytest.mark.parametrize(
    "G,alpha,beta,p",
    [
        (heisenberg(1), -0.5, 0.5, 2.0),  # lambda = 0
        (heisenberg(1), 0.0, 0.5, 3.0),
        (abelian(4), 0.0, 1.0, 2.0),  # gamma = 2, power-law branch
        (heisenberg(2), -0.5, 0.25, 1.5),
        (abelian(3), 0.5, 0.5, 2.0),
    ],
)
def test_equality_condition(G, alpha, beta, p, rng):
    res = equality_condition_residual(G, alpha, beta, p, points_off_axis(G, rng))
    assert res.shape == (50,) and res.max() <= 1e-10


def test_equality_condition_is_dilation_invariant(rng):
    G = heisenberg(1)
    x = points_off_axis(G, rng, 10)
    a = equality_condition_residual(G, 0.0, 0.5, 2.0, x)
    b = equality_condition_residual(G, 0.0, 0.5, 2.0, dilate(G, 3.0, x))
    assert a.max() <= 1e-10 and b.max() <= 1e-10


def test_equality_condition_rejects_axis():
    with pytest.raises(EvaluationError):
        equality_condition_residual(heisenberg(1), 0.0, 0.5, 2.0, [0.0, 0.0, 1.0])


def test_isotropy():
    assert isotropic(heisenberg(2)) and isotropic(abelian(3)) and isotropic(heisenberg(1))
    assert not isotropic(step2_group())


def test_probe_family_guards():
    with pytest.raises(ConfigurationError, match="gamma = N"):
        probe_family(InequalityCase("CKN", dict(group="heisenberg:1", alpha=1.0, beta=0.0, p=2.0)))
    with pytest.raises(ConfigurationError):
        probe_family(InequalityCase("Hardy", dict(group="heisenberg:1", p=2.0)))
    with pytest.raises(ConfigurationError):
        probe_family(InequalityCase("PoincareLN", dict(p=2.0)))
    G, N, a, b, p = probe_family(InequalityCase("WeightedHardy", dict(group="heisenberg:2", alpha=0.0, p=2.0)))
    assert (N, a, b, p) == (4, 0.0, 1.0, 2.0)


def test_step2_needs_a_domain():
    with pytest.raises(ConfigurationError, match="Heisenberg type"):
        sharpness_probe(InequalityCase("Hardy", dict(group=step2_group(), p=2.0)), j_max=1)


@pytest.fixture(scope="module")
def bt_trace():
    case = InequalityCase("BadialeTarantello", dict(n=3, N=2, p=1.5, alpha=-0.5, beta=0.0))
    return sharpness_probe(case, j_max=6)


def test_badiale_tarantello_trace(bt_trace):
    r = bt_trace.ratios
    assert len(r) == 6 and not bt_trace.truncated
    assert bt_trace.bounded and bt_trace.monotone
    assert r[-1] >= 0.95 and bt_trace.success


def test_trace_serialization(bt_trace):
    rows = list(csv.reader(io.StringIO(bt_trace.to_csv())))
    assert rows[0] == ["j", "eps", "R", "lhs", "rhs", "ratio"] and len(rows) == 7
    assert float(rows[-1][5]) == bt_trace.final_ratio
    d = json.loads(bt_trace.to_json())
    assert d["success"] and d["case"]["tag"] == "BadialeTarantello" and len(d["points"]) == 6


def test_hardy_h2_calibrated_family():
    trace = sharpness_probe(InequalityCase("Hardy", dict(group="heisenberg:2", p=2.0)), CutoffFamily.calibrated(), j_max=6)
    assert trace.bounded and trace.monotone
    assert trace.final_ratio >= 0.95


def test_box_domain_fallback_agrees_with_log_radial():
    case = InequalityCase("CKN", dict(group="abelian:2", alpha=0.0, beta=0.5, p=2.0))
    fam = CutoffFamily()
    a = sharpness_probe(case, fam, j_max=1)
    dom = DomainSpec(((-fam.R(1), fam.R(1)),) * 2)
    b = sharpness_probe(case, fam, j_max=1, dom=dom, q=QuadratureSpec(order=6, base_cells_per_axis=8, max_refinement_depth=3, rel_tol=1e-6))
    assert b.points[0].ratio == pytest.approx(a.points[0].ratio, rel=1e-4)


def test_j_max_validation():
    with pytest.raises(ConfigurationError):
        sharpness_probe(InequalityCase("Hardy", dict(group="heisenberg:2", p=2.0)), j_max=0)
