"""Shared fixtures and the per-criterion summary of the acceptance run."""

import numpy as np
import pytest

from carnot_ineq import jets
from carnot_ineq.fields import ScalarField
from carnot_ineq.groups import abelian, heisenberg, step2

# A step-2 group with a three-dimensional first stratum and two commutators:
# [X1, X2] = T1, [X1, X3] = T2.
STEP2_B = [
    [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
]


def step2_group():
    return step2(STEP2_B)


def builtin_groups():
    return [abelian(2), abelian(3), abelian(4), abelian(5), heisenberg(1), heisenberg(2), step2_group()]


def constant_field(n, value=1.0):
    return ScalarField(lambda x, o: jets.constant(value, x.shape[0], x.shape[1], o), n, label=f"{value:g}")


def poly_field(n, seed, degree=3):
    """Random polynomial sum_k c_k prod_i x_i^{e_ki} with jets from the jet algebra."""
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(6):
        e = rng.integers(0, degree + 1, size=n)
        while e.sum() > degree:
            e[rng.choice(np.flatnonzero(e))] -= 1
        terms.append((rng.normal(), e))

    def fn(x, order):
        xs = jets.coordinates(x, order)
        out = jets.constant(0.0, x.shape[0], n, order)
        for c, e in terms:
            t = jets.constant(c, x.shape[0], n, order)
            for i, k in enumerate(e):
                for _ in range(int(k)):
                    t = t * xs[i]
            out = out + t
        return out

    def value(x):
        x = np.atleast_2d(x)
        return sum(c * np.prod(x**e, axis=1) for c, e in terms)

    f = ScalarField(fn, n, label=f"poly[{seed}]")
    f.exact = value
    return f


def fd_gradient(fun, x, h=1e-5):
    """Central differences of a vectorized scalar function at the rows of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = np.zeros_like(x)
    for i in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[i] = h
        g[:, i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# -- criterion summary ----------------------------------------------------------

_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n = mark.args[0]
    detail = dict(item.user_properties).get("detail", "")
    ok = rep.passed
    prev = _CRITERIA.get(n)
    if prev is not None:
        ok = ok and prev[0]
        detail = "; ".join(d for d in (prev[1], detail) if d)
    _CRITERIA[n] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
