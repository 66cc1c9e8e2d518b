"""Conic backend: toy problems, backend cross-checks, duality accounting."""

import numpy as np
import pytest

from hdqkd.conic import (ConicProblem, _solve_clarabel, _solve_highs, dump,
                         solve)


def lp_max_x():
    p = ConicProblem("toy-lp")
    p.add_free("x", 1)
    p.add_row([("x", 0, 0, 1.0)], "<=", 3.0)
    p.set_objective([("x", 0, 0, 1.0)], "max")
    return p


def test_lp_toy():
    r = solve(lp_max_x())
    assert r.is_optimal
    assert r.value == pytest.approx(3.0, abs=1e-8)
    assert r.gap <= 1e-8 * (1 + abs(r.value))


def test_sdp_toy_trace_norm():
    # min Tr Y s.t. [[y, 2], [2, y]] psd has optimum 2: the scalar trace norm
    p = ConicProblem("toy-sdp")
    p.add_psd("M", 2)
    p.add_row([("M", 0, 0, 1.0), ("M", 1, 1, -1.0)], "==", 0.0)
    p.add_row([("M", 0, 1, 1.0)], "==", 2.0)
    p.set_objective([("M", 0, 0, 0.5), ("M", 1, 1, 0.5)], "min")
    r = solve(p)
    assert r.is_optimal
    assert r.value == pytest.approx(2.0, abs=1e-6)
    assert r.gap <= 1e-6


def test_infeasible_lp():
    p = ConicProblem("impossible")
    p.add_free("x", 1)
    p.add_row([("x", 0, 0, 1.0)], ">=", 1.0)
    p.add_row([("x", 0, 0, 1.0)], "<=", 0.0)
    r = solve(p)
    assert r.status == "infeasible"
    assert r.value is None


def test_unbounded_lp():
    p = ConicProblem("unbounded")
    p.add_free("x", 1)
    p.add_row([("x", 0, 0, 1.0)], ">=", 0.0)
    p.set_objective([("x", 0, 0, 1.0)], "max")
    r = solve(p)
    assert r.status == "unbounded"


def random_lp(rng, n=8, m=12):
    p = ConicProblem("random")
    p.add_free("v", n)
    x_feas = rng.uniform(0, 1, n)
    for _ in range(m):
        coeffs = rng.normal(size=n)
        terms = [("v", i, 0, float(coeffs[i])) for i in range(n)]
        p.add_row(terms, "<=", float(coeffs @ x_feas + rng.uniform(0.01, 1)))
    for i in range(n):
        p.add_row([("v", i, 0, 1.0)], ">=", 0.0)
        p.add_row([("v", i, 0, 1.0)], "<=", 2.0)
    obj = rng.normal(size=n)
    p.set_objective([("v", i, 0, float(obj[i])) for i in range(n)],
                    "min" if rng.random() < 0.5 else "max")
    return p


def test_backends_agree_on_random_lps():
    rng = np.random.default_rng(2024)
    for _ in range(8):
        p = random_lp(rng)
        rh = _solve_highs(p, 1e-9)
        rc = _solve_clarabel(p, 1e-9, 400)
        assert rh.status == "optimal" and rc.status in ("optimal",
                                                        "numerical-limit")
        assert rh.value == pytest.approx(rc.value, abs=1e-6)


def test_duality_invariant():
    rng = np.random.default_rng(7)
    for _ in range(6):
        p = random_lp(rng)
        r = solve(p, tol=1e-9)
        assert r.gap <= 1e-7 * (1 + abs(r.value))


def test_resolve_determinism():
    p = lp_max_x()
    r1 = solve(p)
    r2 = solve(p)
    assert r1.value == r2.value
    assert r1.iterations == r2.iterations


def test_psd_entry_scaling():
    # fixing all entries of a 2x2 psd block via rows must reproduce the
    # matrix exactly (checks the svec off-diagonal convention)
    p = ConicProblem("pin")
    p.add_psd("M", 2)
    p.add_row([("M", 0, 0, 1.0)], "==", 2.0)
    p.add_row([("M", 1, 1, 1.0)], "==", 3.0)
    p.add_row([("M", 0, 1, 1.0)], "==", 1.5)
    p.set_objective([("M", 0, 0, 1.0), ("M", 1, 1, 1.0),
                     ("M", 0, 1, 2.0)], "min")
    r = solve(p)
    assert r.value == pytest.approx(2.0 + 3.0 + 2 * 1.5, abs=1e-7)


def test_dump_format():
    text = dump(lp_max_x())
    assert "toy-lp" in text
    assert "blocks:" in text and "rows:" in text
    assert "x[0,0]" in text


def test_bad_inputs():
    p = ConicProblem()
    with pytest.raises(ValueError):
        p.add_row([], "!=", 0.0)
    with pytest.raises(ValueError):
        p.add_free("x", 0)
    p2 = ConicProblem()
    p2.add_free("x", 1)
    with pytest.raises(ValueError):
        p2.set_objective([], "fastest")
