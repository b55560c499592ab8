import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from multihop_cran.channel import complex_gaussian
from multihop_cran.solver import (CONVERGED, INFEASIBLE, OK, Constraint, Linear, LogDetProgram, LogDetTerm,
                                  MatrixVar, Point, feasible_init, minorize_maximize, refine, solve)

ONE = np.eye(1)


def scalar(x):
    return Point([np.array([[x]], dtype=complex)], np.zeros(0))


def term(a0, gain, coef):
    """``coef * log2(a0 + gain * x)``."""
    m = np.array([[np.sqrt(gain)]], dtype=complex)
    return LogDetTerm(np.array([[a0]], dtype=complex), [(0, m, 1.0)], coef)


def test_capped_scalar_reaches_the_cap():
    prog = LogDetProgram([MatrixVar(1, cap=3.0)], 0, [term(1.0, 1.0, 1.0)])
    rep = solve(prog)
    assert rep.status == CONVERGED
    assert rep.x.mats[0][0, 0].real == pytest.approx(3.0, abs=1e-5)
    assert rep.objective == pytest.approx(2.0, abs=1e-5)


def test_linear_objective_with_concave_constraint():
    # max -x  s.t.  -log2(1 + x) <= -1, i.e. x >= 1
    con = Constraint([term(1.0, 1.0, -1.0)], Linear(), -1.0)
    prog = LogDetProgram([MatrixVar(1, cap=100.0)], 0, [], Linear(mats={0: -ONE}), [con])
    assert prog.is_convex
    rep = solve(prog)
    assert rep.x.mats[0][0, 0].real == pytest.approx(1.0, abs=1e-5)
    assert rep.max_violation < 1e-9


def test_kkt_point_at_zero_precision():
    # max log2(1 + x) - log2(1 + 2x): decreasing in x, so the optimum is x = 0
    prog = LogDetProgram([MatrixVar(1, cap=10.0)], 0, [term(1.0, 1.0, 1.0), term(1.0, 2.0, -1.0)])
    res = minorize_maximize(prog, scalar(1.0), max_iter=100)
    res.check()
    assert res.x.mats[0][0, 0].real < 1e-4
    assert res.objective == pytest.approx(0.0, abs=1e-4)


def test_mm_matches_golden_section():
    # f(x) = log2(1 + 4x) - log2(1 + x) - 0.1 x on [0, 10]
    f = lambda x: np.log2(1 + 4 * x) - np.log2(1 + x) - 0.1 * x
    ref = minimize_scalar(lambda x: -f(x), bounds=(0, 10), method="bounded", options={"xatol": 1e-10})
    prog = LogDetProgram([MatrixVar(1, cap=10.0)], 0, [term(1.0, 4.0, 1.0), term(1.0, 1.0, -1.0)],
                         Linear(mats={0: -0.1 * ONE}))
    res = minorize_maximize(prog, scalar(5.0), max_iter=200, tol=1e-9)
    res.check()
    assert res.objective == pytest.approx(-ref.fun, abs=1e-6)
    rep = refine(prog, res.x)
    assert rep.objective >= res.objective
    assert rep.x.mats[0][0, 0].real == pytest.approx(ref.x, abs=1e-3)


def test_feasible_init_scalar_example():
    # log2(1 + x) <= 1 needs x < 1
    con = Constraint([term(1.0, 1.0, 1.0)], Linear(), 1.0)
    prog = LogDetProgram([MatrixVar(1, cap=10.0)], 0, [term(1.0, 1.0, 1.0)], Linear(), [con])
    init = feasible_init(prog)
    assert init.status == OK
    assert prog.is_strictly_feasible(init.point)
    assert 0 < init.point.mats[0][0, 0].real < 1


def test_feasible_init_reports_infeasible_scalars():
    prog = LogDetProgram([MatrixVar(1)], 1, [term(1.0, 1.0, 1.0)], Linear(), [],
                         np.array([[1.0]]), np.array([-1.0]))
    assert feasible_init(prog).status == INFEASIBLE


def _random_dc_program(rng, d=2):
    def pd():
        A = complex_gaussian(rng, (d, d))
        return A @ A.conj().T + 0.2 * np.eye(d)

    def t(coef):
        return LogDetTerm(pd(), [(0, complex_gaussian(rng, (d, d)), 1.0)], coef)

    con = Constraint([t(1.0), t(-1.0)], Linear(), 1.0)
    return LogDetProgram([MatrixVar(d, cap=50.0)], 0, [t(1.0), t(-1.0)], Linear(), [con])


def test_majorizer_bounds_the_program(rng):
    for _ in range(30):
        prog = _random_dc_program(rng)
        x0 = Point([np.eye(2) * rng.uniform(0.1, 5)], np.zeros(0))
        sur = prog.majorize(x0)
        assert sur.is_convex
        assert sur.objective(x0) == pytest.approx(prog.objective(x0), abs=1e-10)
        assert np.allclose(sur.constraint_values(x0), prog.constraint_values(x0), atol=1e-10)
        for _ in range(10):
            A = complex_gaussian(rng, (2, 2))
            x = Point([A @ A.conj().T], np.zeros(0))
            assert sur.objective(x) <= prog.objective(x) + 1e-10
            assert np.all(sur.constraint_values(x) >= prog.constraint_values(x) - 1e-10)


def test_mm_is_monotone_and_feasible(rng):
    for _ in range(5):
        prog = _random_dc_program(rng)
        init = feasible_init(prog)
        if init.status != OK:
            continue
        res = minorize_maximize(prog, init.point, max_iter=30)
        res.check()
        assert prog.is_strictly_feasible(res.x) or prog.max_violation(res.x) < 1e-6


def test_solve_rejects_infeasible_warm_start():
    con = Constraint([term(1.0, 1.0, 1.0)], Linear(), 1.0)
    prog = LogDetProgram([MatrixVar(1, cap=10.0)], 0, [term(1.0, 1.0, 1.0)], Linear(), [con])
    assert solve(prog.majorize(scalar(0.5)), scalar(2.0)).status == INFEASIBLE
