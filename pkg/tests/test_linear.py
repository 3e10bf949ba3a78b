import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from bnnverify.linear import LinearCore, LinearEquation


def make_core(n):
    core = LinearCore()
    for _ in range(n):
        core.declare_variable()
    return core


def test_tighten_bounds_monotone_and_conflict():
    core = make_core(1)
    assert core.tighten_bounds(0, -1.0, 5.0)
    assert core.tighten_bounds(0, 0.0, None)
    assert core.lowers[0] == 0.0 and core.uppers[0] == 5.0
    # loosening attempts are ignored
    assert core.tighten_bounds(0, -10.0, 100.0)
    assert core.lowers[0] == 0.0 and core.uppers[0] == 5.0
    assert not core.tighten_bounds(0, 6.0, None)


def test_push_pop_restores_everything():
    core = make_core(2)
    core.tighten_bounds(0, 0.0, 1.0)
    core.assert_equation(LinearEquation({0: 1.0, 1: -1.0}, 0.0))
    mark = core.push()
    core.tighten_bounds(0, 0.5, None)
    core.assert_leq({0: 1.0, 1: 1.0}, 0.7)  # adds a slack variable
    assert core.n_vars == 3
    core.pop(mark)
    assert core.n_vars == 2
    assert core.lowers[0] == 0.0
    assert len(core.equations) == 1


def test_assert_leq_single_variable_becomes_bound():
    core = make_core(1)
    core.assert_leq({0: 2.0}, 4.0)
    assert core.uppers[0] == 2.0
    core.assert_leq({0: -1.0}, 1.0)
    assert core.lowers[0] == -1.0
    assert core.n_vars == 1


def test_find_feasible_simple_and_infeasible():
    core = make_core(2)
    core.tighten_bounds(0, 0.0, 1.0)
    core.tighten_bounds(1, 0.0, 1.0)
    core.assert_equation(LinearEquation({0: 1.0, 1: 1.0}, 1.5))
    x = core.find_feasible()
    assert x is not None and abs(x[0] + x[1] - 1.5) < 1e-7
    core.assert_equation(LinearEquation({0: 1.0, 1: 1.0}, 0.2))
    assert core.find_feasible() is None


def test_find_feasible_respects_hints():
    core = make_core(2)
    core.tighten_bounds(0, 0.0, 10.0)
    core.tighten_bounds(1, 0.0, 10.0)
    core.assert_equation(LinearEquation({0: 1.0, 1: 1.0}, 5.0))
    x = core.find_feasible(hints={0: 3.25})
    assert abs(x[0] - 3.25) < 1e-7 and abs(x[1] - 1.75) < 1e-7
    # unreachable hint: lands as close as the constraints allow
    x = core.find_feasible(hints={0: 20.0})
    assert abs(x[0] - 5.0) < 1e-7


def test_optimize_directions_and_unbounded():
    core = make_core(2)
    core.tighten_bounds(0, -1.0, 2.0)
    core.assert_equation(LinearEquation({0: 1.0, 1: -1.0}, 0.5))
    status, val, _ = core.optimize({0: 1.0}, "max")
    assert status == "optimal" and abs(val - 2.0) < 1e-7
    status, val, _ = core.optimize({1: 1.0}, "min")
    assert status == "optimal" and abs(val - (-1.5)) < 1e-7
    core2 = make_core(1)
    status, _, _ = core2.optimize({0: 1.0}, "max")
    assert status == "unbounded"


def test_optimize_rejects_bad_direction():
    with pytest.raises(ValueError):
        make_core(1).optimize({0: 1.0}, "sideways")


def _random_lp(rng):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, n))
    A = np.round(rng.uniform(-3, 3, size=(m, n)), 2)
    lo = np.round(rng.uniform(-5, 0, n), 2)
    hi = lo + np.round(rng.uniform(0.5, 5, n), 2)
    for j in range(n):
        r = rng.random()
        if r < 0.15:
            lo[j] = -np.inf
        if 0.15 <= r < 0.3:
            hi[j] = np.inf
    x_ref = np.array(
        [rng.uniform(max(l, -6), min(h, 6)) for l, h in zip(lo, hi)]
    )
    b = A @ x_ref if rng.random() < 0.8 else np.round(rng.uniform(-4, 4, m), 2)
    c = np.round(rng.uniform(-2, 2, n), 2)
    return A, b, lo, hi, c


def test_agreement_with_reference_solver():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(150):
        A, b, lo, hi, c = _random_lp(rng)
        m, n = A.shape
        core = make_core(n)
        for j in range(n):
            core.tighten_bounds(j, lo[j], hi[j])
        for i in range(m):
            coeffs = {j: A[i, j] for j in range(n) if A[i, j] != 0.0}
            if not coeffs:
                continue
            core.assert_equation(LinearEquation(coeffs, b[i]))
        status, val, x = core.optimize({j: c[j] for j in range(n)}, "min")

        ref = linprog(
            c,
            A_eq=A,
            b_eq=b,
            bounds=[
                (None if not np.isfinite(l) else l, None if not np.isfinite(h) else h)
                for l, h in zip(lo, hi)
            ],
            method="highs",
        )
        if ref.status == 0:
            assert status == "optimal", (status, ref.status)
            assert abs(val - ref.fun) < 1e-5 * max(1.0, abs(ref.fun))
            assert core.check_assignment(x)
        elif ref.status == 2:
            assert status == "infeasible"
        elif ref.status == 3:
            assert status == "unbounded"
        checked += 1
    assert checked == 150


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feasible_solutions_check_out(seed):
    rng = np.random.default_rng(seed)
    A, b, lo, hi, _ = _random_lp(rng)
    m, n = A.shape
    core = make_core(n)
    for j in range(n):
        core.tighten_bounds(j, lo[j], hi[j])
    for i in range(m):
        coeffs = {j: A[i, j] for j in range(n) if A[i, j] != 0.0}
        if coeffs:
            core.assert_equation(LinearEquation(coeffs, b[i]))
    x = core.find_feasible()
    if x is not None:
        assert core.check_assignment(x)


def test_equation_drops_zero_coefficients():
    eq = LinearEquation({0: 1.0, 1: 0.0}, 2.0)
    assert 1 not in eq.coeffs
    with pytest.raises(ValueError):
        LinearEquation({0: 0.0}, 1.0)


def test_iterations_counter_increases():
    core = make_core(3)
    for j in range(3):
        core.tighten_bounds(j, 0.0, 1.0)
    core.assert_equation(LinearEquation({0: 1.0, 1: 1.0, 2: 1.0}, 1.5))
    before = core.iterations
    core.optimize({0: 1.0, 1: -2.0}, "min")
    assert core.iterations > before
