import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from implicitdpc import _boxqp_py, qp
from implicitdpc.errors import PreconditionError

from conftest import enumerate_box_qp

try:
    from implicitdpc import _boxqp
except ImportError:  # pragma: no cover
    _boxqp = None


def random_box_problem(rng, n):
    A = rng.standard_normal((n, n))
    H = A @ A.T + 0.1 * np.eye(n)
    f = 4.0 * rng.standard_normal(n)
    lo = -rng.uniform(0.1, 1.5, n)
    hi = rng.uniform(0.1, 1.5, n)
    lo[rng.uniform(size=n) < 0.15] = -np.inf
    return qp.QpProblem(H, f, lo=lo, hi=hi)


def test_solve_eq_projection_example():
    # x^T H x with H = 2I at x = (1, 1) is 4 under the package convention
    sol = qp.solve_eq(qp.QpProblem(2 * np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]), np.array([2.0])))
    assert sol.status == qp.OPTIMAL
    assert np.allclose(sol.x, [1.0, 1.0], atol=1e-14)
    assert sol.value == pytest.approx(4.0, abs=1e-13)


def test_solve_eq_unconstrained_example():
    prob = qp.QpProblem(2 * np.eye(2), np.array([-2.0, 0.0]))
    sol = qp.solve_eq(prob)
    assert np.allclose(sol.x, [0.5, 0.0], atol=1e-15)
    assert sol.value == pytest.approx(-0.5, abs=1e-15)
    for d in np.eye(2):
        for h in (1e-4, -1e-4):
            assert prob.objective(sol.x + h * d) > sol.value


def test_solve_eq_min_norm_and_infeasible():
    # singular Hessian along x2 with no constraint there -> min-norm, flagged
    sol = qp.solve_eq(qp.QpProblem(np.diag([1.0, 0.0]), np.array([-2.0, 0.0])))
    assert sol.min_norm and np.allclose(sol.x, [1.0, 0.0])
    bad = qp.QpProblem(np.eye(2), np.zeros(2), np.array([[1.0, 1.0], [2.0, 2.0]]), np.array([1.0, 3.0]))
    assert qp.solve_eq(bad).status == qp.INFEASIBLE


def test_scalar_clamp():
    # (y - 1.5)^2 = y^2 - 3y + const
    sol = qp.solve_box(qp.QpProblem([[1.0]], [-3.0], lo=[-1.0], hi=[1.0]))
    assert sol.x[0] == 1.0
    assert sol.signature == ((0, 1),) and qp.format_signature(sol.signature) == "0+"


def test_inactive_bounds_match_unconstrained(rng):
    A = rng.standard_normal((3, 3))
    H = A @ A.T + np.eye(3)
    f = 0.01 * rng.standard_normal(3)
    box = qp.solve_box(qp.QpProblem(H, f, lo=-np.ones(3) * 10, hi=np.ones(3) * 10))
    free = qp.solve_eq(qp.QpProblem(H, f))
    assert box.active_set == ()
    assert np.allclose(box.x, free.x, atol=1e-12)


def test_three_dim_enumeration(rng):
    for _ in range(20):
        prob = random_box_problem(rng, 3)
        sol = qp.solve_box(prob)
        x_ref, v_ref = enumerate_box_qp(prob.H, prob.f, prob.lo, prob.hi)
        assert np.abs(sol.x - x_ref).max() <= 1e-9
        assert abs(sol.value - v_ref) <= 1e-9 * (1 + abs(v_ref))


@given(st.integers(1, 4), st.integers(0, 100_000))
def test_box_qp_kkt_and_random_feasible_points(n, seed):
    rng = np.random.default_rng(seed)
    prob = random_box_problem(rng, n)
    sol = qp.solve_box(prob)
    assert sol.status == qp.OPTIMAL
    assert qp.kkt_residual(prob, sol) <= 1e-8
    lo = np.where(np.isfinite(prob.lo), prob.lo, -3.0)
    for _ in range(100):
        x = rng.uniform(lo, prob.hi)
        assert prob.objective(x) >= sol.value - 1e-12 * (1 + abs(sol.value))


@given(st.integers(1, 4), st.integers(0, 100_000))
def test_equality_and_box_kkt(n, seed):
    rng = np.random.default_rng(seed)
    prob = random_box_problem(rng, n + 1)
    Aeq = rng.standard_normal((1, n + 1))
    x_feas = rng.uniform(np.maximum(prob.lo, -1) * 0.5, prob.hi * 0.5)
    prob = qp.QpProblem(prob.H, prob.f, Aeq, Aeq @ x_feas, prob.lo, prob.hi)
    sol = qp.solve_box(prob)
    assert sol.status == qp.OPTIMAL
    assert qp.kkt_residual(prob, sol) <= 1e-8
    # objective no worse than random feasible points projected onto the equality
    P = np.eye(n + 1) - Aeq.T @ Aeq / (Aeq @ Aeq.T)
    for _ in range(100):
        x = x_feas + P @ (0.3 * rng.standard_normal(n + 1))
        if np.all(x >= prob.lo) and np.all(x <= prob.hi):
            assert prob.objective(x) >= sol.value - 1e-9 * (1 + abs(sol.value))


def test_equality_path_against_enumeration(rng):
    # eliminate the equality by hand and enumerate on the reduced box problem
    for _ in range(20):
        n = 3
        prob = random_box_problem(rng, n)
        lo, hi = np.maximum(prob.lo, -1.0), prob.hi
        # x3 = 0.2 - x1 - x2 must lie in [lo3, hi3]; bound the reduction by enumeration
        Aeq = np.array([[1.0, 1.0, 1.0]])
        p = qp.QpProblem(prob.H, prob.f, Aeq, np.array([0.2]), lo, hi)
        sol = qp.solve_box(p)
        best = np.inf
        grid = np.linspace(0, 1, 401)
        for a in lo[0] + (hi[0] - lo[0]) * grid:
            for b in lo[1] + (hi[1] - lo[1]) * grid[::4]:
                c = 0.2 - a - b
                if lo[2] <= c <= hi[2]:
                    x = np.array([a, b, c])
                    best = min(best, p.objective(x))
        assert sol.status == qp.OPTIMAL
        assert sol.value <= best + 1e-12
        assert qp.kkt_residual(p, sol) <= 1e-8


def test_not_positive_definite_raises():
    with pytest.raises(PreconditionError):
        qp.solve_box(qp.QpProblem(np.diag([1.0, -1.0]), np.zeros(2), lo=-np.ones(2), hi=np.ones(2)))
    with pytest.raises(PreconditionError):
        qp.solve_box(qp.QpProblem(np.diag([1.0, 0.0]), np.zeros(2), np.array([[1.0, 0.0]]), np.zeros(1),
                                  -np.ones(2), np.ones(2)))


def test_fixed_variable_and_infeasible_equalities():
    sol = qp.solve_box(qp.QpProblem(np.eye(2), np.array([-1.0, -1.0]), lo=[0.25, -1], hi=[0.25, 1]))
    assert sol.x[0] == 0.25 and sol.status == qp.OPTIMAL
    bad = qp.QpProblem(np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]), np.array([5.0]), -np.ones(2), np.ones(2))
    assert qp.solve_box(bad).status == qp.INFEASIBLE


def test_determinism(rng):
    prob = random_box_problem(rng, 4)
    a, b = qp.solve_box(prob), qp.solve_box(prob)
    assert np.array_equal(a.x, b.x) and a.signature == b.signature and a.iterations == b.iterations


def test_degenerate_tie_prefers_lowest_index():
    # symmetric problem: both coordinates hit their upper bound at the same step
    sol = qp.solve_box(qp.QpProblem(np.eye(2), np.array([-4.0, -4.0]), lo=-np.ones(2), hi=np.ones(2)))
    assert sol.signature == ((0, 1), (1, 1))


@pytest.mark.skipif(_boxqp is None, reason="compiled kernel not built")
@given(st.integers(1, 6), st.integers(0, 100_000))
def test_compiled_kernel_matches_python(n, seed):
    prob = random_box_problem(np.random.default_rng(seed), n)
    args = (np.ascontiguousarray(prob.H), prob.f.copy(), prob.lo.copy(), prob.hi.copy(), 300)
    xc, sc, codec, itc = _boxqp.box_qp(*args)
    xp, sp, codep, itp = _boxqp_py.box_qp(*args)
    assert codec == codep == _boxqp_py.OPTIMAL
    assert np.array_equal(sc, sp) and itc == itp
    assert np.abs(xc - xp).max() <= 1e-12 * (1 + np.abs(xp).max())


def test_python_kernel_not_pd():
    _, _, code, _ = _boxqp_py.box_qp(np.diag([1.0, -1.0]), np.zeros(2), -np.ones(2), np.ones(2), 10)
    assert code == _boxqp_py.NOT_PD


def test_problem_validation():
    with pytest.raises(Exception):
        qp.QpProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(Exception):
        qp.QpProblem(np.eye(2), np.zeros(2), lo=[1.0, 0.0], hi=[0.0, 1.0])


def test_pure_python_backend_selected_by_env():
    import os
    import subprocess
    import sys

    code = (
        "import numpy as np; from implicitdpc import qp; "
        "s = qp.solve_box(qp.QpProblem([[1.0]], [-3.0], lo=[-1.0], hi=[1.0])); "
        "print(qp.BACKEND, s.x[0])"
    )
    env = dict(os.environ, IMPLICITDPC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["python", "1.0"]


@given(st.lists(st.tuples(st.integers(0, 50), st.sampled_from([-1, 1])), max_size=6))
def test_signature_text_round_trip(sig):
    sig = tuple(sig)
    assert qp.parse_signature(qp.format_signature(sig)) == sig
