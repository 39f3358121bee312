"""Dense strictly convex quadratic programming.

Objective convention, used everywhere in the package::

    minimize  x^T H x + f^T x        (no 1/2 factor)
    s.t.      Aeq x = beq,  lo <= x <= hi

Bound-only problems go to the box kernel, compiled from ``_boxqp.pyx`` when
available and otherwise the pure-Python ``_boxqp_py``.  Set the environment
variable ``IMPLICITDPC_PURE_PYTHON=1`` before import to force the fallback.
Problems with equality constraints use a numpy active-set loop in this module.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from . import _boxqp_py
from .errors import DimensionError, NumericalError, PreconditionError
from .linalg import null_space, numerical_rank, pinv

if os.environ.get("IMPLICITDPC_PURE_PYTHON"):
    _box_kernel = _boxqp_py.box_qp
    BACKEND = "python"
else:
    try:
        from ._boxqp import box_qp as _box_kernel
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _box_kernel = _boxqp_py.box_qp
        BACKEND = "python"

OPTIMAL = "optimal"
UNBOUNDED = "unbounded"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

_KERNEL_STATUS = {_boxqp_py.OPTIMAL: OPTIMAL, _boxqp_py.MAX_ITER: MAX_ITER}


@dataclass
class QpProblem:
    """``min x^T H x + f^T x`` s.t. ``Aeq x = beq``, ``lo <= x <= hi``."""

    H: np.ndarray
    f: np.ndarray
    Aeq: Optional[np.ndarray] = None
    beq: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        if self.H.shape != (n, n):
            raise DimensionError(f"H must be square, got {self.H.shape}")
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        if self.f.size != n:
            raise DimensionError(f"f has {self.f.size} entries, H is {n}x{n}")
        scale = max(np.abs(self.H).max(initial=0.0), 1e-300)
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-10 * scale:
            raise PreconditionError("H is not symmetric")
        self.H = 0.5 * (self.H + self.H.T)
        if self.Aeq is not None:
            self.Aeq = np.atleast_2d(np.asarray(self.Aeq, dtype=float))
            if self.Aeq.shape[1] != n:
                raise DimensionError(f"Aeq has {self.Aeq.shape[1]} columns, expected {n}")
            self.beq = np.asarray(self.beq, dtype=float).reshape(-1)
            if self.beq.size != self.Aeq.shape[0]:
                raise DimensionError("beq size does not match Aeq rows")
            if self.Aeq.shape[0] == 0:
                self.Aeq = self.beq = None
        self.lo = np.full(n, -np.inf) if self.lo is None else np.asarray(self.lo, dtype=float).reshape(-1)
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).reshape(-1)
        if self.lo.size != n or self.hi.size != n:
            raise DimensionError("bound vectors must match the variable count")
        if np.any(self.lo > self.hi):
            raise PreconditionError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.f.size

    @property
    def has_bounds(self) -> bool:
        return bool(np.any(np.isfinite(self.lo)) or np.any(np.isfinite(self.hi)))

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.H @ x + self.f @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    value: float
    status: str
    active_lower: tuple = ()
    active_upper: tuple = ()
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lower_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    min_norm: bool = False

    @property
    def active_set(self) -> tuple:
        """Sorted indices of all active bounds."""
        return tuple(sorted(set(self.active_lower) | set(self.active_upper)))

    @property
    def signature(self) -> tuple:
        """Active bounds as ``(index, side)`` pairs, side -1 lower / +1 upper."""
        sig = [(i, -1) for i in self.active_lower] + [(i, 1) for i in self.active_upper]
        return tuple(sorted(sig))

    @property
    def multipliers(self) -> np.ndarray:
        return np.concatenate([self.eq_multipliers, self.lower_multipliers, self.upper_multipliers])


def format_signature(sig) -> str:
    """Compact text form, e.g. ``"0+;2-"``; empty string for no active bounds."""
    return ";".join(f"{i}{'+' if s > 0 else '-'}" for i, s in sig)


def parse_signature(text: str) -> tuple:
    """Inverse of :func:`format_signature`."""
    out = []
    for tok in filter(None, text.strip().split(";")):
        if tok[-1] not in "+-" or not tok[:-1].isdigit():
            raise ValueError(f"bad signature token {tok!r}")
        out.append((int(tok[:-1]), 1 if tok[-1] == "+" else -1))
    return tuple(out)


def kkt_residuals(problem: QpProblem, sol: QpSolution) -> dict:
    """Scaled stationarity, feasibility, dual-sign and complementarity residuals."""
    x = sol.x
    n = problem.n
    grad = 2.0 * problem.H @ x + problem.f
    if problem.Aeq is not None:
        grad = grad + problem.Aeq.T @ sol.eq_multipliers
    mu_lo = sol.lower_multipliers if sol.lower_multipliers.size else np.zeros(n)
    mu_hi = sol.upper_multipliers if sol.upper_multipliers.size else np.zeros(n)
    stat = grad - mu_lo + mu_hi
    primal = 0.0
    if problem.Aeq is not None:
        primal = float(np.abs(problem.Aeq @ x - problem.beq).max(initial=0.0))
    primal = max(primal, float(np.max(problem.lo - x, initial=0.0)), float(np.max(x - problem.hi, initial=0.0)))
    dual = float(max(np.max(-mu_lo, initial=0.0), np.max(-mu_hi, initial=0.0)))
    gap_lo = np.where(np.isfinite(problem.lo), x - problem.lo, 0.0)
    gap_hi = np.where(np.isfinite(problem.hi), problem.hi - x, 0.0)
    comp = float(max(np.max(np.abs(mu_lo * gap_lo), initial=0.0), np.max(np.abs(mu_hi * gap_hi), initial=0.0)))
    scale = 1.0 + float(np.linalg.norm(problem.f))
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0)) / scale,
        "primal": primal / scale,
        "dual": dual / scale,
        "complementarity": comp / scale,
    }


def kkt_residual(problem: QpProblem, sol: QpSolution) -> float:
    return max(kkt_residuals(problem, sol).values())


def _kkt_matrix(H, A):
    k = A.shape[0]
    return np.block([[2.0 * H, A.T], [A, np.zeros((k, k))]])


def solve_eq(problem: QpProblem, allow_min_norm: bool = True) -> QpSolution:
    """Equality-constrained (or unconstrained) QP via the KKT system.

    Bounds on ``problem`` are ignored.  When the KKT matrix is singular the
    minimum-norm solution from its pseudoinverse is returned and flagged with
    ``min_norm=True``; inconsistent equalities give status ``infeasible`` and
    a Hessian unbounded along the feasible set gives ``unbounded``.
    """
    n = problem.n
    H, f = problem.H, problem.f
    A = problem.Aeq if problem.Aeq is not None else np.zeros((0, n))
    b = problem.beq if problem.beq is not None else np.zeros(0)
    K = _kkt_matrix(H, A)
    rhs = np.concatenate([-f, b])
    size = K.shape[0]
    singular = numerical_rank(K) < size
    if not singular:
        sol = np.linalg.solve(K, rhs)
        min_norm = False
    else:
        if not allow_min_norm:
            raise NumericalError("KKT matrix is singular")
        if A.shape[0]:
            xa = pinv(A) @ b
            if np.linalg.norm(A @ xa - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
                return QpSolution(x=xa, value=np.nan, status=INFEASIBLE, min_norm=True)
        sol = pinv(K) @ rhs
        min_norm = True
        resid = np.linalg.norm(K @ sol - rhs)
        if resid > 1e-8 * (1.0 + np.linalg.norm(rhs)):
            return QpSolution(x=sol[:n], value=-np.inf, status=UNBOUNDED, min_norm=True)
    x, nu = sol[:n], sol[n:]
    return QpSolution(
        x=x,
        value=problem.objective(x),
        status=OPTIMAL,
        eq_multipliers=nu,
        lower_multipliers=np.zeros(n),
        upper_multipliers=np.zeros(n),
        min_norm=min_norm,
    )


def check_strictly_convex(problem: QpProblem) -> None:
    """Raise unless ``H`` is positive definite on ``ker(Aeq)``."""
    H = problem.H
    if problem.Aeq is not None:
        N = null_space(problem.Aeq)
        if N.shape[1] == 0:
            return
        H = N.T @ H @ N
    H = 0.5 * (H + H.T)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise PreconditionError("QP Hessian is not positive definite on the feasible directions") from None
    ev = np.linalg.eigvalsh(H)
    if ev[0] <= 1e-14 * max(ev[-1], 1e-300):
        raise PreconditionError("QP Hessian is numerically singular on the feasible directions")


def solve_box(problem: QpProblem, max_iter: Optional[int] = None) -> QpSolution:
    """Strictly convex QP with bounds (and optional equalities).

    Primal active-set method.  The bound-only case starts from the clipped
    unconstrained minimizer and runs in the box kernel; with equalities the
    start is the equality-constrained minimizer if it satisfies the bounds,
    else a phase-one feasible point.  Released bounds are chosen by most
    negative multiplier, lowest index on ties.
    """
    n = problem.n
    if max_iter is None:
        max_iter = 50 * max(n, 1)
    if problem.Aeq is None:
        return _solve_bounds_only(problem, max_iter)
    check_strictly_convex(problem)
    return _solve_with_equalities(problem, max_iter)


def _solve_bounds_only(problem: QpProblem, max_iter: int) -> QpSolution:
    H = np.ascontiguousarray(problem.H, dtype=float)
    x, state, code, iters = _box_kernel(
        H,
        np.ascontiguousarray(problem.f),
        np.ascontiguousarray(problem.lo),
        np.ascontiguousarray(problem.hi),
        int(max_iter),
    )
    if code == _boxqp_py.NOT_PD:
        raise PreconditionError("QP Hessian is not positive definite")
    x = np.clip(x, problem.lo, problem.hi)
    return _finish(problem, x, state, np.zeros(0), _KERNEL_STATUS[code], iters)


def _finish(problem, x, state, nu, status, iters, min_norm=False) -> QpSolution:
    n = problem.n
    grad = 2.0 * problem.H @ x + problem.f
    if problem.Aeq is not None and nu.size:
        grad = grad + problem.Aeq.T @ nu
    mu_lo = np.zeros(n)
    mu_hi = np.zeros(n)
    lower, upper = [], []
    for i in range(n):
        s = state[i]
        if s == _boxqp_py.FIXED:
            if grad[i] >= 0.0:
                mu_lo[i] = grad[i]
                lower.append(i)
            else:
                mu_hi[i] = -grad[i]
                upper.append(i)
        elif s == _boxqp_py.AT_LOWER:
            mu_lo[i] = grad[i]
            lower.append(i)
        elif s == _boxqp_py.AT_UPPER:
            mu_hi[i] = -grad[i]
            upper.append(i)
    return QpSolution(
        x=x,
        value=problem.objective(x),
        status=status,
        active_lower=tuple(lower),
        active_upper=tuple(upper),
        eq_multipliers=nu,
        lower_multipliers=mu_lo,
        upper_multipliers=mu_hi,
        iterations=int(iters),
        min_norm=min_norm,
    )


def _phase_one(problem: QpProblem) -> Optional[np.ndarray]:
    bounds = [
        (None if not np.isfinite(l) else l, None if not np.isfinite(h) else h)
        for l, h in zip(problem.lo, problem.hi)
    ]
    res = linprog(
        np.zeros(problem.n), A_eq=problem.Aeq, b_eq=problem.beq, bounds=bounds, method="highs"
    )
    if res.status != 0:
        return None
    return np.clip(res.x, problem.lo, problem.hi)


def _eqp(problem, state, x):
    """Minimize over the free coordinates with the others held at ``x``."""
    free = np.flatnonzero(state == _boxqp_py.FREE)
    fixed = np.flatnonzero(state != _boxqp_py.FREE)
    A, b = problem.Aeq, problem.beq
    H2 = 2.0 * problem.H
    rhs_x = -problem.f[free] - H2[np.ix_(free, fixed)] @ x[fixed]
    rhs_c = b - A[:, fixed] @ x[fixed]
    AF = A[:, free]
    k = A.shape[0]
    K = np.block([[H2[np.ix_(free, free)], AF.T], [AF, np.zeros((k, k))]])
    rhs = np.concatenate([rhs_x, rhs_c])
    try:
        sol = np.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)) or np.linalg.norm(K @ sol - rhs) > 1e-9 * (1 + np.linalg.norm(rhs)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    xhat = x.copy()
    xhat[free] = sol[: free.size]
    return xhat, sol[free.size:]


def _independent(rows: np.ndarray) -> bool:
    return rows.shape[0] == 0 or numerical_rank(rows) == rows.shape[0]


def _solve_with_equalities(problem: QpProblem, max_iter: int) -> QpSolution:
    n = problem.n
    lo, hi = problem.lo, problem.hi
    state = np.zeros(n, dtype=np.int8)
    fixed_mask = lo == hi
    state[fixed_mask] = _boxqp_py.FIXED
    A = problem.Aeq

    start = solve_eq(QpProblem(problem.H, problem.f, A, problem.beq))
    if start.status != OPTIMAL:
        return start
    x0 = None
    if not np.any(fixed_mask) and np.all(start.x >= lo) and np.all(start.x <= hi):
        x0 = start.x
    if x0 is None:
        x0 = _phase_one(problem)
        if x0 is None:
            return QpSolution(x=np.full(n, np.nan), value=np.nan, status=INFEASIBLE)
        # working set: bounds active at the phase-one point, kept independent
        working = [A]
        for i in np.flatnonzero(fixed_mask):
            working.append(np.eye(n)[i:i + 1])
        scale = 1.0 + np.abs(x0)
        for i in range(n):
            if state[i] != _boxqp_py.FREE:
                continue
            at_lo = np.isfinite(lo[i]) and x0[i] - lo[i] <= 1e-12 * scale[i]
            at_hi = np.isfinite(hi[i]) and hi[i] - x0[i] <= 1e-12 * scale[i]
            if not (at_lo or at_hi):
                continue
            cand = np.vstack(working + [np.eye(n)[i:i + 1]])
            if _independent(cand):
                working.append(np.eye(n)[i:i + 1])
                state[i] = _boxqp_py.AT_LOWER if at_lo else _boxqp_py.AT_UPPER
                x0[i] = lo[i] if at_lo else hi[i]
    x = x0.copy()
    nu = np.zeros(A.shape[0])
    tol_step = _boxqp_py.STEP_TOL
    for it in range(max_iter):
        xhat, nu = _eqp(problem, state, x)
        p = xhat - x
        ratios = np.full(n, np.inf)
        sides = np.zeros(n, dtype=np.int8)
        for i in np.flatnonzero(state == _boxqp_py.FREE):
            pi = p[i]
            if abs(pi) <= tol_step * (1.0 + abs(x[i])):
                continue
            if pi < 0.0 and np.isfinite(lo[i]):
                ratios[i] = max((lo[i] - x[i]) / pi, 0.0)
                sides[i] = _boxqp_py.AT_LOWER
            elif pi > 0.0 and np.isfinite(hi[i]):
                ratios[i] = max((hi[i] - x[i]) / pi, 0.0)
                sides[i] = _boxqp_py.AT_UPPER
        rmin = np.min(ratios, initial=np.inf)
        if rmin < 1.0:
            block = int(np.flatnonzero(ratios <= rmin + _boxqp_py.TIE_TOL)[0])
            x = x + rmin * p
            x[block] = lo[block] if sides[block] == _boxqp_py.AT_LOWER else hi[block]
            state[block] = sides[block]
            continue
        x = xhat
        g = 2.0 * problem.H @ x + problem.f + A.T @ nu
        gscale = 1.0 + np.abs(problem.f).max(initial=0.0) + np.abs(2.0 * problem.H @ x).max(initial=0.0)
        mult = np.full(n, np.inf)
        low = state == _boxqp_py.AT_LOWER
        up = state == _boxqp_py.AT_UPPER
        mult[low] = g[low]
        mult[up] = -g[up]
        mmin = np.min(mult, initial=np.inf)
        if mmin >= -_boxqp_py.MULT_TOL * gscale:
            x = np.clip(x, lo, hi)
            return _finish(problem, x, state, nu, OPTIMAL, it + 1)
        release = int(np.flatnonzero(mult <= mmin + _boxqp_py.TIE_TOL * gscale)[0])
        state[release] = _boxqp_py.FREE
    return _finish(problem, np.clip(x, lo, hi), state, nu, MAX_ITER, max_iter)
