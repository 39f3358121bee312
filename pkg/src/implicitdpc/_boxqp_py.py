"""Pure-Python box-QP kernel (fallback for the compiled ``_boxqp`` module).

Minimizes ``x^T H x + f^T x`` subject to ``lo <= x <= hi`` for positive
definite ``H`` with a primal active-set method.  Both kernels implement the
same iteration; see :func:`box_qp`.
"""
import numpy as np
from scipy.linalg import cho_factor, cho_solve

OPTIMAL = 0
MAX_ITER = 1
NOT_PD = 2

FREE = 0
AT_LOWER = -1
AT_UPPER = 1
FIXED = 2

MULT_TOL = 1e-11
TIE_TOL = 1e-14
STEP_TOL = 1e-15


def box_qp(H, f, lo, hi, max_iter):
    """Run the active-set iteration.

    Start from the unconstrained minimizer clipped to the box, fixing the
    clipped coordinates.  Each iteration minimizes over the free coordinates;
    a blocked step adds the first blocking bound, a full step checks the
    bound multipliers and releases the most negative one.  Ties (within
    ``TIE_TOL`` relative) go to the lowest index.

    Returns ``(x, state, status, iterations)`` where ``state[i]`` is one of
    ``FREE``, ``AT_LOWER``, ``AT_UPPER`` or ``FIXED``.
    """
    n = f.shape[0]
    H2 = 2.0 * H
    state = np.zeros(n, dtype=np.int8)
    try:
        factor = cho_factor(H2, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return np.zeros(n), state, NOT_PD, 0
    if not np.all(np.isfinite(factor[0])) or np.any(np.diag(factor[0]) <= 0.0):
        return np.zeros(n), state, NOT_PD, 0
    xu = cho_solve(factor, -f, check_finite=False)
    x = xu.copy()
    for i in range(n):
        if lo[i] == hi[i]:
            x[i] = lo[i]
            state[i] = FIXED
        elif xu[i] <= lo[i]:
            x[i] = lo[i]
            state[i] = AT_LOWER
        elif xu[i] >= hi[i]:
            x[i] = hi[i]
            state[i] = AT_UPPER

    scale = 1.0 + np.max(np.abs(f), initial=0.0)
    for it in range(max_iter):
        free = np.flatnonzero(state == FREE)
        fixed = np.flatnonzero(state != FREE)
        xhat = x.copy()
        if free.size:
            rhs = -f[free]
            if fixed.size:
                rhs = rhs - H2[np.ix_(free, fixed)] @ x[fixed]
            sub = H2[np.ix_(free, free)]
            xhat[free] = cho_solve(cho_factor(sub, lower=True, check_finite=False), rhs,
                                   check_finite=False)
        p = xhat - x

        # ratio test over free coordinates
        ratios = np.full(n, np.inf)
        sides = np.zeros(n, dtype=np.int8)
        for i in free:
            pi = p[i]
            if abs(pi) <= STEP_TOL * (1.0 + abs(x[i])):
                continue
            if pi < 0.0 and np.isfinite(lo[i]):
                ratios[i] = max((lo[i] - x[i]) / pi, 0.0)
                sides[i] = AT_LOWER
            elif pi > 0.0 and np.isfinite(hi[i]):
                ratios[i] = max((hi[i] - x[i]) / pi, 0.0)
                sides[i] = AT_UPPER
        rmin = np.min(ratios, initial=np.inf)
        if rmin < 1.0:
            block = int(np.flatnonzero(ratios <= rmin + TIE_TOL)[0])
            x = x + rmin * p
            side = sides[block]
            x[block] = lo[block] if side == AT_LOWER else hi[block]
            state[block] = side
            continue

        x = xhat
        g = H2 @ x + f
        gscale = scale + np.max(np.abs(g - f), initial=0.0)
        mult = np.full(n, np.inf)
        low = state == AT_LOWER
        up = state == AT_UPPER
        mult[low] = g[low]
        mult[up] = -g[up]
        mmin = np.min(mult, initial=np.inf)
        if mmin >= -MULT_TOL * gscale:
            return x, state, OPTIMAL, it + 1
        release = int(np.flatnonzero(mult <= mmin + TIE_TOL * gscale)[0])
        state[release] = FREE
    return x, state, MAX_ITER, max_iter
