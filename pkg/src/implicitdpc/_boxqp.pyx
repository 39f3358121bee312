# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled box-QP kernel.  Same iteration as ``_boxqp_py.box_qp``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    OPTIMAL = 0
    MAX_ITER = 1
    NOT_PD = 2

cdef enum:
    FREE = 0
    AT_LOWER = -1
    AT_UPPER = 1
    FIXED = 2

cdef double MULT_TOL = 1e-11
cdef double TIE_TOL = 1e-14
cdef double STEP_TOL = 1e-15


cdef int _chol(double* A, int n) nogil:
    """In-place lower Cholesky of the row-major n x n matrix A."""
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = A[j * n + j]
        for k in range(j):
            s -= A[j * n + k] * A[j * n + k]
        if not (s > 0.0):
            return j + 1
        A[j * n + j] = sqrt(s)
        for i in range(j + 1, n):
            s = A[i * n + j]
            for k in range(j):
                s -= A[i * n + k] * A[j * n + k]
            A[i * n + j] = s / A[j * n + j]
    return 0


cdef void _chol_solve(double* Lf, int n, double* b) nogil:
    cdef int i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= Lf[i * n + k] * b[k]
        b[i] = s / Lf[i * n + i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= Lf[k * n + i] * b[k]
        b[i] = s / Lf[i * n + i]


def box_qp(double[:, ::1] H, double[::1] f, double[::1] lo, double[::1] hi, int max_iter):
    cdef int n = f.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x_arr = np.zeros(n)
    cdef cnp.ndarray[cnp.int8_t, ndim=1] state_arr = np.zeros(n, dtype=np.int8)
    cdef double[::1] x = x_arr
    cdef signed char[::1] state = state_arr
    cdef double* work = <double*> malloc(n * n * sizeof(double))
    cdef double* xhat = <double*> malloc(n * sizeof(double))
    cdef double* rhs = <double*> malloc(n * sizeof(double))
    cdef double* ratios = <double*> malloc(n * sizeof(double))
    cdef signed char* sides = <signed char*> malloc(n * sizeof(signed char))
    cdef int* freeidx = <int*> malloc(n * sizeof(int))
    cdef int i, j, a, b, nf, it, block, release, info
    cdef double s, pi, rmin, mmin, scale, gscale, hx
    cdef int status = MAX_ITER
    cdef int iters = max_iter
    if work == NULL or xhat == NULL or rhs == NULL or ratios == NULL or sides == NULL or freeidx == NULL:
        free(work); free(xhat); free(rhs); free(ratios); free(sides); free(freeidx)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                for j in range(n):
                    work[i * n + j] = 2.0 * H[i, j]
            info = _chol(work, n)
            if info != 0:
                status = NOT_PD
                iters = 0
            else:
                for i in range(n):
                    xhat[i] = -f[i]
                _chol_solve(work, n, xhat)
                for i in range(n):
                    x[i] = xhat[i]
                    if lo[i] == hi[i]:
                        x[i] = lo[i]
                        state[i] = FIXED
                    elif xhat[i] <= lo[i]:
                        x[i] = lo[i]
                        state[i] = AT_LOWER
                    elif xhat[i] >= hi[i]:
                        x[i] = hi[i]
                        state[i] = AT_UPPER
                scale = 1.0
                s = 0.0
                for i in range(n):
                    if fabs(f[i]) > s:
                        s = fabs(f[i])
                scale += s

                for it in range(max_iter):
                    nf = 0
                    for i in range(n):
                        xhat[i] = x[i]
                        if state[i] == FREE:
                            freeidx[nf] = i
                            nf += 1
                    if nf > 0:
                        for a in range(nf):
                            i = freeidx[a]
                            s = -f[i]
                            for j in range(n):
                                if state[j] != FREE:
                                    s -= 2.0 * H[i, j] * x[j]
                            rhs[a] = s
                            for b in range(nf):
                                work[a * nf + b] = 2.0 * H[i, freeidx[b]]
                        info = _chol(work, nf)
                        if info != 0:
                            status = NOT_PD
                            iters = it
                            break
                        _chol_solve(work, nf, rhs)
                        for a in range(nf):
                            xhat[freeidx[a]] = rhs[a]

                    rmin = INFINITY
                    for i in range(n):
                        ratios[i] = INFINITY
                        sides[i] = 0
                        if state[i] != FREE:
                            continue
                        pi = xhat[i] - x[i]
                        if fabs(pi) <= STEP_TOL * (1.0 + fabs(x[i])):
                            continue
                        if pi < 0.0 and isfinite(lo[i]):
                            ratios[i] = (lo[i] - x[i]) / pi
                            if ratios[i] < 0.0:
                                ratios[i] = 0.0
                            sides[i] = AT_LOWER
                        elif pi > 0.0 and isfinite(hi[i]):
                            ratios[i] = (hi[i] - x[i]) / pi
                            if ratios[i] < 0.0:
                                ratios[i] = 0.0
                            sides[i] = AT_UPPER
                        if ratios[i] < rmin:
                            rmin = ratios[i]
                    if rmin < 1.0:
                        block = -1
                        for i in range(n):
                            if ratios[i] <= rmin + TIE_TOL:
                                block = i
                                break
                        for i in range(n):
                            x[i] = x[i] + rmin * (xhat[i] - x[i])
                        if sides[block] == AT_LOWER:
                            x[block] = lo[block]
                        else:
                            x[block] = hi[block]
                        state[block] = sides[block]
                        continue

                    for i in range(n):
                        x[i] = xhat[i]
                    # multipliers of the bound constraints; rhs holds the gradient
                    gscale = scale
                    s = 0.0
                    for i in range(n):
                        hx = 0.0
                        for j in range(n):
                            hx += 2.0 * H[i, j] * x[j]
                        rhs[i] = hx + f[i]
                        if fabs(hx) > s:
                            s = fabs(hx)
                    gscale += s
                    mmin = INFINITY
                    for i in range(n):
                        ratios[i] = INFINITY
                        if state[i] == AT_LOWER:
                            ratios[i] = rhs[i]
                        elif state[i] == AT_UPPER:
                            ratios[i] = -rhs[i]
                        if ratios[i] < mmin:
                            mmin = ratios[i]
                    if mmin >= -MULT_TOL * gscale:
                        status = OPTIMAL
                        iters = it + 1
                        break
                    release = -1
                    for i in range(n):
                        if ratios[i] <= mmin + TIE_TOL * gscale:
                            release = i
                            break
                    state[release] = FREE
    finally:
        free(work); free(xhat); free(rhs); free(ratios); free(sides); free(freeidx)
    if status == NOT_PD:
        x_arr[:] = 0.0
    return x_arr, state_arr, status, iters
