"""Optimal control problems: condensed MPC, unregularized DPC and regularized DPC.

All problems share the stage cost ``||y_f - y_ref||_Qcal^2 + ||u_f||_Rcal^2``
with block-diagonal lifts of the per-step weights ``Q`` and ``R``, and
per-component box constraints on ``u_f`` and ``y_f``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import block_diag

from . import qp
from .data import DataMatrix
from .errors import DimensionError, PreconditionError
from .linalg import is_positive_definite, null_space, numerical_rank, pinv
from .predictors import (
    PROJECTED_TWO_NORM,
    TWO_NORM,
    DataTerms,
    RegularizerSpec,
    data_terms,
    mpc_predictor,
    optimal_generator,
    regularizer_cost,
)


@dataclass(frozen=True)
class BoxSet:
    """Componentwise interval ``lo <= v <= hi``; infinite entries allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.size != hi.size:
            raise DimensionError("box bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise PreconditionError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise PreconditionError("box is empty: some lower bound exceeds its upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unbounded(cls, n: int) -> "BoxSet":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def interval(cls, lo: float, hi: float, n: int) -> "BoxSet":
        return cls(np.full(n, lo), np.full(n, hi))

    @property
    def size(self) -> int:
        return self.lo.size

    @property
    def bounded(self) -> bool:
        return bool(np.any(np.isfinite(self.lo)) or np.any(np.isfinite(self.hi)))

    def lift(self, per_step: int, N_f: int) -> "BoxSet":
        """Repeat a per-step box over the horizon (no-op if already lifted)."""
        if self.size == per_step * N_f:
            return self
        if self.size == per_step:
            return BoxSet(np.tile(self.lo, N_f), np.tile(self.hi, N_f))
        raise DimensionError(f"box has {self.size} components, expected {per_step} or {per_step * N_f}")

    def contains(self, v, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float).reshape(-1)
        return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))


def _bounds_to_json(v: np.ndarray):
    return [None if not np.isfinite(x) else float(x) for x in v]


def _bounds_from_json(v, sign: float):
    if v is None:
        return None
    return np.array([sign * np.inf if x is None else float(x) for x in v], dtype=float)


@dataclass(frozen=True)
class OcpSpec:
    """Weights, horizons, regularizer and constraint sets of one OCP."""

    Q: np.ndarray
    R: np.ndarray
    N_p: int
    N_f: int
    reg: Optional[RegularizerSpec] = None
    Uset: Optional[BoxSet] = None
    Yset: Optional[BoxSet] = None
    y_ref: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if not is_positive_definite(Q):
            raise PreconditionError("Q must be symmetric positive definite")
        if not is_positive_definite(R):
            raise PreconditionError("R must be symmetric positive definite")
        if self.N_f < 1:
            raise PreconditionError("N_f must be >= 1")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        p, m = Q.shape[0], R.shape[0]
        object.__setattr__(
            self, "Uset", BoxSet.unbounded(m * self.N_f) if self.Uset is None else self.Uset.lift(m, self.N_f)
        )
        object.__setattr__(
            self, "Yset", BoxSet.unbounded(p * self.N_f) if self.Yset is None else self.Yset.lift(p, self.N_f)
        )
        if self.y_ref is not None:
            r = np.asarray(self.y_ref, dtype=float).reshape(-1)
            if r.size == p:
                r = np.tile(r, self.N_f)
            if r.size != p * self.N_f:
                raise DimensionError(f"y_ref has {r.size} entries, expected {p} or {p * self.N_f}")
            object.__setattr__(self, "y_ref", r)

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def Qcal(self) -> np.ndarray:
        return np.kron(np.eye(self.N_f), self.Q)

    @property
    def Rcal(self) -> np.ndarray:
        return np.kron(np.eye(self.N_f), self.R)

    @property
    def y_ref_full(self) -> np.ndarray:
        return np.zeros(self.p * self.N_f) if self.y_ref is None else self.y_ref

    def stage_cost(self, u_f, y_f) -> float:
        e = np.asarray(y_f, dtype=float) - self.y_ref_full
        u = np.asarray(u_f, dtype=float)
        return float(e @ self.Qcal @ e + u @ self.Rcal @ u)

    def check_data(self, D: DataMatrix) -> None:
        if (D.m, D.p, D.N_p, D.N_f) != (self.m, self.p, self.N_p, self.N_f):
            raise DimensionError(
                f"OCP (m, p, N_p, N_f) = {(self.m, self.p, self.N_p, self.N_f)} does not match data "
                f"{(D.m, D.p, D.N_p, D.N_f)}"
            )

    def to_dict(self) -> dict:
        d = {
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "N_p": self.N_p,
            "N_f": self.N_f,
            "u_lo": _bounds_to_json(self.Uset.lo),
            "u_hi": _bounds_to_json(self.Uset.hi),
            "y_lo": _bounds_to_json(self.Yset.lo),
            "y_hi": _bounds_to_json(self.Yset.hi),
        }
        if self.reg is not None:
            d["reg"] = self.reg.to_dict()
        if self.y_ref is not None:
            d["y_ref"] = self.y_ref.tolist()
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "OcpSpec":
        Q = np.atleast_2d(np.asarray(d["Q"], dtype=float))
        R = np.atleast_2d(np.asarray(d["R"], dtype=float))
        reg = d.get("reg")
        reg = None if reg is None else RegularizerSpec(reg["kind"], reg["lambda_a"])

        def box(lo_key, hi_key):
            lo = _bounds_from_json(d.get(lo_key), -1.0)
            hi = _bounds_from_json(d.get(hi_key), 1.0)
            if lo is None and hi is None:
                return None
            n = lo.size if lo is not None else hi.size
            lo = np.full(n, -np.inf) if lo is None else lo
            hi = np.full(n, np.inf) if hi is None else hi
            return BoxSet(lo, hi)

        return cls(
            Q=Q,
            R=R,
            N_p=int(d.get("N_p", 1)),
            N_f=int(d["N_f"]),
            reg=reg,
            Uset=box("u_lo", "u_hi"),
            Yset=box("y_lo", "y_hi"),
            y_ref=d.get("y_ref"),
        )

    @classmethod
    def from_json(cls, source) -> "OcpSpec":
        text = source
        if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
            text = Path(source).read_text()
        return cls.from_dict(json.loads(text))


@dataclass
class OcpSolution:
    u_f: np.ndarray
    y_f: np.ndarray
    a: Optional[np.ndarray]
    value: float
    status: str
    active_in: tuple = ()
    active_out: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == qp.OPTIMAL

    def to_dict(self) -> dict:
        return {
            "u_f": self.u_f.tolist(),
            "y_f": self.y_f.tolist(),
            "a": None if self.a is None else self.a.tolist(),
            "value": self.value,
            "status": self.status,
            "active_in": [list(s) for s in self.active_in],
            "active_out": [list(s) for s in self.active_out],
            "diagnostics": self.diagnostics,
        }


def _split_signature(sig, start: int, stop: int) -> tuple:
    return tuple((i - start, s) for i, s in sig if start <= i < stop)


def _package(sol: qp.QpSolution, problem: qp.QpProblem, u_slice: slice, y_slice: slice, a, spec, extra=0.0,
             **diag) -> OcpSolution:
    if sol.status != qp.OPTIMAL:
        nan_u = np.full(u_slice.stop - u_slice.start, np.nan)
        nan_y = np.full(y_slice.stop - y_slice.start, np.nan)
        return OcpSolution(nan_u, nan_y, None, np.nan, sol.status, diagnostics=dict(diag))
    u = sol.x[u_slice].copy()
    y = sol.x[y_slice].copy()
    diag.update(
        kkt_residual=qp.kkt_residual(problem, sol),
        iterations=sol.iterations,
        min_norm=bool(sol.min_norm or diag.get("min_norm", False)),
    )
    return OcpSolution(
        u_f=u,
        y_f=y,
        a=a,
        value=spec.stage_cost(u, y) + extra,
        status=sol.status,
        active_in=_split_signature(sol.signature, u_slice.start, u_slice.stop),
        active_out=_split_signature(sol.signature, y_slice.start, y_slice.stop),
        diagnostics=diag,
    )


def _uy_bounds(spec: OcpSpec):
    return np.concatenate([spec.Uset.lo, spec.Yset.lo]), np.concatenate([spec.Uset.hi, spec.Yset.hi])


def solve_mpc(plant, spec: OcpSpec, x0, setting: str = "io") -> OcpSolution:
    """MPC over ``(u_f, y_f)`` with ``y_f = O x0 + T u_f`` as equality.

    ``plant`` is an object with ``A, B, C, D`` attributes or a 4-tuple.
    ``setting`` picks the output window as in :func:`mpc_predictor`.
    """
    if spec.reg is not None:
        raise PreconditionError("MPC takes no regularizer")
    A, B, C, D = (plant.A, plant.B, plant.C, plant.D) if hasattr(plant, "A") else plant
    pred = mpc_predictor(A, B, C, D, spec.N_f, setting)
    n_u, n_y = pred.T.shape[1], pred.T.shape[0]
    if (n_u, n_y) != (spec.m * spec.N_f, spec.p * spec.N_f):
        raise DimensionError("plant dimensions do not match the OCP weights")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    H = block_diag(spec.Rcal, spec.Qcal)
    f = np.concatenate([np.zeros(n_u), -2.0 * spec.Qcal @ spec.y_ref_full])
    Aeq = np.hstack([-pred.T, np.eye(n_y)])
    beq = pred.O @ x0
    lo, hi = _uy_bounds(spec)
    problem = qp.QpProblem(H, f, Aeq, beq, lo, hi)
    sol = qp.solve_box(problem)
    return _package(sol, problem, slice(0, n_u), slice(n_u, n_u + n_y), None, spec)


def solve_dpc_unregularized(D: DataMatrix, spec: OcpSpec, xi, feas_tol: float = 1e-8) -> OcpSolution:
    """DPC with ``(xi; u_f; y_f) = D a`` as hard constraint and no regularizer.

    The generator is reported minimum-norm: directions in ``ker(D)`` leave
    ``(u_f, y_f)`` unchanged and are removed (flagged as ``min_norm``).
    """
    spec.check_data(D)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != D.n_xi:
        raise DimensionError(f"xi has {xi.size} entries, expected {D.n_xi}")
    Wp = D.Wp
    a0 = pinv(Wp) @ xi
    resid = float(np.linalg.norm(Wp @ a0 - xi))
    if resid > feas_tol * (1.0 + np.linalg.norm(xi)):
        raise PreconditionError(
            f"xi is not in the image of W_p (least-squares residual {resid:.3e})"
        )
    # a = a0 + N V w with N spanning ker(W_p) and V the row space of (U_f; Y_f) N
    N = null_space(Wp)
    UY = np.vstack([D.Uf, D.Yf])
    M = UY @ N
    if M.size:
        # rank(M) = rank(D) - rank(W_p); measured on the raw data it is not
        # polluted by the roundoff in N
        _, _, Vt = np.linalg.svd(M, full_matrices=False)
        r = min(max(numerical_rank(D.full) - numerical_rank(Wp), 0), Vt.shape[0])
        basis = N @ Vt[:r].T
    else:
        basis = np.zeros((D.ell, 0))
    r = basis.shape[1]
    n_u, n_y = D.n_u, D.n_y
    Mb = UY @ basis
    H = block_diag(np.zeros((r, r)), spec.Rcal, spec.Qcal)
    f = np.concatenate([np.zeros(r + n_u), -2.0 * spec.Qcal @ spec.y_ref_full])
    Aeq = np.hstack([-Mb, np.eye(n_u + n_y)])
    beq = UY @ a0
    lo, hi = _uy_bounds(spec)
    lo = np.concatenate([np.full(r, -np.inf), lo])
    hi = np.concatenate([np.full(r, np.inf), hi])
    problem = qp.QpProblem(H, f, Aeq, beq, lo, hi)
    sol = qp.solve_box(problem)
    a = None
    if sol.status == qp.OPTIMAL:
        a = a0 + basis @ sol.x[:r]
    kernel_dim = D.ell - numerical_rank(D.full)
    return _package(
        sol, problem, slice(r, r + n_u), slice(r + n_u, r + n_u + n_y), a, spec,
        min_norm=kernel_dim > 0, xi_residual=resid,
    )


def condensed_qp(D: DataMatrix, spec: OcpSpec, xi, terms: Optional[DataTerms] = None):
    """Outer problem over ``v = (u_f, y_f)`` with ``h*`` expanded in closed form.

    Returns ``(problem, constant)`` such that the full objective equals
    ``problem.objective(v) + constant``.
    """
    reg = spec.reg
    if reg is None:
        raise PreconditionError("condensed form needs a regularizer")
    t = data_terms(D) if terms is None else terms
    xi = np.asarray(xi, dtype=float).reshape(-1)
    n_xi, n_u, n_y = D.n_xi, D.n_u, D.n_y
    lam = reg.lambda_a
    K_xi, K_u = t.spc.K_xi, t.spc.K_u
    E = np.hstack([-K_u, np.eye(n_y)])  # y_f - y_spc = E v - K_xi xi
    c = K_xi @ xi
    Qr = t.Qreg
    yref = spec.y_ref_full
    H = block_diag(spec.Rcal, spec.Qcal) + lam * E.T @ Qr @ E
    f = lam * (-2.0) * E.T @ (Qr @ c)
    f[n_u:] += -2.0 * spec.Qcal @ yref
    const = float(yref @ spec.Qcal @ yref) + lam * float(c @ Qr @ c)
    if reg.kind == TWO_NORM:
        Gi = t.G_inv
        H[:n_u, :n_u] += lam * Gi[n_xi:, n_xi:]
        f[:n_u] += 2.0 * lam * Gi[n_xi:, :n_xi] @ xi
        const += lam * float(xi @ Gi[:n_xi, :n_xi] @ xi)
    lo, hi = _uy_bounds(spec)
    return qp.QpProblem(0.5 * (H + H.T), f, lo=lo, hi=hi), const


def solve_dpc_regularized(D: DataMatrix, spec: OcpSpec, xi, form: str = "condensed",
                          terms: Optional[DataTerms] = None) -> OcpSolution:
    """Regularized DPC in condensed (default) or full ``(u_f, y_f, a)`` form."""
    spec.check_data(D)
    if spec.reg is None:
        raise PreconditionError("no regularizer given; use solve_dpc_unregularized")
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != D.n_xi:
        raise DimensionError(f"xi has {xi.size} entries, expected {D.n_xi}")
    t = data_terms(D) if terms is None else terms
    n_u, n_y = D.n_u, D.n_y
    if form == "condensed":
        problem, _ = condensed_qp(D, spec, xi, t)
        sol = qp.solve_box(problem)
        if sol.status != qp.OPTIMAL:
            return _package(sol, problem, slice(0, n_u), slice(n_u, n_u + n_y), None, spec)
        u, y = sol.x[:n_u], sol.x[n_u:]
        a = optimal_generator(D, xi, u, y)
        h = regularizer_cost(D, spec.reg, xi, u, y, terms=t)
        return _package(sol, problem, slice(0, n_u), slice(n_u, n_u + n_y), a, spec, extra=h, form=form)
    if form == "full":
        ell = D.ell
        lam = spec.reg.lambda_a
        Ha = lam * np.eye(ell) if spec.reg.kind == TWO_NORM else lam * (np.eye(ell) - t.Pi)
        H = block_diag(spec.Rcal, spec.Qcal, Ha)
        f = np.concatenate([np.zeros(n_u), -2.0 * spec.Qcal @ spec.y_ref_full, np.zeros(ell)])
        Aeq = np.block([
            [np.zeros((D.n_xi, n_u + n_y)), D.Wp],
            [-np.eye(n_u), np.zeros((n_u, n_y)), D.Uf],
            [np.zeros((n_y, n_u)), -np.eye(n_y), D.Yf],
        ])
        beq = np.concatenate([xi, np.zeros(n_u + n_y)])
        lo, hi = _uy_bounds(spec)
        lo = np.concatenate([lo, np.full(ell, -np.inf)])
        hi = np.concatenate([hi, np.full(ell, np.inf)])
        problem = qp.QpProblem(H, f, Aeq, beq, lo, hi)
        sol = qp.solve_box(problem)
        a = None if sol.status != qp.OPTIMAL else sol.x[n_u + n_y:].copy()
        h = 0.0
        if a is not None:
            h = float(a @ Ha @ a)
        return _package(sol, problem, slice(0, n_u), slice(n_u, n_u + n_y), a, spec, extra=h, form=form)
    raise PreconditionError(f"unknown form {form!r}; expected 'condensed' or 'full'")


__all__ = [
    "BoxSet",
    "OcpSpec",
    "OcpSolution",
    "solve_mpc",
    "solve_dpc_unregularized",
    "solve_dpc_regularized",
    "condensed_qp",
    "PROJECTED_TWO_NORM",
    "TWO_NORM",
]
