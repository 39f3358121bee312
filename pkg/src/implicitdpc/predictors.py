"""Predictors: SPC least squares, MPC multi-step matrices and implicit predictors.

Notation used in code:

* ``Z = (W_p; U_f)`` is the regressor block, ``G = Z Z^T``.
* ``Pi = Z^T G^{-1} Z`` projects onto the row space of ``Z``; ``I - Pi`` onto
  its kernel.
* ``Qreg = (Y_f (I - Pi) Y_f^T)^{-1}``.
* The implicit predictor is ``(lam*Qreg + Qcal)^{-1} lam*Qreg y_spc``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import qp
from .data import DataMatrix
from .errors import DimensionError, NumericalError, PreconditionError
from .linalg import (
    block_diag_repeat,
    is_positive_definite,
    kernel_projector,
    numerical_rank,
    pinv,
    solve_spd,
    symmetrize,
)

TWO_NORM = "two_norm"
PROJECTED_TWO_NORM = "projected_two_norm"
REGULARIZER_KINDS = (TWO_NORM, PROJECTED_TWO_NORM)


@dataclass(frozen=True)
class SpcPredictor:
    K: np.ndarray
    n_xi: int
    n_u: int
    n_y: int

    @property
    def K_xi(self) -> np.ndarray:
        return self.K[:, : self.n_xi]

    @property
    def K_u(self) -> np.ndarray:
        return self.K[:, self.n_xi:]

    def __call__(self, xi, u_f) -> np.ndarray:
        return spc_predict(self, xi, u_f)


def fit_spc(D: DataMatrix) -> SpcPredictor:
    """``K = Y_f pinv((W_p; U_f))``; no rank requirement."""
    K = D.Yf @ pinv(D.Z)
    return SpcPredictor(K=K, n_xi=D.n_xi, n_u=D.n_u, n_y=D.n_y)


def spc_predict(spc: SpcPredictor, xi, u_f) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    u_f = np.asarray(u_f, dtype=float).reshape(-1)
    if xi.size != spc.n_xi or u_f.size != spc.n_u:
        raise DimensionError(
            f"SPC predictor expects xi of size {spc.n_xi} and u_f of size {spc.n_u}, "
            f"got {xi.size} and {u_f.size}"
        )
    return spc.K @ np.concatenate([xi, u_f])


@dataclass(frozen=True)
class MpcPredictor:
    """``y_f = O x0 + T u_f`` for a known LTI model."""

    O: np.ndarray
    T: np.ndarray

    def __call__(self, x0, u_f) -> np.ndarray:
        return self.O @ np.asarray(x0, dtype=float).reshape(-1) + self.T @ np.asarray(u_f, dtype=float).reshape(-1)


def mpc_predictor(A, B, C, D, N_f: int, setting: str = "io") -> MpcPredictor:
    """Extended observability and impulse-response (Toeplitz) matrices.

    io: ``y_f = (y(0), .., y(N_f-1))``.  state: ``y_f = (y(1), .., y(N_f))``,
    the outputs after each input, as in the state-setting data columns.
    """
    A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C, D))
    n = A.shape[0]
    m = B.shape[1]
    p = C.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or D.shape != (p, m):
        raise DimensionError(
            f"inconsistent (A, B, C, D) shapes {A.shape}, {B.shape}, {C.shape}, {D.shape}"
        )
    if N_f < 1:
        raise PreconditionError("N_f must be >= 1")
    if setting not in ("io", "state"):
        raise PreconditionError(f"unknown setting {setting!r}")
    shift = 1 if setting == "state" else 0
    if shift and np.any(D != 0):
        raise PreconditionError("state setting needs D = 0")
    O = np.zeros((p * N_f, n))
    markov = []  # C A^k B
    Ak = np.eye(n)
    for k in range(N_f + shift):
        if k >= shift:
            O[(k - shift) * p:(k - shift + 1) * p] = C @ Ak
        markov.append(C @ Ak @ B)
        Ak = Ak @ A
    T = np.zeros((p * N_f, m * N_f))
    for i in range(N_f):
        if not shift:
            T[i * p:(i + 1) * p, i * m:(i + 1) * m] = D
        for j in range(i + shift):
            T[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i - j - 1 + shift]
    return MpcPredictor(O=O, T=T)


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str
    lambda_a: float

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise PreconditionError(
                f"unknown regularizer kind {self.kind!r}; expected one of {REGULARIZER_KINDS}"
            )
        lam = float(self.lambda_a)
        if not np.isfinite(lam) or lam <= 0.0:
            raise PreconditionError(f"lambda_a must be positive, got {self.lambda_a!r}")
        object.__setattr__(self, "lambda_a", lam)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda_a": self.lambda_a}


def require_full_row_rank(D: DataMatrix) -> None:
    r = numerical_rank(D.full)
    if r < D.rows:
        raise PreconditionError(
            f"data matrix is not full row rank (rank {r} < {D.rows} rows); "
            "the regularized formulas need it - use the unregularized exact-data "
            "solver in implicitdpc.ocp for rank-deficient data"
        )


@dataclass(frozen=True)
class DataTerms:
    """Quantities of one data matrix shared by every regularized computation."""

    spc: SpcPredictor
    Pi: np.ndarray
    Qreg: np.ndarray
    G_inv: np.ndarray


def data_terms(D: DataMatrix) -> DataTerms:
    """Compute ``K``, ``Pi``, ``Qreg`` and ``(Z Z^T)^{-1}``; needs full row rank."""
    require_full_row_rank(D)
    Z = D.Z
    P_ker = kernel_projector(Z, name="(W_p; U_f)")
    Pi = symmetrize(np.eye(D.ell) - P_ker)
    Yk = D.Yf @ P_ker
    M = symmetrize(Yk @ Yk.T)
    if numerical_rank(M) < M.shape[0] or not is_positive_definite(M):
        raise PreconditionError(
            "Q_reg undefined: future outputs linearly explained by past data and inputs"
        )
    Qreg = symmetrize(solve_spd(M, np.eye(M.shape[0])))
    G = symmetrize(Z @ Z.T)
    G_inv = symmetrize(solve_spd(G, np.eye(G.shape[0])))
    return DataTerms(spc=fit_spc(D), Pi=Pi, Qreg=Qreg, G_inv=G_inv)


def optimal_generator(D: DataMatrix, xi, u_f, y_f) -> np.ndarray:
    """Minimum-norm generator ``a* = pinv(D) (xi; u_f; y_f)``.

    The same vector minimizes both the plain and the projected two-norm
    regularizer under full row rank.
    """
    require_full_row_rank(D)
    return pinv(D.full) @ D.stack(xi, u_f, y_f)


def regularizer_cost(D: DataMatrix, reg: RegularizerSpec, xi, u_f, y_f, terms: Optional[DataTerms] = None) -> float:
    """Closed-form optimal regularizer cost ``h*(xi, u_f, y_f)``.

    ``lam (y_f - y_spc)^T Qreg (y_f - y_spc)``, plus
    ``lam (xi; u_f)^T (Z Z^T)^{-1} (xi; u_f)`` for the unprojected kind.
    """
    t = data_terms(D) if terms is None else terms
    w = D.stack(xi, u_f, y_f)
    z = w[: D.n_xi + D.n_u]
    e = w[D.n_xi + D.n_u:] - t.spc.K @ z
    cost = reg.lambda_a * float(e @ t.Qreg @ e)
    if reg.kind == TWO_NORM:
        cost += reg.lambda_a * float(z @ t.G_inv @ z)
    return cost


def direct_regularizer(reg: RegularizerSpec, a, Pi: Optional[np.ndarray] = None) -> float:
    """Evaluate ``h(a)`` itself."""
    a = np.asarray(a, dtype=float)
    if reg.kind == TWO_NORM:
        return reg.lambda_a * float(a @ a)
    r = a - Pi @ a
    return reg.lambda_a * float(r @ r)


def lift_weight(W, p: int, N_f: int, name: str = "weight") -> np.ndarray:
    """Accept a per-step ``p x p`` weight or an already lifted one."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape == (p, p) and N_f > 1:
        return block_diag_repeat(W, N_f)
    if W.shape == (p * N_f, p * N_f):
        return W
    raise DimensionError(f"{name} has shape {W.shape}, expected ({p}, {p}) or ({p * N_f}, {p * N_f})")


@dataclass(frozen=True)
class ImplicitPredictorModel:
    """Implicit predictor of regularized DPC for one data matrix and weight."""

    Pi: np.ndarray
    Qreg: np.ndarray
    gain: np.ndarray
    spc: SpcPredictor
    lambda_a: float
    Qcal: np.ndarray
    kind: str = TWO_NORM
    y_ref: Optional[np.ndarray] = None

    @property
    def H_y(self) -> np.ndarray:
        """Hessian ``lam*Qreg + Qcal`` of the output-only problem."""
        return symmetrize(self.lambda_a * self.Qreg + self.Qcal)

    @property
    def ref_offset(self) -> np.ndarray:
        """Constant term ``(lam*Qreg + Qcal)^{-1} Qcal y_ref`` (zero without a reference)."""
        if self.y_ref is None:
            return np.zeros(self.gain.shape[0])
        return solve_spd(self.H_y, self.Qcal @ self.y_ref)

    def affine(self, xi):
        """Return ``(P_u, p0)`` with ``predict(xi, u) = P_u u + p0``."""
        xi = np.asarray(xi, dtype=float).reshape(-1)
        P_u = self.gain @ self.spc.K_u
        p0 = self.gain @ (self.spc.K_xi @ xi) + self.ref_offset
        return P_u, p0

    def to_dict(self) -> dict:
        d = {
            "dims": {"n_xi": self.spc.n_xi, "n_u": self.spc.n_u, "n_y": self.spc.n_y},
            "lambda_a": self.lambda_a,
            "kind": self.kind,
            "K": self.spc.K.tolist(),
            "Pi": self.Pi.tolist(),
            "Qreg": self.Qreg.tolist(),
            "gain": self.gain.tolist(),
            "Qcal": self.Qcal.tolist(),
        }
        if self.y_ref is not None:
            d["y_ref"] = self.y_ref.tolist()
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "ImplicitPredictorModel":
        dims = d["dims"]
        spc = SpcPredictor(np.array(d["K"], dtype=float), int(dims["n_xi"]), int(dims["n_u"]), int(dims["n_y"]))
        y_ref = d.get("y_ref")
        return cls(
            Pi=np.array(d["Pi"], dtype=float),
            Qreg=np.array(d["Qreg"], dtype=float),
            gain=np.array(d["gain"], dtype=float),
            spc=spc,
            lambda_a=float(d["lambda_a"]),
            Qcal=np.array(d["Qcal"], dtype=float),
            kind=d.get("kind", TWO_NORM),
            y_ref=None if y_ref is None else np.array(y_ref, dtype=float),
        )

    @classmethod
    def from_json(cls, source) -> "ImplicitPredictorModel":
        text = source
        if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
            text = Path(source).read_text()
        return cls.from_dict(json.loads(text))


def build_implicit_model(
    D: DataMatrix,
    reg: RegularizerSpec,
    Qcal,
    y_ref=None,
    terms: Optional[DataTerms] = None,
) -> ImplicitPredictorModel:
    """Build the linear (affine with ``y_ref``) implicit predictor.

    Both regularizer kinds give the same model: their optimal costs differ
    only by a term that does not involve ``y_f``.
    """
    t = data_terms(D) if terms is None else terms
    Qcal = lift_weight(Qcal, D.p, D.N_f, "Qcal")
    if not is_positive_definite(Qcal):
        raise PreconditionError("Qcal must be symmetric positive definite")
    lam = reg.lambda_a
    H_y = symmetrize(lam * t.Qreg + Qcal)
    gain = solve_spd(H_y, lam * t.Qreg)
    if y_ref is not None:
        y_ref = np.asarray(y_ref, dtype=float).reshape(-1)
        if y_ref.size == D.p and D.N_f > 1:
            y_ref = np.tile(y_ref, D.N_f)
        if y_ref.size != D.n_y:
            raise DimensionError(f"y_ref has {y_ref.size} entries, expected {D.n_y}")
    return ImplicitPredictorModel(
        Pi=t.Pi,
        Qreg=t.Qreg,
        gain=gain,
        spc=t.spc,
        lambda_a=lam,
        Qcal=Qcal,
        kind=reg.kind,
        y_ref=y_ref,
    )


def implicit_predict(model: ImplicitPredictorModel, xi, u_f) -> np.ndarray:
    """``gain @ y_spc``, or the affine reference-tracking variant."""
    y_spc = spc_predict(model.spc, xi, u_f)
    if model.y_ref is None:
        return model.gain @ y_spc
    rhs = model.lambda_a * model.Qreg @ y_spc + model.Qcal @ model.y_ref
    return solve_spd(model.H_y, rhs)


def output_qp(model: ImplicitPredictorModel, xi, u_f, lo, hi) -> qp.QpProblem:
    """The per-point output QP whose minimizer is the constrained predictor."""
    y_spc = spc_predict(model.spc, xi, u_f)
    f = -2.0 * model.lambda_a * model.Qreg @ y_spc
    if model.y_ref is not None:
        f = f - 2.0 * model.Qcal @ model.y_ref
    return qp.QpProblem(model.H_y, f, lo=lo, hi=hi)


def implicit_predict_constrained(model: ImplicitPredictorModel, xi, u_f, Yset):
    """Minimizer of the output QP over the box ``Yset``.

    Returns ``(y, signature)``.  Where the linear predictor already lies in
    the box it is returned unchanged with an empty signature.
    """
    lo, hi = _box_bounds(Yset, model.spc.n_y)
    y_lin = implicit_predict(model, xi, u_f)
    if np.all(y_lin >= lo) and np.all(y_lin <= hi):
        return y_lin, ()
    sol = qp.solve_box(output_qp(model, xi, u_f, lo, hi))
    if sol.status != qp.OPTIMAL:
        raise NumericalError(f"output QP ended with status {sol.status}")
    return sol.x, sol.signature


def coincidence_set_member(model: ImplicitPredictorModel, xi, u_f, Yset) -> bool:
    """Whether the linear predictor at ``(xi, u_f)`` already satisfies ``Yset``."""
    lo, hi = _box_bounds(Yset, model.spc.n_y)
    y = implicit_predict(model, xi, u_f)
    return bool(np.all(y >= lo) and np.all(y <= hi))


def _box_bounds(Yset, n: int):
    if Yset is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    lo = np.asarray(Yset.lo, dtype=float).reshape(-1)
    hi = np.asarray(Yset.hi, dtype=float).reshape(-1)
    if lo.size != n or hi.size != n:
        raise DimensionError(f"box has {lo.size} components, expected {n}")
    return lo, hi
