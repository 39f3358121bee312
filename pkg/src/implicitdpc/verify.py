"""Checks that an implicit predictor reproduces the DPC solutions it claims to.

Every check returns a :class:`VerificationReport`.  Gaps are stored already
scaled by the metric the check documents, so ``pass`` is simply both gaps
being within their tolerances.  Negative controls are reports that are
*expected* to fail; :func:`run_suite` treats them accordingly.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import qp
from .data import DataMatrix, build_from_independent, rank_diagnostics
from .errors import PreconditionError
from .ocp import OcpSpec, condensed_qp, solve_dpc_regularized, solve_dpc_unregularized, solve_mpc
from .predictors import (
    PROJECTED_TWO_NORM,
    TWO_NORM,
    ImplicitPredictorModel,
    RegularizerSpec,
    build_implicit_model,
    data_terms,
    fit_spc,
    implicit_predict,
    implicit_predict_constrained,
    mpc_predictor,
    regularizer_cost,
    spc_predict,
)
from .sim import LtiPlant, SplitMix64, simulate

UNCONSTRAINED_VALUE_TOL = 1e-7
CONSTRAINED_VALUE_TOL = 1e-6
UNCONSTRAINED_MINIMIZER_TOL = 1e-6
CONSTRAINED_MINIMIZER_TOL = 1e-4

GRID_POINTS = 41
REFINE_ROUNDS = 3


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class VerificationReport:
    check_name: str
    num_cases: int
    max_value_gap: float
    max_minimizer_gap: float
    value_tol: float
    minimizer_tol: float
    cases: list = field(default_factory=list)
    negative_control: bool = False
    notes: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_value_gap <= self.value_tol and self.max_minimizer_gap <= self.minimizer_tol)

    @property
    def as_expected(self) -> bool:
        """Positive checks should pass, negative controls should fail."""
        return self.passed != self.negative_control

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        tag = " (negative control, failure expected)" if self.negative_control else ""
        return (
            f"{self.check_name}: {verdict}{tag} cases={self.num_cases} "
            f"value_gap={self.max_value_gap:.3e}/{self.value_tol:.0e} "
            f"minimizer_gap={self.max_minimizer_gap:.3e}/{self.minimizer_tol:.0e}"
        )

    def to_dict(self) -> dict:
        return _jsonable({
            "check_name": self.check_name,
            "num_cases": self.num_cases,
            "max_value_gap": self.max_value_gap,
            "max_minimizer_gap": self.max_minimizer_gap,
            "value_tol": self.value_tol,
            "minimizer_tol": self.minimizer_tol,
            "pass": self.passed,
            "negative_control": self.negative_control,
            "notes": self.notes,
            "cases": self.cases,
        })

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        rep = cls(
            check_name=d["check_name"],
            num_cases=int(d["num_cases"]),
            max_value_gap=float(d["max_value_gap"]),
            max_minimizer_gap=float(d["max_minimizer_gap"]),
            value_tol=float(d["value_tol"]),
            minimizer_tol=float(d["minimizer_tol"]),
            cases=list(d.get("cases", [])),
            negative_control=bool(d.get("negative_control", False)),
            notes=d.get("notes", ""),
        )
        if "pass" in d and bool(d["pass"]) != rep.passed:
            raise PreconditionError("report 'pass' flag contradicts its gaps and tolerances")
        return rep

    @classmethod
    def from_json(cls, source) -> "VerificationReport":
        text = source if isinstance(source, str) and source.lstrip().startswith("{") else Path(source).read_text()
        return cls.from_dict(json.loads(text))


def _report(name, gaps_v, gaps_m, vtol, mtol, cases, negative=False, notes="") -> VerificationReport:
    return VerificationReport(
        check_name=name,
        num_cases=len(cases),
        max_value_gap=float(max(gaps_v, default=0.0)),
        max_minimizer_gap=float(max(gaps_m, default=0.0)),
        value_tol=vtol,
        minimizer_tol=mtol,
        cases=cases,
        negative_control=negative,
        notes=notes,
    )


def sample_xi(n_xi: int, num: int, seed: int = 0, radius: float = 2.0) -> np.ndarray:
    """``num`` points uniform in ``[-radius, radius]^n_xi`` from SplitMix64."""
    rng = SplitMix64(seed)
    return np.array([[radius * (2.0 * rng.uniform() - 1.0) for _ in range(n_xi)] for _ in range(num)])


def scaled_gain_model(model: ImplicitPredictorModel, factor: float) -> ImplicitPredictorModel:
    """A deliberately wrong predictor (gain times ``factor``) for negative controls."""
    if model.y_ref is not None:
        raise PreconditionError("gain scaling is defined for the reference-free predictor only")
    return dataclasses.replace(model, gain=factor * model.gain)


def unconstrained(spec: OcpSpec) -> OcpSpec:
    """``spec`` with both boxes removed."""
    return dataclasses.replace(spec, Uset=None, Yset=None)


def with_regularizer(spec: OcpSpec, kind: str, lambda_a: Optional[float] = None) -> OcpSpec:
    lam = spec.reg.lambda_a if lambda_a is None else lambda_a
    return dataclasses.replace(spec, reg=RegularizerSpec(kind, lam))


def _rel(a: float, b: float) -> float:
    return abs(a - b) / (1.0 + abs(b))


# ---------------------------------------------------------------------------
# Definition 1


def _restricted_linear(D, spec, model, xi, terms):
    """Restricted problem with ``y_f = P_u u_f + p0`` as an exact QP over ``(u, y)``."""
    problem, const = condensed_qp(D, spec, xi, terms)
    P_u, p0 = model.affine(xi)
    n_u, n_y = D.n_u, D.n_y
    restricted = qp.QpProblem(
        problem.H, problem.f, np.hstack([-P_u, np.eye(n_y)]), p0, problem.lo, problem.hi
    )
    sol = qp.solve_box(restricted)
    if sol.status != qp.OPTIMAL:
        return np.inf, np.full(n_u, np.nan)
    return sol.value + const, sol.x[:n_u]


def _grid_axes(lo, hi, centre, h, points):
    axes = []
    for i in range(lo.size):
        a = max(lo[i], centre[i] - h[i]) if centre is not None else lo[i]
        b = min(hi[i], centre[i] + h[i]) if centre is not None else hi[i]
        axes.append(np.linspace(a, b, points))
    return axes


def _restricted_constrained(D, spec, model, xi, terms, u_star, points=GRID_POINTS, rounds=REFINE_ROUNDS):
    """Restricted problem with the constrained predictor, minimized over a refined grid.

    The candidate ``u_star`` is evaluated along with the grid points; ties go
    to the candidate.
    """
    lo, hi = spec.Uset.lo, spec.Uset.hi
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise PreconditionError("grid verification of the constrained predictor needs a bounded input set")
    if lo.size > 3:
        raise PreconditionError(f"grid verification supports at most 3 input dimensions, got {lo.size}")

    def J(u):
        y, _ = implicit_predict_constrained(model, xi, u, spec.Yset)
        return spec.stage_cost(u, y) + regularizer_cost(D, spec.reg, xi, u, y, terms=terms)

    best_u = np.asarray(u_star, dtype=float)
    best = J(best_u)
    centre, h = None, None
    for _ in range(rounds + 1):
        axes = _grid_axes(lo, hi, centre, h, points)
        for pt in np.array(np.meshgrid(*axes, indexing="ij")).reshape(lo.size, -1).T:
            v = J(pt)
            if v < best - 1e-13 * (1.0 + abs(best)):
                best, best_u = v, pt
        spacing = np.array([ax[1] - ax[0] if ax.size > 1 else 0.0 for ax in axes])
        centre, h = best_u, 2.0 * spacing
    return best, best_u


def verify_definition1(
    D: DataMatrix,
    spec: OcpSpec,
    model: ImplicitPredictorModel,
    xi_samples,
    constrained: bool = False,
    value_tol: Optional[float] = None,
    minimizer_tol: Optional[float] = None,
    negative_control: bool = False,
    name: Optional[str] = None,
) -> VerificationReport:
    """Compare regularized DPC with the problem restricted by ``y_f = predictor(xi, u_f)``.

    ``constrained=False`` uses the linear predictor and solves the restricted
    problem exactly (output boxes become linear constraints through the
    predictor).  ``constrained=True`` uses the box-constrained QP predictor
    and minimizes the restricted objective over a refined ``u_f`` grid.
    Value gaps are relative (``|dV| / (1 + |V|)``), minimizer gaps are
    infinity norms on ``u_f``.
    """
    if spec.reg is None:
        raise PreconditionError("Definition 1 checks need a regularized OCP")
    if model.spc.n_y != D.n_y or model.spc.n_u != D.n_u or model.spc.n_xi != D.n_xi:
        raise PreconditionError("predictor and data matrix dimensions differ")
    if model.lambda_a != spec.reg.lambda_a or not np.allclose(model.Qcal, spec.Qcal):
        raise PreconditionError("predictor was built for a different lambda_a or output weight")
    vtol = value_tol if value_tol is not None else (CONSTRAINED_VALUE_TOL if constrained else UNCONSTRAINED_VALUE_TOL)
    mtol = minimizer_tol if minimizer_tol is not None else (
        CONSTRAINED_MINIMIZER_TOL if constrained else UNCONSTRAINED_MINIMIZER_TOL
    )
    terms = data_terms(D)
    gv, gm, cases = [], [], []
    for xi in np.atleast_2d(np.asarray(xi_samples, dtype=float)):
        sol = solve_dpc_regularized(D, spec, xi, terms=terms)
        if constrained:
            v_r, u_r = _restricted_constrained(D, spec, model, xi, terms, sol.u_f)
        else:
            v_r, u_r = _restricted_linear(D, spec, model, xi, terms)
        dv = _rel(v_r, sol.value) if np.isfinite(v_r) else np.inf
        du = float(np.max(np.abs(u_r - sol.u_f))) if np.all(np.isfinite(u_r)) else np.inf
        gv.append(dv)
        gm.append(du)
        cases.append({"xi": xi, "value_dpc": sol.value, "value_restricted": v_r, "value_gap": dv,
                      "minimizer_gap": du, "active_out": qp.format_signature(sol.active_out)})
    kind = "constrained" if constrained else "linear"
    return _report(
        name or f"definition1_{kind}", gv, gm, vtol, mtol, cases, negative_control,
        notes="value gap relative; one representative minimizer compared",
    )


# ---------------------------------------------------------------------------
# predictor relations of the regularized minimizers


def verify_predictor_relation(
    D: DataMatrix,
    spec: OcpSpec,
    xi_samples,
    tol: float = 1e-7,
    form: str = "condensed",
    name: Optional[str] = None,
) -> VerificationReport:
    """``y_f* = predictor(xi, u_f*)`` at the regularized minimizers.

    With an unbounded output set the linear predictor is used, otherwise the
    constrained one.  The gap is ``||y_f* - yhat|| / (1 + ||y_f*||)``.
    """
    terms = data_terms(D)
    model = build_implicit_model(D, spec.reg, spec.Qcal, spec.y_ref, terms=terms)
    constrained = spec.Yset.bounded
    gm, cases = [], []
    for xi in np.atleast_2d(np.asarray(xi_samples, dtype=float)):
        sol = solve_dpc_regularized(D, spec, xi, form=form, terms=terms)
        if constrained:
            yhat, sig = implicit_predict_constrained(model, xi, sol.u_f, spec.Yset)
        else:
            yhat, sig = implicit_predict(model, xi, sol.u_f), ()
        g = float(np.linalg.norm(sol.y_f - yhat) / (1.0 + np.linalg.norm(sol.y_f)))
        gm.append(g)
        cases.append({"xi": xi, "u_f": sol.u_f, "y_f": sol.y_f, "gap": g,
                      "predictor_signature": qp.format_signature(sig)})
    default = f"{'theorem3' if constrained else 'theorem1'}_{spec.reg.kind}_lambda{spec.reg.lambda_a:g}"
    return _report(name or default, [0.0], gm, 0.0, tol, cases,
                   notes="minimizer gap is the relative predictor residual")


def verify_theorem2_semantics(
    D: DataMatrix,
    spec: OcpSpec,
    xi_samples,
    tol: float = 1e-6,
    lambda_a: Optional[float] = None,
) -> VerificationReport:
    """Both regularizer kinds satisfy the same predictor relation.

    Each case also records ``divergence = ||u_f*(two_norm) - u_f*(projected)||``;
    its maximum is in the notes.
    """
    terms = data_terms(D)
    s2 = with_regularizer(spec, TWO_NORM, lambda_a)
    sp = with_regularizer(spec, PROJECTED_TWO_NORM, lambda_a)
    model = build_implicit_model(D, s2.reg, spec.Qcal, spec.y_ref, terms=terms)
    constrained = spec.Yset.bounded

    def predict(xi, u):
        if constrained:
            return implicit_predict_constrained(model, xi, u, spec.Yset)[0]
        return implicit_predict(model, xi, u)

    gm, cases, div = [], [], []
    for xi in np.atleast_2d(np.asarray(xi_samples, dtype=float)):
        a = solve_dpc_regularized(D, s2, xi, terms=terms)
        b = solve_dpc_regularized(D, sp, xi, terms=terms)
        ga = float(np.linalg.norm(a.y_f - predict(xi, a.u_f)) / (1.0 + np.linalg.norm(a.y_f)))
        gb = float(np.linalg.norm(b.y_f - predict(xi, b.u_f)) / (1.0 + np.linalg.norm(b.y_f)))
        d = float(np.linalg.norm(a.u_f - b.u_f))
        gm.append(max(ga, gb))
        div.append(d)
        cases.append({"xi": xi, "u_two_norm": a.u_f, "u_projected": b.u_f, "gap_two_norm": ga,
                      "gap_projected": gb, "divergence": d})
    rep = _report(f"theorem2_lambda{s2.reg.lambda_a:g}", [0.0], gm, 0.0, tol, cases,
                  notes=f"max divergence {max(div, default=0.0):.6e}")
    return rep


def max_divergence(report: VerificationReport) -> float:
    return max((c["divergence"] for c in report.cases), default=0.0)


def verify_lemma2(D: DataMatrix, spec: OcpSpec, xi_samples, tol: float = 1e-7) -> VerificationReport:
    """Condensed and full ``(u_f, y_f, a)`` formulations agree in value and minimizer."""
    terms = data_terms(D)
    gv, gm, cases = [], [], []
    for xi in np.atleast_2d(np.asarray(xi_samples, dtype=float)):
        c = solve_dpc_regularized(D, spec, xi, form="condensed", terms=terms)
        f = solve_dpc_regularized(D, spec, xi, form="full", terms=terms)
        dv = _rel(f.value, c.value)
        dm = float(max(np.max(np.abs(c.u_f - f.u_f)), np.max(np.abs(c.y_f - f.y_f)))) / (
            1.0 + float(np.max(np.abs(c.y_f)))
        )
        gv.append(dv)
        gm.append(dm)
        cases.append({"xi": xi, "value_condensed": c.value, "value_full": f.value,
                      "value_gap": dv, "minimizer_gap": dm})
    return _report(f"lemma2_{spec.reg.kind}", gv, gm, tol, 1e-6, cases)


# ---------------------------------------------------------------------------
# inner cost oracle


def oracle_inner_cost(D: DataMatrix, reg: RegularizerSpec, xi, u_f, y_f, Pi: Optional[np.ndarray] = None) -> float:
    """``min_a h(a)`` subject to ``D a = (xi; u_f; y_f)``, solved as an equality QP."""
    ell = D.ell
    lam = reg.lambda_a
    if reg.kind == TWO_NORM:
        H = lam * np.eye(ell)
    else:
        if Pi is None:
            Pi = data_terms(D).Pi
        H = lam * (np.eye(ell) - Pi)
    w = D.stack(xi, u_f, y_f)
    sol = qp.solve_eq(qp.QpProblem(H, np.zeros(ell), D.full, w))
    if sol.status != qp.OPTIMAL:
        raise PreconditionError(f"inner problem is {sol.status}")
    return float(sol.value)


def verify_inner_cost(D: DataMatrix, kind: str, num: int = 1000, seed: int = 0, lambda_a: float = 1.0,
                      tol: float = 1e-9) -> VerificationReport:
    """Closed-form ``h*`` against :func:`oracle_inner_cost` on random triples."""
    reg = RegularizerSpec(kind, lambda_a)
    terms = data_terms(D)
    rng = SplitMix64(seed)
    gv, cases = [], []
    for _ in range(num):
        w = np.array([2.0 * rng.uniform() - 1.0 for _ in range(D.rows)])
        xi, u, y = D.split(w)
        h = regularizer_cost(D, reg, xi, u, y, terms=terms)
        o = oracle_inner_cost(D, reg, xi, u, y, Pi=terms.Pi)
        g = abs(h - o) / max(abs(o), 1e-300) if o != 0.0 else abs(h)
        gv.append(g)
        cases.append({"closed_form": h, "oracle": o, "rel_gap": g})
    return _report(f"inner_cost_{kind}", gv, [0.0], tol, 0.0, cases, notes="value gap relative")


# ---------------------------------------------------------------------------
# Lemma 1 on exact data


def _draw_window(plant: LtiPlant, N_p: int, N_f: int, setting: str, rng: SplitMix64, seed: int):
    """One short trajectory from a random initial state; returns ``(traj, states)``."""
    span = N_p + N_f if setting == "io" else N_f + 1
    x0 = np.array([2.0 * rng.uniform() - 1.0 for _ in range(plant.n)])
    u = np.array([[2.0 * rng.uniform() - 1.0 for _ in range(plant.m)] for _ in range(span)])
    return simulate(plant, x0, u, seed=seed, return_states=True)


def exact_data(plant: LtiPlant, N_p: int, N_f: int, ell: int, setting: str = "io", seed: int = 0) -> DataMatrix:
    """Data matrix from ``ell`` independent short trajectories of ``plant``."""
    rng = SplitMix64(seed)
    trajs = [_draw_window(plant, N_p, N_f, setting, rng, seed + 1 + j)[0] for j in range(ell)]
    return build_from_independent(trajs, N_p, N_f, setting)


def state_from_xi(plant: LtiPlant, xi, N_p: int, setting: str = "io") -> np.ndarray:
    """State at the start of the future window, reconstructed from ``xi``.

    Needs the true plant, so it serves only the model-based comparisons.  In
    the io setting ``N_p`` must be at least the observability index.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    A, B, C, D = plant.A, plant.B, plant.C, plant.D
    if setting == "state":
        return np.linalg.lstsq(C, xi, rcond=None)[0]
    m = plant.m
    u_p, y_p = xi[:m * N_p], xi[m * N_p:]
    pred = mpc_predictor(A, B, C, D, N_p)
    if np.linalg.matrix_rank(pred.O) < plant.n:
        raise PreconditionError(f"N_p = {N_p} is below the observability index")
    x0 = np.linalg.lstsq(pred.O, y_p - pred.T @ u_p, rcond=None)[0]
    x = x0
    for k in range(N_p):
        x = A @ x + B @ u_p[k * m:(k + 1) * m]
    return x


def verify_lemma1(
    plant: LtiPlant,
    spec: OcpSpec,
    num_xi: int = 100,
    ell: Optional[int] = None,
    setting: str = "io",
    seed: int = 0,
    tol: float = 1e-8,
    negative_control: Optional[bool] = None,
) -> VerificationReport:
    """Unregularized DPC on data from ``plant`` against SPC and model-based MPC.

    With ``plant.noise_std == 0`` the data rank must equal ``L m + n``
    (``N_f m + n`` and one past output block in the state setting).  Each
    case samples a feasible ``xi`` from a fresh trajectory, so the true state
    at the start of the future window is known for the MPC comparison.
    Value gap: ``|V_dpc - V_mpc|``.  Minimizer gap: the larger of
    ``||y_f* - yhat_SPC(xi, u_f*)||_inf`` and the DPC/MPC ``(u_f, y_f)``
    difference.  All gaps absolute.
    """
    if spec.reg is not None:
        raise PreconditionError("Lemma 1 concerns the unregularized problem")
    noisy = plant.noise_std > 0
    if negative_control is None:
        negative_control = noisy
    rows = (plant.m + plant.p) * spec.N_p + (plant.m + plant.p) * spec.N_f if setting == "io" else (
        plant.p + (plant.m + plant.p) * spec.N_f
    )
    ell = ell if ell is not None else 2 * rows
    D = exact_data(plant, spec.N_p, spec.N_f, ell, setting, seed)
    rep = rank_diagnostics(D, n=plant.n)
    if not noisy and not rep.satisfies_gpe_exactly:
        raise PreconditionError(
            f"data rank {rep.rank} differs from the exact-data target {rep.gpe_rank_target} "
            f"({rep.rows} x {rep.cols}); add columns or excitation"
        )
    spc = fit_spc(D)
    rng = SplitMix64(seed ^ 0x5EED)
    gv, gm, cases = [], [], []
    for j in range(num_xi):
        traj, _ = _draw_window(plant, spec.N_p, spec.N_f, setting, rng, seed + 10_000 + j)
        if setting == "io":
            xi = np.concatenate([traj.u[:spec.N_p].reshape(-1), traj.y[:spec.N_p].reshape(-1)])
        else:
            xi = traj.y[0].copy()
        x_start = state_from_xi(plant, xi, spec.N_p, setting)
        dpc = solve_dpc_unregularized(D, spec, xi)
        mpc = solve_mpc(plant, spec, x_start, setting)
        r_spc = float(np.max(np.abs(dpc.y_f - spc_predict(spc, xi, dpc.u_f))))
        r_mpc = float(max(np.max(np.abs(dpc.u_f - mpc.u_f)), np.max(np.abs(dpc.y_f - mpc.y_f))))
        dv = abs(dpc.value - mpc.value)
        gv.append(dv)
        gm.append(max(r_spc, r_mpc))
        cases.append({"xi": xi, "u_f": dpc.u_f, "y_f": dpc.y_f, "spc_residual": r_spc,
                      "mpc_gap": r_mpc, "value_gap": dv})
    notes = f"rank {rep.rank} of target {rep.gpe_rank_target}; ell={D.ell}"
    if noisy:
        notes += f"; noise_std={plant.noise_std:g}"
    return _report("lemma1" + ("_noisy" if noisy else ""), gv, gm, tol, tol, cases, negative_control, notes)


# ---------------------------------------------------------------------------
# suite


@dataclass
class SuiteResult:
    reports: list

    @property
    def ok(self) -> bool:
        return all(r.as_expected for r in self.reports)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "reports": [r.to_dict() for r in self.reports]}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def run_suite(
    plant: LtiPlant,
    D: DataMatrix,
    spec: OcpSpec,
    num_xi: int = 20,
    seed: int = 0,
    negative_only: bool = False,
    inner_triples: int = 200,
) -> SuiteResult:
    """All checks on one configuration, plus two negative controls.

    ``spec`` should carry a regularizer; checks needing an unconstrained
    problem drop its boxes.  ``negative_only`` runs just the controls.
    """
    if spec.reg is None:
        raise PreconditionError("the suite needs a regularized OCP")
    xis = sample_xi(D.n_xi, num_xi, seed)
    free = unconstrained(spec)
    terms = data_terms(D)
    model = build_implicit_model(D, spec.reg, spec.Qcal, spec.y_ref, terms=terms)
    exact_plant = dataclasses.replace(plant, noise_std=0.0)
    lemma_spec = OcpSpec(spec.Q, spec.R, spec.N_p, spec.N_f, None)
    reports = []
    if not negative_only:
        reports.append(verify_definition1(D, free, model, xis))
        if spec.Yset.bounded:
            reports.append(verify_definition1(D, spec, model, xis, constrained=True))
            reports.append(verify_predictor_relation(D, spec, xis, tol=1e-6))
        reports.append(verify_predictor_relation(D, free, xis))
        reports.append(verify_theorem2_semantics(D, free, xis))
        reports.append(verify_lemma2(D, spec, xis))
        for kind in (TWO_NORM, PROJECTED_TWO_NORM):
            reports.append(verify_inner_cost(D, kind, inner_triples, seed, spec.reg.lambda_a))
        reports.append(verify_lemma1(exact_plant, lemma_spec, num_xi, setting=D.setting, seed=seed))
    if spec.y_ref is None:
        reports.append(verify_definition1(
            D, free, scaled_gain_model(model, 0.5), xis, negative_control=True,
            name="definition1_scaled_gain",
        ))
    noisy = dataclasses.replace(plant, noise_std=plant.noise_std if plant.noise_std > 0 else 0.1)
    reports.append(verify_lemma1(noisy, lemma_spec, num_xi, setting=D.setting, seed=seed))
    return SuiteResult(reports)


__all__ = [
    "VerificationReport",
    "SuiteResult",
    "sample_xi",
    "scaled_gain_model",
    "unconstrained",
    "with_regularizer",
    "verify_definition1",
    "verify_predictor_relation",
    "verify_theorem2_semantics",
    "max_divergence",
    "verify_lemma2",
    "oracle_inner_cost",
    "verify_inner_cost",
    "exact_data",
    "state_from_xi",
    "verify_lemma1",
    "run_suite",
]
