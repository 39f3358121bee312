"""Acceptance criteria, one test each, run at the stated tolerances.

Every test prints and records a single ``CRITERION n: PASS|FAIL`` line; the
lines are also collected into the terminal summary.
"""
import time

import numpy as np
import pytest

from implicitdpc import ocp, predictors as P, qp, sim, verify

from conftest import enumerate_box_qp, scalar_spec, scalar_state_data

SEEDS = range(1, 11)
LAMBDAS = (0.01, 1.0, 100.0)


@pytest.fixture
def verdict(record_property):
    t0 = time.perf_counter()

    def report(n, ok, detail):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail} ({time.perf_counter() - t0:.2f}s)"
        print(line)
        record_property("acceptance", line)
        assert ok, line

    return report


def lemma_spec(N_p=1, N_f=1):
    return ocp.OcpSpec(np.eye(1), np.eye(1), N_p, N_f, None, ocp.BoxSet.interval(-1, 1, 1))


def test_criterion_1_lemma1_exact_data(verdict):
    plant = sim.example_plant(0.0)
    rep = verify.verify_lemma1(plant, lemma_spec(), num_xi=100, setting="io", seed=0)
    spc_gap = max(c["spc_residual"] for c in rep.cases)
    mpc_gap = max(c["mpc_gap"] for c in rep.cases)
    ok = rep.num_cases == 100 and spc_gap <= 1e-8 and mpc_gap <= 1e-8 and rep.max_value_gap <= 1e-8
    verdict(1, ok, f"spc_gap={spc_gap:.2e} mpc_gap={mpc_gap:.2e} value_gap={rep.max_value_gap:.2e} [{rep.notes}]")


def _theorem1_gap(kind):
    worst, cases = 0.0, 0
    for seed in SEEDS:
        D = scalar_state_data(seed=seed)
        xis = verify.sample_xi(D.n_xi, 100, seed=seed)
        for lam in LAMBDAS:
            spec = ocp.OcpSpec(np.eye(1), np.eye(1), 0, 1, P.RegularizerSpec(kind, lam))
            rep = verify.verify_predictor_relation(D, spec, xis, tol=1e-7)
            worst = max(worst, rep.max_minimizer_gap)
            cases += rep.num_cases
    return worst, cases


def test_criterion_2_theorem1(verdict):
    worst, cases = _theorem1_gap(P.TWO_NORM)
    verdict(2, worst <= 1e-7 and cases == 3000, f"max relative gap {worst:.2e} over {cases} cases")


def test_criterion_3_theorem2(verdict):
    worst, cases = _theorem1_gap(P.PROJECTED_TWO_NORM)
    D = scalar_state_data(seed=1)
    spec = ocp.OcpSpec(np.eye(1), np.eye(1), 0, 1, P.RegularizerSpec(P.TWO_NORM, 1e4))
    rep = verify.verify_theorem2_semantics(D, spec, verify.sample_xi(1, 100, seed=1), tol=1e-6)
    div = verify.max_divergence(rep)
    ok = worst <= 1e-7 and div >= 1e-3 and rep.passed
    verdict(3, ok, f"projected gap {worst:.2e}; lambda=1e4 divergence {div:.3e}, relation gap {rep.max_minimizer_gap:.2e}")


def test_criterion_4_inner_cost(verdict):
    D = scalar_state_data()
    reps = [verify.verify_inner_cost(D, kind, num=1000, seed=4, tol=1e-9) for kind in P.REGULARIZER_KINDS]
    gaps = {r.check_name: r.max_value_gap for r in reps}
    verdict(4, all(r.passed for r in reps), " ".join(f"{k}={v:.2e}" for k, v in gaps.items()))


def test_criterion_5_definition1(verdict):
    D = scalar_state_data()
    spec = scalar_spec()
    model = P.build_implicit_model(D, spec.reg, spec.Qcal)
    xis = verify.sample_xi(1, 100, seed=5)
    lin = verify.verify_definition1(D, verify.unconstrained(spec), model, xis)
    con = verify.verify_definition1(D, spec, model, xis[:25], constrained=True)
    bad = verify.verify_definition1(D, verify.unconstrained(spec), verify.scaled_gain_model(model, 0.5), xis,
                                    negative_control=True)
    noisy = verify.verify_lemma1(sim.example_plant(0.1), lemma_spec(), num_xi=100)
    ok = (lin.passed and lin.max_value_gap <= 1e-7 and con.passed and con.max_value_gap <= 1e-6
          and not bad.passed and not noisy.passed)
    verdict(5, ok, f"linear={lin.max_value_gap:.2e} constrained={con.max_value_gap:.2e} "
                   f"scaled_gain={bad.max_value_gap:.2e}(fails) noisy_lemma1={noisy.max_minimizer_gap:.2e}(fails)")


def test_criterion_6_limit_behavior(verdict):
    D = scalar_state_data()
    q_reg = float(P.data_terms(D).Qreg[0, 0])
    scaled = np.logspace(-3, 6, 10)
    gains = []
    for c in scaled:
        model = P.build_implicit_model(D, P.RegularizerSpec(P.TWO_NORM, c / q_reg), np.eye(1))
        gains.append(float(model.gain[0, 0]))
    gains = np.array(gains)
    formula = scaled / (scaled + 1.0)
    ok = (np.all(np.diff(gains) > 0) and gains[0] < 0.01 and gains[-1] > 0.99
          and np.allclose(gains, formula, rtol=1e-9, atol=0))
    verdict(6, ok, f"gain(1e-3)={gains[0]:.3e} gain(1e6)={gains[-1]:.9f} max formula dev "
                   f"{np.max(np.abs(gains - formula) / formula):.1e}")


def _surface(model, Yset, grid):
    n = grid.size
    y_lin = np.empty((n, n))
    y_con = np.empty((n, n))
    sigs = set()
    for i, xi in enumerate(grid):
        for j, u in enumerate(grid):
            y_lin[i, j] = P.implicit_predict(model, [xi], [u])[0]
            y, sig = P.implicit_predict_constrained(model, [xi], [u], Yset)
            y_con[i, j] = y[0]
            sigs.add(sig)
    return y_lin, y_con, sigs


def test_criterion_7_pwa_structure(verdict):
    D = scalar_state_data()
    spec = scalar_spec()
    Yset = spec.Yset
    grid = np.linspace(-2.0, 2.0, 101)
    details, ok = [], True
    for lam in (1e-2, 1.0, 1e2, 1e6):
        model = P.build_implicit_model(D, P.RegularizerSpec(P.TWO_NORM, lam), spec.Qcal)
        y_lin, y_con, sigs = _surface(model, Yset, grid)
        in_box = bool(np.all((y_con >= -1.0) & (y_con <= 1.0)))
        Z = (y_lin >= -1.0) & (y_lin <= 1.0)
        exact_on_Z = bool(np.array_equal(y_con[Z], y_lin[Z]))
        # scalar output QP: its minimizer is the clipped linear prediction
        clip_dev = float(np.abs(y_con - np.clip(y_lin, -1.0, 1.0)).max())
        # the QP itself, without the in-box shortcut, also lands on the linear value on Z
        ii, jj = np.nonzero(Z)
        pick = np.linspace(0, ii.size - 1, min(50, ii.size)).astype(int)
        qp_dev = max(
            abs(qp.solve_box(P.output_qp(model, [grid[ii[k]]], [grid[jj[k]]], [-1.0], [1.0])).x[0]
                - y_lin[ii[k], jj[k]])
            for k in pick
        )
        jumps = np.concatenate([np.abs(np.diff(y_con, axis=0)).ravel(), np.abs(np.diff(y_con, axis=1)).ravel()])
        inner_pairs = np.concatenate([(Z[1:, :] & Z[:-1, :]).ravel(), (Z[:, 1:] & Z[:, :-1]).ravel()])
        interior_max = float(jumps[inner_pairs].max()) if inner_pairs.any() else 0.0
        lipschitz = bool(jumps.max() <= 10.0 * interior_max)
        good = in_box and exact_on_Z and clip_dev <= 1e-12 and qp_dev <= 1e-12 and len(sigs) >= 2 and lipschitz
        ok = ok and good
        details.append(f"lambda={lam:g}: sigs={len(sigs)} |Z|={int(Z.sum())} jump={jumps.max():.3e}/"
                       f"{interior_max:.3e} clip_dev={clip_dev:.1e} qp_dev={qp_dev:.1e}")
    verdict(7, ok, "; ".join(details))


def test_criterion_8_box_qp(verdict):
    rng = np.random.default_rng(8)
    worst_x, worst_v, worst_kkt = 0.0, 0.0, 0.0
    for k in range(200):
        n = int(rng.integers(1, 5))
        A = rng.standard_normal((n, n))
        H = A @ A.T + 0.1 * np.eye(n)
        f = 4.0 * rng.standard_normal(n)
        lo, hi = -rng.uniform(0.1, 1.5, n), rng.uniform(0.1, 1.5, n)
        prob = qp.QpProblem(H, f, lo=lo, hi=hi)
        sol = qp.solve_box(prob)
        x_ref, v_ref = enumerate_box_qp(prob.H, prob.f, lo, hi)
        worst_x = max(worst_x, float(np.abs(sol.x - x_ref).max()))
        worst_v = max(worst_v, abs(sol.value - v_ref) / (1.0 + abs(v_ref)))
        worst_kkt = max(worst_kkt, qp.kkt_residual(prob, sol))
    ok = worst_x <= 1e-9 and worst_v <= 1e-9 and worst_kkt <= 1e-8
    verdict(8, ok, f"backend={qp.BACKEND} x_gap={worst_x:.2e} value_gap={worst_v:.2e} kkt={worst_kkt:.2e}")


def test_criterion_9_closed_loop(verdict):
    D = scalar_state_data()
    spec = scalar_spec()
    model = P.build_implicit_model(D, spec.reg, spec.Qcal)
    plant = sim.example_plant(0.1)
    a = sim.closed_loop(plant, D, spec, model, 50, seed=1, x0=[0.3])
    b = sim.closed_loop(plant, D, spec, model, 50, seed=1, x0=[0.3])
    same = a.to_csv() == b.to_csv() and all(
        np.array_equal(getattr(s, f), getattr(t, f))
        for s, t in zip(a.steps, b.steps) for f in ("u_applied", "y_meas", "u_f", "y_f", "residual")
    )
    ok = len(a) == 50 and a.max_residual <= 1e-6 and same
    n_con = sum(bool(s.active_out) for s in a.steps)
    verdict(9, ok, f"steps={len(a)} max_residual={a.max_residual:.2e} output-bound steps={n_con} "
                   f"bit_identical={same}")
