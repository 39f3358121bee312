import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from implicitdpc import ocp, predictors as P, sim, verify
from implicitdpc.errors import PreconditionError

from conftest import random_io_data, scalar_spec


def lemma_spec(N_p=1, N_f=1):
    return ocp.OcpSpec(np.eye(1), np.eye(1), N_p, N_f, None, ocp.BoxSet.interval(-1, 1, 1))


def test_definition1_linear_passes(scalar_D):
    spec = verify.unconstrained(scalar_spec())
    model = P.build_implicit_model(scalar_D, spec.reg, spec.Qcal)
    rep = verify.verify_definition1(scalar_D, spec, model, verify.sample_xi(1, 100, seed=1))
    assert rep.passed and rep.num_cases == 100
    assert rep.max_value_gap <= 1e-7


def test_definition1_scaled_gain_fails(scalar_D):
    spec = verify.unconstrained(scalar_spec())
    model = P.build_implicit_model(scalar_D, spec.reg, spec.Qcal)
    bad = verify.scaled_gain_model(model, 0.5)
    rep = verify.verify_definition1(scalar_D, spec, bad, [[1.0], [-1.5]], negative_control=True)
    assert not rep.passed and rep.as_expected
    assert rep.max_value_gap > 1e-3


def test_definition1_negative_gap_matches_scalar_formula(scalar_D):
    # With N_f = 1 and no boxes the restricted problem is a scalar quadratic in u
    spec = verify.unconstrained(scalar_spec())
    model = P.build_implicit_model(scalar_D, spec.reg, spec.Qcal)
    bad = verify.scaled_gain_model(model, 0.5)
    xi = np.array([1.0])
    terms = P.data_terms(scalar_D)
    V = ocp.solve_dpc_regularized(scalar_D, spec, xi).value

    def J(u):
        y = P.implicit_predict(bad, xi, [u])
        return float(y @ y + u * u + P.regularizer_cost(scalar_D, spec.reg, xi, [u], y, terms=terms))

    # J is quadratic in u: recover it from three samples and minimise exactly
    j0, j1, jm = J(0.0), J(1.0), J(-1.0)
    a, b = (j1 + jm) / 2 - j0, (j1 - jm) / 2
    Vbad = j0 - b * b / (4 * a)
    rep = verify.verify_definition1(scalar_D, spec, bad, [xi], negative_control=True)
    assert rep.max_value_gap == pytest.approx(abs(Vbad - V) / (1 + abs(V)), rel=1e-6)


def test_definition1_constrained_passes(scalar_D):
    spec = scalar_spec()
    model = P.build_implicit_model(scalar_D, spec.reg, spec.Qcal)
    xis = [[0.2], [1.0], [1.6], [-1.9]]
    rep = verify.verify_definition1(scalar_D, spec, model, xis, constrained=True)
    assert rep.passed, rep.summary()


def test_definition1_rejects_mismatched_model(scalar_D):
    spec = scalar_spec()
    model = P.build_implicit_model(scalar_D, P.RegularizerSpec(P.TWO_NORM, 2.0), spec.Qcal)
    with pytest.raises(PreconditionError):
        verify.verify_definition1(scalar_D, spec, model, [[0.0]])
    with pytest.raises(PreconditionError):
        verify.verify_definition1(scalar_D, dataclasses.replace(spec, reg=None), model, [[0.0]])


def test_predictor_relation_both_kinds(rng):
    D = random_io_data(rng)
    for kind in P.REGULARIZER_KINDS:
        spec = ocp.OcpSpec(np.eye(2), np.eye(1), 2, 2, P.RegularizerSpec(kind, 1.0))
        rep = verify.verify_predictor_relation(D, spec, verify.sample_xi(D.n_xi, 20, seed=2))
        assert rep.passed and rep.check_name.startswith("theorem1_")


def test_predictor_relation_constrained(scalar_D):
    rep = verify.verify_predictor_relation(scalar_D, scalar_spec(), verify.sample_xi(1, 30), tol=1e-6)
    assert rep.passed and rep.check_name.startswith("theorem3_")


def test_theorem2_divergence_grows_with_lambda(scalar_D):
    spec = verify.unconstrained(scalar_spec())
    xis = verify.sample_xi(1, 10, seed=3)
    small = verify.verify_theorem2_semantics(scalar_D, spec, xis, lambda_a=1e-4)
    large = verify.verify_theorem2_semantics(scalar_D, spec, xis, lambda_a=1e4)
    assert small.passed and large.passed
    assert verify.max_divergence(small) < 1e-2 * verify.max_divergence(large)
    assert verify.max_divergence(large) >= 1e-3


def test_theorem2_zero_xi(scalar_D):
    rep = verify.verify_theorem2_semantics(scalar_D, verify.unconstrained(scalar_spec()), [[0.0]])
    c = rep.cases[0]
    assert np.all(c["u_two_norm"] == 0.0) and np.all(c["u_projected"] == 0.0)


def test_lemma2(scalar_D, rng):
    assert verify.verify_lemma2(scalar_D, scalar_spec(), verify.sample_xi(1, 10)).passed
    D = random_io_data(rng)
    spec = ocp.OcpSpec(np.eye(2), np.eye(1), 2, 2, P.RegularizerSpec(P.PROJECTED_TWO_NORM, 3.0))
    assert verify.verify_lemma2(D, spec, verify.sample_xi(D.n_xi, 10)).passed


def test_oracle_zero_triple(scalar_D):
    for kind in P.REGULARIZER_KINDS:
        reg = P.RegularizerSpec(kind, 2.0)
        assert verify.oracle_inner_cost(scalar_D, reg, [0.0], [0.0], [0.0]) == 0.0


def test_oracle_projected_vanishes_on_spc(scalar_D):
    spc = P.fit_spc(scalar_D)
    reg = P.RegularizerSpec(P.PROJECTED_TWO_NORM, 5.0)
    for xi, u in [(0.3, -0.2), (1.7, 0.9), (-2.0, 1.0)]:
        y = P.spc_predict(spc, [xi], [u])
        assert abs(verify.oracle_inner_cost(scalar_D, reg, [xi], [u], y)) <= 1e-10


def test_inner_cost_closed_forms(scalar_D, rng):
    D = random_io_data(rng)
    for kind in P.REGULARIZER_KINDS:
        assert verify.verify_inner_cost(scalar_D, kind, num=200).passed
        assert verify.verify_inner_cost(D, kind, num=200, lambda_a=0.3).passed


def test_lemma1_scalar_io():
    rep = verify.verify_lemma1(sim.example_plant(0.0), lemma_spec(), num_xi=30)
    assert rep.passed, rep.summary()


def test_lemma1_minimal_columns():
    plant = sim.example_plant(0.0)
    # rank target L m + n = 2 + 1 = 3 columns
    rep = verify.verify_lemma1(plant, lemma_spec(), num_xi=20, ell=3)
    assert rep.passed
    assert "ell=3" in rep.notes


def test_lemma1_state_setting():
    rep = verify.verify_lemma1(sim.example_plant(0.0), lemma_spec(0, 1), num_xi=20, setting="state")
    assert rep.passed


def test_lemma1_rank_deficient_aborts():
    with pytest.raises(PreconditionError, match="rank"):
        verify.verify_lemma1(sim.example_plant(0.0), lemma_spec(), num_xi=5, ell=2)


def test_lemma1_noisy_fails():
    rep = verify.verify_lemma1(sim.example_plant(0.1), lemma_spec(), num_xi=20)
    assert rep.negative_control and not rep.passed and rep.as_expected
    assert max(rep.max_value_gap, rep.max_minimizer_gap) > 1e-4


def test_state_from_xi():
    plant = sim.LtiPlant([[0.5, 1.0], [0.0, 0.8]], [[0.0], [1.0]], [[1.0, 0.0]], [[0.0]])
    u = np.array([[0.3], [-0.7], [0.1]])
    t, x = sim.simulate(plant, [0.4, -1.2], u, return_states=True)
    xi = np.concatenate([u[:2].ravel(), t.y[:2].ravel()])
    assert np.allclose(verify.state_from_xi(plant, xi, 2), x[2], atol=1e-12)
    with pytest.raises(PreconditionError):
        verify.state_from_xi(plant, xi[[0, 2]], 1)
    assert verify.state_from_xi(sim.example_plant(), [0.7], 0, "state") == pytest.approx([0.7])


def test_report_json_round_trip(scalar_D, tmp_path):
    spec = verify.unconstrained(scalar_spec())
    model = P.build_implicit_model(scalar_D, spec.reg, spec.Qcal)
    rep = verify.verify_definition1(scalar_D, spec, model, [[0.5], [1.0]])
    path = tmp_path / "r.json"
    rep.to_json(path)
    back = verify.VerificationReport.from_json(path)
    assert back.to_dict() == rep.to_dict()
    assert verify.VerificationReport.from_json(rep.to_json()).passed == rep.passed


def test_report_rejects_contradictory_pass_flag():
    rep = verify.VerificationReport("x", 1, 1.0, 0.0, 1e-7, 1e-6)
    d = rep.to_dict()
    d["pass"] = True
    with pytest.raises(PreconditionError):
        verify.VerificationReport.from_dict(d)


@given(
    st.floats(0, 1e-3), st.floats(0, 1e-3), st.floats(1e-8, 1e-3), st.floats(1e-8, 1e-3), st.booleans()
)
def test_pass_iff_gaps_within_tolerance(gv, gm, tv, tm, neg):
    rep = verify.VerificationReport("p", 0, gv, gm, tv, tm, negative_control=neg)
    assert rep.passed == (gv <= tv and gm <= tm)
    assert rep.as_expected == (rep.passed != neg)
    assert verify.VerificationReport.from_dict(rep.to_dict()).passed == rep.passed


def test_sample_xi_deterministic():
    a, b = verify.sample_xi(3, 5, seed=4), verify.sample_xi(3, 5, seed=4)
    assert np.array_equal(a, b) and np.abs(a).max() <= 2.0


def test_suite_default_example(scalar_D):
    res = verify.run_suite(sim.example_plant(), scalar_D, scalar_spec(), num_xi=8, inner_triples=50)
    assert res.ok
    names = {r.check_name: r for r in res.reports}
    assert not names["definition1_scaled_gain"].passed
    assert not names["lemma1_noisy"].passed
    neg = verify.run_suite(sim.example_plant(), scalar_D, scalar_spec(), num_xi=8, negative_only=True)
    assert neg.ok and all(r.negative_control for r in neg.reports)
