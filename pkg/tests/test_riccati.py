import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smpc_lab import (CostWeights, LinearPlant, check_l2_stabilizable, integrate_riccati,
                      k1_dominating, op_K, riccati_convergence_report, solve_are,
                      stability_constants)
from smpc_lab.errors import NotDominating, SingularR
from smpc_lab.riccati import are_residual, op_R
from smpc_lab.selftest import scalar_riccati_oracle


def test_are_example_values(ex21, ex22):
    _, w, are = ex21
    assert are.P_inf[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert are.residual <= 1e-10
    model, w, are = ex22
    assert op_K(are.P_inf, model.linearization, w)[0, 0] == pytest.approx(3.0, abs=1e-10)


def test_are_two_dimensional_residual():
    plant = LinearPlant([[0.0, 1.0], [2.0, -1.0]], [[0.0], [1.0]],
                        [[0.1, 0.0], [0.0, 0.2]], [[0.0], [0.3]])
    w = CostWeights(np.eye(2), [[1.0]])
    are = solve_are(plant, w)
    assert are.residual <= 1e-10
    assert np.all(np.linalg.eigvalsh(are.P_inf) > 0)
    assert are_residual(are.P_inf, plant, w) == pytest.approx(are.residual)


def test_stabilizability():
    ok, cert = check_l2_stabilizable(LinearPlant.scalar(1, 1, 0, 0))
    assert ok and cert['P'] is not None
    ok, cert = check_l2_stabilizable(LinearPlant.scalar(1, 0, 0, 0))
    assert not ok and cert['P'] is None


def test_singular_R_is_reported():
    plant = LinearPlant.scalar(-1, 1, 0, 1)
    w = CostWeights([[1.0]], [[1.0]])
    P = np.array([[-1.0]])
    assert op_R(P, plant, w)[0, 0] == 0.0
    with pytest.raises(SingularR):
        op_K(P, plant, w)
    plant2 = LinearPlant(np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2))
    w2 = CostWeights(np.eye(2), np.eye(2))
    with pytest.raises(SingularR):
        op_K(np.diag([-1.0, 0.0]), plant2, w2)


def test_constants_example_2_1(ex21):
    model, w, are = ex21
    c = stability_constants(are, model.linearization, w)
    assert c.K0 == pytest.approx(1.0)
    assert c.lambda_inf == pytest.approx(1.375)
    assert c.lambda_star == pytest.approx(1.375)
    assert c.Theta_inf[0, 0] == pytest.approx(-0.5)
    assert k1_dominating([[2.0]], are.P_inf) == pytest.approx(1.0)
    with pytest.raises(NotDominating):
        k1_dominating([[0.5]], are.P_inf)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-2, 2), c=st.floats(-1, 1), d=st.floats(-1, 1), g=st.floats(0, 3))
def test_flow_matches_adaptive_oracle(a, c, d, g):
    plant = LinearPlant.scalar(a, 1.0, c, d)
    w = CostWeights([[1.0]], [[1.0]], [[g]])
    ric = integrate_riccati(plant, w, 1.0, 1e-2)
    oracle = scalar_riccati_oracle(a, 1.0, c, d, 1.0, 1.0, g, ric.times)
    assert np.max(np.abs(ric.sigma[:, 0, 0] - oracle)) <= 1e-7


def test_rk4_fourth_order(ex21):
    model, w, _ = ex21
    plant = model.linearization
    w = w.with_terminal([[2.0]])
    ref = scalar_riccati_oracle(-1, 1, 0, 1, 2.5, 1, 2.0, [0.0, 2.0])[-1]
    e1 = abs(integrate_riccati(plant, w, 2.0, 0.2).sigma[-1, 0, 0] - ref)
    e2 = abs(integrate_riccati(plant, w, 2.0, 0.1).sigma[-1, 0, 0] - ref)
    assert e1 / e2 >= 12


def test_monotone_in_terminal_weight(ex21):
    model, w, _ = ex21
    plant = model.linearization
    lo = integrate_riccati(plant, w.with_terminal([[0.5]]), 3.0, 1e-2).sigma[:, 0, 0]
    hi = integrate_riccati(plant, w.with_terminal([[2.0]]), 3.0, 1e-2).sigma[:, 0, 0]
    assert np.all(hi >= lo)


def test_sigma_stays_symmetric():
    plant = LinearPlant([[0.0, 1.0], [-1.0, 0.5]], [[0.0], [1.0]], 0.1 * np.eye(2),
                        [[0.0], [0.2]])
    w = CostWeights(np.eye(2), [[1.0]], np.diag([1.0, 2.0]))
    ric = integrate_riccati(plant, w, 2.0, 1e-2)
    assert all(np.array_equal(S, S.T) for S in ric.sigma)


def test_convergence_report_bound(ex21):
    model, w, are = ex21
    w = w.with_terminal([[2.0]])
    c = stability_constants(are, model.linearization, w)
    ric = integrate_riccati(model.linearization, w, 5.0, 1e-3)
    rep = riccati_convergence_report(ric, are, c)
    assert rep.bound_holds and rep.K1 == pytest.approx(1.0)
    assert rep.t0 is not None


def test_convergence_report_without_domination(ex21):
    model, w, are = ex21
    w = w.with_terminal([[0.0]])
    c = stability_constants(are, model.linearization, w)
    rep = riccati_convergence_report(integrate_riccati(model.linearization, w, 3.0, 1e-2), are, c)
    assert rep.bound_holds is None and np.all(np.isnan(rep.bound))
