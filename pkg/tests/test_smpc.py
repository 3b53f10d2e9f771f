import numpy as np
import pytest

from smpc_lab import (Rhc, Smpc, StaticAre, build_gain_schedule, control_at, integrate_riccati,
                      op_K, stability_constants, theta_deviation_bound)
from smpc_lab.errors import HorizonExceedsRiccati, OutOfCycle
from smpc_lab.riccati import solve_dre_terminal


@pytest.fixture(scope='module')
def sched21(ex21):
    model, w, are = ex21
    w = w.with_terminal([[2.0]])
    ric = integrate_riccati(model.linearization, w, 2.0, 1e-3)
    return build_gain_schedule(ric, 1.0, 0.25, are=are), w


def test_schedule_shape_and_lookup(sched21):
    sch, _ = sched21
    assert sch.n_cycle == 250
    assert sch.theta.shape == (251, 1, 1)
    assert np.array_equal(sch.at(0.1), sch.theta[100])
    # off-grid: value at the node to the left
    assert np.array_equal(sch.at(0.10049), sch.theta[100])
    with pytest.raises(OutOfCycle):
        sch.at(0.3)


def test_schedule_horizon_check(ex21):
    model, w, are = ex21
    ric = integrate_riccati(model.linearization, w, 1.0, 1e-2)
    with pytest.raises(HorizonExceedsRiccati):
        build_gain_schedule(ric, 2.0, 0.5, are=are)


def test_weight_scaling_leaves_gains_unchanged(ex21):
    model, w, are = ex21
    w = w.with_terminal([[2.0]])
    a = build_gain_schedule(integrate_riccati(model.linearization, w, 1.0, 1e-2), 1.0, 0.5, are=are)
    w7 = w.scaled(7.0)
    b = build_gain_schedule(integrate_riccati(model.linearization, w7, 1.0, 1e-2), 1.0, 0.5,
                            are=are.P_inf * 7.0)
    assert np.allclose(a.theta, b.theta, atol=1e-12)
    assert np.allclose(a.theta_inf, b.theta_inf)


def test_forward_flow_equals_backward_terminal_problem(ex21):
    model, w, _ = ex21
    w = w.with_terminal([[2.0]])
    T, h = 1.5, 1e-3
    ric = integrate_riccati(model.linearization, w, T, h)
    back = solve_dre_terminal(model.linearization, w, T, h)
    for t in (0.0, 0.5, 1.0, 1.5):
        assert np.allclose(ric.P_T(T, t), back[round(t / h)], atol=1e-13)


def test_schedule_tends_to_static_gain(ex21):
    model, w, are = ex21
    w = w.with_terminal([[2.0]])
    const = stability_constants(are, model.linearization, w)
    ric = integrate_riccati(model.linearization, w, 6.0, 1e-3)
    sch = build_gain_schedule(ric, 6.0, 0.25, are=are)
    dev = theta_deviation_bound(sch, const, gaps=[0.5, 1.0, 1.5, 3.0])
    assert dev.decreasing
    assert np.max(np.abs(sch.theta - sch.theta_inf)) < 1e-5
    assert np.allclose(sch.theta_inf, op_K(are.P_inf, model.linearization, w))


def test_terminal_at_p_inf_gives_constant_schedule(ex21):
    model, w, are = ex21
    ric = integrate_riccati(model.linearization, w.with_terminal(are.P_inf), 1.0, 1e-3)
    sch = build_gain_schedule(ric, 1.0, 0.5, are=are)
    assert np.max(np.abs(sch.theta - sch.theta_inf)) <= 1e-9


def test_control_at_modes(sched21):
    sch, _ = sched21
    x = np.array([[1.0], [-2.0]])
    assert np.allclose(control_at(Smpc(sch), 0.0, x), x @ sch.theta[0].T)
    assert np.allclose(control_at(Rhc(sch), 0.25, x), x @ sch.theta[-1].T)
    assert np.allclose(control_at(StaticAre([[3.0]]), 0.7, x), 3 * x)
