import numpy as np
import pytest
from hypothesis import given, strategies as st

from smpc_lab import (CostWeights, LinearPlant, NonlinearModel, SmpcConfig, TimeGrid,
                      check_linearization, symmetrize)
from smpc_lab.errors import (DimensionMismatch, GridError, NonFiniteEntry,
                             NotPositiveDefinite, PreconditionViolated)
from smpc_lab.core import steps_of
from smpc_lab import models


def test_plant_dimensions_checked():
    with pytest.raises(DimensionMismatch):
        LinearPlant(np.eye(2), np.ones((3, 1)), np.eye(2), np.zeros((2, 1)))
    with pytest.raises(DimensionMismatch):
        LinearPlant(np.ones((2, 3)), np.ones((2, 1)), np.eye(2), np.zeros((2, 1)))
    with pytest.raises(NonFiniteEntry):
        LinearPlant.scalar(np.nan, 1, 0, 1)


def test_plant_arrays_are_read_only():
    p = LinearPlant.scalar(-1, 1, 0, 1)
    with pytest.raises(ValueError):
        p.A[0, 0] = 3.0
    assert (p.n, p.m) == (1, 1)


def test_weights_validation_and_symmetrization():
    w = CostWeights([[2.0, 1.0], [0.0, 2.0]], [[1.0]])
    assert np.allclose(w.Q, w.Q.T)
    assert np.all(w.G == 0)
    with pytest.raises(NotPositiveDefinite):
        CostWeights([[0.0]], [[1.0]])
    with pytest.raises(NotPositiveDefinite):
        CostWeights([[1.0]], [[-1.0]])
    with pytest.raises(NotPositiveDefinite):
        CostWeights([[1.0]], [[1.0]], [[-0.5]])
    with pytest.raises(DimensionMismatch):
        CostWeights(np.eye(2), [[1.0]], [[1.0]])


@given(st.lists(st.floats(-1e3, 1e3), min_size=9, max_size=9))
def test_symmetrize_is_symmetric_projection(vals):
    M = np.array(vals).reshape(3, 3)
    S = symmetrize(M)
    assert np.array_equal(S, S.T)
    assert np.allclose(symmetrize(S), S)


def test_steps_of_and_grid():
    assert steps_of(0.25, 1e-3) == 250
    with pytest.raises(GridError):
        steps_of(0.2505, 1e-3)
    g = TimeGrid.over(2.0, 0.5)
    assert len(g) == 5
    assert g.t_end == pytest.approx(2.0)
    assert np.allclose(g.times, [0, 0.5, 1, 1.5, 2])


def test_config_checks():
    cfg = SmpcConfig(T=1.0, tau=0.25, h=1e-3, x0=[1.0], t_end=2.0)
    assert cfg.n_cycle == 250 and cfg.n_horizon == 1000
    with pytest.raises(GridError):
        SmpcConfig(T=0.25, tau=1.0, h=1e-3, x0=[1.0], t_end=2.0)
    with pytest.raises(GridError):
        SmpcConfig(T=1.0, tau=0.2505, h=1e-3, x0=[1.0], t_end=2.0)
    assert cfg.replace(seed=3).seed == 3


def test_nonlinear_model_must_vanish_at_origin():
    lin = LinearPlant.scalar(1, -1, 0, 0)
    with pytest.raises(PreconditionViolated):
        NonlinearModel(lambda y, u: y + 1.0, lambda y, u: 0 * y, lin)


@pytest.mark.parametrize('factory', [models.example_2_1, models.example_2_2])
def test_builtin_linearizations_match_finite_differences(factory):
    ok, err = check_linearization(factory())
    assert ok, err


def test_polynomial_model_batches():
    m = models.polynomial([[0, -1], [1, 0], [0.5, 0]], [[0], [0], [0.1]])
    y = np.array([[1.0], [2.0]])
    u = np.array([[0.5], [0.0]])
    assert np.allclose(m.drift(y, u)[:, 0], [1 + 0.5 - 0.5, 2 + 2.0])
    assert np.allclose(m.diffusion(y, u)[:, 0], [0.1, 0.4])
    assert m.linearization.A[0, 0] == 1 and m.linearization.B[0, 0] == -1
