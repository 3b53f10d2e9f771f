"""Gain schedule and control laws of the sampled-data predictive controller.

Over each control cycle ``[k*tau, (k+1)*tau)`` the applied control is
``u(t) = Theta(t - k*tau) @ xbar(t)``, where ``xbar`` is the linear plant
model restarted from the measured state at ``k*tau`` and

    Theta(s) = K(Sigma(T - s)),   0 <= s <= tau,

is computed once, offline.  Two limits are provided as modes as well: the
receding-horizon controller on a perfect linear plant and the static ARE
feedback ``u = Theta_inf @ y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import steps_of
from .errors import HorizonExceedsRiccati, OutOfCycle
from .riccati import (AreSolution, RiccatiSolution, integrate_riccati, op_K,
                      solve_are, spectral_norm)

__all__ = ['GainSchedule', 'ControllerMode', 'Smpc', 'Rhc', 'StaticAre',
           'build_gain_schedule', 'ThetaDeviation', 'theta_deviation_bound',
           'control_at']


@dataclass(frozen=True)
class GainSchedule:
    """Theta(s) on ``s = 0, h, ..., tau`` plus the limiting gain Theta_inf."""

    theta: np.ndarray
    theta_inf: np.ndarray
    T: float
    tau: float
    source: RiccatiSolution

    @property
    def h(self):
        return self.source.grid.h

    @property
    def n_cycle(self):
        return self.theta.shape[0] - 1

    @property
    def s(self):
        return self.h * np.arange(self.n_cycle + 1)

    def index(self, s):
        if s < -1e-12 or s > self.tau * (1 + 1e-12):
            raise OutOfCycle(f"s={s} outside [0, tau={self.tau}]")
        k = s / self.h
        i = int(round(k))
        if abs(k - i) > 1e-9 * max(1.0, k):
            i = int(np.floor(k))
        return min(max(i, 0), self.n_cycle)

    def at(self, s):
        """Theta(s); off-grid queries return the value at the node to the left."""
        return self.theta[self.index(s)]

    def refined(self, factor=2):
        """Same schedule on a grid `factor` times finer (Riccati re-integrated)."""
        src = self.source
        h = src.grid.h / factor
        fine = integrate_riccati(src.plant, src.weights, self.T, h)
        return build_gain_schedule(fine, self.T, self.tau, theta_inf=self.theta_inf)


class ControllerMode:
    """Closed-loop wiring selector for the simulation engine."""

    kind = None


@dataclass(frozen=True)
class Smpc(ControllerMode):
    """Sampled predictive control on a (possibly nonlinear) physical system."""

    schedule: GainSchedule
    kind = 'smpc'


@dataclass(frozen=True)
class Rhc(ControllerMode):
    """Receding horizon control: the physical system is the linear plant."""

    schedule: GainSchedule
    kind = 'rhc'


@dataclass(frozen=True)
class StaticAre(ControllerMode):
    """Continuous state feedback ``u = Theta_inf @ y``."""

    theta_inf: np.ndarray
    kind = 'static_are'

    def __post_init__(self):
        object.__setattr__(self, 'theta_inf', np.atleast_2d(np.asarray(self.theta_inf, float)))


def build_gain_schedule(riccati, T, tau, are=None, theta_inf=None):
    """Sample ``Theta(s) = K(Sigma(T - s))`` for s on ``{0, h, ..., tau}``.

    Theta_inf is taken from `theta_inf`, else from `are`, else from a fresh
    ARE solve on the same plant and weights.

    Raises
    ------
    HorizonExceedsRiccati
        If the Riccati solution does not reach T.
    """
    h = riccati.grid.h
    nT = steps_of(T, h, "T")
    nc = steps_of(tau, h, "tau")
    if nc > nT:
        raise ValueError("tau must not exceed T")
    if nT > riccati.grid.n_steps:
        raise HorizonExceedsRiccati(f"T={T} beyond Riccati horizon {riccati.horizon}")
    plant, weights = riccati.plant, riccati.weights
    theta = np.stack([op_K(riccati.sigma[nT - i], plant, weights) for i in range(nc + 1)])
    theta.setflags(write=False)
    if theta_inf is None:
        if are is None:
            are = solve_are(plant, weights)
        P = are.P_inf if isinstance(are, AreSolution) else np.asarray(are, float)
        theta_inf = op_K(P, plant, weights)
    return GainSchedule(theta, np.asarray(theta_inf, float), float(T), float(tau), riccati)


@dataclass(frozen=True)
class ThetaDeviation:
    s: np.ndarray
    deviation: np.ndarray
    reference_decay: float
    K1: Optional[float]
    gaps: Optional[np.ndarray] = None
    max_deviation: Optional[np.ndarray] = None
    decreasing: Optional[bool] = None


def _deviations(schedule):
    return np.array([spectral_norm(th - schedule.theta_inf) for th in schedule.theta])


def theta_deviation_bound(schedule, constants, K1=None, gaps=None):
    """Per-node ``|Theta(s) - Theta_inf|`` and the decay ``exp(-2 lambda_inf (T - tau))``.

    With `gaps`, schedules for ``T = tau + gap`` are rebuilt from the same
    plant, weights and step and the flag `decreasing` tells whether the
    worst-case deviation shrinks strictly as the gap grows.
    """
    lam = constants.lambda_inf
    out = dict(s=schedule.s, deviation=_deviations(schedule),
               reference_decay=float(np.exp(-2 * lam * (schedule.T - schedule.tau))),
               K1=constants.K1 if K1 is None else K1)
    if gaps is not None:
        gaps = np.asarray(sorted(gaps), float)
        if len(gaps) < 3:
            raise ValueError("need at least three horizon gaps")
        src = schedule.source
        T_max = schedule.tau + gaps[-1]
        ric = src
        if steps_of(T_max, src.grid.h) > src.grid.n_steps:
            ric = integrate_riccati(src.plant, src.weights, T_max, src.grid.h)
        worst = np.array([
            _deviations(build_gain_schedule(ric, schedule.tau + g, schedule.tau,
                                            theta_inf=schedule.theta_inf)).max()
            for g in gaps])
        out.update(gaps=gaps, max_deviation=worst,
                   decreasing=bool(np.all(np.diff(worst) < 0)))
    return ThetaDeviation(**out)


def control_at(mode, s_in_cycle, state):
    """Control value for one mode.

    For `Smpc`/`Rhc`, `state` is the plant-model prediction xbar and
    `s_in_cycle` the time since the last sampling instant; for `StaticAre`
    it is the physical state and `s_in_cycle` is ignored.  Works on a single
    state (n,) or a batch (P, n).
    """
    state = np.asarray(state, dtype=float)
    if isinstance(mode, StaticAre):
        return state @ mode.theta_inf.T
    return state @ mode.schedule.at(s_in_cycle).T
