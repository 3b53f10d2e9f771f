"""Euler-Maruyama simulation of the sampled predictive control loop.

Per step ``t_i -> t_{i+1}`` with one shared increment ``dW_i``:

1. at sampling nodes (``i % N_c == 0``) the prediction is reset, ``xbar <- y``;
2. ``u = Theta(i % N_c) @ xbar`` (or ``Theta_inf @ y`` for the static law);
3. ``y    += b(y, u) h + sigma(y, u) dW_i``;
4. ``xbar += (A xbar + B u) h + (C xbar + D u) dW_i``.

Paths are processed in fixed-size blocks; per-node moment accumulators of
each block are merged in path order, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import NonlinearModel, TimeGrid, steps_of
from .errors import PreconditionViolated
from .noise import brownian_increments
from .smpc import Rhc, StaticAre

__all__ = ['MomentAccumulator', 'CoupledTrajectory', 'PathEnsemble',
           'simulate_path', 'simulate_ensemble', 'FundamentalEnsemble',
           'simulate_fundamental', 'gronwall_delay_check', 'BLOCK_SIZE']

BLOCK_SIZE = 1024
# states beyond this norm count as diverged, so that |Y|^2 stays finite
DIVERGENCE_RADIUS = 1e150


def _worker_count():
    env = os.environ.get('SMPC_LAB_THREADS')
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


@dataclass
class MomentAccumulator:
    """Per-node count, mean and sum of squared deviations (Chan et al. merge)."""

    count: np.ndarray
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, size):
        return cls(np.zeros(size, dtype=np.int64), np.zeros(size), np.zeros(size))

    @classmethod
    def from_samples(cls, values):
        """`values` has shape (nodes, paths); non-finite entries are skipped."""
        ok = np.isfinite(values)
        count = ok.sum(axis=1)
        v = np.where(ok, values, 0.0)
        # squares of near-divergent paths may overflow to inf; that is the answer
        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            mean = np.where(count > 0, v.sum(axis=1) / np.maximum(count, 1), 0.0)
            dev = np.where(ok, values - mean[:, None], 0.0)
            m2 = (dev * dev).sum(axis=1)
        return cls(count.astype(np.int64), mean, m2)

    def merge(self, other):
        n = self.count + other.count
        nz = np.maximum(n, 1)
        with np.errstate(over='ignore', invalid='ignore'):
            delta = other.mean - self.mean
            mean = np.where(n > 0, self.mean + delta * other.count / nz, 0.0)
            m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / nz
        return MomentAccumulator(n, mean, m2)

    def variance(self):
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(self.count > 1, self.m2 / np.maximum(self.count - 1, 1), np.nan)

    def std_error(self):
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.sqrt(np.maximum(self.variance(), 0.0) / np.maximum(self.count, 1))


@dataclass(frozen=True)
class CoupledTrajectory:
    """One path of the coupled system on the simulation grid."""

    t: np.ndarray
    y: np.ndarray
    x_pred: np.ndarray
    u: np.ndarray
    eps: np.ndarray
    exit_time: Optional[float] = None
    divergence_time: Optional[float] = None
    path_id: int = 0

    @property
    def diverged(self):
        return self.divergence_time is not None


@dataclass
class PathEnsemble:
    config: object
    mode: object
    grid: TimeGrid
    n_paths: int
    ms: MomentAccumulator
    eps_ms: MomentAccumulator
    diverged_ids: np.ndarray
    exit_times: np.ndarray
    costs: Optional[np.ndarray] = None
    observed: Optional[np.ndarray] = None
    trajectories: list = field(default_factory=list)

    @property
    def n_diverged(self):
        return int(self.diverged_ids.size)

    @property
    def diverged_fraction(self):
        return self.n_diverged / self.n_paths if self.n_paths else 0.0


@dataclass(frozen=True)
class _Block:
    t: np.ndarray
    y: np.ndarray       # (nodes, P, n)
    x_pred: np.ndarray  # (nodes, P, n)
    u: np.ndarray       # (nodes, P, m)
    exit_step: np.ndarray
    div_step: np.ndarray
    path_ids: np.ndarray

    @property
    def eps(self):
        return self.x_pred - self.y


def _check_mode(mode, config):
    if isinstance(mode, StaticAre):
        return
    sch = mode.schedule
    if abs(sch.h - config.h) > 1e-12 * config.h or sch.n_cycle != config.n_cycle:
        raise ValueError("gain schedule grid does not match the configuration (h, tau)")


def _run_block(model, mode, config, path_ids, exit_radius):
    h = config.h
    N = steps_of(config.t_end, h, "t_end")
    P = len(path_ids)
    n = model.n
    dW = brownian_increments(config.seed, path_ids, N, h)
    static = isinstance(mode, StaticAre)
    if static:
        plant = model.linearization
        theta_inf = mode.theta_inf
    else:
        sch = mode.schedule
        plant = sch.source.plant
        nc = sch.n_cycle
    A, B, C, D = plant.A, plant.B, plant.C, plant.D
    if isinstance(mode, Rhc):
        phys = NonlinearModel.from_linear(plant)
    else:
        phys = model
    drift, diffusion = phys.drift, phys.diffusion
    m = B.shape[1]

    x0 = np.asarray(config.x0, float)
    if x0.shape != (n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")
    y = np.tile(x0, (P, 1))
    xb = y.copy()
    ys = np.empty((N + 1, P, n))
    xs = np.empty((N + 1, P, n))
    us = np.empty((N + 1, P, m))
    active = np.ones(P, dtype=bool)
    exit_step = np.full(P, -1)
    div_step = np.full(P, -1)
    if exit_radius is not None:
        hit = np.linalg.norm(y, axis=1) >= exit_radius
        exit_step[hit] = 0
        active &= ~hit

    with np.errstate(all='ignore'):
        for i in range(N + 1):
            if static:
                xb = y
                u = y @ theta_inf.T
            else:
                if i % nc == 0:
                    xb = y.copy() if active.all() else np.where(active[:, None], y, xb)
                u = xb @ sch.theta[i % nc].T
            ys[i], xs[i], us[i] = y, xb, u
            if i == N:
                break
            dw = dW[:, i, None]
            y_new = y + drift(y, u) * h + diffusion(y, u) * dw
            xb_new = xb + (xb @ A.T + u @ B.T) * h + (xb @ C.T + u @ D.T) * dw
            if not active.all():
                # stopped and diverged paths keep their states
                y_new[~active] = y[~active]
                xb_new[~active] = xb[~active]
            bad = active & ~((np.abs(y_new) < DIVERGENCE_RADIUS).all(axis=1)
                             & (np.abs(xb_new) < DIVERGENCE_RADIUS).all(axis=1))
            if bad.any():
                div_step[bad] = i + 1
                y_new[bad] = np.nan
                xb_new[bad] = np.nan
                active &= ~bad
            if exit_radius is not None:
                hit = active & (np.linalg.norm(y_new, axis=1) >= exit_radius)
                if hit.any():
                    exit_step[hit] = i + 1
                    active &= ~hit
            y, xb = y_new, xb_new
    t = h * np.arange(N + 1)
    return _Block(t, ys, xs, us, exit_step, div_step, np.asarray(path_ids))


def _trajectory(block, j):
    h = block.t[1] - block.t[0] if block.t.size > 1 else 0.0
    ex, dv = block.exit_step[j], block.div_step[j]
    return CoupledTrajectory(
        t=block.t, y=block.y[:, j].copy(), x_pred=block.x_pred[:, j].copy(),
        u=block.u[:, j].copy(), eps=(block.x_pred[:, j] - block.y[:, j]),
        exit_time=float(ex * h) if ex >= 0 else None,
        divergence_time=float(dv * h) if dv >= 0 else None,
        path_id=int(block.path_ids[j]))


def _as_model(model):
    if isinstance(model, NonlinearModel):
        return model
    return NonlinearModel.from_linear(model)


def simulate_path(model, mode, config, path_id=0, exit_radius=None):
    """Simulate one path of the coupled (physical, prediction) system.

    `model` is a `NonlinearModel` or a `LinearPlant`.  In `Rhc` mode the
    physical system is replaced by the schedule's linear plant.  A path
    whose state becomes non-finite is recorded with `divergence_time` set
    (values NaN afterwards; a norm beyond 1e150 counts as non-finite); with `exit_radius`, the path is frozen from the
    first node where ``|y| >= exit_radius``.
    """
    model = _as_model(model)
    _check_mode(mode, config)
    block = _run_block(model, mode, config, [path_id], exit_radius)
    return _trajectory(block, 0)


def _stage_cost(block, weights):
    y, u = block.y, block.u
    q = np.einsum('kpi,ij,kpj->kp', y, weights.Q, y)
    r = np.einsum('kpi,ij,kpj->kp', u, weights.R, u)
    h = block.t[1] - block.t[0]
    return 0.5 * h * (q[:-1] + r[:-1]).sum(axis=0)


def simulate_ensemble(model, mode, config, exit_radius=None, weights=None,
                      observe: Optional[Callable] = None, keep_paths=0,
                      threads=None):
    """Simulate ``config.n_paths`` paths; path p uses noise stream (seed, p).

    Besides the per-node accumulators of ``|Y|^2`` and ``|eps|^2`` the
    ensemble optionally holds per-path truncated costs
    ``0.5 * sum_i h (Y'QY + u'Ru)`` (when `weights` is given), a per-path
    statistic ``observe(block)`` and the first `keep_paths` full
    trajectories.  Diverged paths are excluded node-wise from the moments.
    """
    model = _as_model(model)
    _check_mode(mode, config)
    grid = config.grid
    n_paths = int(config.n_paths)
    ms = MomentAccumulator.empty(len(grid))
    eps_ms = MomentAccumulator.empty(len(grid))
    if n_paths == 0:
        return PathEnsemble(config, mode, grid, 0, ms, eps_ms, np.array([], int),
                            np.array([]), None, None, [])
    starts = range(0, n_paths, BLOCK_SIZE)

    def work(start):
        ids = np.arange(start, min(start + BLOCK_SIZE, n_paths))
        blk = _run_block(model, mode, config, ids, exit_radius)
        y2 = np.sum(blk.y ** 2, axis=2)
        e2 = np.sum(blk.eps ** 2, axis=2)
        res = dict(ms=MomentAccumulator.from_samples(y2),
                   eps=MomentAccumulator.from_samples(e2),
                   div=ids[blk.div_step >= 0],
                   exit=np.where(blk.exit_step >= 0, blk.exit_step * config.h, np.nan),
                   cost=_stage_cost(blk, weights) if weights is not None else None,
                   obs=np.asarray(observe(blk)) if observe is not None else None,
                   traj=[_trajectory(blk, j) for j in range(len(ids)) if ids[j] < keep_paths])
        return res

    workers = threads or _worker_count()
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]

    div, exits, costs, obs, trajs = [], [], [], [], []
    for part in parts:
        ms = ms.merge(part['ms'])
        eps_ms = eps_ms.merge(part['eps'])
        div.append(part['div'])
        exits.append(part['exit'])
        costs.append(part['cost'])
        obs.append(part['obs'])
        trajs.extend(part['traj'])
    return PathEnsemble(
        config=config, mode=mode, grid=grid, n_paths=n_paths, ms=ms, eps_ms=eps_ms,
        diverged_ids=np.concatenate(div), exit_times=np.concatenate(exits),
        costs=np.concatenate(costs) if weights is not None else None,
        observed=np.concatenate(obs) if observe is not None else None,
        trajectories=trajs)


@dataclass
class FundamentalEnsemble:
    grid: TimeGrid
    n_paths: int
    ms: MomentAccumulator
    n_diverged: int = 0


def simulate_fundamental(closed_loop, config):
    """Euler-Maruyama for ``dPhi = A Phi dt + C Phi dW``, ``Phi(0) = I``.

    `closed_loop` is the pair ``(A_inf, C_inf)``; step, end time, number of
    paths and seed come from `config`.  Accumulates ``|Phi(t)|^2`` (squared
    spectral norm) per node.
    """
    A, C = (np.atleast_2d(np.asarray(M, float)) for M in closed_loop)
    if A.shape != C.shape or A.shape[0] != A.shape[1]:
        raise ValueError("closed-loop matrices must be square and equal-sized")
    n = A.shape[0]
    h = config.h
    N = steps_of(config.t_end, h, "t_end")
    grid = TimeGrid(0.0, h, N)
    n_paths = int(config.n_paths)
    acc = MomentAccumulator.empty(N + 1)

    def sqnorm(Phi):
        if n == 1:
            return Phi[:, 0, 0] ** 2
        return np.linalg.norm(Phi, 2, axis=(1, 2)) ** 2

    for start in range(0, n_paths, BLOCK_SIZE):
        ids = np.arange(start, min(start + BLOCK_SIZE, n_paths))
        dW = brownian_increments(config.seed, ids, N, h)
        Phi = np.tile(np.eye(n), (ids.size, 1, 1))
        vals = np.empty((N + 1, ids.size))
        vals[0] = sqnorm(Phi)
        with np.errstate(all='ignore'):
            for i in range(N):
                Phi = Phi + (A @ Phi) * h + (C @ Phi) * dW[:, i, None, None]
                Phi[~(np.abs(Phi) < DIVERGENCE_RADIUS).all(axis=(1, 2))] = np.nan
                vals[i + 1] = sqnorm(Phi)
        acc = acc.merge(MomentAccumulator.from_samples(vals))
    n_div = int(n_paths - acc.count[-1]) if n_paths else 0
    return FundamentalEnsemble(grid, n_paths, acc, n_div)


def gronwall_delay_check(k, r, tau, y0, t_end, h, slack=1e-6):
    """Integrate ``y' = -(k - r) y + r y(tau_t)`` by explicit Euler.

    ``tau_t`` is the last multiple of tau not after t; the step is shrunk so
    that tau is a whole number of steps.  Returns ``(holds, t, y)`` where
    `holds` says whether ``y(t) <= 2 y0 exp(-k t / 2) + slack`` at every node.

    Raises
    ------
    PreconditionViolated
        Unless ``k > 0`` and ``0 < r <= min(1/tau, k/4)``.
    """
    if not (k > 0 and tau > 0 and 0 < r <= min(1.0 / tau, k / 4.0) * (1 + 1e-12)):
        raise PreconditionViolated("need k > 0 and 0 < r <= min(1/tau, k/4)")
    nc = max(1, math.ceil(tau / h - 1e-9))
    h = tau / nc
    N = math.ceil(t_end / h - 1e-9)
    ys = np.empty(N + 1)
    y = float(y0)
    anchor = y
    decay = k - r
    for i in range(N):
        if i % nc == 0:
            anchor = y
        ys[i] = y
        y = y + h * (-decay * y + r * anchor)
    ys[N] = y
    t = h * np.arange(N + 1)
    holds = bool(np.all(ys <= 2.0 * y0 * np.exp(-0.5 * k * t) + slack))
    return holds, t, ys
