"""Riccati machinery for the stochastic LQ problem.

Operators (for symmetric P)::

    Q(P) = PA + A'P + C'PC + Q        S(P) = B'P + D'PC
    R(P) = R + D'PD                   K(P) = -R(P)^{-1} S(P)

The forward ("time-reversed") Riccati flow is

    Sigma' = Q(Sigma) - S(Sigma)' R(Sigma)^{-1} S(Sigma),   Sigma(0) = G,

and the finite-horizon solution is recovered as ``P_T(t) = Sigma(T - t)``.
Its equilibrium is the stabilizing solution P_inf of the algebraic equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import CostWeights, LinearPlant, TimeGrid, steps_of, symmetrize
from .errors import NoConvergence, NotDominating, SingularR, StepTooLarge

__all__ = ['op_Q', 'op_S', 'op_R', 'op_K', 'riccati_rhs', 'are_residual',
           'RiccatiSolution', 'integrate_riccati', 'solve_dre_terminal',
           'AreSolution', 'solve_are', 'newton_kleinman',
           'check_l2_stabilizable', 'StabilityConstants', 'stability_constants',
           'k1_dominating', 'ConvergenceReport', 'riccati_convergence_report',
           'default_step', 'spectral_norm']

COND_LIMIT = 1e12


def spectral_norm(M):
    """Largest singular value."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def _eig_range(M):
    w = np.linalg.eigvalsh(symmetrize(M))
    return float(w[0]), float(w[-1])


def default_step(T, tau):
    """Default integration step ``min(tau/50, 1e-3*max(1, T))``."""
    return min(tau / 50.0, 1e-3 * max(1.0, T))


def op_Q(P, plant, weights):
    A, C = plant.A, plant.C
    return P @ A + A.T @ P + C.T @ P @ C + weights.Q


def op_S(P, plant, weights=None):
    return plant.B.T @ P + plant.D.T @ P @ plant.C


def op_R(P, plant, weights):
    return weights.R + plant.D.T @ P @ plant.D


def _solve_R(Rp, rhs):
    if Rp.shape == (1, 1):
        # a nonzero 1x1 matrix has condition number 1
        v = Rp[0, 0]
        if not (abs(v) > 0 and np.isfinite(v)):
            raise SingularR("R + D'PD is numerically singular")
        return rhs / v
    if np.linalg.cond(Rp) > COND_LIMIT:
        raise SingularR("R + D'PD is numerically singular")
    return np.linalg.solve(Rp, rhs)


def op_K(P, plant, weights):
    """Feedback gain ``-R(P)^{-1} S(P)`` (m x n)."""
    return -_solve_R(op_R(P, plant, weights), op_S(P, plant))


def riccati_rhs(P, plant, weights):
    S = op_S(P, plant)
    return op_Q(P, plant, weights) - S.T @ _solve_R(op_R(P, plant, weights), S)


def are_residual(P, plant, weights):
    """Spectral norm of the algebraic Riccati residual at P."""
    return spectral_norm(riccati_rhs(P, plant, weights))


def _rk4_step(P, h, plant, weights):
    k1 = riccati_rhs(P, plant, weights)
    k2 = riccati_rhs(P + 0.5 * h * k1, plant, weights)
    k3 = riccati_rhs(P + 0.5 * h * k2, plant, weights)
    k4 = riccati_rhs(P + h * k3, plant, weights)
    return symmetrize(P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


@dataclass(frozen=True)
class RiccatiSolution:
    """Samples of Sigma(t; G) on a uniform grid starting at t = 0."""

    grid: TimeGrid
    sigma: np.ndarray
    weights: CostWeights
    plant: LinearPlant

    @property
    def horizon(self):
        return self.grid.t_end

    @property
    def times(self):
        return self.grid.times

    def index(self, t):
        """Grid index of time t, left-continuous for off-grid queries."""
        k = t / self.grid.h
        i = int(round(k))
        if abs(k - i) > 1e-9 * max(1.0, k):
            i = int(np.floor(k))
        if not 0 <= i <= self.grid.n_steps:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        return i

    def at(self, t):
        return self.sigma[self.index(t)]

    def P_T(self, T, t):
        """Finite-horizon Riccati solution ``P_T(t) = Sigma(T - t)``."""
        if not 0 <= t <= T + 1e-12:
            raise ValueError("t must lie in [0, T]")
        return self.sigma[self.index(T) - self.index(t)]

    def gain(self, i):
        return op_K(self.sigma[i], self.plant, self.weights)


def integrate_riccati(plant, weights, horizon, h):
    """Integrate Sigma on ``{0, h, ..., horizon}`` by classical RK4.

    The state is symmetrized after every step.

    Raises
    ------
    GridError
        If `horizon` is not a multiple of `h`.
    StepTooLarge
        If the iteration produces non-finite entries.
    SingularR
        Propagated from the gain computation.
    """
    weights.check_against(plant)
    grid = TimeGrid.over(horizon, h)
    n = plant.n
    sigma = np.empty((grid.n_steps + 1, n, n))
    P = symmetrize(weights.G)
    sigma[0] = P
    with np.errstate(over='ignore', invalid='ignore'):
        for i in range(grid.n_steps):
            P = _rk4_step(P, grid.h, plant, weights)
            if not np.all(np.isfinite(P)):
                raise StepTooLarge(f"non-finite Riccati iterate at t={(i + 1) * grid.h:g}")
            sigma[i + 1] = P
    sigma.setflags(write=False)
    return RiccatiSolution(grid, sigma, weights, plant)


def solve_dre_terminal(plant, weights, T, h):
    """Solve ``P' + Q(P) - S'R^{-1}S = 0, P(T) = G`` backward in time.

    Returns an array ``P[i] = P_T(i*h)``, i = 0..T/h.  This is a separate
    integration path from `integrate_riccati` used for cross-checks.
    """
    N = steps_of(T, h, "T")
    P = symmetrize(weights.G)
    out = np.empty((N + 1, plant.n, plant.n))
    out[N] = P

    def f(P):
        return -riccati_rhs(P, plant, weights)

    for i in range(N, 0, -1):
        k1 = f(P)
        k2 = f(P - 0.5 * h * k1)
        k3 = f(P - 0.5 * h * k2)
        k4 = f(P - h * k3)
        P = symmetrize(P - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        out[i - 1] = P
    return out


@dataclass(frozen=True)
class AreSolution:
    """Stabilizing solution of the algebraic Riccati equation."""

    P_inf: np.ndarray
    residual: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def iterations_or_horizon(self):
        return self.diagnostics


def _lyapunov_operator(Acl, Ccl):
    """Matrix of X -> Acl'X + X Acl + Ccl'X Ccl acting on column-stacked X."""
    n = Acl.shape[0]
    I = np.eye(n)
    return np.kron(I, Acl.T) + np.kron(Acl.T, I) + np.kron(Ccl.T, Ccl.T)


def _flow_stiffness(P, plant, weights):
    K = op_K(P, plant, weights)
    L = _lyapunov_operator(plant.A + plant.B @ K, plant.C + plant.D @ K)
    return float(np.max(np.abs(np.linalg.eigvals(L))))


def newton_kleinman(P, plant, weights, max_iter=10, target=0.0):
    """Newton (Kleinman) refinement of an approximate ARE solution.

    Each step fixes K = K(P) and solves the generalized Lyapunov equation
    ``Acl'X + X Acl + Ccl'X Ccl + Q + K'RK = 0``.  Iterates that do not lower
    the residual are discarded.  Returns ``(P, residual, iterations)``.
    """
    n = plant.n
    best, best_res = P, are_residual(P, plant, weights)
    iters = 0
    for _ in range(max_iter):
        if best_res <= target:
            break
        K = op_K(best, plant, weights)
        Acl, Ccl = plant.A + plant.B @ K, plant.C + plant.D @ K
        rhs = -(weights.Q + K.T @ weights.R @ K)
        try:
            x = np.linalg.solve(_lyapunov_operator(Acl, Ccl), rhs.reshape(-1, order='F'))
        except np.linalg.LinAlgError:
            break
        X = symmetrize(x.reshape(n, n, order='F'))
        res = are_residual(X, plant, weights)
        if not res < best_res:
            break
        best, best_res = X, res
        iters += 1
    return best, best_res, iters


def solve_are(plant, weights, tol=1e-10, t_max=1e3, newton=True, h_max=0.05):
    """Solve the ARE by integrating the Riccati flow from G = 0.

    The flow is integrated in chunks with a step bounded by the stiffness
    of the linearized flow at the current iterate.  Once the residual drops
    below `tol`, up to 10 Newton-Kleinman steps polish it towards
    ``tol * 1e-2``.  Only Q and R of `weights` are used.

    Raises
    ------
    NoConvergence
        If the residual is still above `tol` at time `t_max` or the flow
        diverges (non-stabilizable plant).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    weights = CostWeights(weights.Q, weights.R)
    weights.check_against(plant)
    n = plant.n
    P = np.zeros((n, n))
    t, steps = 0.0, 0
    res = are_residual(P, plant, weights)
    chunk = 50
    with np.errstate(over='ignore', invalid='ignore'):
        while res > tol:
            if t >= t_max:
                raise NoConvergence(f"ARE residual {res:.3e} > {tol:.1e} at t_max={t_max:g}")
            h = min(h_max, 1.0 / max(_flow_stiffness(P, plant, weights), 1e-12),
                    (t_max - t) / chunk)
            for _ in range(chunk):
                P = _rk4_step(P, h, plant, weights)
            t += chunk * h
            steps += chunk
            if not np.all(np.isfinite(P)) or spectral_norm(P) > 1e14:
                raise NoConvergence(f"Riccati flow diverges (t={t:g}); plant not stabilizable?")
            res = are_residual(P, plant, weights)
    flow_res = res
    nk_iter = 0
    if newton:
        P, res, nk_iter = newton_kleinman(P, plant, weights, max_iter=10, target=tol * 1e-2)
    lam_min = _eig_range(P)[0]
    if lam_min <= 0:
        raise NoConvergence(f"ARE solution is not positive definite (lambda_min={lam_min:.3e})")
    P = symmetrize(P)
    P.setflags(write=False)
    return AreSolution(P, float(res), {'flow_time': t, 'flow_steps': steps,
                                       'flow_residual': flow_res,
                                       'newton_iterations': nk_iter})


def check_l2_stabilizable(plant, tol=1e-8, t_max=1e3):
    """L2-stabilizability test via the ARE with Q = I, R = I.

    Returns ``(stabilizable, certificate)`` where the certificate is a dict
    holding the ARE solution (or None) and a diagnostic message.
    """
    weights = CostWeights(np.eye(plant.n), np.eye(plant.m))
    try:
        sol = solve_are(plant, weights, tol=tol, t_max=t_max)
    except (NoConvergence, SingularR, StepTooLarge) as exc:
        return False, {'P': None, 'residual': None, 'message': str(exc)}
    ok = _eig_range(sol.P_inf)[0] > 0
    return ok, {'P': sol.P_inf, 'residual': sol.residual,
                'message': 'positive definite ARE solution found' if ok else
                'ARE solution not positive definite'}


@dataclass(frozen=True)
class StabilityConstants:
    K0: float
    lambda_inf: float
    lambda_star: float
    K1: Optional[float]
    Theta_inf: np.ndarray
    A_inf: np.ndarray
    C_inf: np.ndarray
    P_inf: np.ndarray


def stability_constants(P_inf, plant, weights):
    """K0, lambda_inf, lambda_star, Theta_inf and the closed-loop matrices.

    `P_inf` may be an `AreSolution` or a matrix.  K1 is filled in with the
    closed-form value when ``weights.G >= P_inf``, otherwise it is None.
    """
    P = P_inf.P_inf if isinstance(P_inf, AreSolution) else np.asarray(P_inf, dtype=float)
    n = plant.n
    lo, hi = _eig_range(P)
    K = op_K(P, plant, weights)
    lam_inf = _eig_range(weights.Q + K.T @ weights.R @ K)[0] / (2.0 * lo)
    try:
        K1 = k1_dominating(weights.G, P)
    except NotDominating:
        K1 = None
    return StabilityConstants(
        K0=n * spectral_norm(P) / lo,
        lambda_inf=lam_inf,
        lambda_star=lo * lam_inf / hi,
        K1=K1,
        Theta_inf=K,
        A_inf=plant.A + plant.B @ K,
        C_inf=plant.C + plant.D @ K,
        P_inf=P,
    )


def k1_dominating(G, P_inf, slack=1e-10):
    """Riccati convergence constant ``|G - P_inf| * n|P_inf| / lambda_min(P_inf)``.

    Valid only for ``G >= P_inf``; raises `NotDominating` otherwise.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    P = np.atleast_2d(np.asarray(P_inf, dtype=float))
    gap = symmetrize(G - P)
    if _eig_range(gap)[0] < -slack:
        raise NotDominating("G - P_inf is not positive semidefinite")
    n = P.shape[0]
    return spectral_norm(gap) * n * spectral_norm(P) / _eig_range(P)[0]


def _entry_ball(constants, plant, weights):
    """rho and the ball radius used to define the entry time t0."""
    P, K, K0, lam = constants.P_inf, constants.Theta_inf, constants.K0, constants.lambda_inf
    nB, nC, nD = spectral_norm(plant.B), spectral_norm(plant.C), spectral_norm(plant.D)
    rmin = _eig_range(weights.R)[0]
    bdc = nB + nD * nC
    sigma_bound = K0 * (spectral_norm(weights.G)
                        + spectral_norm(weights.Q + K.T @ weights.R @ K) / (2 * lam))
    rho = ((bdc + spectral_norm(K) * nD ** 2) * bdc / rmin
           + (bdc ** 2 * nD ** 2 / rmin ** 2
              + spectral_norm(op_S(P, plant)) * bdc * nD ** 4 / rmin ** 3) * sigma_bound)
    if rho == 0:
        return 0.0, np.inf
    radius = min(1.0 / (4 * K0 * rho), lam / (K0 * rho)) / (2 * K0)
    return float(rho), float(radius)


@dataclass(frozen=True)
class ConvergenceReport:
    times: np.ndarray
    gap: np.ndarray
    bound: np.ndarray
    bound_holds: Optional[bool]
    K1: Optional[float]
    rho: float
    ball_radius: float
    t0: Optional[float]

    def rows(self):
        return zip(self.times, self.gap, self.bound)


def riccati_convergence_report(riccati, are, constants, atol=1e-12):
    """Tabulate ``|Sigma(t) - P_inf|`` against ``K1 exp(-2 lambda_inf t)``.

    The bound is only evaluated when G dominates P_inf; otherwise the
    `bound` column is NaN, `bound_holds` is None and only the entry time t0
    into the ball around P_inf is reported.
    """
    P = are.P_inf if isinstance(are, AreSolution) else np.asarray(are)
    t = riccati.times
    gap = np.array([spectral_norm(S - P) for S in riccati.sigma])
    rho, radius = _entry_ball(constants, riccati.plant, riccati.weights)
    inside = np.nonzero(gap < radius)[0]
    t0 = float(t[inside[0]]) if inside.size else None
    try:
        K1 = k1_dominating(riccati.weights.G, P)
    except NotDominating:
        K1 = None
    if K1 is None:
        bound = np.full_like(t, np.nan)
        holds = None
    else:
        bound = K1 * np.exp(-2 * constants.lambda_inf * t)
        holds = bool(np.all(gap <= bound + atol))
    return ConvergenceReport(t, gap, bound, holds, K1, rho, radius, t0)
