"""Stability verdicts from simulated ensembles and deterministic cost integrals.

Verdict thresholds used by `check_theorem_bound`:

* more than 1% of paths diverged                      -> BLOWUP_SUSPECTED
* violation fraction <= 1%                            -> STABLE_WITHIN_BOUND
* otherwise, fitted log-rate negative                 -> RATE_ONLY
* otherwise                                           -> BLOWUP_SUSPECTED

A node counts as a violation when ``estimate > bound * (1 + 3 * SE / estimate)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .core import LinearPlant, NonlinearModel, TimeGrid, steps_of
from .errors import EmptyEnsemble, NonPositiveEstimate, UnstableClosedLoop
from .riccati import AreSolution, StabilityConstants, integrate_riccati, solve_are
from .sde import FundamentalEnsemble, simulate_ensemble
from .smpc import GainSchedule, Rhc, Smpc, StaticAre, build_gain_schedule

__all__ = ['MeanSquareCurve', 'mean_square_curve', 'DecayFit', 'fit_decay_rate',
           'StabilityReport', 'check_theorem_bound', 'theorem_bound_curve',
           'CostEstimate', 'cost_lyapunov_linear', 'cost_monte_carlo',
           'GapStudy', 'suboptimality_gap_study', 'BlowupReport', 'blowup_probe',
           'truncated_exp_moment', 'SweepResult', 'modeling_error_sweep', 'perturbed_linear_model',
           'STABLE_WITHIN_BOUND', 'RATE_ONLY', 'BLOWUP_SUSPECTED',
           'MONTE_CARLO_TRUNCATED', 'LYAPUNOV_DETERMINISTIC']

STABLE_WITHIN_BOUND = 'STABLE_WITHIN_BOUND'
RATE_ONLY = 'RATE_ONLY'
BLOWUP_SUSPECTED = 'BLOWUP_SUSPECTED'
MONTE_CARLO_TRUNCATED = 'MONTE_CARLO_TRUNCATED'
LYAPUNOV_DETERMINISTIC = 'LYAPUNOV_DETERMINISTIC'

VIOLATION_LIMIT = 0.01
DIVERGENCE_LIMIT = 0.01
SLACK_SE = 3.0


# ---------------------------------------------------------------- curves

@dataclass(frozen=True)
class MeanSquareCurve:
    """Per-node estimate of ``E|Y(t)|^2`` with its standard error."""

    grid: TimeGrid
    estimate: np.ndarray
    std_error: np.ndarray
    n_effective: np.ndarray
    n_total: int
    n_diverged: int = 0
    x0: Optional[np.ndarray] = None

    @property
    def t(self):
        return self.grid.times

    @property
    def diverged_fraction(self):
        return self.n_diverged / self.n_total if self.n_total else 0.0

    def scaled(self, c):
        return MeanSquareCurve(self.grid, c * self.estimate, c * self.std_error,
                               self.n_effective, self.n_total, self.n_diverged, self.x0)


def mean_square_curve(ensemble, which='y'):
    """Sample mean and standard error of ``|Y(t)|^2`` (or ``|eps(t)|^2``).

    Accepts a `PathEnsemble` or a `FundamentalEnsemble`.

    Raises
    ------
    EmptyEnsemble
        With fewer than two paths.
    """
    if ensemble.n_paths < 2:
        raise EmptyEnsemble(f"need at least 2 paths, got {ensemble.n_paths}")
    if isinstance(ensemble, FundamentalEnsemble):
        acc, n_div, x0 = ensemble.ms, ensemble.n_diverged, None
    else:
        acc = ensemble.eps_ms if which == 'eps' else ensemble.ms
        n_div, x0 = ensemble.n_diverged, ensemble.config.x0
    est = np.maximum(acc.mean.copy(), 0.0)
    se = acc.std_error()
    se = np.where(np.isfinite(se), se, np.inf)
    return MeanSquareCurve(ensemble.grid, est, se, acc.count.copy(),
                           int(ensemble.n_paths), int(n_div), x0)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    std_error: float
    ci: tuple
    intercept: float
    window: tuple


def _window_mask(t, window):
    if window is None:
        window = (0.1 * t[-1], 0.8 * t[-1])
    ta, tb = window
    mask = (t >= ta - 1e-12) & (t <= tb + 1e-12)
    return mask, (float(ta), float(tb))


def fit_decay_rate(curve, window=None, z=1.96):
    """Least-squares slope of ``log(estimate)`` against t on `window`.

    The default window is ``[0.1, 0.8] * t_end``.  The standard error of the
    slope propagates the per-node relative standard errors linearly, treating
    nodes as independent (optimistic for a single ensemble, where nodes are
    correlated).

    Raises
    ------
    NonPositiveEstimate
        If any estimate in the window is not strictly positive.
    """
    t = curve.t
    mask, window = _window_mask(t, window)
    if mask.sum() < 2:
        raise ValueError("fit window must contain at least two nodes")
    est = curve.estimate[mask]
    if np.any(~(est > 0)):
        raise NonPositiveEstimate("estimate must be positive on the fit window")
    tw = t[mask]
    logy = np.log(est)
    dt = tw - tw.mean()
    w = dt / np.dot(dt, dt)
    rate = float(np.dot(w, logy))
    intercept = float(logy.mean() - rate * tw.mean())
    rel = curve.std_error[mask] / est
    rel = np.where(np.isfinite(rel), rel, 0.0)
    se = float(np.sqrt(np.dot(w * w, rel * rel)))
    return DecayFit(rate, se, (rate - z * se, rate + z * se), intercept, window)


# ---------------------------------------------------------------- bounds

@dataclass(frozen=True)
class StabilityReport:
    theorem: str
    fitted_rate: float
    rate_ci: tuple
    bound_curve: np.ndarray
    violations: np.ndarray
    violation_fraction: float
    diverged_fraction: float
    verdict: str
    constants_used: StabilityConstants
    rate_parameter: float = float('nan')

    def rows(self, curve):
        return zip(curve.t, curve.estimate, curve.std_error, self.bound_curve, curve.n_effective)


def _quad(P, x):
    x = np.asarray(x, float)
    return float(x @ P @ x)


def theorem_bound_curve(t, constants, theorem, x0, params=None):
    """Bound on ``E|Y(t)|^2`` and the exponent it decays with.

    T2_1: ``<P x, x> / lmin * exp(-lambda_inf t)``.
    T2_2: ``<P x, x> / lmin * exp(mu t)`` where mu is `params['mu']` or
    ``-2 lambda_inf + K [L + L e^{K tau} + L tau e^{K tau} + (K1 + K1^2) e^{-2 lambda_inf (T - tau)}]``
    from `params` K, L, tau, T (and K1, defaulting to the constants').
    T2_3: ``2 <P x, x> / lmin * exp(-lambda_star t / 2)``.
    """
    params = dict(params or {})
    P = constants.P_inf
    lmin = float(np.linalg.eigvalsh(P)[0])
    c = _quad(P, x0) / lmin
    if theorem == 'T2_1':
        rate = -constants.lambda_inf
    elif theorem == 'T2_2':
        if 'mu' in params:
            rate = float(params['mu'])
        else:
            K, L, tau, T = (float(params[k]) for k in ('K', 'L', 'tau', 'T'))
            K1 = params.get('K1', constants.K1)
            if K1 is None:
                raise ValueError("T2_2 needs K1 (G does not dominate P_inf)")
            lam = constants.lambda_inf
            rate = -2 * lam + K * (L + L * math.exp(K * tau) + L * tau * math.exp(K * tau)
                                   + (K1 + K1 ** 2) * math.exp(-2 * lam * (T - tau)))
    elif theorem == 'T2_3':
        c = 2 * c
        rate = -0.5 * constants.lambda_star
    else:
        raise ValueError(f"unknown theorem {theorem!r}; expected T2_1, T2_2 or T2_3")
    return c * np.exp(rate * np.asarray(t, float)), rate


def _verdict(violation_fraction, diverged_fraction, rate):
    if diverged_fraction > DIVERGENCE_LIMIT:
        return BLOWUP_SUSPECTED
    if violation_fraction <= VIOLATION_LIMIT:
        return STABLE_WITHIN_BOUND
    if np.isfinite(rate) and rate < 0:
        return RATE_ONLY
    return BLOWUP_SUSPECTED


def check_theorem_bound(curve, constants, theorem, params=None, bound=None):
    """Compare a mean-square curve with one of the stability bounds.

    `params` may carry ``x0`` (default: the curve's), ``window`` for the
    rate fit and the T2_2 parameters of `theorem_bound_curve`.  An explicit
    `bound` array overrides the theorem formula.  For T2_2 the generic
    constant K is not computable, so only the qualitative part (negative
    fitted rate) carries weight unless the caller supplies K.
    """
    params = dict(params or {})
    x0 = params.pop('x0', curve.x0)
    if x0 is None:
        raise ValueError("initial state x0 is required")
    window = params.pop('window', None)
    t = curve.t
    if bound is None:
        bound, rate_param = theorem_bound_curve(t, constants, theorem, x0, params)
    else:
        bound, rate_param = np.asarray(bound, float), float('nan')
    est, se = curve.estimate, curve.std_error
    with np.errstate(divide='ignore', invalid='ignore'):
        rel = np.where(est > 0, se / est, 0.0)
    rel = np.where(np.isfinite(rel), rel, 0.0)
    violations = est > bound * (1.0 + SLACK_SE * rel)
    frac = float(violations.mean())
    try:
        fit = fit_decay_rate(curve, window)
        rate, ci = fit.rate, fit.ci
    except NonPositiveEstimate:
        rate, ci = float('nan'), (float('nan'), float('nan'))
    verdict = _verdict(frac, curve.diverged_fraction, rate)
    return StabilityReport(theorem, rate, ci, bound, violations, frac,
                           curve.diverged_fraction, verdict, constants, rate_param)


# ---------------------------------------------------------------- costs

@dataclass(frozen=True)
class CostEstimate:
    value: float
    method: str
    truncation_horizon: float
    tail_bound: float
    std_error: float = 0.0
    infinite_horizon: Optional[float] = None
    decay_rate: Optional[float] = None


def _lyap_matrix(Acl, Ccl):
    """Matrix of ``M -> Acl M + M Acl' + Ccl M Ccl'`` on column-major vec(M)."""
    n = Acl.shape[0]
    I = np.eye(n)
    return np.kron(I, Acl) + np.kron(Acl, I) + np.kron(Ccl, Ccl)


def _cycle_maps(plant, weights, gains, h):
    """One-cycle monodromy Phi and cost functional ell for gains on nodes 0..N (step h).

    RK4 with step 2h, taking odd nodes as midpoints.  State is vec(M) and
    the running cost ``0.5 * int tr(W(t) M(t)) dt``.
    """
    A, B, C, D = plant.A, plant.B, plant.C, plant.D
    n = A.shape[0]
    Ls, ws = [], []
    for th in gains:
        Ls.append(_lyap_matrix(A + B @ th, C + D @ th))
        W = weights.Q + th.T @ weights.R @ th
        ws.append(0.5 * W.reshape(-1, order='F'))
    N = len(gains) - 1
    if N % 2:
        raise ValueError("need an even number of steps per cycle")
    H = 2 * h
    Phi = np.eye(n * n)
    ell = np.zeros(n * n)
    for k in range(0, N, 2):
        L0, L1, L2 = Ls[k], Ls[k + 1], Ls[k + 2]
        w0, w1, w2 = ws[k], ws[k + 1], ws[k + 2]
        X = Phi
        k1 = L0 @ X
        X2 = X + 0.5 * H * k1
        k2 = L1 @ X2
        X3 = X + 0.5 * H * k2
        k3 = L1 @ X3
        X4 = X + H * k3
        k4 = L2 @ X4
        ell = ell + H / 6 * (w0 @ X + 2 * w1 @ X2 + 2 * w1 @ X3 + w2 @ X4)
        Phi = X + H / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Phi, ell


def _static_maps(plant, weights, theta, period):
    """Exact one-period maps for a constant gain (block matrix exponential)."""
    A, B, C, D = plant.A, plant.B, plant.C, plant.D
    L = _lyap_matrix(A + B @ theta, C + D @ theta)
    W = weights.Q + theta.T @ weights.R @ theta
    w = 0.5 * W.reshape(-1, order='F')
    k = L.shape[0]
    big = np.zeros((k + 1, k + 1))
    big[:k, :k] = L
    big[k, :k] = w
    E = linalg.expm(big * period)
    return E[:k, :k], E[k, :k]


def _gains_for(mode):
    if isinstance(mode, (Smpc, Rhc)):
        return mode.schedule
    if isinstance(mode, StaticAre):
        return mode.theta_inf
    return mode


def cost_lyapunov_linear(plant, weights, schedule, x0, horizon=None, period=None,
                         rtol=1e-13, max_cycles=200000):
    """Deterministic cost of a linear closed loop via its second moment.

    ``M(t) = E[Y Y']`` solves ``M' = A(t) M + M A(t)' + C(t) M C(t)'`` with
    ``A(t) = A + B Theta(t mod tau)``, ``C(t) = C + D Theta(t mod tau)``, and
    ``J = 0.5 int tr((Q + Theta' R Theta) M) dt``.  The per-cycle map is
    computed once (RK4 over a cycle for a schedule, matrix exponential for a
    constant gain) and iterated.

    `schedule` is a `GainSchedule`, a constant gain matrix, or a controller
    mode.  Without `horizon`, cycles are accumulated until the geometric tail
    bound drops below ``rtol`` times the running value.

    Raises
    ------
    UnstableClosedLoop
        If the per-cycle second-moment map does not contract.
    """
    if not isinstance(plant, LinearPlant):
        raise TypeError("cost_lyapunov_linear needs a LinearPlant")
    schedule = _gains_for(schedule)
    x0 = np.asarray(x0, float).reshape(-1)
    if isinstance(schedule, GainSchedule):
        sch = schedule if schedule.n_cycle % 2 == 0 else schedule.refined(2)
        Phi, ell = _cycle_maps(plant, weights, list(sch.theta), sch.h)
        tau = sch.tau
    else:
        theta = np.atleast_2d(np.asarray(schedule, float))
        tau = float(period) if period else 0.25
        Phi, ell = _static_maps(plant, weights, theta, tau)
    radius = float(np.max(np.abs(np.linalg.eigvals(Phi))))
    rate = math.log(radius) / tau if radius > 0 else -np.inf
    if not radius < 1.0:
        raise UnstableClosedLoop(f"second-moment map has spectral radius {radius:.6g} >= 1")
    m = np.outer(x0, x0).reshape(-1, order='F')
    try:
        infinite = float(ell @ np.linalg.solve(np.eye(len(m)) - Phi, m))
    except np.linalg.LinAlgError:
        infinite = None
    n_cycles = None if horizon is None else steps_of(horizon, tau, "horizon")
    total, last, ratios = 0.0, None, []
    k = 0
    while True:
        if n_cycles is not None and k >= n_cycles:
            break
        c = float(ell @ m)
        if last is not None and last > 0:
            ratios.append(c / last)
        total += c
        last = c
        m = Phi @ m
        k += 1
        q = max(ratios[-3:]) if ratios else None
        tail = c * q / (1 - q) if q is not None and 0 <= q < 1 else math.inf
        if n_cycles is None and (c == 0.0 or tail <= rtol * abs(total)):
            break
        if k >= max_cycles:
            break
    if last == 0.0 or k == 0:
        tail = 0.0
    return CostEstimate(value=total, method=LYAPUNOV_DETERMINISTIC,
                        truncation_horizon=k * tau, tail_bound=float(tail),
                        infinite_horizon=infinite, decay_rate=rate)


def cost_monte_carlo(ensemble):
    """Mean and standard error of the per-path truncated costs of an ensemble."""
    costs = ensemble.costs
    if costs is None:
        raise ValueError("ensemble was simulated without cost weights")
    ok = np.isfinite(costs)
    n = int(ok.sum())
    if n < 2:
        raise EmptyEnsemble("need at least 2 finite path costs")
    c = costs[ok]
    return CostEstimate(value=float(c.mean()), method=MONTE_CARLO_TRUNCATED,
                        truncation_horizon=float(ensemble.grid.t_end), tail_bound=math.nan,
                        std_error=float(c.std(ddof=1) / math.sqrt(n)))


@dataclass(frozen=True)
class GapStudy:
    gaps: np.ndarray
    costs: np.ndarray
    reference: float
    gap_values: np.ndarray
    log_slope: float
    decreasing: bool
    nonnegative: bool


def suboptimality_gap_study(plant, weights, G, gaps, tau, x0, h=1e-3, are=None):
    """Cost of the receding-horizon loop minus ``0.5 <P_inf x0, x0>`` per gap ``T - tau``.

    Costs come from `cost_lyapunov_linear` (infinite horizon, resolvent of
    the cycle map).  `log_slope` is the slope of ``log(gap)`` between the two
    largest gaps; it is NaN when either gap is not positive.
    """
    gaps = np.asarray(sorted(float(g) for g in gaps))
    if are is None:
        are = solve_are(plant, weights)
    P = are.P_inf if isinstance(are, AreSolution) else np.asarray(are, float)
    w = weights.with_terminal(G)
    T_max = tau + gaps[-1]
    ric = integrate_riccati(plant, w, T_max, h)
    ref = 0.5 * _quad(P, np.asarray(x0, float).reshape(-1))
    costs = []
    for g in gaps:
        sch = build_gain_schedule(ric, tau + g, tau, are=P)
        costs.append(cost_lyapunov_linear(plant, w, sch, x0).infinite_horizon)
    costs = np.array(costs)
    vals = costs - ref
    if len(gaps) >= 2 and vals[-1] > 0 and vals[-2] > 0:
        slope = float(np.log(vals[-1] / vals[-2]) / (gaps[-1] - gaps[-2]))
    else:
        slope = float('nan')
    return GapStudy(gaps, costs, ref, vals, slope,
                    bool(np.all(np.diff(vals) < 0)), bool(np.all(vals >= -1e-12)))


# ---------------------------------------------------------------- blow-up

@dataclass(frozen=True)
class BlowupReport:
    sizes: np.ndarray
    orders: tuple
    estimates: np.ndarray      # (len(orders), len(sizes))
    ratios: np.ndarray         # successive ratios, (len(orders), len(sizes) - 1)
    flagged: np.ndarray        # per order
    statistic: str
    node: int
    n_diverged: int

    @property
    def divergence_flagged(self):
        return bool(np.any(self.flagged))


def blowup_probe(model, mode, config, moment_orders=(1,), sizes=(100, 1000, 10000),
                 statistic='exp_u', node=None, ratio=2.0):
    """Empirical moments over nested ensembles of increasing size.

    Path p always uses noise stream (seed, p), so the ensemble of size n is
    the first n paths of the largest one.  `statistic` is ``'exp_u'`` for
    ``E[exp(p u_1(t))]`` or ``'abs_y'`` for ``E|Y(t)|^p``, evaluated at grid
    node `node` (default: the last node before the first resampling, or the
    final node for the static law).  An order is flagged when some successive
    estimate ratio exceeds `ratio` or an estimate is non-finite.
    """
    sizes = np.asarray(sorted(int(s) for s in sizes))
    orders = tuple(float(p) for p in moment_orders)
    if node is None:
        node = steps_of(config.t_end, config.h) if isinstance(mode, StaticAre) else config.n_cycle - 1

    def observe(block):
        if statistic == 'exp_u':
            base = block.u[node, :, 0]
            return np.stack([np.exp(p * base) for p in orders], axis=1)
        if statistic == 'abs_y':
            base = np.linalg.norm(block.y[node], axis=1)
            return np.stack([base ** p for p in orders], axis=1)
        raise ValueError(f"unknown statistic {statistic!r}")

    ens = simulate_ensemble(model, mode, config.replace(n_paths=int(sizes[-1])), observe=observe)
    vals = ens.observed
    est = np.empty((len(orders), len(sizes)))
    with np.errstate(all='ignore'):
        for j, n in enumerate(sizes):
            est[:, j] = vals[:n].mean(axis=0)
        r = est[:, 1:] / est[:, :-1]
    flagged = np.any(~np.isfinite(est), axis=1) | np.any(np.abs(r) > ratio, axis=1)
    return BlowupReport(sizes, orders, est, r, flagged, statistic, int(node), ens.n_diverged)


def truncated_exp_moment(x, t, c, panels=600, order=16):
    """``log E[exp(-(x/2) exp(-13 t / 8 - W(t)/2)) 1{|W(t)| <= c}]`` by quadrature.

    Returns the natural logarithm because the value overflows quickly once
    ``x < 0`` and c grows.  Gauss-Legendre panels are clustered
    geometrically at both ends of ``[-c, c]``, where the integrand is
    sharply peaked; summation runs in log space.
    """
    a = -0.5 * x * math.exp(-13.0 * t / 8.0)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = panels // 2
    d = np.geomspace(1e-14 * max(c, 1.0), c, half)
    edges = np.unique(np.concatenate([-c + np.concatenate([[0.0], d]),
                                      c - np.concatenate([[0.0], d])]))
    lo, hi = edges[:-1], edges[1:]
    mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
    w = mid[:, None] + rad[:, None] * nodes[None, :]
    logf = a * np.exp(-0.5 * w) - w * w / (2 * t) - 0.5 * math.log(2 * math.pi * t)
    logw = np.log(rad[:, None] * weights[None, :])
    return float(logsumexp(logf + logw))


# ---------------------------------------------------------------- L sweep

@dataclass(frozen=True)
class SweepResult:
    L: np.ndarray
    max_eps_ms: np.ndarray
    eps_exponent: float
    rates: np.ndarray
    rates_monotone: bool


def perturbed_linear_model(plant, L):
    """Physical system ``b = (A + L I) Y + B u``, ``sigma = (C + L I) Y + D u``.

    Its deviation from `plant` is Lipschitz with constant ``L`` in each of
    drift and diffusion; `plant` stays the prediction model.
    """
    n = plant.n
    phys = LinearPlant(plant.A + L * np.eye(n), plant.B, plant.C + L * np.eye(n), plant.D)
    model = NonlinearModel.from_linear(phys, name=f"perturbed(L={L:g})")
    return NonlinearModel(model.drift, model.diffusion, plant, lipschitz_margin=float(L),
                          name=model.name)


def modeling_error_sweep(plant, schedule, config, L_values=(0.01, 0.05, 0.1), window=None):
    """Prediction error and decay rate of the sampled loop as modeling error L grows.

    Returns ``max_t E|eps(t)|^2`` per L with its fitted log-log exponent in L
    (about 2 when the prediction error is O(L^2)) and the fitted mean-square
    decay rate per L.
    """
    L_values = np.asarray(sorted(float(v) for v in L_values))
    peaks, rates = [], []
    for L in L_values:
        ens = simulate_ensemble(perturbed_linear_model(plant, L), Smpc(schedule), config)
        peaks.append(float(mean_square_curve(ens, 'eps').estimate.max()))
        rates.append(fit_decay_rate(mean_square_curve(ens), window).rate)
    peaks, rates = np.array(peaks), np.array(rates)
    expo = float(np.polyfit(np.log(L_values), np.log(peaks), 1)[0])
    return SweepResult(L_values, peaks, expo, rates, bool(np.all(np.diff(rates) >= 0)))
