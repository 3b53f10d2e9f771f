"""Shared value types: plants, weights, nonlinear models, configs and grids.

All types are frozen dataclasses holding float64 numpy arrays.  The arrays
are made read-only on construction so instances can be shared freely
between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (DimensionMismatch, GridError, NonFiniteEntry,
                     NotPositiveDefinite, PreconditionViolated)

__all__ = ['LinearPlant', 'CostWeights', 'NonlinearModel', 'SmpcConfig',
           'TimeGrid', 'validate_plant', 'symmetrize', 'steps_of',
           'check_linearization', 'SYM_TOL']

SYM_TOL = 1e-12
_GRID_RTOL = 1e-9


def _frozen(a, ndmin=2):
    arr = np.array(a, dtype=float, ndmin=ndmin)
    arr.setflags(write=False)
    return arr


def symmetrize(M):
    """Return the symmetric part ``(M + M.T) / 2`` of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"symmetrize needs a square matrix, got {M.shape}")
    return 0.5 * (M + M.T)


def steps_of(duration, h, name="duration"):
    """Number of steps of size `h` in `duration`; raises if not an integer."""
    if h <= 0:
        raise GridError(f"step h must be positive, got {h}")
    k = duration / h
    n = int(round(k))
    if n < 1 or abs(k - n) > _GRID_RTOL * max(1.0, k):
        raise GridError(f"{name}={duration!r} is not a positive multiple of h={h!r}")
    return n


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0, t0 + h, ..., t0 + n_steps*h``."""

    t0: float
    h: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise GridError("a time grid needs at least one step")
        if not self.h > 0:
            raise GridError("grid step must be positive")

    @classmethod
    def over(cls, duration, h, t0=0.0):
        return cls(float(t0), float(h), steps_of(duration, h))

    @property
    def times(self):
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    @property
    def t_end(self):
        return self.t0 + self.h * self.n_steps

    def __len__(self):
        return self.n_steps + 1


@dataclass(frozen=True)
class LinearPlant:
    """Matrices of ``dX = (AX + Bu) dt + (CX + Du) dW``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in 'ABCD':
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        validate_plant(self)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @classmethod
    def scalar(cls, A, B, C, D):
        return cls([[A]], [[B]], [[C]], [[D]])


def validate_plant(plant):
    """Check dimensions and finiteness of a `LinearPlant`; return it unchanged.

    Raises
    ------
    DimensionMismatch
        If A is not square or B, C, D disagree with it.
    NonFiniteEntry
        If any entry is NaN or infinite.
    """
    A, B, C, D = plant.A, plant.B, plant.C, plant.D
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    n = A.shape[0]
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionMismatch(f"B must have {n} rows, got {B.shape}")
    m = B.shape[1]
    if C.shape != (n, n):
        raise DimensionMismatch(f"C must be {n}x{n}, got {C.shape}")
    if D.shape != (n, m):
        raise DimensionMismatch(f"D must be {n}x{m}, got {D.shape}")
    for name, M in zip('ABCD', (A, B, C, D)):
        if not np.all(np.isfinite(M)):
            raise NonFiniteEntry(f"{name} has non-finite entries")
    return plant


@dataclass(frozen=True)
class CostWeights:
    """State weight Q > 0, control weight R > 0 and terminal weight G >= 0.

    Inputs are symmetrized on construction.
    """

    Q: np.ndarray
    R: np.ndarray
    G: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = symmetrize(_frozen(self.Q))
        R = symmetrize(_frozen(self.R))
        G = np.zeros_like(Q) if self.G is None else symmetrize(_frozen(self.G))
        if G.shape != Q.shape:
            raise DimensionMismatch(f"G shape {G.shape} differs from Q shape {Q.shape}")
        for name, M in (('Q', Q), ('R', R), ('G', G)):
            if not np.all(np.isfinite(M)):
                raise NonFiniteEntry(f"{name} has non-finite entries")
        if np.linalg.eigvalsh(Q)[0] <= 0:
            raise NotPositiveDefinite("Q must be positive definite")
        if np.linalg.eigvalsh(R)[0] <= 0:
            raise NotPositiveDefinite("R must be positive definite")
        if np.linalg.eigvalsh(G)[0] < -SYM_TOL:
            raise NotPositiveDefinite("G must be positive semidefinite")
        for name, M in (('Q', Q), ('R', R), ('G', G)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    def with_terminal(self, G):
        return CostWeights(self.Q, self.R, G)

    def scaled(self, c):
        return CostWeights(c * self.Q, c * self.R, c * self.G)

    def check_against(self, plant):
        if self.Q.shape != (plant.n, plant.n) or self.R.shape != (plant.m, plant.m):
            raise DimensionMismatch(
                f"weights Q{self.Q.shape}/R{self.R.shape} do not fit n={plant.n}, m={plant.m}")


def _batched(fn, n):
    """Wrap `fn` so it accepts (n,) or (P, n) states and returns the same rank."""
    def wrapped(y, u):
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.asarray(fn(y, u), dtype=float).reshape(y.shape[:-1] + (n,))
    return wrapped


@dataclass(frozen=True)
class NonlinearModel:
    """Physical system ``dY = b(Y, u) dt + sigma(Y, u) dW``.

    `drift` and `diffusion` take a state of shape ``(..., n)`` and a control
    of shape ``(..., m)`` and must broadcast over the leading axes; the
    engine evaluates them on a whole block of paths at once.  The diffusion
    returns an n-vector because the driving Brownian motion is scalar.
    """

    drift: Callable
    diffusion: Callable
    linearization: LinearPlant
    growth_order: Optional[int] = None
    lipschitz_margin: Optional[float] = None
    name: str = field(default="model", compare=False)
    is_linear: bool = field(default=False, compare=False)

    def __post_init__(self):
        n, m = self.linearization.n, self.linearization.m
        object.__setattr__(self, 'drift', _batched(self.drift, n))
        object.__setattr__(self, 'diffusion', _batched(self.diffusion, n))
        y0, u0 = np.zeros(n), np.zeros(m)
        b0, s0 = self.drift(y0, u0), self.diffusion(y0, u0)
        if b0.shape != (n,) or s0.shape != (n,):
            raise DimensionMismatch("drift/diffusion output does not match the linearization")
        if np.max(np.abs(b0)) > 1e-12 or np.max(np.abs(s0)) > 1e-12:
            raise PreconditionViolated("drift(0,0) and diffusion(0,0) must vanish")

    @property
    def n(self):
        return self.linearization.n

    @property
    def m(self):
        return self.linearization.m

    @classmethod
    def from_linear(cls, plant, name="linear"):
        A, B, C, D = plant.A, plant.B, plant.C, plant.D
        return cls(lambda y, u: y @ A.T + u @ B.T,
                   lambda y, u: y @ C.T + u @ D.T,
                   plant, name=name, is_linear=True)


def check_linearization(model, step=1e-5, tol=1e-4):
    """Compare `model.linearization` with central finite-difference Jacobians.

    Returns ``(ok, max_error)``.
    """
    n, m = model.n, model.m
    z = np.zeros(n + m)

    def jac(fn):
        J = np.empty((n, n + m))
        for k in range(n + m):
            e = z.copy()
            e[k] = step
            fp = fn(e[:n], e[n:])
            fm = fn(-e[:n], -e[n:])
            J[:, k] = (fp - fm) / (2 * step)
        return J

    lin = model.linearization
    Jb, Js = jac(model.drift), jac(model.diffusion)
    err = max(np.max(np.abs(Jb[:, :n] - lin.A)), np.max(np.abs(Jb[:, n:] - lin.B)),
              np.max(np.abs(Js[:, :n] - lin.C)), np.max(np.abs(Js[:, n:] - lin.D)))
    return bool(err <= tol), float(err)


@dataclass(frozen=True)
class SmpcConfig:
    """Horizons, step, initial state and ensemble settings for one run.

    T, tau and t_end must be integer multiples of h with tau <= T.
    """

    T: float
    tau: float
    h: float
    x0: np.ndarray
    t_end: float
    n_paths: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'x0', _frozen(self.x0, ndmin=1))
        if not (self.T > 0 and self.tau > 0):
            raise GridError("T and tau must be positive")
        nc = steps_of(self.tau, self.h, "tau")
        nt = steps_of(self.T, self.h, "T")
        steps_of(self.t_end, self.h, "t_end")
        if nc > nt:
            raise GridError("control horizon tau must not exceed T")
        if self.n_paths < 0:
            raise ValueError("n_paths must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def n_cycle(self):
        return steps_of(self.tau, self.h)

    @property
    def n_horizon(self):
        return steps_of(self.T, self.h)

    @property
    def grid(self):
        return TimeGrid.over(self.t_end, self.h)

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)
