"""Reproducible Brownian increments.

Generator contract (fixed for this package):

* bit source: numpy's Philox4x64-10 counter-based generator, keyed by the
  128-bit integer ``seed + 2**64 * path_id``;
* the k-th raw 64-bit output of that stream belongs to step k;
* the top 53 bits give ``u = (bits + 0.5) / 2**53`` in (0, 1) and the
  standard normal is ``ndtri(u)`` (inverse CDF);
* ``dW_k = sqrt(h) * z_k``.

So every increment is a pure function of (seed, path_id, step index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .core import TimeGrid

__all__ = ['standard_normals', 'brownian_increments', 'BrownianPath', 'brownian_path']

_U64 = 2 ** 64


def standard_normals(seed, path_id, n_steps, start=0):
    """Normals for steps ``start, ..., start + n_steps - 1`` of one path."""
    bitgen = np.random.Philox(key=int(seed) % _U64 + _U64 * int(path_id))
    if start:
        bitgen.advance(start // 4)
        skip = start % 4
        if skip:
            bitgen.random_raw(skip)
    raw = bitgen.random_raw(n_steps)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def brownian_increments(seed, path_ids, n_steps, h):
    """Array of shape ``(len(path_ids), n_steps)`` of increments ``dW``."""
    path_ids = np.atleast_1d(path_ids)
    out = np.empty((path_ids.size, n_steps))
    for row, p in enumerate(path_ids):
        out[row] = standard_normals(seed, p, n_steps)
    out *= np.sqrt(h)
    return out


@dataclass(frozen=True)
class BrownianPath:
    """One scalar Brownian path sampled on `grid`."""

    grid: TimeGrid
    increments: np.ndarray
    path_id: int
    seed: int

    @property
    def values(self):
        return np.concatenate([[0.0], np.cumsum(self.increments)])


def brownian_path(seed, path_id, grid):
    inc = brownian_increments(seed, [path_id], grid.n_steps, grid.h)[0]
    inc.setflags(write=False)
    return BrownianPath(grid, inc, int(path_id), int(seed))
