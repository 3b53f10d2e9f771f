"""Delayed Gronwall inequality with the anchor reset at multiples of tau.

For y' = -(k - r) y + r y(tau_t), the claimed envelope 2 y0 exp(-k t / 2)
fails once tau is long: over one cycle y only relaxes towards the anchor
fraction r / (k - r), and the per-cycle contraction is slower than k / 2.
"""

import math

import numpy as np

from smpc_lab import gronwall_delay_check

for k, r, tau in ((4.0, 1.0, 0.25), (4.0, 1.0, 1.0), (2.0, 0.1, 0.05), (1.0, 0.25, 2.0)):
    holds, t, y = gronwall_delay_check(k, r, tau, 1.0, 10.0, 1e-3)
    d = k - r
    per_cycle = math.log(r / d + (1 - r / d) * math.exp(-d * tau)) / tau
    i = int(np.argmax(y > 2 * np.exp(-0.5 * k * t) + 1e-6))
    print(f"k={k:g} r={r:g} tau={tau:g}: holds={holds}; per-cycle log rate {per_cycle:.3f} "
          f"vs required {-k / 2:.3f}" + ("" if holds else f"; first violation at t={t[i]:.3f}"))
