"""Example 2.2: static ARE feedback against the open-loop prediction.

The closed loop follows 4x / (x - (x - 4) e^{2t}); the open-loop law (one
prediction over the whole run) blows up near t = 2.747 for x = 1.
"""

import numpy as np

from smpc_lab import (Smpc, SmpcConfig, StaticAre, build_gain_schedule, integrate_riccati,
                      models, op_K, simulate_path, solve_are)
from smpc_lab.selftest import example_2_2_closed_form, open_loop_blowup_time

model = models.example_2_2()
w = models.EXAMPLE_2_2_WEIGHTS
are = solve_are(model.linearization, w)
theta = op_K(are.P_inf, model.linearization, w)
cfg = SmpcConfig(T=3.0, tau=3.0, h=1e-4, x0=[1.0], t_end=3.0)

closed = simulate_path(model, StaticAre(theta), cfg)
exact = example_2_2_closed_form(1.0, closed.t)
print(f"Theta_inf = {theta[0, 0]:.6f}")
print(f"closed loop: Y(3) = {closed.y[-1, 0]:.6f}, max error {np.max(np.abs(closed.y[:, 0] - exact)):.2e}")

ric = integrate_riccati(model.linearization, w.with_terminal(are.P_inf), 3.0, 1e-4)
opened = simulate_path(model, Smpc(build_gain_schedule(ric, 3.0, 3.0, are=are)), cfg)
hit = np.nonzero(np.abs(opened.y[:, 0]) > 1e3)[0]
print(f"open loop: |Y| > 1e3 at t = {opened.t[hit[0]]:.4f}; "
      f"closed-form blow-up at {open_loop_blowup_time(1.0):.4f}")
