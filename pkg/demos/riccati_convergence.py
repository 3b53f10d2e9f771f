"""Riccati flow on the Example 2.1 plant started from G = 2.

Prints the gap |Sigma(t) - P_inf| next to K1 exp(-2 lambda_inf t) and the
gain schedule of one control cycle.
"""

import numpy as np

from smpc_lab import (build_gain_schedule, integrate_riccati, models, riccati_convergence_report,
                      solve_are, stability_constants)

model = models.example_2_1()
w = models.EXAMPLE_2_1_WEIGHTS.with_terminal([[2.0]])
plant = model.linearization

are = solve_are(plant, w)
const = stability_constants(are, plant, w)
print(f"P_inf = {are.P_inf[0, 0]:.12f}  residual {are.residual:.2e}")
print(f"K0 = {const.K0:g}  lambda_inf = {const.lambda_inf:g}  K1 = {const.K1:g}")

ric = integrate_riccati(plant, w, 3.0, 1e-3)
rep = riccati_convergence_report(ric, are, const)
print("\n   t     gap          bound")
for i in range(0, len(rep.times), 500):
    print(f"{rep.times[i]:4.1f}  {rep.gap[i]:.4e}   {rep.bound[i]:.4e}")
print(f"bound holds at every node: {rep.bound_holds}")

sch = build_gain_schedule(ric, 1.0, 0.25, are=are)
print("\nTheta(s) over one cycle (T = 1, tau = 0.25):")
for s in np.linspace(0, 0.25, 6):
    print(f"  s = {s:.2f}  Theta = {sch.at(s)[0, 0]:+.6f}")
print(f"  Theta_inf = {sch.theta_inf[0, 0]:+.6f}")
