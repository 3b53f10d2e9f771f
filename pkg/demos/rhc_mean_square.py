"""Mean-square decay of receding horizon control on the Example 2.1 plant.

With G = P_inf the loop is the static gain -1/2, so E Y(t)^2 = x^2 e^{-2.75 t}.
"""

import math

from smpc_lab import (Rhc, SmpcConfig, build_gain_schedule, check_theorem_bound, fit_decay_rate,
                      integrate_riccati, mean_square_curve, models, simulate_ensemble,
                      solve_are, stability_constants)

model = models.example_2_1()
plant = model.linearization
are = solve_are(plant, models.EXAMPLE_2_1_WEIGHTS)
w = models.EXAMPLE_2_1_WEIGHTS.with_terminal(are.P_inf)
const = stability_constants(are, plant, w)

sch = build_gain_schedule(integrate_riccati(plant, w, 1.0, 1e-3), 1.0, 0.5, are=are)
cfg = SmpcConfig(T=1.0, tau=0.5, h=1e-3, x0=[1.0], t_end=2.0, n_paths=10000, seed=0)
curve = mean_square_curve(simulate_ensemble(plant, Rhc(sch), cfg))

for t in (0.5, 1.0, 2.0):
    i = round(t / cfg.h)
    print(f"t = {t}: E|Y|^2 = {curve.estimate[i]:.5f} +- {curve.std_error[i]:.5f}, "
          f"exact {math.exp(-2.75 * t):.5f}")
fit = fit_decay_rate(curve)
print(f"fitted rate {fit.rate:.4f}, 95% CI ({fit.ci[0]:.4f}, {fit.ci[1]:.4f})")
rep = check_theorem_bound(curve, const, 'T2_1')
print(f"T2_1 bound violated at {rep.violation_fraction:.2%} of nodes -> {rep.verdict}")
