"""Cost of the receding-horizon loop above the optimal value 0.5 <P_inf x, x>.

Deterministic costs from the second-moment (Lyapunov) equation, for growing
prediction slack T - tau.
"""

from smpc_lab import models, solve_are, suboptimality_gap_study

plant = models.example_2_1().linearization
w = models.EXAMPLE_2_1_WEIGHTS
are = solve_are(plant, w)

for G in ([[2.0]], are.P_inf):
    st = suboptimality_gap_study(plant, w, G, [0.5, 1.0, 1.5], 0.25, [1.0], are=are)
    print(f"G = {float(G[0][0]):g}")
    for g, c, v in zip(st.gaps, st.costs, st.gap_values):
        print(f"  T - tau = {g:.1f}: cost {c:.10f}  gap {v:.3e}")
    print(f"  log slope {st.log_slope:.3f}, decreasing {st.decreasing}")
