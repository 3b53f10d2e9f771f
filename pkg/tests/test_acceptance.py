"""Acceptance checks, one test per criterion.

Each test records a single ``[PASS]``/``[FAIL]`` line with the measured
numbers; the lines are printed in the pytest terminal summary and also when
the file is run directly (``python tests/test_acceptance.py``).
Tolerances are fixed here and are not tuned to the outcome.
"""

import csv
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from smpc_lab import (Smpc, SmpcConfig, Rhc, blowup_probe, build_gain_schedule,
                      check_theorem_bound, fit_decay_rate, gronwall_delay_check,
                      integrate_riccati, mean_square_curve, models, op_K,
                      riccati_convergence_report, simulate_ensemble, simulate_fundamental,
                      solve_are, stability_constants, suboptimality_gap_study)
from smpc_lab.core import NonlinearModel
from smpc_lab.riccati import spectral_norm
from smpc_lab.scenario import (CURVE_HEADER, RICCATI_HEADER, apply_overrides, bundled_scenario,
                               load_scenario, run_scenario, synthesize)
from smpc_lab.selftest import (example_2_2_closed_form, open_loop_blowup_time,
                               scalar_riccati_oracle)
from smpc_lab.sde import simulate_path
from smpc_lab.smpc import StaticAre

RESULTS = []


def record(label, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    RESULTS.append(line)
    return ok


def _ex21():
    model, w = models.example_2_1(), models.EXAMPLE_2_1_WEIGHTS
    return model, w, solve_are(model.linearization, w)


def _ex22():
    model, w = models.example_2_2(), models.EXAMPLE_2_2_WEIGHTS
    return model, w, solve_are(model.linearization, w)


def test_c01_are_correctness():
    _, w1, a1 = _ex21()
    m2, w2, a2 = _ex22()
    theta2 = op_K(a2.P_inf, m2.linearization, w2)[0, 0]
    ok = (abs(a1.P_inf[0, 0] - 1) <= 1e-10 and a1.residual <= 1e-10
          and abs(a2.P_inf[0, 0] - 1) <= 1e-10 and a2.residual <= 1e-10
          and abs(theta2 - 3) <= 1e-10)
    assert record("C1 ARE correctness", ok,
                  f"ex2.1 P_inf={a1.P_inf[0, 0]:.12f} res={a1.residual:.1e}; "
                  f"ex2.2 P_inf={a2.P_inf[0, 0]:.12f} Theta_inf={theta2:.12f} res={a2.residual:.1e}")


def test_c02_riccati_fixed_point_and_convergence():
    h = 1e-3
    gaps = []
    for model, w, are in (_ex21(), _ex22()):
        ric = integrate_riccati(model.linearization, w.with_terminal(are.P_inf), 5.0, h)
        gaps.append(max(spectral_norm(S - are.P_inf) for S in ric.sigma))
    model, w, are = _ex21()
    w = w.with_terminal([[2.0]])
    const = stability_constants(are, model.linearization, w)
    ric = integrate_riccati(model.linearization, w, 5.0, h)
    rep = riccati_convergence_report(ric, are, const)
    dev = np.abs(ric.sigma[:, 0, 0] - 1.0)
    # K1 = 1 exactly; the absolute slack covers rounding at t = 0 where gap = bound = 1
    bound = 1.0 * np.exp(-2.75 * ric.times) + 1e-12
    oracle = scalar_riccati_oracle(-1, 1, 0, 1, 2.5, 1, 2.0, ric.times)
    err = float(np.max(np.abs(ric.sigma[:, 0, 0] - oracle)))
    ok = (max(gaps) <= 1e-9 and abs(rep.K1 - 1) <= 1e-12 and bool(np.all(dev <= bound))
          and err <= 1e-8)
    assert record("C2 Riccati fixed point/convergence", ok,
                  f"fixed-point gaps {gaps[0]:.1e}/{gaps[1]:.1e} (tol 1e-9); K1={rep.K1:.6f}; "
                  f"bound violations {int(np.sum(dev > bound))}; oracle err {err:.1e} (tol 1e-8)")


def test_c03_fundamental_solution_decay():
    model, w, are = _ex21()
    const = stability_constants(are, model.linearization, w)
    cfg = SmpcConfig(T=2.0, tau=2.0, h=1e-3, x0=[1.0], t_end=2.0, n_paths=10000, seed=0)
    fe = simulate_fundamental((const.A_inf, const.C_inf), cfg)
    curve = mean_square_curve(fe)
    fit = fit_decay_rate(curve)
    bound = const.K0 * np.exp(-2 * const.lambda_inf * curve.t)
    rep = check_theorem_bound(curve, const, 'T2_1', params={'x0': [1.0]}, bound=bound)
    ok = (abs(fit.rate + 2.75) <= 0.15 and rep.violation_fraction <= 0.01
          and abs(const.K0 - 1) <= 1e-12 and abs(const.lambda_inf - 1.375) <= 1e-12)
    assert record("C3 fundamental solution decay", ok,
                  f"rate {fit.rate:.4f} (target -2.75 +- 0.15); violations "
                  f"{rep.violation_fraction:.2%} (<= 1%); K0={const.K0:.6f} "
                  f"lambda_inf={const.lambda_inf:.6f}")


def test_c04_rhc_bound():
    model, w, are = _ex21()
    plant = model.linearization
    w = w.with_terminal(are.P_inf)
    const = stability_constants(are, plant, w)
    ric = integrate_riccati(plant, w, 1.0, 1e-3)
    sch = build_gain_schedule(ric, 1.0, 0.5, are=are)
    cfg = SmpcConfig(T=1.0, tau=0.5, h=1e-3, x0=[1.0], t_end=2.0, n_paths=10000, seed=0)
    curve = mean_square_curve(simulate_ensemble(plant, Rhc(sch), cfg))
    rep = check_theorem_bound(curve, const, 'T2_1')
    zs = []
    for t in (0.5, 1.0, 2.0):
        i = round(t / cfg.h)
        zs.append(abs(curve.estimate[i] - math.exp(-2.75 * t)) / curve.std_error[i])
    ok = 1 - rep.violation_fraction >= 0.99 and max(zs) <= 3
    assert record("C4 RHC stability bound", ok,
                  f"bound satisfied at {1 - rep.violation_fraction:.2%} of nodes (>= 99%); "
                  f"|est - exp(-2.75t)|/SE at t=0.5,1,2: "
                  + ", ".join(f"{z:.2f}" for z in zs) + " (<= 3)")


def test_c05_example_2_2():
    model, w, are = _ex22()
    cfg = SmpcConfig(T=3.0, tau=3.0, h=1e-4, x0=[1.0], t_end=3.0)
    tr = simulate_path(model, StaticAre(op_K(are.P_inf, model.linearization, w)), cfg)
    err = float(np.max(np.abs(tr.y[:, 0] - example_2_2_closed_form(1.0, tr.t))))
    ric = integrate_riccati(model.linearization, w.with_terminal(are.P_inf), 3.0, 1e-4)
    tr = simulate_path(model, Smpc(build_gain_schedule(ric, 3.0, 3.0, are=are)), cfg)
    above = np.nonzero(np.abs(tr.y[:, 0]) > 1e3)[0]
    t_hit = float(tr.t[above[0]]) if above.size else math.inf
    t_star = open_loop_blowup_time(1.0)
    ok = err <= 1e-3 and t_hit < 3.0 and abs(t_star - 2.75) < 0.01
    assert record("C5 Example 2.2 closed/open loop", ok,
                  f"closed-loop max abs error {err:.2e} (<= 1e-3); open loop |Y|>1e3 at "
                  f"t={t_hit:.4f} (< 3), closed-form blow-up {t_star:.4f}")


def test_c06_suboptimality_gap():
    model, w, are = _ex21()
    plant = model.linearization
    st = suboptimality_gap_study(plant, w, [[2.0]], [0.5, 1.0, 1.5], 0.25, [1.0], are=are)
    anchor = suboptimality_gap_study(plant, w, are.P_inf, [0.5, 1.0, 1.5], 0.25, [1.0], are=are)
    worst = float(np.max(np.abs(anchor.gap_values)))
    ok = st.nonnegative and st.decreasing and st.log_slope <= -2 * 1.375 and worst <= 1e-9
    assert record("C6 suboptimality gap", ok,
                  "gaps " + ", ".join(f"{g:.3e}" for g in st.gap_values)
                  + f"; log slope {st.log_slope:.3f} (<= -2.75); G=P_inf max gap {worst:.1e}")


def test_c07_delayed_gronwall():
    rng = np.random.default_rng(20240601)
    fails, worst = [], 0.0
    for _ in range(20):
        k = rng.uniform(0.5, 5.0)
        tau = rng.uniform(0.05, 2.0)
        r = rng.uniform(0.05, 1.0) * min(1.0 / tau, k / 4.0)
        holds, t, y = gronwall_delay_check(k, r, tau, 1.0, 10.0, 1e-3, slack=1e-6)
        ratio = float(np.max(y / (2.0 * np.exp(-0.5 * k * t))))
        worst = max(worst, ratio)
        if not holds:
            fails.append(f"(k={k:.2f}, r={r:.2f}, tau={tau:.2f})")
    assert record("C7 delayed Gronwall", not fails,
                  f"{20 - len(fails)}/20 triples within 2 y0 exp(-kt/2); worst y/bound "
                  f"{worst:.3f}" + (f"; first violations {', '.join(fails[:3])}" if fails else ""))


def test_c08_nonlinear_local_stability():
    sc = load_scenario(bundled_scenario('polynomial_local'))
    syn = synthesize(sc)
    const = syn.constants

    def run(x):
        cfg = sc.smpc.replace(x0=[x])
        curve = mean_square_curve(simulate_ensemble(sc.model, syn.mode, cfg))
        return check_theorem_bound(curve, const, 'T2_3')

    near = run(0.05)
    lam_star = const.lambda_star
    ok_local = near.fitted_rate <= -lam_star / 4 and near.violation_fraction <= 0.01
    outcomes, crashed = [], False
    for x in (2.0, 6.0):
        try:
            rep = run(x)
            outcomes.append(f"x={x:g}: {rep.verdict}, violations {rep.violation_fraction:.1%}, "
                            f"diverged {rep.diverged_fraction:.1%}")
        except Exception as exc:  # recorded, not hidden
            crashed = True
            outcomes.append(f"x={x:g}: crashed {exc!r}")
    ok = ok_local and not crashed
    assert record("C8 nonlinear local stability", ok,
                  f"x=0.05 rate {near.fitted_rate:.3f} (<= -lambda*/4 = {-lam_star / 4:.3f}), "
                  f"violations {near.violation_fraction:.1%}; " + "; ".join(outcomes))


def test_c09_moment_blowup():
    model, w, are = _ex21()
    plant = model.linearization
    ric = integrate_riccati(plant, w, 1.0, 1e-3)
    sch = build_gain_schedule(ric, 1.0, 0.5, are=are)
    cfg = SmpcConfig(T=1.0, tau=0.5, h=1e-3, x0=[-1.0], t_end=0.5, seed=0)
    sizes = (100, 1000, 10000)
    nl = blowup_probe(model, Smpc(sch), cfg, (1,), sizes)
    # negative control: Example 2.2 plant, no multiplicative noise, so u is deterministic
    m2, w2, a2 = _ex22()
    ric2 = integrate_riccati(m2.linearization, w2.with_terminal(a2.P_inf), 1.0, 1e-3)
    sch2 = build_gain_schedule(ric2, 1.0, 0.5, are=a2)
    lin = blowup_probe(NonlinearModel.from_linear(m2.linearization), Smpc(sch2), cfg, (1,), sizes)
    ok = nl.divergence_flagged and not lin.divergence_flagged
    assert record("C9 moment blow-up probe", ok,
                  "nonlinear E[exp(u)] " + ", ".join(f"{v:.4f}" for v in nl.estimates[0])
                  + f" flagged={nl.divergence_flagged}; linear "
                  + ", ".join(f"{v:.4f}" for v in lin.estimates[0])
                  + f" flagged={lin.divergence_flagged}")


def _csv_ok(path, header):
    with open(path, newline='') as f:
        rows = list(csv.reader(f))
    if tuple(rows[0]) != tuple(header):
        return False
    try:
        for r in rows[1:]:
            if len(r) != len(header):
                return False
            [float(v) for v in r]
    except ValueError:
        return False
    return len(rows) > 1


def test_c10_determinism_and_schema(tmp_path=None):
    import tempfile
    tmp = Path(tmp_path or tempfile.mkdtemp())
    cmd = [sys.executable, '-m', 'smpc_lab.cli', 'selftest', '--seed', '0']
    runs = [subprocess.run(cmd, capture_output=True) for _ in range(2)]
    same = runs[0].stdout == runs[1].stdout and runs[0].returncode == runs[1].returncode == 0
    sc = apply_overrides(load_scenario(bundled_scenario('example_2_1_rhc')), n_paths=500,
                         output_dir=tmp / 'rhc')
    run_scenario(sc)
    r = subprocess.run([sys.executable, '-m', 'smpc_lab.cli', 'reproduce',
                        'example-2-2-closed-loop', '--out', str(tmp / 'cl')], capture_output=True)
    schemas = [_csv_ok(tmp / 'rhc' / 'curve.csv', CURVE_HEADER),
               _csv_ok(tmp / 'rhc' / 'riccati.csv', RICCATI_HEADER),
               r.returncode == 0 and _csv_ok(tmp / 'cl' / 'trajectory.csv',
                                             _header(tmp / 'cl' / 'trajectory.csv'))]
    ok = same and all(schemas)
    assert record("C10 determinism and CSV schema", ok,
                  f"selftest byte-identical={same} ({len(runs[0].stdout)} bytes); "
                  f"schemas curve/riccati/trajectory={schemas}")


def _header(path):
    with open(path, newline='') as f:
        head = next(csv.reader(f))
    return head if head and head[0] == 't' else ('t',)


if __name__ == '__main__':
    for name, fn in sorted(globals().items()):
        if name.startswith('test_c'):
            try:
                fn()
            except AssertionError:
                pass
    print("\n".join(RESULTS))
