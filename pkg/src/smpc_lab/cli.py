"""Command-line front end: ``smpc-lab <command> [options]``.

Exit codes: 0 success, 1 failed check, 2 usage or scenario error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import models
from .analysis import blowup_probe, suboptimality_gap_study, truncated_exp_moment
from .core import SmpcConfig
from .errors import ScenarioError, SmpcError
from .noise import brownian_increments
from .riccati import (check_l2_stabilizable, integrate_riccati, riccati_convergence_report,
                      solve_are, stability_constants)
from .scenario import (RICCATI_HEADER, apply_overrides, bundled_scenario,
                       load_scenario, run_scenario, synthesize, write_csv)
from .selftest import (example_2_2_closed_form, open_loop_blowup_time, run_selftest)
from .sde import simulate_path
from .smpc import Smpc, StaticAre, build_gain_schedule, theta_deviation_bound

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

EXAMPLES = ('example-2-1', 'example-2-2-closed-loop', 'example-2-2-open-loop')


def _fmt_matrix(M, prec=6):
    M = np.atleast_2d(M)
    if M.size == 1:
        return f"{M[0, 0]:.{prec}f}"
    rows = ['  [' + ', '.join(f"{v:.{prec}f}" for v in row) + ']' for row in M]
    return '\n' + '\n'.join(rows)


def _plant_and_weights(args):
    """Linear plant and weights from --scenario or --plant (built-in name)."""
    if getattr(args, 'scenario', None):
        sc = _scenario(args)
        return sc.plant, sc.weights, sc
    name = args.plant or 'example_2_1'
    if name not in models.BUILTIN_MODELS:
        raise ScenarioError(f"unknown plant {name!r}; choose from {sorted(models.BUILTIN_MODELS)}")
    return models.build_model(name).linearization, models.DEFAULT_WEIGHTS[name], None


def _scenario(args):
    path = Path(args.scenario)
    if not path.exists():
        try:
            path = bundled_scenario(args.scenario)
        except FileNotFoundError:
            raise ScenarioError(f"scenario file not found: {args.scenario}") from None
    sc = load_scenario(path)
    return apply_overrides(sc, seed=getattr(args, 'seed', None), n_paths=getattr(args, 'paths', None),
                           h=getattr(args, 'h', None), output_dir=getattr(args, 'out', None))


def cmd_are(args):
    plant, weights, _ = _plant_and_weights(args)
    are = solve_are(plant, weights, tol=args.tol)
    print(f"P_inf = {_fmt_matrix(are.P_inf)}")
    print(f"residual = {are.residual:.3e}")
    const = stability_constants(are, plant, weights)
    print(f"Theta_inf = {_fmt_matrix(const.Theta_inf)}")
    print(f"K0 = {const.K0:.6f}  lambda_inf = {const.lambda_inf:.6f}  lambda_star = {const.lambda_star:.6f}")
    return EXIT_OK


def cmd_stabilizable(args):
    plant, _, _ = _plant_and_weights(args)
    ok, cert = check_l2_stabilizable(plant)
    print(f"L2-stabilizable: {'yes' if ok else 'no'}")
    if ok:
        print(f"certificate P = {_fmt_matrix(cert['P'])}")
    else:
        print(f"reason: {cert.get('message', '')}")
    return EXIT_OK if ok else EXIT_CHECK


def _weights_with_G(weights, G, are):
    if G is None:
        return weights
    if G == 'P_inf':
        return weights.with_terminal(are.P_inf)
    return weights.with_terminal(np.atleast_2d(np.array(json.loads(G), dtype=float)))


def cmd_riccati(args):
    plant, weights, sc = _plant_and_weights(args)
    are = solve_are(plant, weights)
    w = _weights_with_G(weights, args.G, are)
    if sc is not None and sc.G_is_P_inf and args.G is None:
        w = weights.with_terminal(are.P_inf)
    horizon = args.horizon if args.horizon is not None else (sc.smpc.T if sc else 5.0)
    h = args.h or (sc.smpc.h if sc else 1e-3)
    ric = integrate_riccati(plant, w, horizon, h)
    const = stability_constants(are, plant, w)
    rep = riccati_convergence_report(ric, are, const)
    print(f"max |Sigma(t) - P_inf| = {rep.gap.max():.6e}")
    print(f"K1 = {rep.K1}  bound holds = {rep.bound_holds}  t0 = {rep.t0}")
    if args.out:
        path = write_csv(Path(args.out) / 'riccati.csv', RICCATI_HEADER, rep.rows())
        print(f"wrote {path}")
    return EXIT_OK if rep.bound_holds in (True, None) else EXIT_CHECK


def cmd_gains(args):
    sc = _scenario(args)
    syn = synthesize(sc)
    dev = theta_deviation_bound(syn.schedule, syn.constants)
    sch = syn.schedule
    print(f"Theta_inf = {_fmt_matrix(sch.theta_inf)}")
    print(f"max_s |Theta(s) - Theta_inf| = {dev.deviation.max():.6e}  "
          f"reference decay exp(-2 lambda_inf (T - tau)) = {dev.reference_decay:.6e}")
    if args.out:
        m, n = sch.theta.shape[1:]
        header = ['s'] + [f'theta_{i}_{j}' for i in range(m) for j in range(n)] + ['deviation']
        rows = ([s, *th.reshape(-1), d] for s, th, d in zip(sch.s, sch.theta, dev.deviation))
        path = write_csv(Path(args.out) / 'gains.csv', header, rows)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args):
    sc = _scenario(args)
    sc = replace(sc, analyses=())
    res = run_scenario(sc)
    print(res.report, end='')
    for name, path in sorted(res.artifacts.items()):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_analyze(args):
    sc = _scenario(args)
    res = run_scenario(sc)
    print(res.report, end='')
    for name, path in sorted(res.artifacts.items()):
        print(f"wrote {path}")
    return res.exit_code


def cmd_gap_study(args):
    plant, weights, sc = _plant_and_weights(args)
    are = solve_are(plant, weights)
    G = _weights_with_G(weights, args.G or '2', are).G
    gaps = [float(g) for g in args.gaps.split(',')]
    x0 = [float(v) for v in args.x0.split(',')]
    study = suboptimality_gap_study(plant, weights, G, gaps, args.tau, x0, h=args.h or 1e-3, are=are)
    for g, c, v in zip(study.gaps, study.costs, study.gap_values):
        print(f"T - tau = {g:g}: J = {c:.12f}  gap = {v:.6e}")
    print(f"log-gap slope (two largest gaps) = {study.log_slope:.4f}  "
          f"(-2 lambda_inf = {-2 * stability_constants(are, plant, weights).lambda_inf:.4f})")
    print(f"nonnegative = {study.nonnegative}  strictly decreasing = {study.decreasing}")
    if args.out:
        path = write_csv(Path(args.out) / 'gap_study.csv', ('gap', 'cost', 'suboptimality'),
                         zip(study.gaps, study.costs, study.gap_values))
        print(f"wrote {path}")
    return EXIT_OK if study.decreasing and study.nonnegative else EXIT_CHECK


def _reproduce_2_2_closed(out, h):
    model, w = models.example_2_2(), models.EXAMPLE_2_2_WEIGHTS
    are = solve_are(model.linearization, w)
    theta = stability_constants(are, model.linearization, w).Theta_inf
    cfg = SmpcConfig(T=3.0, tau=3.0, h=h, x0=[1.0], t_end=3.0)
    tr = simulate_path(model, StaticAre(theta), cfg)
    exact = example_2_2_closed_form(1.0, tr.t)
    err = np.abs(tr.y[:, 0] - exact)
    print(f"Theta_inf = {theta[0, 0]:.6f}")
    print(f"max abs error vs 4x/(x-(x-4)e^(2t)) on [0, 3]: {err.max():.6e}")
    path = write_csv(out / 'trajectory.csv', ('t', 'y', 'exact', 'abs_error'),
                     zip(tr.t, tr.y[:, 0], exact, err))
    print(f"wrote {path}")
    return EXIT_OK if err.max() <= 1e-3 else EXIT_CHECK


def _reproduce_2_2_open(out, h):
    model, w = models.example_2_2(), models.EXAMPLE_2_2_WEIGHTS
    are = solve_are(model.linearization, w)
    wP = w.with_terminal(are.P_inf)
    # a single control cycle covering the whole run: the first segment of the
    # linearized optimal control is applied open loop, never resampled
    ric = integrate_riccati(model.linearization, wP, 3.0, h)
    sch = build_gain_schedule(ric, 3.0, 3.0, are=are)
    cfg = SmpcConfig(T=3.0, tau=3.0, h=h, x0=[1.0], t_end=3.0)
    tr = simulate_path(model, Smpc(sch), cfg)
    above = np.nonzero(np.abs(tr.y[:, 0]) > 1e3)[0]
    t_hit = float(tr.t[above[0]]) if above.size else None
    print(f"analytic blow-up time (x=1): {open_loop_blowup_time(1.0):.6f}")
    print(f"first time |Y| > 1e3: {t_hit if t_hit is None else f'{t_hit:.6f}'}")
    print(f"non-finite state from t = {tr.divergence_time}")
    path = write_csv(out / 'trajectory.csv', ('t', 'y', 'u'), zip(tr.t, tr.y[:, 0], tr.u[:, 0]))
    print(f"wrote {path}")
    return EXIT_OK if t_hit is not None and t_hit < 3.0 else EXIT_CHECK


def _reproduce_2_1(out, seed, paths):
    model, w = models.example_2_1(), models.EXAMPLE_2_1_WEIGHTS
    plant = model.linearization
    are = solve_are(plant, w)
    const = stability_constants(are, plant, w)
    print(f"P_inf = {are.P_inf[0, 0]:.6f}  residual = {are.residual:.3e}  "
          f"Theta = {const.Theta_inf[0, 0]:.6f}")
    h, tau = 1e-4, 0.5
    ric = integrate_riccati(plant, w, 1.0, h)
    sch = build_gain_schedule(ric, 1.0, tau, are=are)
    cfg = SmpcConfig(T=1.0, tau=tau, h=h, x0=[-1.0], t_end=tau, seed=seed)
    tr = simulate_path(model, Smpc(sch), cfg)
    W = np.concatenate([[0.0], np.cumsum(brownian_increments(seed, [0], len(tr.t) - 1, h)[0])])
    pred = -1.0 * np.exp(-13.0 / 8.0 * tr.t - 0.5 * W)
    err = float(np.max(np.abs(tr.x_pred[:-1, 0] - pred[:-1])))
    print(f"prediction vs x exp(-13t/8 - W/2) on [0, tau): max abs error {err:.3e}")
    probe_cfg = SmpcConfig(T=1.0, tau=tau, h=1e-3, x0=[-1.0], t_end=tau, seed=seed)
    ric3 = integrate_riccati(plant, w, 1.0, 1e-3)
    sch3 = build_gain_schedule(ric3, 1.0, tau, are=are)
    rep = blowup_probe(model, Smpc(sch3), probe_cfg, (1,), (100, 1000, paths))
    print(f"Monte Carlo E[exp(u)] at t={(rep.node) * 1e-3:g}: sizes {rep.sizes.tolist()} "
          f"estimates {np.array2string(rep.estimates[0], precision=6)} flagged {rep.divergence_flagged}")
    rows = []
    for c in (2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 25, 30):
        v = truncated_exp_moment(-1.0, tau, c)
        rows.append((c, v))
        print(f"quadrature log E[exp(u) 1{{|W|<={c}}}] = {v:.6f}")
    grows = all(b[1] >= a[1] - 1e-9 for a, b in zip(rows, rows[1:])) and rows[-1][1] > 1e4
    write_csv(out / 'truncated_moment.csv', ('c', 'log_moment'), rows)
    write_csv(out / 'prediction.csv', ('t', 'x_pred', 'closed_form'), zip(tr.t, tr.x_pred[:, 0], pred))
    print(f"wrote {out / 'prediction.csv'} and {out / 'truncated_moment.csv'}")
    ok = abs(are.P_inf[0, 0] - 1) < 1e-10 and err <= 1e-3 and grows
    return EXIT_OK if ok else EXIT_CHECK


def cmd_reproduce(args):
    out = Path(args.out or f"out/{args.example}")
    out.mkdir(parents=True, exist_ok=True)
    if args.example == 'example-2-2-closed-loop':
        return _reproduce_2_2_closed(out, args.h or 1e-4)
    if args.example == 'example-2-2-open-loop':
        return _reproduce_2_2_open(out, args.h or 1e-4)
    return _reproduce_2_1(out, args.seed or 0, args.paths or 10000)


def cmd_selftest(args):
    results = run_selftest(seed=args.seed or 0)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"selftest: {sum(r.passed for r in results)}/{len(results)} passed")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser():
    p = argparse.ArgumentParser(prog='smpc-lab', description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest='command', required=True)

    def common(sp, plant=False, sim=False):
        sp.add_argument('--scenario', help="scenario JSON file (or bundled scenario name)")
        if plant:
            sp.add_argument('--plant', help="built-in plant name, e.g. example_2_1")
        sp.add_argument('--out', help="output directory")
        sp.add_argument('--h', type=float, help="integration step")
        if sim:
            sp.add_argument('--seed', type=int, help="64-bit unsigned seed")
            sp.add_argument('--paths', type=int, help="number of Monte Carlo paths")
        return sp

    sp = common(sub.add_parser('are', help="solve the algebraic Riccati equation"), plant=True)
    sp.add_argument('--tol', type=float, default=1e-10)
    sp.set_defaults(func=cmd_are)
    common(sub.add_parser('stabilizable', help="test L2-stabilizability"), plant=True).set_defaults(
        func=cmd_stabilizable)
    sp = common(sub.add_parser('riccati', help="integrate the Riccati flow and tabulate convergence"),
                plant=True)
    sp.add_argument('--G', help="terminal weight as JSON matrix/number, or P_inf")
    sp.add_argument('--horizon', type=float)
    sp.set_defaults(func=cmd_riccati)
    common(sub.add_parser('gains', help="build the gain schedule of a scenario"), sim=True).set_defaults(
        func=cmd_gains)
    common(sub.add_parser('simulate', help="simulate a scenario ensemble"), sim=True).set_defaults(
        func=cmd_simulate)
    common(sub.add_parser('analyze', help="run a scenario with its analyses and checks"),
           sim=True).set_defaults(func=cmd_analyze)
    sp = common(sub.add_parser('gap-study', help="suboptimality gap versus T - tau"), plant=True)
    sp.add_argument('--G', help="terminal weight as JSON matrix/number, or P_inf (default 2)")
    sp.add_argument('--tau', type=float, default=0.25)
    sp.add_argument('--gaps', default='0.5,1,1.5')
    sp.add_argument('--x0', default='1')
    sp.set_defaults(func=cmd_gap_study)
    sp = common(sub.add_parser('reproduce', help="reproduce a worked example"), sim=True)
    sp.add_argument('example', choices=EXAMPLES)
    sp.set_defaults(func=cmd_reproduce)
    sp = sub.add_parser('selftest', help="deterministic self-checks")
    sp.add_argument('--seed', type=int, default=0)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SmpcError, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
