"""JSON scenario files: parsing, validation and batch execution.

Schema (unknown keys are rejected at every level)::

    {
      "name": "example_2_1",
      "model": {"builtin": "example_2_1"}
             | {"builtin": "polynomial", "drift_coeffs": [[...]], "diffusion_coeffs": [[...]]}
             | {"linear": {"A": ..., "B": ..., "C": ..., "D": ...}},
      "weights": {"Q": ..., "R": ..., "G": ... | "P_inf"},   # optional for built-ins
      "smpc": {"T": 1.0, "tau": 0.5, "h": 0.001, "x0": [1.0], "t_end": 2.0,
               "n_paths": 10000, "seed": 0},
      "mode": "smpc" | "rhc" | "static_are",
      "exit_radius": null,
      "analyses": [{"op": ...}, ...],
      "output_dir": "out/example_2_1"
    }

Matrices may be given as nested lists or, for 1x1, as plain numbers.
Analysis operations and their keys are listed in `ANALYSIS_KEYS`; an
analysis carrying ``expect``/``require`` keys becomes a pass/fail check.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import models
from .analysis import (BLOWUP_SUSPECTED, RATE_ONLY, STABLE_WITHIN_BOUND, blowup_probe,
                       check_theorem_bound, cost_lyapunov_linear, cost_monte_carlo,
                       fit_decay_rate, mean_square_curve, suboptimality_gap_study,
                       theorem_bound_curve)
from .core import CostWeights, NonlinearModel, SmpcConfig, steps_of
from .errors import GridError, ParseError, UnknownKey, ValidationError
from .riccati import (integrate_riccati, riccati_convergence_report, solve_are,
                      stability_constants)
from .sde import simulate_ensemble
from .smpc import Rhc, Smpc, StaticAre, build_gain_schedule

__all__ = ['Scenario', 'parse_scenario', 'load_scenario', 'apply_overrides',
           'run_scenario', 'RunResult', 'Synthesis', 'synthesize', 'write_csv',
           'CURVE_HEADER', 'RICCATI_HEADER', 'bundled_scenario', 'BUNDLED']

TOP_KEYS = {'name', 'model', 'weights', 'smpc', 'mode', 'exit_radius', 'analyses', 'output_dir'}
REQUIRED_TOP = ('name', 'model', 'smpc')
SMPC_KEYS = {'T', 'tau', 'h', 'x0', 't_end', 'n_paths', 'seed'}
WEIGHT_KEYS = {'Q', 'R', 'G'}
MODES = ('smpc', 'rhc', 'static_are')
ANALYSIS_KEYS = {
    'riccati_convergence': {'require_bound'},
    'theorem_bound': {'theorem', 'window', 'params', 'require'},
    'decay_rate': {'window', 'expect', 'tol'},
    'compare_curve': {'times', 'values', 'n_se'},
    'cost': {'horizon', 'monte_carlo', 'n_se'},
    'gap_study': {'gaps', 'require_decreasing'},
    'blowup_probe': {'orders', 'sizes', 'statistic', 'expect_flag'},
}
VERDICT_ORDER = {STABLE_WITHIN_BOUND: 0, RATE_ONLY: 1, BLOWUP_SUSPECTED: 2}

CURVE_HEADER = ('t', 'ms_estimate', 'ms_stderr', 'bound', 'n_effective')
RICCATI_HEADER = ('t', 'sigma_gap', 'k1_bound')

BUNDLED = Path(__file__).resolve().parent / 'scenarios'


@dataclass(frozen=True)
class Scenario:
    name: str
    model: NonlinearModel
    weights: CostWeights
    smpc: SmpcConfig
    mode: str = 'smpc'
    analyses: tuple = ()
    output_dir: Path = Path('out')
    exit_radius: Optional[float] = None
    G_is_P_inf: bool = False
    source: Optional[Path] = None

    @property
    def plant(self):
        return self.model.linearization


# ---------------------------------------------------------------- parsing

def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValidationError(where, "expected a JSON object")
    for key in obj:
        if key not in allowed:
            raise UnknownKey(key, where)


def _matrix(value, name):
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(name, "expected a number or a nested list of numbers") from None
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValidationError(name, f"expected a matrix, got {a.ndim} dimensions")
    if not np.all(np.isfinite(a)):
        raise ValidationError(name, "entries must be finite")
    return a


def _positive(value, name, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, "expected a number")
    if integer and (not float(value).is_integer()):
        raise ValidationError(name, "expected an integer")
    if not value > 0 and not (integer and value == 0):
        raise ValidationError(name, "must be positive")
    return int(value) if integer else float(value)


def _parse_model(raw):
    if not isinstance(raw, dict):
        raise ValidationError('model', "expected a JSON object")
    if 'linear' in raw:
        _check_keys(raw, {'linear'}, 'model')
        lin = raw['linear']
        _check_keys(lin, {'A', 'B', 'C', 'D'}, 'model.linear')
        try:
            mats = [_matrix(lin[k], f'model.linear.{k}') for k in 'ABCD']
        except KeyError as e:
            raise ValidationError(f'model.linear.{e.args[0]}', "missing") from None
        try:
            return models.linear(*mats), None
        except ValueError as e:
            raise ValidationError('model.linear', str(e)) from None
    if 'builtin' not in raw:
        raise ValidationError('model', "needs 'builtin' or 'linear'")
    name = raw['builtin']
    if name == 'polynomial':
        _check_keys(raw, {'builtin', 'drift_coeffs', 'diffusion_coeffs'}, 'model')
        for key in ('drift_coeffs', 'diffusion_coeffs'):
            v = raw.get(key)
            if not (isinstance(v, list) and v and all(isinstance(r, list) and r for r in v)):
                raise ValidationError(f'model.{key}', "expected a non-empty list of lists")
        try:
            return models.polynomial(raw['drift_coeffs'], raw['diffusion_coeffs']), None
        except (TypeError, ValueError) as e:
            raise ValidationError('model', str(e)) from None
    _check_keys(raw, {'builtin'}, 'model')
    if name not in models.BUILTIN_MODELS:
        raise ValidationError('model.builtin', f"unknown built-in model {name!r}")
    return models.build_model(name), models.DEFAULT_WEIGHTS.get(name)


def _parse_weights(raw, default, n, m):
    if raw is None:
        if default is None:
            raise ValidationError('weights', "required for this model")
        return default, False
    _check_keys(raw, WEIGHT_KEYS, 'weights')
    for key in ('Q', 'R'):
        if key not in raw:
            if default is None:
                raise ValidationError(f'weights.{key}', "missing")
    Q = _matrix(raw['Q'], 'weights.Q') if 'Q' in raw else default.Q
    R = _matrix(raw['R'], 'weights.R') if 'R' in raw else default.R
    G_raw = raw.get('G')
    from_ares = G_raw == 'P_inf'
    if G_raw is None:
        G = default.G if default is not None else np.zeros((n, n))
    elif from_ares:
        G = np.zeros((n, n))
    else:
        G = _matrix(G_raw, 'weights.G')
    for name, M, k in (('Q', Q, n), ('R', R, m), ('G', G, n)):
        if M.shape != (k, k):
            raise ValidationError(f'weights.{name}', f"expected shape ({k}, {k}), got {M.shape}")
    try:
        return CostWeights(Q, R, G), from_ares
    except ValueError as e:
        name = next((k for k in 'QRG' if f'{k} ' in str(e) or str(e).startswith(k)), '')
        raise ValidationError(f'weights.{name}' if name else 'weights', str(e)) from None


def _parse_smpc(raw, n):
    _check_keys(raw, SMPC_KEYS, 'smpc')
    for key in ('T', 'tau', 'h', 'x0', 't_end'):
        if key not in raw:
            raise ValidationError(key, "missing")
    h = _positive(raw['h'], 'h')
    T = _positive(raw['T'], 'T')
    tau = _positive(raw['tau'], 'tau')
    t_end = _positive(raw['t_end'], 't_end')
    for name, value in (('T', T), ('tau', tau), ('t_end', t_end)):
        try:
            steps_of(value, h, name)
        except GridError as e:
            raise ValidationError(name, str(e)) from None
    if tau > T * (1 + 1e-12):
        raise ValidationError('tau', "control horizon tau must not exceed T")
    x0 = raw['x0']
    if isinstance(x0, (int, float)) and not isinstance(x0, bool):
        x0 = [x0]
    try:
        x0 = np.array(x0, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ValidationError('x0', "expected a list of numbers") from None
    if x0.shape != (n,) or not np.all(np.isfinite(x0)):
        raise ValidationError('x0', f"expected {n} finite numbers")
    n_paths = _positive(raw.get('n_paths', 1), 'n_paths', integer=True)
    seed = raw.get('seed', 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ValidationError('seed', "expected an unsigned 64-bit integer")
    return SmpcConfig(T=T, tau=tau, h=h, x0=x0, t_end=t_end, n_paths=n_paths, seed=seed)


def _parse_analyses(raw):
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ValidationError('analyses', "expected a list")
    out = []
    for i, item in enumerate(raw):
        where = f'analyses[{i}]'
        if not isinstance(item, dict) or 'op' not in item:
            raise ValidationError(where, "expected an object with an 'op' key")
        op = item['op']
        if op not in ANALYSIS_KEYS:
            raise ValidationError(f'{where}.op', f"unknown analysis {op!r}")
        _check_keys(item, ANALYSIS_KEYS[op] | {'op'}, where)
        if op == 'theorem_bound' and item.get('theorem', 'T2_1') not in ('T2_1', 'T2_2', 'T2_3'):
            raise ValidationError(f'{where}.theorem', "expected T2_1, T2_2 or T2_3")
        if 'require' in item and item['require'] not in VERDICT_ORDER:
            raise ValidationError(f'{where}.require', f"expected one of {sorted(VERDICT_ORDER)}")
        out.append(dict(item))
    return tuple(out)


def parse_scenario(text, source=None):
    """Parse and validate scenario JSON text.

    Raises
    ------
    ParseError
        Malformed JSON (with line and column).
    UnknownKey
        A key outside the schema.
    ValidationError
        A value violating the schema, named by field.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno) from None
    _check_keys(data, TOP_KEYS, 'scenario')
    for key in REQUIRED_TOP:
        if key not in data:
            raise ValidationError(key, "missing")
    name = data['name']
    if not isinstance(name, str) or not name:
        raise ValidationError('name', "expected a non-empty string")
    model, default_w = _parse_model(data['model'])
    n, m = model.n, model.m
    weights, from_ares = _parse_weights(data.get('weights'), default_w, n, m)
    smpc = _parse_smpc(data['smpc'], n)
    mode = data.get('mode', 'smpc')
    if mode not in MODES:
        raise ValidationError('mode', f"expected one of {MODES}")
    radius = data.get('exit_radius')
    if radius is not None:
        radius = _positive(radius, 'exit_radius')
    analyses = _parse_analyses(data.get('analyses'))
    out = data.get('output_dir', f'out/{name}')
    if not isinstance(out, str):
        raise ValidationError('output_dir', "expected a path string")
    out = Path(out)
    if source is not None and not out.is_absolute():
        out = Path.cwd() / out
    return Scenario(name, model, weights, smpc, mode, analyses, out, radius,
                    from_ares, Path(source) if source else None)


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8: {e.reason}", 1, 1) from None
    return parse_scenario(text, source=path)


def bundled_scenario(name):
    """Path of a scenario file shipped with the package."""
    path = BUNDLED / f'{name}.json'
    if not path.exists():
        raise FileNotFoundError(f"no bundled scenario {name!r}")
    return path


def apply_overrides(scenario, seed=None, n_paths=None, h=None, output_dir=None):
    """Scenario with CLI flag overrides applied and re-validated."""
    changes = {}
    if seed is not None:
        if not 0 <= int(seed) < 2 ** 64:
            raise ValidationError('seed', "expected an unsigned 64-bit integer")
        changes['seed'] = int(seed)
    if n_paths is not None:
        if int(n_paths) < 0:
            raise ValidationError('n_paths', "must be nonnegative")
        changes['n_paths'] = int(n_paths)
    if h is not None:
        cfg = scenario.smpc
        for name, value in (('T', cfg.T), ('tau', cfg.tau), ('t_end', cfg.t_end)):
            try:
                steps_of(value, h, name)
            except GridError as e:
                raise ValidationError(name, str(e)) from None
        changes['h'] = float(h)
    out = scenario
    if changes:
        out = replace(out, smpc=scenario.smpc.replace(**changes))
    if output_dir is not None:
        out = replace(out, output_dir=Path(output_dir))
    return out


# ---------------------------------------------------------------- execution

@dataclass(frozen=True)
class Synthesis:
    are: object
    weights: CostWeights
    constants: object
    riccati: object
    schedule: object
    mode: object


def synthesize(scenario):
    """ARE, Riccati flow over [0, T], gain schedule and controller mode."""
    plant, cfg = scenario.plant, scenario.smpc
    are = solve_are(plant, scenario.weights)
    w = scenario.weights.with_terminal(are.P_inf) if scenario.G_is_P_inf else scenario.weights
    const = stability_constants(are, plant, w)
    ric = integrate_riccati(plant, w, cfg.T, cfg.h)
    sch = build_gain_schedule(ric, cfg.T, cfg.tau, are=are)
    mode = {'smpc': Smpc(sch), 'rhc': Rhc(sch), 'static_are': StaticAre(const.Theta_inf)}[scenario.mode]
    return Synthesis(are, w, const, ric, sch, mode)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return '%.17g' % float(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, Path):
        return str(v)
    return v


@dataclass
class RunResult:
    exit_code: int
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    report: str = ''


def _check(checks, name, passed, detail):
    checks.append({'check': name, 'passed': bool(passed), 'detail': detail})


def _default_theorem(scenario):
    return 'T2_3' if scenario.mode == 'smpc' and not scenario.model.is_linear else 'T2_1'


def run_scenario(scenario, write=True):
    """Synthesize, simulate and analyse one scenario.

    Writes ``curve.csv`` (when paths are simulated), ``riccati.csv``,
    ``report.txt`` and ``summary.json`` into the output directory.  The exit
    code is 0 when every requested check passes and 1 otherwise; numerical
    failures propagate as `SmpcError`.
    """
    cfg = scenario.smpc
    syn = synthesize(scenario)
    const = syn.constants
    checks, lines, summary = [], [], {}
    lines.append(f"scenario: {scenario.name}")
    lines.append(f"model: {scenario.model.name}  mode: {scenario.mode}")
    lines.append(f"T={cfg.T:g} tau={cfg.tau:g} h={cfg.h:g} t_end={cfg.t_end:g} "
                 f"paths={cfg.n_paths} seed={cfg.seed}")
    lines.append(f"P_inf = {np.array2string(syn.are.P_inf, precision=10)}  "
                 f"residual = {syn.are.residual:.3e}")
    lines.append(f"K0 = {const.K0:.6g}  lambda_inf = {const.lambda_inf:.6g}  "
                 f"lambda_star = {const.lambda_star:.6g}  K1 = {const.K1}")
    summary.update(name=scenario.name, mode=scenario.mode, model=scenario.model.name,
                   P_inf=syn.are.P_inf, are_residual=syn.are.residual,
                   constants=dict(K0=const.K0, lambda_inf=const.lambda_inf,
                                  lambda_star=const.lambda_star, K1=const.K1,
                                  Theta_inf=const.Theta_inf))
    artifacts = {}
    out = Path(scenario.output_dir)

    conv = riccati_convergence_report(syn.riccati, syn.are, const)
    if write:
        artifacts['riccati'] = write_csv(out / 'riccati.csv', RICCATI_HEADER, conv.rows())
    summary['riccati'] = dict(max_gap=float(conv.gap.max()), bound_holds=conv.bound_holds,
                              t0=conv.t0, ball_radius=conv.ball_radius)

    theorem_items = [a for a in scenario.analyses if a['op'] == 'theorem_bound']
    theorem = theorem_items[0].get('theorem', 'T2_1') if theorem_items else _default_theorem(scenario)
    tparams = dict(theorem_items[0].get('params', {})) if theorem_items else {}
    if theorem == 'T2_2' and 'mu' not in tparams and 'K' not in tparams:
        theorem = 'T2_1'

    curve = ens = None
    if cfg.n_paths >= 1:
        ens = simulate_ensemble(scenario.model, syn.mode, cfg, exit_radius=scenario.exit_radius,
                                weights=syn.weights)
        summary['diverged_paths'] = ens.n_diverged
        lines.append(f"diverged paths: {ens.n_diverged} of {ens.n_paths}")
    if ens is not None:
        if ens.n_paths >= 2:
            curve = mean_square_curve(ens)
            est, se, neff = curve.estimate, curve.std_error, curve.n_effective
        else:
            acc = ens.ms
            est, se, neff = acc.mean, np.zeros_like(acc.mean), acc.count
        bound, _ = theorem_bound_curve(cfg.grid.times, const, theorem, cfg.x0, tparams)
        if write:
            artifacts['curve'] = write_csv(out / 'curve.csv', CURVE_HEADER,
                                           zip(cfg.grid.times, est, se, bound, neff))

    for item in scenario.analyses:
        op = item['op']
        if op == 'riccati_convergence':
            lines.append(f"riccati: max |Sigma - P_inf| = {conv.gap.max():.3e}, "
                         f"bound holds = {conv.bound_holds}, t0 = {conv.t0}")
            if item.get('require_bound'):
                _check(checks, 'riccati_bound', conv.bound_holds is True,
                       f"K1={conv.K1} bound_holds={conv.bound_holds}")
        elif op in ('theorem_bound', 'decay_rate', 'compare_curve'):
            if curve is None:
                _check(checks, op, False, "needs at least 2 simulated paths")
                continue
            if op == 'theorem_bound':
                p = dict(item.get('params', {}))
                if 'window' in item:
                    p['window'] = item['window']
                rep = check_theorem_bound(curve, const, item.get('theorem', 'T2_1'), p)
                lines.append(f"{rep.theorem}: verdict {rep.verdict}, violations "
                             f"{rep.violation_fraction:.4f}, fitted rate {rep.fitted_rate:.4f}")
                summary.setdefault('theorem_bounds', []).append(dict(
                    theorem=rep.theorem, verdict=rep.verdict, fitted_rate=rep.fitted_rate,
                    violation_fraction=rep.violation_fraction))
                if 'require' in item:
                    ok = VERDICT_ORDER[rep.verdict] <= VERDICT_ORDER[item['require']]
                    _check(checks, f"theorem_bound[{rep.theorem}]", ok,
                           f"verdict {rep.verdict}, required {item['require']}")
            elif op == 'decay_rate':
                fit = fit_decay_rate(curve, item.get('window'))
                lines.append(f"decay rate: {fit.rate:.4f} (CI {fit.ci[0]:.4f}, {fit.ci[1]:.4f}) "
                             f"on [{fit.window[0]:g}, {fit.window[1]:g}]")
                summary['decay_rate'] = dict(rate=fit.rate, std_error=fit.std_error, window=fit.window)
                if 'expect' in item:
                    tol = float(item.get('tol', 0.2))
                    _check(checks, 'decay_rate', abs(fit.rate - item['expect']) <= tol,
                           f"rate {fit.rate:.4f}, expected {item['expect']} +- {tol}")
            else:
                n_se = float(item.get('n_se', 3.0))
                for t, v in zip(item['times'], item['values']):
                    i = steps_of(t, cfg.h, 'time')
                    err = abs(curve.estimate[i] - v)
                    _check(checks, f"curve(t={t:g})", err <= n_se * curve.std_error[i],
                           f"estimate {curve.estimate[i]:.6g} vs {v:.6g}, SE {curve.std_error[i]:.3g}")
        elif op == 'cost':
            if not scenario.model.is_linear:
                _check(checks, 'cost', False, "deterministic cost needs a linear model")
                continue
            gains = syn.mode.theta_inf if scenario.mode == 'static_are' else syn.schedule
            horizon = item.get('horizon', cfg.t_end)
            period = cfg.tau
            ly = cost_lyapunov_linear(scenario.plant, syn.weights, gains, cfg.x0,
                                      horizon=horizon, period=period)
            lines.append(f"cost (Lyapunov, horizon {ly.truncation_horizon:g}): {ly.value:.10g}; "
                         f"infinite horizon {ly.infinite_horizon:.10g}")
            summary['cost'] = dict(lyapunov=ly.value, infinite_horizon=ly.infinite_horizon)
            if item.get('monte_carlo') and ens is not None and ens.n_paths >= 2:
                mc = cost_monte_carlo(ens)
                n_se = float(item.get('n_se', 3.0))
                lines.append(f"cost (Monte Carlo, horizon {mc.truncation_horizon:g}): "
                             f"{mc.value:.6g} +- {mc.std_error:.3g}")
                summary['cost'].update(monte_carlo=mc.value, monte_carlo_se=mc.std_error)
                if abs(horizon - cfg.t_end) < 1e-12:
                    _check(checks, 'cost_agreement', abs(mc.value - ly.value) <= n_se * mc.std_error,
                           f"MC {mc.value:.6g} vs Lyapunov {ly.value:.6g}")
        elif op == 'gap_study':
            study = suboptimality_gap_study(scenario.plant, scenario.weights, syn.weights.G,
                                            item['gaps'], cfg.tau, cfg.x0, h=cfg.h, are=syn.are)
            for g, v in zip(study.gaps, study.gap_values):
                lines.append(f"gap(T - tau = {g:g}) = {v:.6e}")
            lines.append(f"log-gap slope (two largest gaps): {study.log_slope:.4f}")
            summary['gap_study'] = dict(gaps=study.gaps, values=study.gap_values,
                                        log_slope=study.log_slope)
            if item.get('require_decreasing'):
                _check(checks, 'gap_decreasing', study.decreasing and study.nonnegative,
                       f"values {study.gap_values}")
        elif op == 'blowup_probe':
            rep = blowup_probe(scenario.model, syn.mode, cfg, item.get('orders', [1]),
                               item.get('sizes', [100, 1000, 10000]),
                               item.get('statistic', 'exp_u'))
            lines.append(f"blow-up probe ({rep.statistic}, node {rep.node}): estimates "
                         f"{np.array2string(rep.estimates, precision=6)}, flagged {rep.flagged.tolist()}")
            summary['blowup_probe'] = dict(sizes=rep.sizes, estimates=rep.estimates,
                                           flagged=rep.flagged)
            if 'expect_flag' in item:
                _check(checks, 'blowup_probe', rep.divergence_flagged == bool(item['expect_flag']),
                       f"flagged {rep.divergence_flagged}, expected {item['expect_flag']}")

    for c in checks:
        lines.append(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['check']}: {c['detail']}")
    code = 0 if all(c['passed'] for c in checks) else 1
    summary['checks'] = checks
    summary['exit_code'] = code
    report = '\n'.join(lines) + '\n'
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / 'report.txt').write_text(report, encoding='utf-8')
        (out / 'summary.json').write_text(
            json.dumps(_jsonable(summary), indent=2, sort_keys=True) + '\n', encoding='utf-8')
        artifacts['report'] = out / 'report.txt'
        artifacts['summary'] = out / 'summary.json'
    return RunResult(code, checks, summary, artifacts, report)
