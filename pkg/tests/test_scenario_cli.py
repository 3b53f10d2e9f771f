import csv
import json
import subprocess
import sys

import pytest

from smpc_lab.errors import ParseError, UnknownKey, ValidationError
from smpc_lab.scenario import (CURVE_HEADER, RICCATI_HEADER, apply_overrides, bundled_scenario,
                               load_scenario, parse_scenario, run_scenario)

BASE = {
    "name": "small",
    "model": {"builtin": "example_2_1"},
    "smpc": {"T": 1.0, "tau": 0.25, "h": 0.01, "x0": [1.0], "t_end": 1.0,
             "n_paths": 200, "seed": 4},
    "analyses": [{"op": "theorem_bound", "theorem": "T2_1"}],
}


def _text(**changes):
    d = json.loads(json.dumps(BASE))
    for k, v in changes.items():
        d[k] = v
    return json.dumps(d)


def _cli(*args, cwd=None):
    return subprocess.run([sys.executable, '-m', 'smpc_lab.cli', *args], capture_output=True,
                          text=True, cwd=cwd)


def test_parse_valid():
    sc = parse_scenario(_text())
    assert sc.name == 'small' and sc.smpc.n_cycle == 25 and sc.mode == 'smpc'


def test_malformed_json_reports_position():
    with pytest.raises(ParseError) as e:
        parse_scenario('{\n  "name": "x",\n  oops\n}')
    assert e.value.line == 3 and e.value.column == 3


def test_empty_file(tmp_path):
    p = tmp_path / 'empty.json'
    p.write_text('')
    with pytest.raises(ParseError):
        load_scenario(p)


def test_unknown_key():
    with pytest.raises(UnknownKey) as e:
        parse_scenario(_text(colour='red'))
    assert e.value.key == 'colour'
    d = dict(BASE['smpc'], horizon=3)
    with pytest.raises(UnknownKey):
        parse_scenario(_text(smpc=d))


@pytest.mark.parametrize('field,smpc', [
    ('tau', {"tau": 2.0}),
    ('tau', {"tau": 0.255}),
    ('h', {"h": -0.1}),
    ('x0', {"x0": [1.0, 2.0]}),
    ('n_paths', {"n_paths": 2.5}),
])
def test_validation_names_field(field, smpc):
    with pytest.raises(ValidationError) as e:
        parse_scenario(_text(smpc=dict(BASE['smpc'], **smpc)))
    assert e.value.field == field


def test_bad_mode_and_analysis():
    with pytest.raises(ValidationError) as e:
        parse_scenario(_text(mode='mpc'))
    assert e.value.field == 'mode'
    with pytest.raises(ValidationError):
        parse_scenario(_text(analyses=[{"op": "theorem_bound", "theorem": "T7"}]))


def _read(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


def test_run_writes_schema_conformant_files(tmp_path):
    sc = apply_overrides(parse_scenario(_text()), output_dir=tmp_path)
    res = run_scenario(sc)
    assert res.exit_code == 0
    curve = _read(tmp_path / 'curve.csv')
    assert tuple(curve[0]) == CURVE_HEADER and len(curve) == 1 + 101
    ric = _read(tmp_path / 'riccati.csv')
    assert tuple(ric[0]) == RICCATI_HEADER
    assert all(len(r) == len(RICCATI_HEADER) for r in ric)
    summary = json.loads((tmp_path / 'summary.json').read_text())
    assert summary['name'] == 'small'
    assert (tmp_path / 'report.txt').read_text().strip()


def test_reruns_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        run_scenario(apply_overrides(parse_scenario(_text()), output_dir=d))
        outs.append({f: (d / f).read_bytes() for f in ('curve.csv', 'riccati.csv')})
    assert outs[0] == outs[1]


def test_seed_override_changes_curve(tmp_path):
    a = run_scenario(apply_overrides(parse_scenario(_text()), output_dir=tmp_path / 'a'))
    b = run_scenario(apply_overrides(parse_scenario(_text()), seed=99, output_dir=tmp_path / 'b'))
    assert (tmp_path / 'a' / 'curve.csv').read_bytes() != (tmp_path / 'b' / 'curve.csv').read_bytes()
    assert a.exit_code == b.exit_code == 0


def test_failed_requirement_gives_exit_1(tmp_path):
    text = _text(analyses=[{"op": "decay_rate", "expect": -10.0, "tol": 0.1}])
    res = run_scenario(apply_overrides(parse_scenario(text), output_dir=tmp_path))
    assert res.exit_code == 1


@pytest.mark.parametrize('name', ['example_2_1_rhc', 'example_2_2_closed_loop', 'gap_study'])
def test_bundled_scenarios_parse(name):
    assert load_scenario(bundled_scenario(name)).name == name


def test_cli_are():
    r = _cli('are', '--plant', 'example_2_1')
    assert r.returncode == 0
    assert 'P_inf = 1.000000' in r.stdout


def test_cli_stabilizable():
    assert _cli('stabilizable', '--plant', 'example_2_2').returncode == 0


def test_cli_bad_scenario_exit_code(tmp_path):
    p = tmp_path / 'bad.json'
    p.write_text('{"name": ')
    r = _cli('analyze', '--scenario', str(p))
    assert r.returncode == 2 and 'line' in r.stderr


def test_cli_analyze_writes_csv(tmp_path):
    p = tmp_path / 's.json'
    p.write_text(_text())
    r = _cli('analyze', '--scenario', str(p), '--out', str(tmp_path / 'o'))
    assert r.returncode == 0, r.stderr
    assert tuple(_read(tmp_path / 'o' / 'curve.csv')[0]) == CURVE_HEADER


def test_cli_reproduce_closed_loop(tmp_path):
    r = _cli('reproduce', 'example-2-2-closed-loop', '--out', str(tmp_path))
    assert r.returncode == 0, r.stderr
    assert 'max' in r.stdout.lower()
    rows = _read(tmp_path / 'trajectory.csv')
    assert len(rows) == 30002
