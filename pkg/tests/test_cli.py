import io
import subprocess
import sys

import numpy as np
import pytest

import plmmse.core
from plmmse.cli import build_parser, main
from plmmse.harness import EXPERIMENTS
from plmmse.results import read_csv


def _main(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_no_arguments_prints_usage():
    code, _, err = _main()
    assert code == 1
    assert "usage:" in err


@pytest.mark.parametrize("argv", [
    ("toy", "--bogus", "1"),
    ("toy", "--mc", "zero"),
    ("toy", "--mc", "-3"),
    ("sparse", "--snr-grid", "1:0:3"),
    ("track", "--u-family", "cauchy"),
    ("fig7",),
    ("toy", "--store-runs"),
])
def test_usage_errors_exit_one(argv):
    code, _, err = _main(*argv)
    assert code == 1
    assert err


def test_unreadable_config_exits_two(tmp_path):
    code, _, err = _main("toy", "--config", str(tmp_path / "missing.cfg"))
    assert code == 2
    assert "missing.cfg" in err


def test_unwritable_output_exits_two(tmp_path):
    code, _, err = _main("toy", "--mc", "100", "--out", str(tmp_path / "no" / "t.csv"))
    assert code == 2
    assert "cannot write" in err


def test_toy_writes_csv_where_plmmse_wins(tmp_path):
    out = tmp_path / "toy.csv"
    code, _, _ = _main("toy", "--sigma-u2", "1", "--sigma-v2", "1", "--mc", "100000",
                       "--out", str(out))
    assert code == 0
    t = read_csv(out)
    pl = t.column("is_plmmse") == 1
    assert t.column("mse")[pl][0] < t.column("mse")[~pl].min()
    assert t.metadata["seed"] == "0"


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("# toy run\nmc = 500\nseed = 3\n")
    code, out, _ = _main("toy", "--config", str(cfg), "--seed", "8")
    assert code == 0
    assert "# seed: 8\n" in out
    assert "# mc_count: 500\n" in out


def test_sparse_with_negative_grid_start(tmp_path):
    out = tmp_path / "sparse.csv"
    code, _, err = _main("sparse", "--m", "64", "--p", "0.5", "--snr-grid", "-5:2.5:20",
                         "--mc", "3", "--out", str(out))
    assert code == 0, err
    assert len(read_csv(out)) == 11


@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_help_lists_every_flag_with_units(name, capsys):
    code, _, _ = _main(name, "--help")
    assert code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[name]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
    for key, (_, _, help_text) in EXPERIMENTS[name].items():
        assert "--" + key.replace("_", "-") in text
        assert "(" in help_text, key


def _runs_by_cell(runs):
    cells = {}
    for row, col, _, value in runs.rows:
        cells.setdefault((int(row), int(col)), []).append(value)
    return cells


def test_stored_runs_reproduce_standard_errors(tmp_path):
    out = tmp_path / "s.csv"
    code, _, err = _main("sparse", "--m", "16", "--snr-grid", "0,10", "--mc", "7",
                         "--out", str(out), "--store-runs")
    assert code == 0, err
    table = read_csv(out)
    runs = read_csv(str(out) + ".runs.csv")
    checked = 0
    for (row, col), values in _runs_by_cell(runs).items():
        name = table.columns[col]
        v = np.array(values)
        se = v.std(ddof=1) / np.sqrt(v.size)
        # the main table carries 12 significant digits, so the bound scales above 1
        assert abs(table.rows[row, col] - v.mean()) <= 1e-12 * max(1.0, abs(v.mean()))
        stored = table.rows[row, table.columns.index(name + "_se")]
        assert abs(stored - se) <= 1e-12 * max(1.0, se)
        checked += 1
    assert checked > 0


def test_same_seed_is_byte_identical(tmp_path):
    paths = []
    for i in range(2):
        p = tmp_path / f"r{i}.csv"
        assert _main("toy", "--mc", "5000", "--seed", "11", "--out", str(p))[0] == 0
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]
    other = tmp_path / "other.csv"
    _main("toy", "--mc", "5000", "--seed", "12", "--out", str(other))
    assert other.read_bytes() != paths[0]


def test_selftest_quick_exits_zero():
    code, out, _ = _main("selftest", "--level", "quick")
    assert code == 0
    assert out.count("suite ") == 4


def test_selftest_reports_injected_sign_flip(monkeypatch):
    original = plmmse.core.additive_noise_gain
    monkeypatch.setattr(plmmse.core, "additive_noise_gain",
                        lambda *a, **k: -original(*a, **k))
    code, out, _ = _main("selftest")
    assert code == 2
    assert "suite batch_recursive: FAIL" in out
    assert "failed suites: batch_recursive" in out


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "plmmse", "toy", "--mc", "200"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("# experiment: toy")
