import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plmmse import InvalidInputError, PLMMSEError
from plmmse.harness import (
    ExperimentConfig,
    load_config,
    parse_config_text,
    parse_grid,
    run,
)
from plmmse.results import ResultTable, mean_and_se, read_csv, run_rng, write_csv


def test_csv_round_trip_at_twelve_digits(tmp_path):
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(5, 3)) * 10.0 ** rng.integers(-8, 8, size=(5, 3))
    t = ResultTable(["a", "a_se", "b"], rows, {"experiment": "unit", "seed": 7})
    path = tmp_path / "t.csv"
    write_csv(t, path)
    back = read_csv(path)
    assert back.columns == t.columns
    assert back.metadata == {"experiment": "unit", "seed": "7"}
    expected = np.array([[float(f"{v:.12g}") for v in r] for r in rows])
    assert back.rows.tobytes() == expected.tobytes()


def test_seventeen_digits_round_trip_exactly(tmp_path):
    rows = np.random.default_rng(1).normal(size=(4, 2))
    path = tmp_path / "t.csv"
    write_csv(ResultTable(["x", "y"], rows), path, digits=17)
    assert read_csv(path).rows.tobytes() == rows.tobytes()


def test_empty_table_is_header_and_metadata_only(tmp_path):
    path = tmp_path / "e.csv"
    write_csv(ResultTable(["x", "x_se"], metadata={"seed": 3}), path)
    assert path.read_text(encoding="utf-8") == "# seed: 3\nx,x_se\n"
    assert len(read_csv(path)) == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 6), st.integers(0, 2**32))
def test_fuzzed_tables_are_rectangular(n_cols, n_rows, seed):
    rows = np.random.default_rng(seed).normal(size=(n_rows, n_cols))
    text = ResultTable([f"c{i}" for i in range(n_cols)], rows).to_csv_string()
    lines = text.splitlines()
    assert len(lines) == n_rows + 1
    assert all(len(line.split(",")) == n_cols for line in lines)


def test_table_validation():
    with pytest.raises(InvalidInputError):
        ResultTable(["mse_se"])
    with pytest.raises(InvalidInputError):
        ResultTable(["a", "a"])


def test_write_error_names_the_path(tmp_path):
    bad = tmp_path / "missing" / "t.csv"
    with pytest.raises(PLMMSEError, match="missing"):
        write_csv(ResultTable(["a"]), bad)


def test_run_rng_streams():
    a = run_rng(5, 1, 2).normal(size=4)
    assert np.array_equal(a, run_rng(5, 1, 2).normal(size=4))
    assert not np.array_equal(a, run_rng(5, 2, 1).normal(size=4))
    assert not np.array_equal(a, run_rng(6, 1, 2).normal(size=4))


def test_mean_and_se():
    m, se = mean_and_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert np.isnan(mean_and_se([1.0])[1])


def test_parse_grid():
    assert parse_grid("-5:2.5:20") == [-5.0, -2.5, 0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0, 17.5,
                                        20.0]
    assert parse_grid("1:1:15") == [float(i) for i in range(1, 16)]
    assert parse_grid("3:-1:1") == [3.0, 2.0, 1.0]
    assert parse_grid("0.1:0.1:0.3") == pytest.approx([0.1, 0.2, 0.3])
    assert parse_grid("1, 4,9") == [1.0, 4.0, 9.0]
    for bad in ("1:0:3", "3:1:1", "1:2", "a:1:3", "", "1,x"):
        with pytest.raises(InvalidInputError):
            parse_grid(bad)


def test_config_text_parsing():
    raw = parse_config_text("# header\nexperiment = toy\nsigma-u2 = 2  # trailing\n\nmc=10\n")
    assert raw == {"experiment": "toy", "sigma_u2": "2", "mc": "10"}
    with pytest.raises(InvalidInputError):
        parse_config_text("mc = 1\nmc = 2\n")
    with pytest.raises(InvalidInputError):
        parse_config_text("just words\n")


def test_load_config(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("experiment = toy\nseed = 9\nmc = 100\nsigma_u2 = 3\n")
    cfg = load_config(path, {"mc": "200"})
    assert cfg.experiment == "toy" and cfg.seed == 9
    assert cfg.params["mc"] == 200 and cfg.params["sigma_u2"] == 3.0
    assert cfg.params["n_alphas"] == 41
    with pytest.raises(InvalidInputError, match="not 'sparse'"):
        load_config(path, experiment="sparse")
    path.write_text("experiment = toy\nbogus = 1\n")
    with pytest.raises(InvalidInputError, match="bogus"):
        load_config(path)
    with pytest.raises(PLMMSEError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_config_validation():
    with pytest.raises(InvalidInputError):
        ExperimentConfig.build("fig7")
    with pytest.raises(InvalidInputError):
        ExperimentConfig.build("toy", {"mc": "0"})
    with pytest.raises(InvalidInputError):
        ExperimentConfig.build("toy", seed=-1)
    with pytest.raises(InvalidInputError):
        ExperimentConfig.build("track", {"imm": "maybe"})
    assert ExperimentConfig.build("toy").mc_count == 100_000


def test_toy_run_shape_and_determinism():
    cfg = ExperimentConfig.build("toy", {"mc": "2000"}, seed=4)
    a, b = run(cfg), run(cfg)
    assert len(a) == 42
    assert a.column("is_plmmse").sum() == 1
    assert a.metadata["seed"] == 4
    assert a.to_csv_string() == b.to_csv_string()


def test_track_smoke_is_fast():
    cfg = ExperimentConfig.build("track", {"mc": "2"}, seed=1)
    start = time.perf_counter()
    t = run(cfg)
    assert time.perf_counter() - start < 10
    assert len(t) == 15


def test_module_errors_carry_context():
    cfg = ExperimentConfig.build("sparse", {"m": "12", "mc": "2"})
    with pytest.raises(PLMMSEError, match="^sparse: "):
        run(cfg)
