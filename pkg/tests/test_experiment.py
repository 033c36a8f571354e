from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermbath.cli import main
from thermbath.experiment import (PRESETS, ConfigError, ExperimentConfig, curves_csv, emit_outputs, fit_slope,
                                  prepare_output_dir, run_ensemble, slopes_csv, transition_estimate,
                                  with_overrides)
from thermbath.rng import SplitMix64

DATA = Path(__file__).parent / "data"
GOLDEN = ExperimentConfig(L=6, deltas=(1.0, 4.0), realizations=3, region_sizes=(1, 2, 3), seed=2024)


# ---------------------------------------------------------------- fits


def test_fit_exact_line():
    s, se, ic = fit_slope([1, 2, 3, 4, 5], [0.7 * x + 0.2 for x in range(1, 6)])
    assert s == pytest.approx(0.7, abs=1e-12) and ic == pytest.approx(0.2, abs=1e-12)
    assert se < 1e-12


def test_fit_constant():
    s, se, _ = fit_slope([1, 2, 3], [1.0, 1.0, 1.0])
    assert abs(s) < 1e-14 and se < 1e-14


def test_fit_noisy_line():
    g = SplitMix64(21)
    x = np.arange(1, 9, dtype=float)
    y = 0.7 * x + 0.1 + np.array([0.05 * g.normal() for _ in x])
    s, se, _ = fit_slope(x, y)
    assert abs(s - 0.7) < 3 * se


def test_fit_two_points_has_no_stderr():
    s, se, _ = fit_slope([1, 2], [0.0, 1.0])
    assert s == pytest.approx(1.0) and math.isnan(se)


@pytest.mark.parametrize("x,y", [([1], [1.0]), ([2, 2, 2], [1.0, 2.0, 3.0]), ([1, 2], [1.0])])
def test_fit_rejects_degenerate(x, y):
    with pytest.raises(ValueError):
        fit_slope(x, y)


def test_fit_against_closed_form():
    g = SplitMix64(5)
    x = np.arange(6, dtype=float)
    y = np.array([g.normal() for _ in x])
    xm, ym = x.mean(), y.mean()
    expected = np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2)
    assert fit_slope(x, y)[0] == pytest.approx(expected, abs=1e-12)


def test_transition_logistic():
    d = np.linspace(0.5, 8.5, 17)
    s = 0.3 + 0.4 / (1 + np.exp(-(d - 4.5) / 0.5))
    star, (lo, hi), _ = transition_estimate(d, s)
    assert star == pytest.approx(4.5)
    assert lo <= 4.5 <= hi


def test_transition_flat_selects_whole_grid():
    d = [1.0, 2.0, 3.0, 4.0, 5.0]
    star, (lo, hi), _ = transition_estimate(d, [0.5] * 5)
    assert (lo, hi) == (1.0, 5.0)


def test_transition_needs_four_points():
    with pytest.raises(ValueError):
        transition_estimate([1, 2, 3], [0.1, 0.2, 0.3])


# ---------------------------------------------------------------- config


@pytest.mark.parametrize("kw", [dict(L=2), dict(L=15), dict(deltas=()), dict(deltas=(1.0, 1.0)),
                                dict(deltas=(-1.0,)), dict(realizations=0), dict(region_sizes=(10,)),
                                dict(target_kinds=("bogus",)), dict(epsilon=1.5), dict(workers=0),
                                dict(boundary="twisted"), dict(fit_sizes=(9,))])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw).validate()


def test_presets_valid():
    for cfg in PRESETS.values():
        cfg.validate()
    assert PRESETS["full"].L == 14


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 14), st.lists(st.floats(0, 20, allow_nan=False), min_size=1, max_size=6, unique=True),
       st.integers(1, 50), st.integers(0, 2**40))
def test_config_round_trip(L, deltas, reals, seed):
    cfg = ExperimentConfig(L=L, deltas=tuple(deltas), realizations=reals, seed=seed, region_sizes=(1, 2))
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg


def test_config_text_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        ExperimentConfig.from_text("colour = blue\n")
    with pytest.raises(ConfigError, match="key = value"):
        ExperimentConfig.from_text("L 10\n")
    cfg = ExperimentConfig.from_text("# comment\nL = 8  # trailing\nregion_sizes = 1, 2\n")
    assert cfg.L == 8 and cfg.region_sizes == (1, 2)


def test_overrides_validate():
    with pytest.raises(ConfigError):
        with_overrides(PRESETS["desk"], deltas=())
    assert with_overrides(PRESETS["desk"], L=None).L == 10


# ---------------------------------------------------------------- runs


def test_clean_chain_smoke():
    cfg = ExperimentConfig(L=6, deltas=(0.0,), realizations=1, region_sizes=(1, 2)).validate()
    r = run_ensemble(cfg)
    assert not r.failures
    vals = [c["mean"] for c in r.cells]
    assert all(math.isfinite(v) and v >= -1e-12 for v in vals)


def test_golden_outputs():
    r = run_ensemble(GOLDEN)
    for text, name in ((curves_csv(r), "golden_L6_curves.csv"), (slopes_csv(r), "golden_L6_slopes.csv")):
        got = list(csv.reader(io.StringIO(text)))
        want = list(csv.reader(open(DATA / name)))
        assert got[0] == want[0] and len(got) == len(want)
        for a, b in zip(got[1:], want[1:]):
            for x, y in zip(a, b):
                try:
                    assert float(x) == pytest.approx(float(y), rel=1e-9, abs=1e-12) or (x == y == "nan")
                except ValueError:
                    assert x == y


def test_workers_do_not_change_outputs():
    a = run_ensemble(GOLDEN)
    b = run_ensemble(with_overrides(GOLDEN, workers=2))
    assert curves_csv(a) == curves_csv(b)
    assert slopes_csv(a) == slopes_csv(b)


def test_emit_outputs(tmp_path):
    r = run_ensemble(with_overrides(GOLDEN, realizations=1))
    paths = emit_outputs(r, str(tmp_path / "out"))
    assert sorted(paths) == ["curves.csv", "slopes.csv", "summary.json"]
    summary = json.loads(Path(paths["summary.json"]).read_text())
    assert summary["items"] == 2 and summary["failed_items"] == 0
    assert summary["config"]["L"] == 6
    assert {b["target_kind"] for b in summary["bath_size_bounds"]} == set(GOLDEN.target_kinds)
    for b in summary["bath_size_bounds"]:
        assert b["median_log2_n_lower"] <= b["median_log2_n_upper"]


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output(tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    with pytest.raises(ConfigError):
        prepare_output_dir(str(d / "sub"))


def test_output_path_is_a_file(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    with pytest.raises(ConfigError):
        prepare_output_dir(str(f))


# ---------------------------------------------------------------- CLI


def test_cli_ensemble(tmp_path, capsys):
    out = tmp_path / "cli"
    code = main(["ensemble", "--L", "6", "--deltas", "1,4", "--realizations", "1", "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    assert (out / "curves.csv").exists() and (out / "summary.json").exists()


@pytest.mark.parametrize("argv", [["ensemble", "--deltas", ""], ["ensemble", "--L", "40"],
                                  ["ensemble", "--config", "/nonexistent/cfg.txt"]])
def test_cli_config_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "x")]) == 2


def test_cli_n_epsilon(capsys):
    assert main(["n-epsilon", "--eps", "0.4"]) == 0
    assert json.loads(capsys.readouterr().out)["n_epsilon"] == 4
    assert main(["n-epsilon", "--eps", "0.01", "--n-max", "5"]) == 3


def test_cli_esc(capsys):
    assert main(["esc", "--energies", "0,0.3,0.9,1.2", "--n-max", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["passes"] is False
    assert main(["esc", "--energies", "0,1/3,1/2", "--exact", "--n-max", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["passes"] is True


def test_cli_counterexample(capsys):
    assert main(["counterexample", "--beta", "0"]) == 0
    row = json.loads(capsys.readouterr().out)["rows"][0]
    assert row["change"] == pytest.approx(-0.125, abs=1e-12)


def test_cli_convex_split(capsys):
    assert main(["convex-split", "--pairs", "5", "--n-max", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["violations"] == 0


def test_cli_dynamics_check(capsys):
    assert main(["dynamics-check", "--processes", "1", "--n-traj", "2000", "--t", "0.5"]) == 0
    row = json.loads(capsys.readouterr().out)["rows"][0]
    assert row["series_vs_rk4"] < 1e-8
