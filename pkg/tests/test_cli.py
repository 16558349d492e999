"""End-to-end tests for the command-line interface."""

import datetime as dt
import json
import subprocess
import sys

import numpy as np
import pytest

from stvar.cli import dispatch
from stvar.data_model import GridSpec, RawSeries, save_series
from stvar.mcmc import load_chain
from stvar.projection import load_planar


def run(*args) -> int:
    return dispatch([str(a) for a in args])


def write_raw(path, n_days=80, n_rows=2, n_cols=3, seed=0):
    rng = np.random.default_rng(seed)
    grid = GridSpec(n_rows=n_rows, n_cols=n_cols, variables=("u", "v"))
    values = rng.standard_normal((n_days, 2, grid.n_cells)) * 3.0 + 5.0
    dates = tuple(dt.date(2001, 1, 1) + dt.timedelta(days=i) for i in range(n_days))
    save_series(RawSeries(values=values, grid=grid, dates=dates), path)
    return path


def simulate_into(out, model="model1", days=200, seed=3, extra=()):
    code = run(
        "simulate", "--model", model, "--days", days, "--seed", seed,
        "--out", out, *extra,
    )
    assert code == 0
    return out / "series.planar"


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    """A simulated trajectory with model0 and model1 chains fitted to it."""
    root = tmp_path_factory.mktemp("fitted")
    series = simulate_into(root, days=220, seed=5)
    assert run(
        "fit", "--spec", "model1", "--series", series, "--iters", 500,
        "--burn-in", 100, "--seed", 11, "--out", root,
    ) == 0
    assert run(
        "fit", "--spec", "model0", "--series", series, "--iters", 300,
        "--burn-in", 50, "--seed", 11, "--out", root,
    ) == 0
    return root


class TestDispatchBasics:
    def test_unknown_subcommand(self, capsys):
        assert run("frobnicate") == 1
        assert "usage error" in capsys.readouterr().err

    def test_no_arguments(self, capsys):
        assert dispatch([]) == 1

    def test_help_exits_zero(self, capsys):
        assert run("--help") == 0
        assert run("fit", "--help") == 0

    def test_version(self, capsys):
        assert run("--version") == 0

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "stvar.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "stvar" in proc.stdout


class TestSimulate:
    def test_outputs_and_manifest(self, tmp_path):
        series = simulate_into(tmp_path, days=60, seed=2)
        loaded = load_planar(series)
        assert loaded.n_days == 60
        assert (tmp_path / "tessellation.json").exists()
        assert (tmp_path / "truth.json").exists()
        manifest = json.loads((tmp_path / "simulate.manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 2
        assert manifest["config"]["days"] == 60
        assert len(manifest["outputs"]) == 3

    def test_deterministic_output_bytes(self, tmp_path):
        a = simulate_into(tmp_path / "a", days=50, seed=9)
        b = simulate_into(tmp_path / "b", days=50, seed=9)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        a = simulate_into(tmp_path / "a", days=50, seed=1)
        b = simulate_into(tmp_path / "b", days=50, seed=2)
        assert a.read_bytes() != b.read_bytes()

    def test_dated_series(self, tmp_path):
        series = simulate_into(
            tmp_path, days=40, seed=0, extra=("--start-date", "2001-06-01")
        )
        loaded = load_planar(series)
        assert loaded.dates[0] == dt.date(2001, 6, 1)

    def test_bad_date_is_data_error(self, tmp_path, capsys):
        code = run("simulate", "--start-date", "June 1st", "--out", tmp_path)
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_quarter_model_needs_start_date(self, tmp_path):
        assert run("simulate", "--model", "model4", "--out", tmp_path) == 2
        assert run(
            "simulate", "--model", "model4", "--days", 50,
            "--start-date", "2001-01-01", "--out", tmp_path,
        ) == 0

    def test_too_few_days(self, tmp_path):
        assert run("simulate", "--days", 1, "--out", tmp_path) == 2

    def test_unknown_model(self, tmp_path):
        assert run("simulate", "--model", "model99", "--out", tmp_path) == 2


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Raw series standardized, mapped, embedded, and projected."""
    root = tmp_path_factory.mktemp("sompath")
    raw = write_raw(root / "raw.series")
    assert run("standardize", "--series", raw, "--out", root) == 0
    assert run(
        "train-som", "--series", root / "series.state", "--nodes", 4,
        "--phase-steps", "3,5", "--seed", 1, "--out", root,
    ) == 0
    assert run("sammon", "--som", root / "som.json", "--out", root) == 0
    assert run(
        "project", "--som", root / "som_sammon.json",
        "--series", root / "series.state", "--out", root,
    ) == 0
    return root


class TestSomPath:
    def test_standardize_writes_sidecar(self, workspace):
        assert (workspace / "series.state.meta.json").exists()

    def test_standardize_rejects_standardized_input(self, workspace, tmp_path):
        code = run("standardize", "--series", workspace / "series.state",
                   "--out", tmp_path)
        assert code == 2

    def test_sammon_report(self, workspace):
        report = json.loads((workspace / "sammon.json").read_text())
        assert report["stress"] >= 0.0
        assert set(report) == {"stress", "n_iter", "converged"}

    def test_projection_keeps_dates(self, workspace):
        days = load_planar(workspace / "days.planar")
        assert days.n_days == 80
        assert days.dates is not None
        assert days.node_assignment.max() < 4

    def test_maps_standardized(self, workspace, tmp_path):
        code = run(
            "maps", "--som", workspace / "som.json",
            "--series", workspace / "series.state", "--out", tmp_path,
        )
        assert code == 0
        files = sorted(tmp_path.glob("map_node*.csv"))
        assert len(files) == 4 * 2
        grid = np.loadtxt(files[0], delimiter=",")
        assert grid.shape == (2, 3)

    def test_maps_raw_needs_standardization(self, workspace, tmp_path):
        raw = write_raw(tmp_path / "raw.series")
        code = run(
            "maps", "--som", workspace / "som.json", "--series", raw,
            "--kind", "raw", "--out", tmp_path,
        )
        assert code == 2

    def test_bad_phase_steps(self, workspace, tmp_path):
        code = run(
            "train-som", "--series", workspace / "series.state",
            "--phase-steps", "3", "--out", tmp_path,
        )
        assert code == 2


class TestFitEvaluate:
    def test_chain_file_loads(self, fitted):
        chain = load_chain(fitted / "model1.chain")
        assert chain.n_draws == 400
        assert chain.spec.name == "model1"

    def test_fit_deterministic(self, fitted, tmp_path):
        series = fitted / "series.planar"
        for sub in ("a", "b"):
            assert run(
                "fit", "--spec", "model0", "--series", series, "--iters", 200,
                "--burn-in", 40, "--seed", 4, "--out", tmp_path / sub,
            ) == 0
        assert (tmp_path / "a" / "model0.chain").read_bytes() == (
            tmp_path / "b" / "model0.chain"
        ).read_bytes()

    def test_manifest_stable_modulo_timestamps(self, fitted, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        series = fitted / "series.planar"
        blobs = []
        for sub in ("a", "b"):
            assert run(
                "fit", "--spec", "model0", "--series", series, "--iters", 150,
                "--burn-in", 30, "--seed", 4, "--out", sub,
            ) == 0
            blob = json.loads((tmp_path / sub / "fit_model0.manifest.json").read_text())
            blob.pop("wall_time_s")
            blob.pop("written_at")
            blob["config"].pop("out")
            blob["outputs"] = [p.rsplit("/", 1)[-1] for p in blob["outputs"]]
            blobs.append(blob)
        assert blobs[0] == blobs[1]

    def test_evaluate_scores_and_report(self, fitted, tmp_path, capsys):
        code = run(
            "evaluate", "--chain", fitted / "model1.chain",
            "--chain", fitted / "model0.chain",
            "--series", fitted / "series.planar",
            "--draws", 200, "--seed", 1, "--out", tmp_path,
        )
        assert code == 0
        scores = json.loads((tmp_path / "scores.json").read_text())
        assert [s["model"] for s in scores] == ["model1", "model0"]
        for s in scores:
            assert set(s) == {"model", "rmspe", "dic", "p_d", "coverage"}
        report = (tmp_path / "report.txt").read_text().splitlines()
        assert report[0].split() == ["model", "rmspe", "dic", "p_d", "coverage"]
        assert len(report) == 3
        assert "model1" in capsys.readouterr().out

    def test_evaluate_needs_a_chain(self, fitted, tmp_path):
        code = run(
            "evaluate", "--series", fitted / "series.planar", "--out", tmp_path
        )
        assert code == 1

    def test_missing_chain_file(self, fitted, tmp_path):
        code = run(
            "evaluate", "--chain", fitted / "nope.chain",
            "--series", fitted / "series.planar", "--out", tmp_path,
        )
        assert code == 2

    def test_undated_series_against_seasonal_chain(self, tmp_path):
        dated = tmp_path / "dated"
        series = simulate_into(
            dated, model="model4", days=120, seed=6,
            extra=("--start-date", "2001-01-01"),
        )
        assert run(
            "fit", "--spec", "model4", "--series", series, "--iters", 200,
            "--burn-in", 40, "--seed", 2, "--out", dated,
        ) == 0
        undated = simulate_into(tmp_path / "plain", days=120, seed=6)
        code = run(
            "evaluate", "--chain", dated / "quarter-none.chain",
            "--series", undated, "--out", tmp_path,
        )
        assert code == 2


class TestPredict:
    def test_predictions_csv(self, fitted, tmp_path):
        code = run(
            "predict", "--chain", fitted / "model1.chain",
            "--series", fitted / "series.planar",
            "--draws", 150, "--seed", 8, "--out", tmp_path,
        )
        assert code == 0
        lines = (tmp_path / "predictions.csv").read_text().splitlines()
        assert lines[0].startswith("date,actual_x,actual_y,mean_x,mean_y")
        assert len(lines) == 1 + 219
        body = np.loadtxt(
            tmp_path / "predictions.csv", delimiter=",", skiprows=1,
            usecols=range(1, 9),
        )
        assert np.all(np.isfinite(body))
        assert np.all(body[:, 4] <= body[:, 5])


class TestTransitionsFrequencies:
    def test_empirical_matrix_csv(self, fitted, tmp_path):
        code = run(
            "transitions", "--series", fitted / "series.planar",
            "--tessellation", fitted / "tessellation.json", "--out", tmp_path,
        )
        assert code == 0
        lines = (tmp_path / "transitions_empirical.csv").read_text().splitlines()
        assert lines[0] == "from/to," + ",".join(str(k) for k in range(12))
        assert len(lines) == 13
        quant = (tmp_path / "distance_quantiles.csv").read_text().splitlines()
        assert quant[0] == "cell,count,q05,q25,q50,q75,q95"
        assert quant[-1].startswith("all,219,")

    def test_model_matrix_with_chain(self, fitted, tmp_path):
        code = run(
            "transitions", "--series", fitted / "series.planar",
            "--tessellation", fitted / "tessellation.json",
            "--chain", fitted / "model1.chain",
            "--draws", 120, "--seed", 3, "--out", tmp_path,
        )
        assert code == 0
        assert (tmp_path / "transitions_model.csv").exists()

    def test_season_filter_needs_dates(self, fitted, tmp_path):
        code = run(
            "transitions", "--series", fitted / "series.planar",
            "--tessellation", fitted / "tessellation.json",
            "--season", "DJF", "--out", tmp_path,
        )
        assert code == 2

    def test_frequencies_plain(self, fitted, tmp_path):
        code = run(
            "frequencies", "--series", fitted / "series.planar",
            "--nodes", 12, "--out", tmp_path,
        )
        assert code == 0
        lines = (tmp_path / "frequencies.csv").read_text().splitlines()
        assert lines[0] == "block," + ",".join(f"node_{k}" for k in range(12))
        assert len(lines) == 2
        counts = [float(v) for v in lines[1].split(",")[1:]]
        assert sum(counts) == 220

    def test_frequencies_by_season(self, tmp_path):
        series = simulate_into(
            tmp_path, days=120, seed=4, extra=("--start-date", "2001-01-01")
        )
        code = run(
            "frequencies", "--series", series, "--by", "season",
            "--out", tmp_path,
        )
        assert code == 0
        lines = (tmp_path / "frequencies.csv").read_text().splitlines()
        blocks = [ln.split(",")[0] for ln in lines[1:]]
        assert blocks == ["DJF", "MAM"]


class TestLagScan:
    def test_writes_json(self, fitted, tmp_path):
        code = run(
            "lag-scan", "--series", fitted / "series.planar", "--max-lag", 3,
            "--out", tmp_path,
        )
        assert code == 0
        blob = json.loads((tmp_path / "lag_scan.json").read_text())
        assert len(blob["aic"]) == 3
        assert blob["best_lag"] in (1, 2, 3)

    def test_short_series_is_data_error(self, tmp_path):
        series = simulate_into(tmp_path, days=12, seed=0)
        assert run("lag-scan", "--series", series, "--max-lag", 4,
                   "--out", tmp_path) == 2


class TestConfigFile:
    def test_config_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"days": 70, "model": "model0"}))
        assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
        manifest = json.loads((tmp_path / "simulate.manifest.json").read_text())
        assert manifest["config"]["days"] == 70
        assert manifest["config"]["model"] == "model0"

    def test_flags_beat_config(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"days": 70}))
        assert run("simulate", "--config", cfg, "--days", 44,
                   "--out", tmp_path) == 0
        manifest = json.loads((tmp_path / "simulate.manifest.json").read_text())
        assert manifest["config"]["days"] == 44

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"dayz": 70}))
        assert run("simulate", "--config", cfg, "--out", tmp_path) == 2

    def test_invalid_json(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text("{nope")
        assert run("simulate", "--config", cfg, "--out", tmp_path) == 2


class TestPipeline:
    def test_empty_stages_no_outputs(self, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"stages": []}))
        out = tmp_path / "run"
        assert run("pipeline", "--config", cfg, "--out", out) == 0
        assert not list(out.glob("*")) if out.exists() else True

    def test_full_run(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({
            "seed": 13,
            "out": "run",
            "stages": [
                {"run": "simulate", "args": {"model": "model1", "days": 150}},
                {"run": "fit", "args": {
                    "spec": "model1", "series": "run/series.planar",
                    "iters": 300, "burn-in": 60,
                }},
                {"run": "evaluate", "args": {
                    "chain": ["run/model1.chain"],
                    "series": "run/series.planar", "draws": 150,
                }},
            ],
        }))
        assert run("pipeline", "--config", cfg) == 0
        out = tmp_path / "run"
        for name in (
            "series.planar", "model1.chain", "scores.json", "report.txt",
            "simulate.manifest.json", "fit_model1.manifest.json",
            "evaluate.manifest.json", "pipeline.manifest.json",
        ):
            assert (out / name).exists(), name
        scores = json.loads((out / "scores.json").read_text())
        assert scores[0]["model"] == "model1"

    def test_reruns_are_byte_identical(self, tmp_path, monkeypatch):
        cfg_blob = {
            "seed": 5,
            "out": "run",
            "stages": [
                {"run": "simulate", "args": {"days": 80}},
                {"run": "fit", "args": {
                    "spec": "model0", "series": "run/series.planar",
                    "iters": 150, "burn-in": 30,
                }},
            ],
        }
        results = {}
        for side in ("a", "b"):
            base = tmp_path / side
            base.mkdir()
            monkeypatch.chdir(base)
            cfg = base / "p.json"
            cfg.write_text(json.dumps(cfg_blob))
            assert run("pipeline", "--config", cfg) == 0
            results[side] = base / "run"
        for path_a in sorted(results["a"].iterdir()):
            path_b = results["b"] / path_a.name
            if path_a.name.endswith(".manifest.json"):
                blob_a = json.loads(path_a.read_text())
                blob_b = json.loads(path_b.read_text())
                for blob in (blob_a, blob_b):
                    blob.pop("wall_time_s")
                    blob.pop("written_at")
                    blob["inputs"] = [p.rsplit("/", 1)[-1] for p in blob["inputs"]]
                    blob["config"].pop("config", None)
                assert blob_a == blob_b, path_a.name
            else:
                assert path_a.read_bytes() == path_b.read_bytes(), path_a.name

    def test_stage_with_missing_input(self, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({
            "out": str(tmp_path / "run"),
            "stages": [
                {"run": "simulate", "args": {"days": 60}},
                {"run": "fit", "args": {"spec": "model1",
                                        "series": "nowhere.planar"}},
            ],
        }))
        assert run("pipeline", "--config", cfg) == 2
        # the completed first stage keeps its outputs and manifest
        assert (tmp_path / "run" / "series.planar").exists()
        assert (tmp_path / "run" / "simulate.manifest.json").exists()

    def test_unknown_stage_command(self, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"stages": [{"run": "explode"}]}))
        assert run("pipeline", "--config", cfg, "--out", tmp_path) == 2

    def test_unknown_top_level_key(self, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"stages": [], "extra": 1}))
        assert run("pipeline", "--config", cfg, "--out", tmp_path) == 2

    def test_unknown_stage_key(self, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps(
            {"stages": [{"run": "simulate", "arg": {}}]}
        ))
        assert run("pipeline", "--config", cfg, "--out", tmp_path) == 2

    def test_nested_pipeline_rejected(self, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"stages": [{"run": "pipeline"}]}))
        assert run("pipeline", "--config", cfg, "--out", tmp_path) == 2

    def test_config_required(self, tmp_path):
        assert run("pipeline", "--out", tmp_path) == 1
