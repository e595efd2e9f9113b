import json
import subprocess
import sys

import numpy as np
import pytest

from lncass.cli import main
from lncass.dataprep import Dataset, load_csv, save_csv
from lncass.model import inv_logit
from lncass.simulate import rng_from


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run_cli("simulate", "p20", "--seed", 3, "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def logistic_csv(tmp_path_factory):
    rng = rng_from(42)
    n, p = 70, 5
    X = rng.uniform(0, 1, (n, p))
    eta = 3.5 * X[:, 0] - 3.0 * X[:, 1] + 0.3
    y = (rng.random(n) < inv_logit(eta)).astype(float)
    path = tmp_path_factory.mktemp("data") / "logit.csv"
    save_csv(Dataset(X=X, y=y, columns=[f"g{i}" for i in range(p)]), path)
    return path


class TestSimulate:
    def test_outputs_and_shapes(self, sim_dir):
        data = load_csv(sim_dir / "data.csv", "y")
        assert data.X.shape == (100, 20)
        truth = json.loads((sim_dir / "truth.json").read_text())
        assert len(truth["beta"]) == 20
        groups = json.loads((sim_dir / "groups.json").read_text())
        assert groups == [g for g in range(4) for _ in range(5)]

    def test_identical_seed_identical_files(self, tmp_path, sim_dir):
        again = tmp_path / "again"
        assert run_cli("simulate", "p20", "--seed", 3, "--out", again) == 0
        for name in ("data.csv", "truth.json", "groups.json", "config.json"):
            assert (again / name).read_bytes() == (sim_dir / name).read_bytes()

    def test_p120_column_count(self, tmp_path):
        out = tmp_path / "p120"
        assert run_cli("simulate", "p120", "--out", out) == 0
        header = (out / "data.csv").read_text().splitlines()[0]
        assert len(header.split(",")) == 121


@pytest.fixture(scope="module")
def fit_dir(tmp_path_factory, sim_dir):
    out = tmp_path_factory.mktemp("fit")
    code = run_cli(
        "fit", "--data", sim_dir / "data.csv", "--response", "y",
        "--model", "linear", "--prior", "lncass-grouped",
        "--groups", sim_dir / "groups.json",
        "--chains", 2, "--warmup", 200, "--draws", 200, "--seed", 5,
        "--out", out,
    )
    assert code == 0
    return out


class TestFit:
    def test_summary_has_beta_entries(self, fit_dir):
        text = (fit_dir / "summary.csv").read_text()
        for i in range(20):
            assert f"beta[{i}]" in text

    def test_beta_is_group_plus_covariate(self, fit_dir):
        import csv as _csv

        with open(fit_dir / "draws.csv", newline="") as fh:
            reader = _csv.DictReader(fh)
            row = next(reader)
        beta0 = float(row["beta[0]"])
        assert beta0 == pytest.approx(
            float(row["theta_group[0]"]) + float(row["theta[0]"]), abs=1e-12
        )

    def test_outputs_present(self, fit_dir):
        for name in ("draws.csv", "summary.csv", "diagnostics.json", "spec.json",
                     "config.json"):
            assert (fit_dir / name).exists()
        assert (fit_dir / "figures" / "coefficients.png").stat().st_size > 0

    def test_diagnostics_record_generator(self, fit_dir):
        diag = json.loads((fit_dir / "diagnostics.json").read_text())
        assert diag["generator"] == "philox"
        assert len(diag["divergences"]) == 2

    def test_rerun_identical(self, fit_dir, sim_dir, tmp_path):
        out = tmp_path / "again"
        assert run_cli(
            "fit", "--data", sim_dir / "data.csv", "--response", "y",
            "--model", "linear", "--prior", "lncass-grouped",
            "--groups", sim_dir / "groups.json",
            "--chains", 2, "--warmup", 200, "--draws", 200, "--seed", 5,
            "--out", out,
        ) == 0
        assert (out / "draws.csv").read_bytes() == (fit_dir / "draws.csv").read_bytes()
        assert (out / "summary.csv").read_bytes() == (fit_dir / "summary.csv").read_bytes()


class TestGamFit:
    def test_curve_files_and_figure(self, tmp_path, logistic_csv):
        out = tmp_path / "gamfit"
        assert run_cli(
            "fit", "--data", logistic_csv, "--response", "y",
            "--model", "logistic", "--prior", "lncass-gam", "--knots", 3,
            "--chains", 1, "--warmup", 150, "--draws", 150, "--seed", 2,
            "--out", out,
        ) == 0
        curves = sorted((out / "curves").glob("curve_*.csv"))
        assert len(curves) == 5
        header = curves[0].read_text().splitlines()[0]
        assert header == "x,f_median,f_mean,f_lower,f_upper"
        assert (out / "figures" / "curves.png").stat().st_size > 0


class TestCv:
    def test_kfold_outputs(self, tmp_path, logistic_csv):
        out = tmp_path / "cv"
        assert run_cli(
            "cv", "--data", logistic_csv, "--response", "y",
            "--model", "logistic", "--prior", "lncass",
            "--folds", 4, "--chains", 1, "--warmup", 120, "--draws", 120,
            "--seed", 8, "--out", out,
        ) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.5 < metrics["auc_pooled"] <= 1.0
        lines = (out / "predictions.csv").read_text().splitlines()
        assert len(lines) == 71  # header + one prediction per observation

    def test_loocv_covers_each_observation_once(self, tmp_path, logistic_csv):
        small = tmp_path / "small.csv"
        data = load_csv(logistic_csv, "y").subset_rows(np.arange(16))
        save_csv(data, small)
        out = tmp_path / "loocv"
        assert run_cli(
            "cv", "--data", small, "--response", "y",
            "--model", "logistic", "--prior", "lncass",
            "--loocv-balanced", "--chains", 1, "--warmup", 100, "--draws", 80,
            "--seed", 1, "--out", out,
        ) == 0
        rows = (out / "predictions.csv").read_text().splitlines()[1:]
        indices = sorted(int(r.split(",")[2]) for r in rows)
        assert indices == list(range(16))

    def test_noise_data_auc_near_half(self, tmp_path):
        rng = rng_from(7)
        n = 60
        X = rng.normal(size=(n, 3))
        y = (rng.random(n) < 0.5).astype(float)
        path = tmp_path / "noise.csv"
        save_csv(Dataset(X=X, y=y, columns=["a", "b", "c"]), path)
        out = tmp_path / "cvnoise"
        assert run_cli(
            "cv", "--data", path, "--response", "y",
            "--model", "logistic", "--prior", "lncass",
            "--folds", 4, "--chains", 1, "--warmup", 120, "--draws", 120,
            "--seed", 3, "--out", out,
        ) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert abs(metrics["auc_pooled"] - 0.5) < 0.25


class TestScreen:
    def test_top_k_retained_and_deterministic(self, tmp_path, logistic_csv):
        out1 = tmp_path / "s1"
        out2 = tmp_path / "s2"
        for out in (out1, out2):
            assert run_cli(
                "screen", "--data", logistic_csv, "--response", "y",
                "--top-k", 2, "--standardize", "--out", out,
            ) == 0
        header = (out1 / "screened.csv").read_text().splitlines()[0]
        assert len(header.split(",")) == 3  # 2 covariates + response
        assert (out1 / "z_scores.csv").read_bytes() == (out2 / "z_scores.csv").read_bytes()

    def test_top_k_p_orders_by_abs_z(self, tmp_path, logistic_csv):
        out = tmp_path / "sall"
        assert run_cli(
            "screen", "--data", logistic_csv, "--response", "y",
            "--top-k", 5, "--standardize", "--out", out,
        ) == 0
        rows = (out / "z_scores.csv").read_text().splitlines()[1:]
        zs = {r.split(",")[0]: abs(float(r.split(",")[1])) for r in rows}
        screened_cols = (out / "screened.csv").read_text().splitlines()[0].split(",")[:-1]
        assert screened_cols == sorted(zs, key=lambda c: -zs[c])


class TestEvaluate:
    def test_self_evaluation_is_perfect(self, tmp_path, sim_dir):
        out = tmp_path / "ev"
        assert run_cli(
            "evaluate", "--summary", sim_dir / "truth.json",
            "--truth", sim_dir / "truth.json", "--out", out,
        ) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["mae"] == 0.0
        assert metrics["recovery_auc"] == 1.0

    def test_summary_csv_input(self, tmp_path, sim_dir, fit_dir):
        out = tmp_path / "ev2"
        assert run_cli(
            "evaluate", "--summary", fit_dir / "summary.csv",
            "--truth", sim_dir / "truth.json", "--out", out,
        ) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.0 < metrics["mae"] < 1.0
        assert (out / "figures" / "estimate_vs_truth.png").exists()


class TestPredict:
    def test_predictions_cover_rows(self, tmp_path, sim_dir, fit_dir):
        out = tmp_path / "pred"
        assert run_cli(
            "predict", "--fit", fit_dir, "--data", sim_dir / "data.csv",
            "--out", out,
        ) == 0
        rows = (out / "predictions.csv").read_text().splitlines()
        assert rows[0] == "index,y,prediction"
        assert len(rows) == 101

    def test_without_response_column(self, tmp_path, sim_dir, fit_dir):
        data = load_csv(sim_dir / "data.csv", "y")
        bare = tmp_path / "bare.csv"
        with open(bare, "w") as fh:
            fh.write(",".join(data.columns) + "\n")
            for row in data.X:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        out = tmp_path / "pred2"
        assert run_cli("predict", "--fit", fit_dir, "--data", bare, "--out", out) == 0
        rows = (out / "predictions.csv").read_text().splitlines()
        assert rows[0] == "index,prediction"


class TestFailureHandling:
    def test_sentinel_written_and_nonzero_exit(self, tmp_path):
        out = tmp_path / "bad"
        code = run_cli(
            "fit", "--data", tmp_path / "missing.csv", "--response", "y",
            "--out", out,
        )
        assert code == 1
        assert (out / "FAILED").exists()

    def test_sentinel_cleared_on_success(self, tmp_path):
        out = tmp_path / "sim"
        out.mkdir()
        (out / "FAILED").write_text("old failure")
        assert run_cli("simulate", "p20", "--out", out) == 0
        assert not (out / "FAILED").exists()

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"bogus": 1}')
        out = tmp_path / "out"
        assert run_cli("simulate", "p20", "--config", cfg, "--out", out) == 1


class TestConfigPrecedence:
    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"seed": 1, "noise_sd": 2.0}')
        out = tmp_path / "o1"
        assert run_cli("simulate", "p20", "--config", cfg, "--seed", 9, "--out", out) == 0
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["options"]["seed"] == 9
        assert echoed["options"]["noise_sd"] == 2.0
        assert "threads" not in echoed["options"]


def test_console_entry_point_runs(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "lncass.cli", "simulate", "p20",
         "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr
