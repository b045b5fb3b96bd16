"""End-to-end CLI behavior: file formats, exit codes, round-trips, and
figure emission."""

import json

import numpy as np
import pandas as pd
import pytest

from diagchart.chart import ChartConfig, evaluate_batch
from diagchart.cli import main, read_params
from diagchart.core_stats import make_trace_estimates, sample_covariance, correlation
from diagchart import chart as _chart


@pytest.fixture
def workdir(tmp_path):
    rng = np.random.default_rng(99)
    cols = [f"v{i}" for i in range(6)]
    phase1 = pd.DataFrame(rng.standard_normal((150, 6)), columns=cols)
    phase1.to_csv(tmp_path / "phase1.csv", index=False)
    phase2 = pd.DataFrame(rng.standard_normal((50, 6)), columns=cols)
    phase2.iloc[30:] += 2.0
    phase2.to_csv(tmp_path / "phase2.csv", index=False)
    centers = pd.DataFrame(
        np.tile(phase1.mean().to_numpy(), (20, 1)), columns=cols
    )
    centers.to_csv(tmp_path / "centers.csv", index=False)
    return tmp_path


def run(args):
    return main([str(a) for a in args])


class TestPhase1Chart:
    def test_roundtrip_matches_in_process(self, workdir):
        rc = run(["phase1", workdir / "phase1.csv", "--out", workdir / "params.json"])
        assert rc == 0
        rc = run(["chart", workdir / "params.json", workdir / "phase2.csv",
                  "--alpha", "0.01", "--out", workdir / "chart.csv"])
        assert rc == 2  # shifted block must signal

        # in-process reference
        data = pd.read_csv(workdir / "phase1.csv").to_numpy()
        cov = sample_covariance(data)
        params = _chart.ProcessParameters(
            mu=data.mean(axis=0), d_diag=cov.d_s,
            traces=make_trace_estimates(correlation(cov), data.shape[0]),
            source=_chart.SOURCE_CLASSICAL,
        )
        config = ChartConfig(alpha=0.01, cf_order=1)
        x2 = pd.read_csv(workdir / "phase2.csv").to_numpy()
        m2, u, z, sig = evaluate_batch(x2, params, config)

        out = pd.read_csv(workdir / "chart.csv")
        assert np.allclose(out["m2"].to_numpy(), m2, rtol=1e-12, atol=1e-12)
        assert np.allclose(out["z"].to_numpy(), z, rtol=1e-12, atol=1e-12)
        assert np.array_equal(out["signal"].to_numpy().astype(bool), sig)

    def test_chart_columns_contract(self, workdir):
        run(["phase1", workdir / "phase1.csv", "--out", workdir / "params.json"])
        run(["chart", workdir / "params.json", workdir / "phase2.csv",
             "--out", workdir / "chart.csv"])
        out = pd.read_csv(workdir / "chart.csv")
        assert list(out.columns) == ["index", "m2", "u", "z", "signal", "ucl"]
        assert out["index"].iloc[0] == 1

    def test_all_center_stream_exit_zero(self, workdir):
        run(["phase1", workdir / "phase1.csv", "--out", workdir / "params.json"])
        rc = run(["chart", workdir / "params.json", workdir / "centers.csv",
                  "--out", workdir / "quiet.csv", "--no-plots"])
        assert rc == 0
        out = pd.read_csv(workdir / "quiet.csv")
        assert out["signal"].sum() == 0

    def test_params_json_schema(self, workdir):
        run(["phase1", workdir / "phase1.csv", "--out", workdir / "params.json"])
        doc = json.loads((workdir / "params.json").read_text())
        assert doc["format_version"] == 1
        assert doc["source"] == "classical"
        assert len(doc["mu"]) == 6
        assert doc["traces"]["tr2_hat"] > 0
        params, columns = read_params(workdir / "params.json")
        assert columns == [f"v{i}" for i in range(6)]

    def test_robust_requires_seed(self, workdir, capsys):
        rc = run(["phase1", workdir / "phase1.csv", "--robust",
                  "--out", workdir / "p.json"])
        assert rc == 1
        assert "seed" in capsys.readouterr().err

    def test_figures_written_and_suppressible(self, workdir):
        run(["phase1", workdir / "phase1.csv", "--out", workdir / "params.json"])
        run(["chart", workdir / "params.json", workdir / "phase2.csv",
             "--out", workdir / "a.csv"])
        assert (workdir / "a.png").exists()
        run(["chart", workdir / "params.json", workdir / "phase2.csv",
             "--out", workdir / "b.csv", "--no-plots"])
        assert not (workdir / "b.png").exists()


class TestSelfStart:
    def test_two_row_phase1_wide(self, tmp_path):
        # headline capability: p = 100 with only 2 Phase I rows
        rng = np.random.default_rng(5)
        cols = [f"c{i}" for i in range(100)]
        pd.DataFrame(rng.standard_normal((2, 100)), columns=cols).to_csv(
            tmp_path / "p1.csv", index=False)
        pd.DataFrame(rng.standard_normal((15, 100)), columns=cols).to_csv(
            tmp_path / "stream.csv", index=False)
        rc = run(["selfstart", tmp_path / "p1.csv", tmp_path / "stream.csv",
                  "--alpha", "0.005", "--out", tmp_path / "ss.csv",
                  "--state-out", tmp_path / "state.json", "--no-plots"])
        assert rc in (0, 2)
        out = pd.read_csv(tmp_path / "ss.csv")
        assert "absorbed" in out.columns
        state = json.loads((tmp_path / "state.json").read_text())
        assert state["j"] >= 2
        assert state["source"] == "classical"

    def test_signal_exit_code(self, workdir):
        big = pd.read_csv(workdir / "phase2.csv") * 10
        big.to_csv(workdir / "loud.csv", index=False)
        rc = run(["selfstart", workdir / "phase1.csv", workdir / "loud.csv",
                  "--alpha", "0.01", "--out", workdir / "ss.csv", "--no-plots"])
        assert rc == 2


class TestSimulate:
    def test_arl_grid_with_manifest(self, tmp_path):
        cfg = {
            "experiment": "arl",
            "scenario": {"structure": "identity", "p": 8},
            "alpha": 0.05,
            "cf_order": 1,
            "mode": "known",
            "n_reps": 300,
            "seed": 77,
            "grid": {"cf_order": [0, 1]},
        }
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        rc = run(["simulate", tmp_path / "cfg.json", "--out", tmp_path / "res.csv"])
        assert rc == 0
        frame = pd.read_csv(tmp_path / "res.csv")
        assert len(frame) == 2
        for col in ("arl_hat", "std_err", "censored", "wall_time"):
            assert col in frame.columns
        manifest = json.loads((tmp_path / "res.manifest.json").read_text())
        assert manifest["rng_algorithm"] == "philox4x64"
        assert manifest["root_seed"] == 77
        assert (tmp_path / "res.png").exists()

    def test_learning_time_config(self, tmp_path):
        cfg = {
            "experiment": "learning_time",
            "p_grid": [5],
            "tau_grid": [5, 15],
            "eta_target": 5.0,
            "alpha": 0.05,
            "n_reps": 20,
            "seed": 3,
        }
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        rc = run(["simulate", tmp_path / "cfg.json", "--out", tmp_path / "lt.csv"])
        assert rc == 0
        frame = pd.read_csv(tmp_path / "lt.csv")
        assert list(frame["tau"]) == [5, 15]

    def test_schema_error_names_field(self, tmp_path, capsys):
        cfg = {"experiment": "arl", "scenario": {"p": 5}, "n_reps": 10, "seed": 1}
        (tmp_path / "bad.json").write_text(json.dumps(cfg))
        rc = run(["simulate", tmp_path / "bad.json", "--out", tmp_path / "x.csv"])
        assert rc == 1
        assert "alpha" in capsys.readouterr().err

    def test_seed_required(self, tmp_path, capsys):
        cfg = {"experiment": "arl", "scenario": {"p": 5}, "alpha": 0.05, "n_reps": 10}
        (tmp_path / "bad.json").write_text(json.dumps(cfg))
        rc = run(["simulate", tmp_path / "bad.json", "--out", tmp_path / "x.csv"])
        assert rc == 1
        assert "seed" in capsys.readouterr().err

    def test_cli_seed_override(self, tmp_path):
        cfg = {"experiment": "arl", "scenario": {"p": 5}, "alpha": 0.05,
               "n_reps": 50, "mode": "known"}
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        rc = run(["simulate", tmp_path / "cfg.json", "--seed", "12",
                  "--out", tmp_path / "r.csv", "--no-plots"])
        assert rc == 0

    def test_shipped_table1_config(self, tmp_path):
        # the shipped config runs as-is apart from a rep-count reduction,
        # and its CF point lands near the published 202.1
        from pathlib import Path

        cfg = json.loads(Path("configs/table1_p50.json").read_text())
        cfg["n_reps"] = 2000
        (tmp_path / "t1.json").write_text(json.dumps(cfg))
        rc = run(["simulate", tmp_path / "t1.json", "--out", tmp_path / "t1.csv",
                  "--no-plots"])
        assert rc == 0
        frame = pd.read_csv(tmp_path / "t1.csv")
        assert len(frame) == 4
        row = frame[(frame["alpha"] == 0.005) & (frame["cf_order"] == 1)].iloc[0]
        assert abs(row["arl_hat"] - 202.1) / 202.1 < 0.10


class TestEcdf:
    def test_quadruples(self, workdir):
        run(["phase1", workdir / "phase1.csv", "--out", workdir / "params.json"])
        run(["chart", workdir / "params.json", workdir / "phase2.csv",
             "--alpha", "0.01", "--out", workdir / "chart.csv", "--no-plots"])
        rc = run(["ecdf", workdir / "chart.csv", "--out", workdir / "ecdf.csv"])
        assert rc == 0
        out = pd.read_csv(workdir / "ecdf.csv")
        assert list(out.columns) == ["value", "ecdf_group_a", "ecdf_group_b", "normal_cdf"]
        # ECDFs are monotone in the support and normal_cdf is correct
        assert np.all(np.diff(out["ecdf_group_a"]) >= 0)
        from scipy import stats
        assert np.allclose(out["normal_cdf"], stats.norm.cdf(out["value"]), atol=1e-12)
        assert (workdir / "ecdf.png").exists()

    def test_labels_file(self, workdir):
        run(["phase1", workdir / "phase1.csv", "--out", workdir / "params.json"])
        run(["chart", workdir / "params.json", workdir / "phase2.csv",
             "--out", workdir / "chart.csv", "--no-plots"])
        labels = pd.DataFrame({"nonconforming": [0] * 30 + [1] * 20})
        labels.to_csv(workdir / "labels.csv", index=False)
        rc = run(["ecdf", workdir / "chart.csv", "--labels", workdir / "labels.csv",
                  "--out", workdir / "e.csv", "--no-plots"])
        assert rc == 0


class TestCleaningFlow:
    def test_phase1_with_cleaning_and_transform(self, tmp_path):
        rng = np.random.default_rng(8)
        df = pd.DataFrame({f"x{i}": rng.exponential(size=80) for i in range(5)})
        df["dead"] = 1.0
        df.loc[:50, "holey"] = np.nan
        df.loc[51:, "holey"] = 1.23
        df.to_csv(tmp_path / "raw.csv", index=False)
        rc = run(["phase1", tmp_path / "raw.csv", "--clean", "--normal-scores",
                  "--transform-out", tmp_path / "model.json",
                  "--out", tmp_path / "params.json"])
        assert rc == 0
        doc = json.loads((tmp_path / "params.json").read_text())
        assert "dead" in doc["cleaning_report"]["dropped_near_constant"]
        assert "holey" in doc["cleaning_report"]["dropped_missing"]
        assert doc["columns"] == [f"x{i}" for i in range(5)]
        # chart applies the transform and selects the kept columns
        df2 = pd.DataFrame({f"x{i}": rng.exponential(size=30) for i in range(5)})
        df2["dead"] = 1.0
        df2["holey"] = 0.0
        df2.to_csv(tmp_path / "new.csv", index=False)
        rc = run(["chart", tmp_path / "params.json", tmp_path / "new.csv",
                  "--transform", tmp_path / "model.json",
                  "--out", tmp_path / "c.csv", "--no-plots"])
        assert rc in (0, 2)


class TestUsageErrors:
    def test_unknown_command_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["frobnicate"])
        assert exc.value.code == 1

    def test_missing_required_out(self, workdir):
        with pytest.raises(SystemExit) as exc:
            run(["phase1", workdir / "phase1.csv"])
        assert exc.value.code == 1
