import json

import numpy as np
import pytest

from locsysid import cli
from locsysid.harness import ExperimentConfig, run_identify, run_simulate, run_sweep

QUICK_SOLVER = {"max_iters": 800}


def quick_config(tmp_path, **over):
    base = dict(
        system="paper-chain", measurement="full", node=0,
        N=200, M=100, r=8, delta=0.3, delta_h=0.02,
        seeds=[0], input_std=2.0, solver=QUICK_SOLVER,
        out_dir=str(tmp_path / "out"),
    )
    base.update(over)
    return ExperimentConfig(**base)


def write_config(tmp_path, cfg):
    path = tmp_path / "config.json"
    payload = dict(cfg.__dict__)
    path.write_text(json.dumps(payload))
    return str(path)


class TestExperimentConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="even"):
            ExperimentConfig(N=601)
        with pytest.raises(ValueError, match="smaller"):
            ExperimentConfig(N=600, M=600)
        with pytest.raises(ValueError, match="seed"):
            ExperimentConfig(seeds=[])
        with pytest.raises(ValueError, match="method"):
            ExperimentConfig(method="magic")

    def test_method_defaults_follow_measurement(self):
        assert ExperimentConfig(measurement="full").resolved_method == "robust"
        assert ExperimentConfig(measurement="hidden").resolved_method == "hidden-local"


class TestRunSimulate:
    def test_writes_csv_and_metadata(self, tmp_path):
        cfg = quick_config(tmp_path)
        out = run_simulate(cfg)
        lines = open(out["csv"]).read().splitlines()
        assert len(lines) == cfg.N + 2          # header + N+1 rows
        meta = json.loads(open(out["metadata"]).read())
        assert meta["seed"] == 0
        assert len(meta["spec_hash"]) == 64

    def test_zero_config_zero_csv(self, tmp_path):
        cfg = quick_config(tmp_path, input_std=0.0,
                           noise={"w": 0.0, "nu": 0.0, "nubar": 0.0})
        out = run_simulate(cfg)
        data = np.loadtxt(out["csv"], delimiter=",", skiprows=1)
        assert not np.any(data[:, 1:])

    def test_repeated_seed_byte_identical(self, tmp_path):
        cfg = quick_config(tmp_path)
        p1 = run_simulate(cfg, out_dir=str(tmp_path / "a"))["csv"]
        p2 = run_simulate(cfg, out_dir=str(tmp_path / "b"))["csv"]
        assert open(p1, "rb").read() == open(p2, "rb").read()


class TestRunIdentify:
    def test_full_mode_report(self, tmp_path):
        cfg = quick_config(tmp_path)
        report = run_identify(cfg)
        assert report["ok"]
        assert report["pe"]["passed"]
        assert report["truth"]["available"]
        assert report["solver"]["status"] in ("converged", "max_iters")
        assert "realization" in report
        # report written and parseable
        data = json.loads(open(report["outputs"]["report_json"]).read())
        assert data["system"]["hidden_dim"] == 0

    def test_hidden_mode_report(self, tmp_path):
        cfg = quick_config(tmp_path, measurement="hidden", delta=2.5, delta_h=0.05,
                           input_std=1.5)
        report = run_identify(cfg)
        assert report["system"]["hidden_dim"] == 1
        assert "hidden_component" in report
        assert report["hidden_component"]["freq_max_nuclear"] <= 0.05 * (1 + 1e-5)

    def test_exact_mode_pe_failure(self, tmp_path):
        cfg = quick_config(tmp_path, method="exact", active_nodes=[0],
                           noise={"w": 0.0, "nu": 0.0, "nubar": 0.0},
                           N=600, M=480, r=80)
        report = run_identify(cfg)
        assert not report["ok"]
        assert "excitation" in report["error"]


class TestRunSweep:
    def test_single_cell_table(self, tmp_path):
        cfg = quick_config(tmp_path, measurement="hidden", delta=2.5,
                           delta_grid=[2.5], delta_h_grid=[0.05], input_std=1.5)
        out = run_sweep(cfg)
        lines = open(out["csv"]).read().splitlines()
        assert lines[0].startswith("delta,delta_h,seed,sigma_1")
        assert len(lines) == 2
        row = out["rows"][0]
        assert row["status"] in ("converged", "max_iters")
        assert np.isfinite(row["error_fro"])

    def test_empty_grid_rejected(self, tmp_path):
        cfg = quick_config(tmp_path, delta_grid=[])
        with pytest.raises(ValueError, match="nonempty"):
            run_sweep(cfg)

    def test_failed_cell_recorded_not_raised(self, tmp_path):
        # delta below the residual floor: infeasible, recorded in-status
        cfg = quick_config(tmp_path, delta_grid=[1e-9], delta_h_grid=[0.05],
                           measurement="hidden", input_std=1.5)
        out = run_sweep(cfg)
        assert len(out["rows"]) == 1
        assert out["rows"][0]["status"] in ("infeasible", "max_iters")


class TestCli:
    def test_simulate_and_identify_roundtrip(self, tmp_path, capsys):
        cfg = quick_config(tmp_path)
        path = write_config(tmp_path, cfg)
        assert cli.main(["simulate", "--config", path]) == 0
        assert cli.main(["identify", "--config", path,
                         "--out", str(tmp_path / "idout")]) == 0
        report = json.loads((tmp_path / "idout" / "report_seed0.json").read_text())
        assert report["ok"]

    def test_identify_exit_code_on_pe_failure(self, tmp_path):
        cfg = quick_config(tmp_path, method="exact", active_nodes=[0],
                           noise={"w": 0.0, "nu": 0.0, "nubar": 0.0},
                           N=600, M=480, r=80)
        path = write_config(tmp_path, cfg)
        assert cli.main(["identify", "--config", path]) == 1

    def test_sweep_cli(self, tmp_path):
        cfg = quick_config(tmp_path, measurement="hidden", delta_grid=[2.5],
                           delta_h_grid=[0.05], input_std=1.5)
        path = write_config(tmp_path, cfg)
        assert cli.main(["sweep", "--config", path]) == 0
        assert (tmp_path / "out" / "sweep.csv").exists()

    def test_usage_error_on_empty_grid(self, tmp_path):
        cfg = quick_config(tmp_path, delta_grid=[])
        path = write_config(tmp_path, cfg)
        assert cli.main(["sweep", "--config", path]) == 2

    def test_repro_paper_exit_codes(self, monkeypatch, tmp_path):
        calls = {}

        def fake_run_repro(out_dir="out", seeds=(0,), solver=None, progress=print):
            calls["seeds"] = list(seeds)
            return {"passed": calls.setdefault("ok", True)}

        monkeypatch.setattr(cli, "run_repro", fake_run_repro)
        assert cli.main(["repro-paper", "--out", str(tmp_path)]) == 0
        assert calls["seeds"] == [0, 1, 2, 3, 4]
        calls["ok"] = False
        calls.pop("seeds")
        assert cli.main(["repro-paper", "--seed", "3"]) == 1
        assert calls["seeds"] == [3]

    def test_missing_config_is_usage_error(self, tmp_path):
        assert cli.main(["identify", "--config", str(tmp_path / "nope.json")]) == 2
