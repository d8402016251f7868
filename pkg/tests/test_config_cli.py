"""Config round-trip and CLI surface tests (exit codes, CSV reproducibility)."""

import json
import math

import numpy as np
import pytest

from aoimc.cli import main
from aoimc.config import ExperimentConfig


class TestDefaults:
    def test_reference_operating_point(self):
        cfg = ExperimentConfig()
        assert cfg.info_bits == 160
        assert cfg.blocklength == 100
        assert cfg.symbol_duration_ms == 0.005
        assert cfg.arrival_rate == 1.0
        assert cfg.paoi_threshold_ms == 8.0
        assert cfg.max_violation == 0.001
        assert cfg.max_total_power_dbm == 50.0
        assert cfg.n_packets == 100_000
        assert cfg.plant_a == [[1.17, 0.67], [0.67, 0.37]]
        assert cfg.plant_b == [[0.67], [0.37]]
        assert cfg.plant_noise_cov == [[1e-6, 0.0], [0.0, 1e-6]]

    def test_derived_builders(self):
        cfg = ExperimentConfig()
        assert cfg.fbl_config().service_time_ms == pytest.approx(0.5)
        assert cfg.link_budget().mean_branch_snr == pytest.approx(10 ** 1.2)
        plant = cfg.plant_model()
        assert plant.timestep_ms == pytest.approx(0.5)
        assert plant.state_threshold is not None and plant.state_threshold > 0


class TestRoundTrip:
    def test_json_round_trip_defaults(self):
        cfg = ExperimentConfig()
        again = ExperimentConfig.from_json(cfg.to_json())
        assert again == cfg

    def test_json_round_trip_modified(self, tmp_path):
        cfg = ExperimentConfig(tx_power_dbm=31.5, connections=7, seed=99,
                               zeta_sweep=[2.5, 9.0])
        path = tmp_path / "cfg.json"
        cfg.save(path)
        assert ExperimentConfig.load(path) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"transmi_power": 3})


class TestCliExitCodes:
    def test_usage_error_unknown_figure(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["figures", "--figure", "fig99"])
        assert exc.value.code == 2

    def test_usage_error_missing_command(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_usage_error_empty_k_sweep(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg = ExperimentConfig(k_sweep=[], out_dir=str(tmp_path / "out"))
        cfg.save(cfg_path)
        assert main(["--config", str(cfg_path), "blep"]) == 2

    def test_infeasible_exit(self, tmp_path):
        # violation cap below the error-free floor: exp(-7) > 1e-9 cap
        cfg = ExperimentConfig(max_violation=1e-9, out_dir=str(tmp_path / "out"))
        path = tmp_path / "cfg.json"
        cfg.save(path)
        assert main(["--config", str(path), "optimize"]) == 3

    def test_optimize_succeeds_at_defaults(self, tmp_path, capsys):
        assert main(["--out", str(tmp_path / "out"), "optimize"]) == 0
        out = capsys.readouterr().out
        assert "agreement: yes" in out
        assert "risk-constrained optimum: K=3" in out

    def test_fallback_12_reported(self, tmp_path, capsys):
        cfg = ExperimentConfig(max_total_power_dbm=35.0, out_dir=str(tmp_path / "out"))
        path = tmp_path / "cfg.json"
        cfg.save(path)
        assert main(["--config", str(path), "optimize"]) == 0
        assert "{1, 2} comparison" in capsys.readouterr().out


class TestCliEmitters:
    def test_blep_csv(self, tmp_path, capsys):
        cfg = ExperimentConfig(k_sweep=[1, 2], gamma_bar_sweep=[3.0, 7.906],
                               out_dir=str(tmp_path / "o"))
        path = tmp_path / "cfg.json"
        cfg.save(path)
        assert main(["--config", str(path), "blep"]) == 0
        lines = (tmp_path / "o" / "blep.csv").read_text().strip().splitlines()
        assert lines[0] == "gamma_bar,K,eps_closed,eps_quadrature,abs_diff"
        assert len(lines) == 1 + 4
        for line in lines[1:]:
            assert float(line.split(",")[4]) <= 1e-3

    def test_blep_single_point_value(self, tmp_path):
        cfg = ExperimentConfig(k_sweep=[1], gamma_bar_sweep=[7.906],
                               out_dir=str(tmp_path / "o"))
        path = tmp_path / "cfg.json"
        cfg.save(path)
        main(["--config", str(path), "blep"])
        row = (tmp_path / "o" / "blep.csv").read_text().strip().splitlines()[1]
        assert float(row.split(",")[2]) == pytest.approx(0.3929, abs=5e-4)

    def test_paoi_dist_and_aoi(self, tmp_path):
        out = str(tmp_path / "o")
        assert main(["--out", out, "paoi-dist"]) == 0
        assert main(["--out", out, "aoi"]) == 0
        assert (tmp_path / "o" / "paoi_dist.csv").exists()
        assert (tmp_path / "o" / "aoi.csv").exists()

    def test_simulate_reproducible(self, tmp_path):
        cfg = ExperimentConfig(n_packets=5_000, out_dir=str(tmp_path / "a"))
        p = tmp_path / "cfg.json"
        cfg.save(p)
        assert main(["--config", str(p), "simulate"]) == 0
        first = (tmp_path / "a" / "paoi_samples.csv").read_bytes()
        trace_first = (tmp_path / "a" / "aoi_trace.csv").read_bytes()
        assert main(["--config", str(p), "simulate"]) == 0
        assert (tmp_path / "a" / "paoi_samples.csv").read_bytes() == first
        assert (tmp_path / "a" / "aoi_trace.csv").read_bytes() == trace_first

    def test_seed_override_changes_output(self, tmp_path):
        cfg = ExperimentConfig(n_packets=5_000, out_dir=str(tmp_path / "a"))
        p = tmp_path / "cfg.json"
        cfg.save(p)
        main(["--config", str(p), "simulate"])
        first = (tmp_path / "a" / "paoi_samples.csv").read_bytes()
        main(["--config", str(p), "--seed", "123", "simulate"])
        assert (tmp_path / "a" / "paoi_samples.csv").read_bytes() != first

    def test_figures_fig8_fig10(self, tmp_path):
        out = str(tmp_path / "o")
        assert main(["--out", out, "figures", "--figure", "fig8"]) == 0
        assert main(["--out", out, "figures", "--figure", "fig10"]) == 0
        fig10 = (tmp_path / "o" / "fig10.csv").read_text().strip().splitlines()
        assert fig10[0].startswith("pt_dbm,k_opt,k_opt_risk")
        kopts = [int(r.split(",")[1]) for r in fig10[1:]]
        assert all(kopts[i] >= kopts[i + 1] for i in range(len(kopts) - 1))
