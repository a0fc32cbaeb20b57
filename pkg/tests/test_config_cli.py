"""Tests for config parsing, CSV persistence, and the command-line interface."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from flocosim.cli import main
from flocosim.config import config_to_dict, parse_config
from flocosim.federation import FederationConfig
from flocosim.metrics import RoundMetrics
from flocosim.runner import metrics_to_csv, read_metrics_csv, run_sweep, write_metrics

FAST_YAML = """
n_clients: 4
rounds: 4
participants: 2
local_epochs: 1
tau: 2
simplex_dim: 2
n_per_class: 20
n_classes: 3
input_dim: 4
hidden_dim: 5
eval_interval: 2
"""


class TestParseConfig:
    def test_empty_gives_defaults(self):
        cfg = parse_config("")
        assert cfg == FederationConfig()
        assert cfg.n_clients == 20
        assert cfg.rounds == 200
        assert cfg.gamma == 0.05
        assert cfg.tau == 100
        assert cfg.strategy == "floco"
        assert cfg.lam == 1.0

    def test_tau_zero_rejected(self):
        with pytest.raises(ValueError, match="tau"):
            parse_config("tau: 0")

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config("learning_rate: 0.1")

    def test_ignored_field_warns(self):
        with pytest.warns(UserWarning, match="ignored by strategy"):
            cfg = parse_config("strategy: fedavg\nmu: 0.5")
        assert cfg.mu == 0.5

    def test_lambda_alias(self):
        cfg = parse_config("strategy: ditto\nlambda: 0.25")
        assert cfg.lam == 0.25

    def test_non_mapping_rejected(self):
        with pytest.raises(ValueError):
            parse_config("- a\n- b")

    def test_manifest_replay(self, tmp_path):
        cfg = parse_config(FAST_YAML)
        manifest = run_sweep(cfg, 1, tmp_path)
        replayed = parse_config(json.dumps(manifest))
        assert replayed == cfg

    def test_roundtrip_through_dict(self):
        cfg = parse_config("rho: 0.25\nsimplex_dim: 3\ntau: 50")
        d = config_to_dict(cfg)
        assert d["rho"] == 0.25 and d["simplex_dim"] == 3


class TestMetricsCsv:
    def _rows(self):
        return [
            RoundMetrics(10, 0.5, 0.6, 0.1, 0.2, 3.5, 0.4),
            RoundMetrics(20, 0.55, 0.65, 0.09, 0.19, 3.25, 0.45),
        ]

    def test_schema(self, tmp_path):
        path = tmp_path / "m.csv"
        write_metrics(self._rows(), path)
        text = path.read_text(encoding="utf-8")
        header = text.split("\n", 1)[0]
        assert header == (
            "round,global_acc,mean_local_acc,global_ece,"
            "mean_local_ece,total_grad_variance,worst5_local_acc"
        )
        assert "\r" not in text

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "m.csv"
        write_metrics(self._rows(), path)
        cols = read_metrics_csv(path)
        assert cols["round"] == [10.0, 20.0]
        assert cols["total_grad_variance"] == [3.5, 3.25]

    def test_nine_significant_digits(self):
        row = RoundMetrics(1, 1 / 3, 0.0, 0.0, 0.0, 0.0, 0.0)
        assert "0.333333333" in metrics_to_csv([row])


class TestCli:
    def _run(self, tmp_path, *extra):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(FAST_YAML, encoding="utf-8")
        runner = CliRunner()
        return runner, cfg_path

    def test_run_writes_metrics_and_manifest(self, tmp_path):
        runner, cfg_path = self._run(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["run", "--config", str(cfg_path), "--out", str(out), "--seeds", "2"]
        )
        assert result.exit_code == 0, result.output
        assert (out / "metrics_floco_seed0.csv").exists()
        assert (out / "metrics_floco_seed1.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["n_clients"] == 4
        assert manifest["n_seeds"] == 2

    def test_rerun_is_byte_identical(self, tmp_path):
        runner, cfg_path = self._run(tmp_path)
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = runner.invoke(main, ["run", "--config", str(cfg_path), "--out", str(out)])
            assert result.exit_code == 0, result.output
            blobs.append((out / "metrics_floco_seed0.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_manifest_replay_reproduces(self, tmp_path):
        runner, cfg_path = self._run(tmp_path)
        out1 = tmp_path / "first"
        runner.invoke(main, ["run", "--config", str(cfg_path), "--out", str(out1)])
        out2 = tmp_path / "second"
        result = runner.invoke(
            main, ["run", "--config", str(out1 / "manifest.json"), "--out", str(out2)]
        )
        assert result.exit_code == 0, result.output
        assert (out1 / "metrics_floco_seed0.csv").read_bytes() == (
            out2 / "metrics_floco_seed0.csv"
        ).read_bytes()

    def test_strategy_override(self, tmp_path):
        runner, cfg_path = self._run(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["run", "--config", str(cfg_path), "--out", str(out), "--strategy", "fedavg"],
        )
        assert result.exit_code == 0, result.output
        assert (out / "metrics_fedavg_seed0.csv").exists()

    def test_surface_row_counts(self, tmp_path):
        runner, cfg_path = self._run(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["surface", "--config", str(cfg_path), "--out", str(out), "--n-points", "25"],
        )
        assert result.exit_code == 0, result.output
        text = (out / "surface_global.csv").read_text(encoding="utf-8")
        lines = text.strip().split("\n")
        assert lines[0].startswith("alpha_0,alpha_1,alpha_2,loss,accuracy,tag")
        assert len(lines) == 1 + 25 + 1 + 3  # header + samples + center + vertices
        for k in range(4):
            assert (out / f"surface_client{k}.csv").exists()

    def test_partition_stats(self, tmp_path):
        runner, cfg_path = self._run(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["partition-stats", "--config", str(cfg_path), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        lines = (out / "partition_stats.csv").read_text().strip().split("\n")
        assert lines[0] == "client_id,class_id,count"
        assert len(lines) == 1 + 4 * 3  # every (client, class) pair

    def test_compare_self_is_identity(self, tmp_path):
        runner, cfg_path = self._run(tmp_path)
        out = tmp_path / "out"
        runner.invoke(main, ["run", "--config", str(cfg_path), "--out", str(out)])
        csv = str(out / "metrics_floco_seed0.csv")
        result = runner.invoke(main, ["compare", csv, csv])
        assert result.exit_code == 0, result.output
        assert "tta_improvement_global: x1 (reached)" in result.output
        for line in result.output.strip().split("\n"):
            if line.startswith("final_"):
                assert float(line.split(": ")[1]) == 0.0

    def test_bad_config_fails_nonzero(self, tmp_path):
        cfg_path = tmp_path / "bad.yaml"
        cfg_path.write_text("tau: 0\n", encoding="utf-8")
        result = CliRunner().invoke(main, ["run", "--config", str(cfg_path)])
        assert result.exit_code != 0
