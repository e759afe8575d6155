from pathlib import Path

import pytest

from partialfl.cli import main
from partialfl.config import ConfigError, ExperimentConfig, format_capacities, parse_capacities, two_point
from partialfl.reporting import read_jsonl

ROOT = Path(__file__).resolve().parents[1]
FAST = ["--set", "clients=10", "--set", "cohort=3", "--set", "classes=4", "--set", "dim=5",
        "--set", "per_class=20", "--set", "test_per_class=10", "--set", "hidden=16",
        "--set", "milestones=", "--set", "rounds=4", "--eval-every", "2"]


class TestConfig:
    def test_text_round_trip(self):
        cfg = ExperimentConfig(scheme="static", capacities=two_point(0.3), milestones=(5, 9), hidden=(8, 4), seeds=(1, 2))
        assert ExperimentConfig.from_text(cfg.to_text()) == cfg

    def test_smoke_config_loads(self):
        cfg = ExperimentConfig.load(ROOT / "configs" / "smoke.conf").validate()
        assert cfg.clients == 100 and cfg.cohort == 10 and cfg.rounds >= 300 and len(cfg.seeds) == 5

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as err:
            ExperimentConfig.from_text("colour = red\n")
        assert err.value.field == "colour"

    @pytest.mark.parametrize("changes,field", [
        ({"cohort": 0}, "cohort"),
        ({"scheme": "zigzag"}, "scheme"),
        ({"gamma": 2}, "capacities"),
        ({"milestones": (400,)}, "milestones"),
        ({"hidden": (8,)}, "capacities"),
        ({"partition": "labels:11"}, "partition"),
    ])
    def test_validation_names_field(self, changes, field):
        with pytest.raises(ConfigError) as err:
            ExperimentConfig().replace(**changes).validate()
        assert err.value.field == field

    def test_capacity_parsing(self):
        assert parse_capacities("rho:0.25") == two_point(0.25)
        pairs = parse_capacities("1:0.5, 0.5:0.5")
        assert parse_capacities(format_capacities(pairs)) == pairs
        with pytest.raises(ValueError):
            parse_capacities("lopsided")


class TestCli:
    def test_lemmas(self, capsys, tmp_path):
        assert main(["lemmas", "--max-i", "10", "--m", "2", "--trials", "4000", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "10/10 Monte Carlo means within 3 standard errors" in out
        assert len(read_jsonl(tmp_path / "lemmas_m2.jsonl")) == 10
        assert (tmp_path / "lemmas_m2.png").exists()

    def test_run_zero_rounds(self, tmp_path, capsys):
        args = ["run", *FAST, "--set", "rounds=0", "--out", str(tmp_path)]
        assert main(args) == 0
        assert "no rounds run" in capsys.readouterr().out
        assert (tmp_path / "model_seed0.fmd").exists()

    def test_run_writes_artifacts(self, tmp_path):
        assert main(["run", *FAST, "--seed", "0", "--seed", "1", "--out", str(tmp_path)]) == 0
        rows = read_jsonl(tmp_path / "metrics.jsonl")
        assert [r["round"] for r in rows[:-1]] == [2, 4, 2, 4]
        assert rows[-1]["seeds"] == [0, 1]
        for name in ("config.txt", "accuracy.png", "model_seed0.fmd", "model_seed1.fmd"):
            assert (tmp_path / name).exists()

    def test_sweep_rho(self, tmp_path):
        args = ["sweep", *FAST, "--rho", "0,1", "--scheme", "rolling,static", "--no-plots", "--out", str(tmp_path)]
        assert main(args) == 0
        assert len(list(tmp_path.glob("rho*_seed0.jsonl"))) == 4
        assert len(list(tmp_path.glob("rho*_seed0.fmd"))) == 4
        assert len(read_jsonl(tmp_path / "sweep_rho_summary.jsonl")) == 4

    def test_sweep_needs_one_axis(self, tmp_path, capsys):
        assert main(["sweep", *FAST, "--out", str(tmp_path)]) == 2
        assert "sweep" in capsys.readouterr().err

    def test_cost(self, capsys, tmp_path):
        assert main(["cost", "--rounds", "50", "--out", str(tmp_path)]) == 0
        d = read_jsonl(tmp_path / "cost.jsonl")[0]
        assert d["client_rounds"] == 500
        assert "expected_params" in capsys.readouterr().out

    def test_partition_stats(self, capsys):
        assert main(["partition-stats", *FAST]) == 0
        line = next(l for l in capsys.readouterr().out.splitlines() if "labels per client" in l)
        assert line.split()[-1] == "2/2"

    def test_bad_field_exit_code(self, capsys):
        assert main(["run", "--set", "cohort=500"]) == 2
        assert "invalid config field cohort" in capsys.readouterr().err

    def test_unknown_set_key(self, capsys):
        assert main(["run", "--set", "colour=red"]) == 2

    def test_missing_config_file(self, capsys, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.conf")]) == 2
        assert "config" in capsys.readouterr().err
