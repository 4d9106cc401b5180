import csv
import json
import sys

import pytest

from gridbuffer.cli import main
from gridbuffer.config import DEFAULTS, RunConfig
from gridbuffer.errors import ConfigError


def run_cli(monkeypatch, capsys, *args):
    monkeypatch.setattr(sys, "argv", ["gridbuffer", *args])
    code = 0
    try:
        main()
    except SystemExit as exc:
        code = exc.code or 0
    out, err = capsys.readouterr()
    return code, out, err


def base_config(**overrides):
    doc = {
        "seed": 7,
        "episode_slots": 48,
        "traces": {
            "carbon": {"synthetic": {"kind": "diurnal", "mean": 300.0, "amplitude": 150.0,
                                     "period_slots": 12, "noise_std": 10.0}},
            "price": {"synthetic": {"kind": "constant", "value": 0.05}},
        },
        "catalog": "tiny",
        "solver": {"horizon": 8, "battery_levels": 10},
        "controller": {"reforecast_interval": 8, "cold_start_slots": 8, "num_samples": 4},
        "forecaster": {"backend": "seasonal_naive", "period": 12},
        "policy": {"name": "rw"},
        "output": {"slots_csv": True},
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def config_file(tmp_path):
    def write(**overrides):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(base_config(**overrides)))
        return str(path)

    return write


class TestRun:
    def test_rw_writes_report(self, tmp_path, config_file, monkeypatch, capsys):
        out = tmp_path / "out"
        code, stdout, _ = run_cli(monkeypatch, capsys, "run", "--config", config_file(),
                                  "--out", str(out))
        assert code == 0
        doc = json.loads((out / "report.json").read_text())
        for key in ("total_carbon_g", "total_cost_usd", "mean_accuracy", "mean_latency_ms"):
            assert key in doc["report"]
        assert (out / "slots.csv").exists()
        with open(out / "slots.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:4] == ["slot", "mode_id", "charge", "source"]
        assert len(rows) == 1 + 48

    def test_missing_config_file(self, tmp_path, monkeypatch, capsys):
        code, _, err = run_cli(monkeypatch, capsys, "run", "--config",
                               str(tmp_path / "nope.json"))
        assert code == 2
        assert "nope.json" in err

    def test_missing_catalog_path(self, tmp_path, config_file, monkeypatch, capsys):
        path = config_file(catalog={"path": str(tmp_path / "ghost.json")})
        code, _, err = run_cli(monkeypatch, capsys, "run", "--config", path)
        assert code == 2
        assert "ghost.json" in err

    def test_unknown_config_key(self, tmp_path, monkeypatch, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"battery": {"capacity_wh": 18}}))
        code, _, err = run_cli(monkeypatch, capsys, "run", "--config", str(path))
        assert code == 2
        assert "capacity_wh" in err

    def test_infeasible_qos_exit_code(self, config_file, monkeypatch, capsys, tmp_path):
        path = config_file(qos={"min_accuracy": 0.99, "max_latency_ms": 100.0})
        code, _, err = run_cli(monkeypatch, capsys, "run", "--config", path,
                               "--out", str(tmp_path / "o"))
        assert code == 4

    def test_malformed_trace_csv_exit_code(self, tmp_path, config_file, monkeypatch, capsys):
        bad = tmp_path / "c.csv"
        bad.write_text("timestamp,value\n2023-01-01T00:00:00Z,abc\n")
        path = config_file(traces={
            "carbon": {"csv": str(bad)},
            "price": {"synthetic": {"kind": "constant", "value": 0.05}},
        })
        code, _, err = run_cli(monkeypatch, capsys, "run", "--config", path,
                               "--out", str(tmp_path / "o"))
        assert code == 3

    def test_bridge_spawn_failure_exit_code(self, tmp_path, config_file, monkeypatch, capsys):
        path = config_file(
            policy={"name": "fmcac"},
            forecaster={"backend": "bridge", "cmd": [str(tmp_path / "missing-bin")]},
        )
        code, _, err = run_cli(monkeypatch, capsys, "run", "--config", path,
                               "--out", str(tmp_path / "o"))
        assert code == 5

    def test_byte_identical_reruns(self, tmp_path, config_file, monkeypatch, capsys):
        path = config_file(policy={"name": "fmcac"})
        for name in ("a", "b"):
            code, _, _ = run_cli(monkeypatch, capsys, "run", "--config", path,
                                 "--out", str(tmp_path / name))
            assert code == 0
        a = (tmp_path / "a" / "report.json").read_bytes()
        b = (tmp_path / "b" / "report.json").read_bytes()
        assert a == b

    def test_seed_override_changes_noisy_trace(self, tmp_path, config_file, monkeypatch, capsys):
        path = config_file()
        run_cli(monkeypatch, capsys, "run", "--config", path, "--out", str(tmp_path / "s7"))
        run_cli(monkeypatch, capsys, "run", "--config", path, "--seed", "8",
                "--out", str(tmp_path / "s8"))
        a = json.loads((tmp_path / "s7" / "report.json").read_text())
        b = json.loads((tmp_path / "s8" / "report.json").read_text())
        assert a["report"]["total_carbon_g"] != b["report"]["total_carbon_g"]
        assert b["config"]["seed"] == 8


class TestCompare:
    def test_five_policy_table(self, tmp_path, config_file, monkeypatch, capsys):
        out = tmp_path / "cmp"
        code, _, _ = run_cli(monkeypatch, capsys, "compare", "--config", config_file(),
                             "--out", str(out))
        assert code == 0
        with open(out / "comparison.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["policy", "carbon_g", "cost_usd", "accuracy", "latency_ms"]
        assert [r[0] for r in rows[1:]] == ["rw", "ee", "dc", "ev", "fmcac"]
        doc = json.loads((out / "comparison.json").read_text())
        assert doc["reference"] == "rw"
        assert set(doc["table"]) == {"rw", "ee", "dc", "ev", "fmcac"}

    def test_single_feasible_mode_gives_identical_accuracy(self, tmp_path, monkeypatch, capsys):
        catalog = {
            "pipelines": [{"id": "only", "stage_models": ["only"], "accuracy": 0.5}],
            "hardware": [{"id": "h", "exec_unit": "GPU", "clock_mhz": 612,
                          "active_cores": 4, "power_mode": "15W"}],
            "profiles": [{"pipeline": "only", "hardware": "h", "latency_ms": 50,
                          "avg_power_w": 5.0}],
        }
        cat_path = tmp_path / "one.json"
        cat_path.write_text(json.dumps(catalog))
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(base_config(catalog={"path": str(cat_path)})))
        out = tmp_path / "cmp"
        code, _, _ = run_cli(monkeypatch, capsys, "compare", "--config", str(cfg_path),
                             "--out", str(out))
        assert code == 0
        doc = json.loads((out / "comparison.json").read_text())
        accs = {row["accuracy"] for row in doc["table"].values()}
        assert accs == {0.5}


class TestSweep:
    def test_deferred_weight_sweep_files(self, tmp_path, config_file, monkeypatch, capsys):
        out = tmp_path / "sweep"
        path = config_file(policy={"name": "fmcac"})
        code, _, _ = run_cli(
            monkeypatch, capsys, "sweep", "--config", path, "--dimension",
            "deferred_weight", "--values", "0,0.5", "--out", str(out),
        )
        assert code == 0
        assert (out / "report_0.0.json").exists()
        assert (out / "report_0.5.json").exists()
        with open(out / "summary.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 3
        assert rows[1][0] == "deferred_weight"

    def test_battery_capacity_defaults(self, tmp_path, config_file, monkeypatch, capsys):
        out = tmp_path / "sweep"
        code, _, _ = run_cli(
            monkeypatch, capsys, "sweep", "--config", config_file(), "--dimension",
            "battery_capacity", "--values", "10000,18000", "--out", str(out),
        )
        assert code == 0
        assert (out / "report_10000.json").exists()

    def test_unknown_dimension_is_usage_error(self, config_file, monkeypatch, capsys):
        code, _, err = run_cli(
            monkeypatch, capsys, "sweep", "--config", config_file(),
            "--dimension", "voltage",
        )
        assert code == 2

    def test_region_sweep_requires_config(self, config_file, monkeypatch, capsys):
        code, _, err = run_cli(
            monkeypatch, capsys, "sweep", "--config", config_file(),
            "--dimension", "region",
        )
        assert code == 2
        assert "sweep.regions" in err

    def test_region_sweep_with_synthetic_regions(self, tmp_path, monkeypatch, capsys):
        regions = {
            "clean": {"carbon": {"synthetic": {"kind": "constant", "value": 50.0}},
                      "price": {"synthetic": {"kind": "constant", "value": 0.02}}},
            "dirty": {"carbon": {"synthetic": {"kind": "constant", "value": 500.0}},
                      "price": {"synthetic": {"kind": "constant", "value": 0.08}}},
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(base_config(sweep={"regions": regions})))
        out = tmp_path / "regions"
        code, _, _ = run_cli(
            monkeypatch, capsys, "sweep", "--config", str(cfg_path),
            "--dimension", "region", "--out", str(out),
        )
        assert code == 0
        with open(out / "summary.csv") as fh:
            rows = {r[1]: float(r[3]) for r in list(csv.reader(fh))[1:]}
        assert rows["clean"] < rows["dirty"]


class TestConfigModel:
    def test_defaults_materialized_roundtrip(self):
        cfg = RunConfig.from_dict({"seed": 3})
        again = RunConfig.from_dict(cfg.raw)
        assert cfg.raw == again.raw
        assert cfg.raw["solver"]["horizon"] == 96
        assert cfg.raw["battery"]["capacity_mwh"] == 18000.0

    def test_defaults_match_published_settings(self):
        assert DEFAULTS["solver"]["horizon"] == 96
        assert DEFAULTS["solver"]["battery_levels"] == 100
        assert DEFAULTS["solver"]["discount"] == 0.998
        assert DEFAULTS["solver"]["deferred_weight"] == 0.3
        assert DEFAULTS["controller"]["reforecast_interval"] == 96
        assert DEFAULTS["controller"]["cold_start_slots"] == 96
        assert DEFAULTS["controller"]["context_cap"] == 1344
        assert DEFAULTS["controller"]["num_samples"] == 20
        assert DEFAULTS["battery"]["charge_power_w"] == 20.0
        assert DEFAULTS["battery"]["charge_efficiency"] == 0.90
        assert DEFAULTS["battery"]["peukert_exponent"] == 1.05
        assert DEFAULTS["qos"] == {"min_accuracy": 0.40, "max_latency_ms": 100.0}
        assert DEFAULTS["episode_slots"] == 2880
        assert DEFAULTS["slot_hours"] == 0.25

    def test_override_paths(self):
        cfg = RunConfig.from_dict({})
        tweaked = cfg.with_overrides({"solver.deferred_weight": 0.7})
        assert tweaked.raw["solver"]["deferred_weight"] == 0.7
        with pytest.raises(ConfigError):
            cfg.with_overrides({"solver.nonexistent": 1})

    def test_trace_spec_xor(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(
                {"traces": {"carbon": {"csv": "x", "synthetic": {"kind": "constant", "value": 1}},
                            "price": {"synthetic": {"kind": "constant", "value": 1}}}}
            )

    def test_initial_soc_respects_window(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"battery": {"initial_soc_frac": 0.9}})

    def test_episode_index_slicing(self):
        cfg = RunConfig.from_dict(
            {"episode_slots": 10,
             "traces": {"carbon": {"synthetic": {"kind": "constant", "value": 10.0}},
                        "price": {"synthetic": {"kind": "constant", "value": 0.05}},
                        "episode_index": 0}}
        )
        episode = cfg.build_episode()
        assert episode.length_slots == 10
