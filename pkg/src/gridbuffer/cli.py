"""Command line entry points: single runs, baseline comparisons, ablation sweeps.

Exit codes: 0 success, 2 config error, 3 data error, 4 infeasible QoS,
5 forecaster bridge failure.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .config import RunConfig
from .engine import EpisodeReport, compare, run_baseline, run_fmcac
from .errors import ConfigError, GridBufferError
from .policies import make_policy

SWEEP_DIMENSIONS = ("deferred_weight", "battery_capacity", "region", "forecaster")

DEFERRED_WEIGHTS = [0.0, 0.15, 0.3, 0.5, 0.7, 1.0]
BATTERY_CAPACITIES_MWH = [5000.0, 10000.0, 18000.0, 20000.0, 30000.0, 40000.0, 50000.0]
FORECASTER_SWEEP = ["oracle", "seasonal_naive", "persistence"]


# ---------------------------------------------------------------------------
# Orchestration (importable; the click layer below only parses and writes)
# ---------------------------------------------------------------------------


def execute_run(cfg: RunConfig) -> EpisodeReport:
    """Run the configured policy on the configured episode."""
    episode = cfg.build_episode()
    catalog = cfg.build_catalog()
    qos = cfg.qos()
    params = cfg.battery()
    state = cfg.initial_state()
    controller = cfg.controller()
    if cfg.policy_name == "fmcac":
        forecaster = cfg.build_forecaster(episode)
        try:
            return run_fmcac(
                episode, catalog, qos, cfg.weights(), params, controller,
                cfg.solver(), forecaster, state,
            )
        finally:
            closer = getattr(forecaster, "close", None)
            if closer:
                closer()
    try:
        policy = make_policy(
            cfg.policy_name, catalog, qos, params, cfg.slot_hours,
            controller.inference_rate_hz, **cfg.policy_params(),
        )
    except TypeError as exc:
        raise ConfigError(f"bad parameters for policy {cfg.policy_name!r}: {exc}") from None
    return run_baseline(episode, policy, params, state)


def execute_compare(cfg: RunConfig) -> dict[str, EpisodeReport]:
    """All five policies on one episode with identical initial conditions."""
    reports: dict[str, EpisodeReport] = {}
    for name in ("rw", "ee", "dc", "ev", "fmcac"):
        reports[name] = execute_run(cfg.with_overrides({"policy": {"name": name}}))
    return reports


def sweep_points(cfg: RunConfig, dimension: str, values: list | None) -> list[tuple[str, RunConfig]]:
    """Resolve (label, config) pairs for one sweep dimension."""
    if dimension == "deferred_weight":
        if cfg.policy_name != "fmcac":
            raise ConfigError("deferred_weight sweeps require policy.name = fmcac")
        points = values if values is not None else DEFERRED_WEIGHTS
        return [
            (str(v), cfg.with_overrides({"solver.deferred_weight": float(v)})) for v in points
        ]
    if dimension == "battery_capacity":
        points = values if values is not None else BATTERY_CAPACITIES_MWH
        return [
            (str(int(v)), cfg.with_overrides({"battery.capacity_mwh": float(v)}))
            for v in points
        ]
    if dimension == "forecaster":
        if cfg.policy_name != "fmcac":
            raise ConfigError("forecaster sweeps require policy.name = fmcac")
        points = values if values is not None else FORECASTER_SWEEP
        return [
            (str(b), cfg.with_overrides({"forecaster.backend": str(b)})) for b in points
        ]
    if dimension == "region":
        regions = cfg.raw.get("sweep", {}).get("regions")
        if not regions:
            raise ConfigError("region sweeps need config key sweep.regions")
        names = values if values is not None else list(regions)
        pairs = []
        for name in names:
            if name not in regions:
                raise ConfigError(f"region {name!r} not in sweep.regions")
            spec = regions[name]
            pairs.append(
                (
                    str(name),
                    cfg.with_overrides(
                        {"traces.carbon": spec["carbon"], "traces.price": spec["price"]}
                    ),
                )
            )
        return pairs
    raise ConfigError(f"unknown sweep dimension {dimension!r}")


def execute_sweep(
    cfg: RunConfig, dimension: str, values: list | None = None
) -> list[tuple[str, EpisodeReport]]:
    return [(label, execute_run(point)) for label, point in sweep_points(cfg, dimension, values)]


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def _dump_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_report(out_dir: Path, cfg: RunConfig, report: EpisodeReport, stem: str = "report") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(out_dir / f"{stem}.json", {"config": cfg.raw, "report": report.to_dict()})
    if cfg.raw["output"]["slots_csv"]:
        with open(out_dir / f"{stem.replace('report', 'slots')}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["slot", "mode_id", "charge", "source", "carbon_g", "cost_usd",
                 "accuracy", "latency_ms", "battery_mwh", "grid_mwh"]
            )
            for rec in report.per_slot:
                row = rec.to_dict()
                writer.writerow(
                    [row["slot"], row["mode_id"], row["charge"], row["source"],
                     row["carbon_g"], row["cost_usd"], row["accuracy"],
                     row["latency_ms"], row["battery_mwh"], row["grid_mwh"]]
                )


def _echo_metrics(label: str, report: EpisodeReport) -> None:
    m = report.metrics()
    click.echo(
        f"{label}: carbon={m['carbon_g']:.3f} g  cost={m['cost_usd']:.6f} USD  "
        f"accuracy={m['accuracy']:.4f}  latency={m['latency_ms']:.1f} ms"
    )


# ---------------------------------------------------------------------------
# click commands
# ---------------------------------------------------------------------------


@click.group()
def cli():
    """Carbon-aware battery-buffered edge inference: simulation experiments."""


def _load(config_path: str, seed: int | None) -> RunConfig:
    cfg = RunConfig.from_file(config_path)
    if seed is not None:
        cfg = cfg.with_overrides({"seed": int(seed)})
    return cfg


def _out_dir(cfg: RunConfig, out: str | None) -> Path:
    return Path(out) if out else Path(cfg.raw["output"]["dir"])


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(), help="run-config JSON")
@click.option("--out", default=None, type=click.Path(), help="output directory")
@click.option("--seed", default=None, type=int, help="override the config seed")
def cmd_run(config_path, out, seed):
    """Run one policy on one episode and write report.json."""
    cfg = _load(config_path, seed)
    report = execute_run(cfg)
    out_dir = _out_dir(cfg, out)
    _write_report(out_dir, cfg, report)
    _echo_metrics(cfg.policy_name, report)
    click.echo(f"wrote {out_dir / 'report.json'}")


@cli.command("compare")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", default=None, type=click.Path())
@click.option("--seed", default=None, type=int)
def cmd_compare(config_path, out, seed):
    """Run all five policies on the same episode and write comparison.json/.csv."""
    cfg = _load(config_path, seed)
    reports = execute_compare(cfg)
    table = compare(reports, reference="rw")
    out_dir = _out_dir(cfg, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(
        out_dir / "comparison.json",
        {"config": cfg.raw, "reference": "rw",
         "policies": {n: r.to_dict() for n, r in reports.items()}, "table": table},
    )
    with open(out_dir / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "carbon_g", "cost_usd", "accuracy", "latency_ms"])
        for name, rep in reports.items():
            m = rep.metrics()
            writer.writerow([name, m["carbon_g"], m["cost_usd"], m["accuracy"], m["latency_ms"]])
    for name, rep in reports.items():
        _echo_metrics(name, rep)
    click.echo(f"wrote {out_dir / 'comparison.json'}")


@cli.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--dimension", required=True, type=click.Choice(SWEEP_DIMENSIONS))
@click.option("--values", default=None, help="comma-separated sweep points")
@click.option("--out", default=None, type=click.Path())
@click.option("--seed", default=None, type=int)
def cmd_sweep(config_path, dimension, values, out, seed):
    """Run one report per sweep point and write summary.csv."""
    cfg = _load(config_path, seed)
    parsed = None
    if values is not None:
        raw_items = [v.strip() for v in values.split(",") if v.strip()]
        parsed = (
            raw_items if dimension in ("region", "forecaster") else [float(v) for v in raw_items]
        )
    results = []
    out_dir = _out_dir(cfg, out)
    for label, point_cfg in sweep_points(cfg, dimension, parsed):
        report = execute_run(point_cfg)
        results.append((label, report))
        _write_report(out_dir, point_cfg, report, stem=f"report_{label}")
        _echo_metrics(f"{dimension}={label}", report)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "value", "policy", "carbon_g", "cost_usd",
                         "accuracy", "latency_ms"])
        for label, rep in results:
            m = rep.metrics()
            writer.writerow([dimension, label, rep.policy, m["carbon_g"], m["cost_usd"],
                             m["accuracy"], m["latency_ms"]])
    click.echo(f"wrote {out_dir / 'summary.csv'}")


def main():
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    except GridBufferError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
