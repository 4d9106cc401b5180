"""Run configuration: one JSON document per experiment.

Defaults are materialized on load, unknown keys are rejected with their
dotted path, and every referenced file is checked up front. Sub-seeds are
derived deterministically from the top-level seed: carbon trace = seed,
price trace = seed + 1, forecaster = seed + 2.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .battery import BatteryParams, BatteryState
from .engine import ControllerConfig
from .errors import ConfigError, DataError
from .forecasting import (
    BridgeForecaster,
    Forecaster,
    OracleForecaster,
    PersistenceForecaster,
    SeasonalNaiveForecaster,
)
from .modes import OperatingMode, QosConstraint, UtilityWeights, load_bundled_catalog, load_catalog
from .solver import SolverConfig
from .traces import (
    CARBON,
    PRICE,
    Episode,
    SignalSeries,
    load_csv,
    profile_from_dict,
    synth_trace,
)

POLICY_NAMES = ("rw", "ee", "dc", "ev", "fmcac")
FORECASTER_BACKENDS = ("seasonal_naive", "persistence", "oracle", "bridge")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "slot_hours": 0.25,
    "episode_slots": 2880,
    "traces": {
        "carbon": {"synthetic": {"kind": "diurnal", "mean": 300.0, "amplitude": 200.0,
                                 "period_slots": 96, "noise_std": 20.0}},
        "price": {"synthetic": {"kind": "diurnal", "mean": 0.05, "amplitude": 0.03,
                                "period_slots": 96, "noise_std": 0.005}},
        "episode_index": 0,
    },
    "catalog": "detection",
    "qos": {"min_accuracy": 0.40, "max_latency_ms": 100.0},
    "weights": {"w_perf": 1.0, "w_carb": 1.0, "w_cost": 1.0, "lambda_latency": 10.0},
    "battery": {
        "capacity_mwh": 18000.0,
        "charge_power_w": 20.0,
        "charge_efficiency": 0.90,
        "peukert_exponent": 1.05,
        "nominal_voltage_v": 3.7,
        "reference_current_a": None,
        "soc_min_frac": 0.2,
        "soc_max_frac": 0.8,
        "forbid_charge_while_discharging": False,
        "initial_soc_frac": 0.5,
    },
    "solver": {
        "horizon": 96,
        "battery_levels": 100,
        "discount": 0.998,
        "deferred_weight": 0.3,
        "deferred_percentile": 10.0,
        "scale_deferred_by_confidence": True,
    },
    "controller": {
        "reforecast_interval": 96,
        "cold_start_slots": 96,
        "inference_rate_hz": 1.0,
        "context_cap": 1344,
        "num_samples": 20,
    },
    "forecaster": {"backend": "seasonal_naive", "period": 96, "timeout_s": 30.0, "cmd": None},
    "policy": {"name": "fmcac"},
    "output": {"dir": "out", "slots_csv": False},
    "sweep": {},
}

# Sections a user document replaces wholesale instead of key-merging.
_REPLACE_SECTIONS = {"traces.carbon", "traces.price", "policy", "sweep"}


def _merge(defaults: dict, user: dict, path: str = "") -> dict:
    if not isinstance(user, dict):
        raise ConfigError(f"config key {path or '<root>'}: expected an object")
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        child = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {child!r}")
        if child in _REPLACE_SECTIONS:
            out[key] = copy.deepcopy(value)
        elif isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, child)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    raw: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        resolved = _merge(DEFAULTS, doc, "")
        cfg = cls(raw=resolved)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    # -- typed accessors -------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def slot_hours(self) -> float:
        return float(self.raw["slot_hours"])

    @property
    def episode_slots(self) -> int:
        return int(self.raw["episode_slots"])

    def qos(self) -> QosConstraint:
        return QosConstraint(**self.raw["qos"])

    def weights(self) -> UtilityWeights:
        return UtilityWeights(**self.raw["weights"])

    def battery(self) -> BatteryParams:
        fields = {k: v for k, v in self.raw["battery"].items() if k != "initial_soc_frac"}
        return BatteryParams(**fields)

    def initial_state(self) -> BatteryState:
        params = self.battery()
        frac = float(self.raw["battery"]["initial_soc_frac"])
        if not params.soc_min_frac <= frac <= params.soc_max_frac:
            raise ConfigError(
                f"battery.initial_soc_frac {frac} outside the SoC window "
                f"[{params.soc_min_frac}, {params.soc_max_frac}]"
            )
        return BatteryState(frac * params.capacity_mwh)

    def solver(self) -> SolverConfig:
        return SolverConfig(**self.raw["solver"])

    def controller(self) -> ControllerConfig:
        return ControllerConfig(**self.raw["controller"])

    @property
    def policy_name(self) -> str:
        name = self.raw["policy"].get("name", "fmcac")
        if name == "mpc":
            name = "fmcac"
        if name not in POLICY_NAMES:
            raise ConfigError(f"policy.name must be one of {POLICY_NAMES}, got {name!r}")
        return name

    def policy_params(self) -> dict:
        return {k: v for k, v in self.raw["policy"].items() if k != "name"}

    def validate(self) -> None:
        self.qos()
        self.weights()
        self.battery()
        self.initial_state()
        self.solver()
        self.controller()
        _ = self.policy_name
        backend = self.raw["forecaster"]["backend"]
        if backend not in FORECASTER_BACKENDS:
            raise ConfigError(
                f"forecaster.backend must be one of {FORECASTER_BACKENDS}, got {backend!r}"
            )
        if backend == "bridge" and not self.raw["forecaster"].get("cmd"):
            raise ConfigError("forecaster.cmd is required for the bridge backend")
        if self.episode_slots < 1:
            raise ConfigError("episode_slots must be >= 1")
        if self.slot_hours <= 0:
            raise ConfigError("slot_hours must be positive")
        for signal in (CARBON, PRICE):
            spec = self.raw["traces"][signal]
            if not isinstance(spec, dict) or not ("csv" in spec) ^ ("synthetic" in spec):
                raise ConfigError(
                    f"traces.{signal} must hold exactly one of 'csv' or 'synthetic'"
                )
            if "csv" in spec and not Path(spec["csv"]).exists():
                raise ConfigError(f"traces.{signal}.csv file not found: {spec['csv']}")
        if isinstance(self.raw["catalog"], dict):
            path = self.raw["catalog"].get("path")
            if not path or not Path(path).exists():
                raise ConfigError(f"catalog.path file not found: {path}")

    # -- builders ---------------------------------------------------------

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """New config with dotted-path overrides applied, e.g.
        {"solver.deferred_weight": 0.5}."""
        doc = copy.deepcopy(self.raw)
        for dotted, value in overrides.items():
            node = doc
            parts = dotted.split(".")
            for part in parts[:-1]:
                if part not in node or not isinstance(node[part], dict):
                    raise ConfigError(f"override path {dotted!r} does not exist")
                node = node[part]
            if parts[-1] not in node:
                raise ConfigError(f"override path {dotted!r} does not exist")
            node[parts[-1]] = value
        return RunConfig.from_dict(doc)

    def build_catalog(self) -> list[OperatingMode]:
        spec = self.raw["catalog"]
        if isinstance(spec, str):
            return load_bundled_catalog(spec)
        return load_catalog(spec["path"])

    def _build_series(self, signal: str, seed: int) -> SignalSeries:
        spec = self.raw["traces"][signal]
        if "csv" in spec:
            return load_csv(spec["csv"], signal, self.slot_hours)
        profile = profile_from_dict(spec["synthetic"])
        # Synthetic pools are generated one episode long.
        return synth_trace(
            profile, self.episode_slots, seed, unit=signal, slot_hours=self.slot_hours
        )

    def build_episode(self) -> Episode:
        carbon = self._build_series(CARBON, self.seed)
        price = self._build_series(PRICE, self.seed + 1)
        T = self.episode_slots
        index = int(self.raw["traces"]["episode_index"])
        n = min(len(carbon), len(price))
        start = index * T
        if start + T > n:
            raise DataError(
                f"episode_index {index} needs slots [{start}, {start + T}), "
                f"but the pool has only {n}"
            )
        if start > 0 or n > T:
            carbon = carbon.slice(start, start + T)
            price = price.slice(start, start + T)
        return Episode(carbon=carbon, price=price, length_slots=T)

    def build_forecaster(self, episode: Episode) -> Forecaster | tuple[Forecaster, Forecaster]:
        spec = self.raw["forecaster"]
        backend = spec["backend"]
        if backend == "seasonal_naive":
            return SeasonalNaiveForecaster(period=int(spec["period"]), seed=self.seed + 2)
        if backend == "persistence":
            return PersistenceForecaster()
        if backend == "oracle":
            return (
                OracleForecaster(episode.carbon.values),
                OracleForecaster(episode.price.values),
            )
        if backend == "bridge":
            return BridgeForecaster(spec["cmd"], timeout_s=float(spec["timeout_s"]))
        raise ConfigError(f"unknown forecaster backend {backend!r}")
