"""Joint pipeline-variant x hardware operating-mode space.

A catalog is external data: declared pipelines and hardware operating
points joined with a profiled (latency, average power) table. Feasibility
filtering and the margin-based performance utility live here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterable, Sequence

from .errors import ConfigError, DataError, InfeasibleQosError
from .units import per_inference_mwh

MAX_ACCURACY = "max_accuracy"
MIN_ENERGY = "min_energy"
MAX_UTILITY = "max_utility"


@dataclass(frozen=True)
class PipelineConfig:
    """A fixed choice of model variant per pipeline stage, with benchmarked accuracy."""

    id: str
    stage_models: tuple[str, ...]
    accuracy: float

    def __post_init__(self):
        object.__setattr__(self, "stage_models", tuple(self.stage_models))
        if not self.stage_models:
            raise ConfigError(f"pipeline {self.id!r}: stage_models must be non-empty")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ConfigError(f"pipeline {self.id!r}: accuracy {self.accuracy} outside [0,1]")


@dataclass(frozen=True)
class HardwareConfig:
    id: str
    exec_unit: str
    clock_mhz: float
    active_cores: int
    power_mode: str

    def __post_init__(self):
        if self.clock_mhz <= 0:
            raise ConfigError(f"hardware {self.id!r}: clock_mhz must be positive")
        if self.active_cores < 1:
            raise ConfigError(f"hardware {self.id!r}: active_cores must be >= 1")


@dataclass(frozen=True)
class OperatingMode:
    """A profiled (pipeline, hardware) pair: accuracy, latency, energy per inference."""

    pipeline: PipelineConfig
    hardware: HardwareConfig
    latency_ms: float
    energy_per_inference_mwh: float

    def __post_init__(self):
        if self.latency_ms <= 0:
            raise ConfigError(f"{self.mode_id}: latency must be positive")
        if self.energy_per_inference_mwh <= 0:
            raise ConfigError(f"{self.mode_id}: energy must be positive")

    @property
    def accuracy(self) -> float:
        return self.pipeline.accuracy

    @property
    def mode_id(self) -> str:
        return f"{self.pipeline.id}@{self.hardware.id}"


@dataclass(frozen=True)
class QosConstraint:
    min_accuracy: float = 0.40
    max_latency_ms: float = 100.0

    def __post_init__(self):
        if not 0.0 <= self.min_accuracy <= 1.0:
            raise ConfigError("min_accuracy must lie in [0,1]")
        if self.max_latency_ms <= 0:
            raise ConfigError("max_latency_ms must be positive")

    def admits(self, mode: OperatingMode) -> bool:
        return mode.accuracy >= self.min_accuracy and mode.latency_ms <= self.max_latency_ms


@dataclass(frozen=True)
class UtilityWeights:
    """Objective weights: performance reward vs carbon and cost penalties.

    lambda_latency multiplies the inverse-latency margin and therefore
    carries units of milliseconds.
    """

    w_perf: float = 1.0
    w_carb: float = 1.0
    w_cost: float = 1.0
    lambda_latency: float = 10.0

    def __post_init__(self):
        for name in ("w_perf", "w_carb", "w_cost", "lambda_latency"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.w_perf == self.w_carb == self.w_cost == 0.0:
            raise ConfigError("at least one of w_perf/w_carb/w_cost must be positive")


def load_catalog(path) -> list[OperatingMode]:
    """Load a catalog JSON file (pipelines, hardware, profiles) into modes.

    Every profile row must reference declared ids, and each (pipeline,
    hardware) pair may be profiled at most once. Mode order follows the
    profile table.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
    return catalog_from_dict(doc, source=str(path))


def load_bundled_catalog(name: str) -> list[OperatingMode]:
    """Load one of the catalogs shipped with the package ('detection', 'tiny')."""
    ref = resources.files("gridbuffer.catalogs").joinpath(f"{name}.json")
    try:
        doc = json.loads(ref.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no bundled catalog named {name!r}") from None
    return catalog_from_dict(doc, source=f"bundled:{name}")


def catalog_from_dict(doc: dict, source: str = "<dict>") -> list[OperatingMode]:
    for key in ("pipelines", "hardware", "profiles"):
        if key not in doc:
            raise DataError(f"{source}: catalog missing {key!r} section")
    pipelines: dict[str, PipelineConfig] = {}
    for row in doc["pipelines"]:
        p = PipelineConfig(row["id"], tuple(row["stage_models"]), float(row["accuracy"]))
        if p.id in pipelines:
            raise DataError(f"{source}: duplicate pipeline id {p.id!r}")
        pipelines[p.id] = p
    hardware: dict[str, HardwareConfig] = {}
    for row in doc["hardware"]:
        h = HardwareConfig(
            row["id"], row["exec_unit"], float(row["clock_mhz"]),
            int(row["active_cores"]), row["power_mode"],
        )
        if h.id in hardware:
            raise DataError(f"{source}: duplicate hardware id {h.id!r}")
        hardware[h.id] = h

    modes: list[OperatingMode] = []
    seen: set[tuple[str, str]] = set()
    for row in doc["profiles"]:
        pid, hid = row["pipeline"], row["hardware"]
        if pid not in pipelines:
            raise DataError(f"{source}: profile references unknown pipeline {pid!r}")
        if hid not in hardware:
            raise DataError(f"{source}: profile references unknown hardware {hid!r}")
        if (pid, hid) in seen:
            raise DataError(f"{source}: duplicate profile row for ({pid!r}, {hid!r})")
        seen.add((pid, hid))
        latency = float(row["latency_ms"])
        modes.append(
            OperatingMode(
                pipeline=pipelines[pid],
                hardware=hardware[hid],
                latency_ms=latency,
                energy_per_inference_mwh=per_inference_mwh(float(row["avg_power_w"]), latency),
            )
        )
    if not modes:
        raise DataError(f"{source}: catalog has no profiled modes")
    return modes


def feasible_modes(catalog: Sequence[OperatingMode], qos: QosConstraint) -> list[OperatingMode]:
    """Modes meeting both QoS thresholds, in catalog order. Empty result raises."""
    feasible = [m for m in catalog if qos.admits(m)]
    if not feasible:
        raise InfeasibleQosError(
            f"no mode satisfies accuracy >= {qos.min_accuracy} and "
            f"latency <= {qos.max_latency_ms} ms"
        )
    return feasible


def perf_utility(mode: OperatingMode, qos: QosConstraint, weights: UtilityWeights) -> float:
    """Margin-based reward above the QoS thresholds (latency in ms)."""
    if not qos.admits(mode):
        raise ValueError(f"perf_utility undefined for QoS-infeasible mode {mode.mode_id}")
    acc_margin = max(mode.accuracy - qos.min_accuracy, 0.0)
    lat_margin = max(1.0 / mode.latency_ms - 1.0 / qos.max_latency_ms, 0.0)
    return acc_margin + weights.lambda_latency * lat_margin


def best_mode(
    catalog: Sequence[OperatingMode],
    qos: QosConstraint,
    criterion: str = MAX_ACCURACY,
    weights: UtilityWeights | None = None,
) -> OperatingMode:
    """Argmax/argmin over the feasible set.

    Ties break toward lower latency, then lower energy, then catalog order.
    """
    feasible = feasible_modes(catalog, qos)

    def tail(i: int, m: OperatingMode) -> tuple:
        return (m.latency_ms, m.energy_per_inference_mwh, i)

    if criterion == MAX_ACCURACY:
        key: Callable[[tuple[int, OperatingMode]], tuple] = lambda im: (
            -im[1].accuracy, *tail(*im))
    elif criterion == MIN_ENERGY:
        key = lambda im: (im[1].energy_per_inference_mwh, *tail(*im))
    elif criterion == MAX_UTILITY:
        w = weights if weights is not None else UtilityWeights()
        key = lambda im: (-perf_utility(im[1], qos, w), *tail(*im))
    else:
        raise ConfigError(f"unknown mode criterion {criterion!r}")
    return min(enumerate(feasible), key=key)[1]
