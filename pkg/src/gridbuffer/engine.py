"""Simulation environment, the receding-horizon controller loop, and episode metrics.

Carbon and cost are attributed at the point of grid draw, priced with the
observed (never forecast) trace values. The controller re-solves the DP
every slot from sliced forecasts and executes only the first action.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import battery as batt
from .battery import Action, BatteryParams, BatteryState, Source
from .errors import ConfigError, ForecasterError, UndefinedMetricError
from .forecasting import (
    DEFAULT_CONTEXT_CAP,
    DEFAULT_NUM_SAMPLES,
    ForecastRequest,
    ForecastResult,
    Forecaster,
    confidence,
    forecast,
    mape,
    persistence_result,
)
from .modes import OperatingMode, QosConstraint, UtilityWeights, feasible_modes
from .policies import Policy, PolicyContext, cold_start_policy
from .solver import HorizonInputs, LocalPolicy, SolverConfig, dp_solve, lookup, tail_statistics
from .traces import Episode
from .units import mwh_to_kwh


@dataclass(frozen=True)
class ControllerConfig:
    reforecast_interval: int = 96  # slots between forecaster queries
    cold_start_slots: int = 96
    inference_rate_hz: float = 1.0
    context_cap: int = DEFAULT_CONTEXT_CAP
    num_samples: int = DEFAULT_NUM_SAMPLES

    def __post_init__(self):
        if self.reforecast_interval < 1:
            raise ConfigError("reforecast_interval must be >= 1")
        if self.cold_start_slots < 0:
            raise ConfigError("cold_start_slots must be >= 0")
        if self.inference_rate_hz < 0:
            raise ConfigError("inference_rate_hz must be >= 0")
        if self.context_cap < 1:
            raise ConfigError("context_cap must be >= 1")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    action: Action
    carbon_g: float
    cost_usd: float
    accuracy: float
    latency_ms: float
    battery_mwh_after: float
    grid_energy_mwh: float
    forecast_age: int = -1  # sliding index i, or -1 outside MPC control

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "mode_id": self.action.mode.mode_id,
            "charge": self.action.charge,
            "source": self.action.source.value,
            "carbon_g": self.carbon_g,
            "cost_usd": self.cost_usd,
            "accuracy": self.accuracy,
            "latency_ms": self.latency_ms,
            "battery_mwh": self.battery_mwh_after,
            "grid_mwh": self.grid_energy_mwh,
            "forecast_age": self.forecast_age,
        }


@dataclass
class EpisodeReport:
    policy: str
    total_carbon_g: float
    total_cost_usd: float
    mean_accuracy: float
    mean_latency_ms: float
    per_slot: list[SlotRecord] = field(repr=False)
    final_battery_mwh: float = 0.0
    forecast_mape_carbon: float | None = None
    forecaster_calls: int = 0
    forecast_fallbacks: int = 0

    def metrics(self) -> dict:
        return {
            "carbon_g": self.total_carbon_g,
            "cost_usd": self.total_cost_usd,
            "accuracy": self.mean_accuracy,
            "latency_ms": self.mean_latency_ms,
        }

    def to_dict(self, include_slots: bool = False) -> dict:
        doc = {
            "policy": self.policy,
            "total_carbon_g": self.total_carbon_g,
            "total_cost_usd": self.total_cost_usd,
            "mean_accuracy": self.mean_accuracy,
            "mean_latency_ms": self.mean_latency_ms,
            "final_battery_mwh": self.final_battery_mwh,
            "num_slots": len(self.per_slot),
            "forecast_mape_carbon": self.forecast_mape_carbon,
            "forecaster_calls": self.forecaster_calls,
            "forecast_fallbacks": self.forecast_fallbacks,
        }
        if include_slots:
            doc["slots"] = [rec.to_dict() for rec in self.per_slot]
        return doc


def repair_action(
    action: Action,
    battery_params: BatteryParams,
    state: BatteryState,
    inference_rate_hz: float,
    slot_hours: float,
) -> Action:
    """Make a level-table action admissible at the true battery state.

    Nearest-level snapping can hand back a Battery action just below the SoC
    floor's margin; the grid source is always admissible, so sourcing falls
    back to it (the mode and charge decisions are kept).
    """
    if action.source is Source.BATTERY:
        raw = batt.inference_energy(action.mode, inference_rate_hz, slot_hours)
        e_out = batt.peukert_factor(battery_params, raw, slot_hours) * raw
        e_in = batt.charge_inflow(battery_params, state, action.charge, slot_hours)
        if state.energy_mwh + e_in - e_out < battery_params.floor_mwh:
            action = Action(action.mode, action.charge, Source.GRID)
    if action.charge and state.energy_mwh >= battery_params.ceiling_mwh:
        action = Action(action.mode, 0, action.source)
    return action


def env_step(
    episode: Episode,
    t: int,
    action: Action,
    battery_params: BatteryParams,
    battery_state: BatteryState,
    inference_rate_hz: float,
    slot_hours: float,
    forecast_age: int = -1,
) -> tuple[BatteryState, SlotRecord]:
    """Apply one action against the true trace values at slot t."""
    raw = batt.inference_energy(action.mode, inference_rate_hz, slot_hours)
    new_state, grid_mwh, _ = batt.step(battery_params, battery_state, action, raw, slot_hours)
    g_t = float(episode.carbon.values[t])
    p_t = float(episode.price.values[t])
    grid_kwh = mwh_to_kwh(grid_mwh)
    record = SlotRecord(
        slot=t,
        action=action,
        carbon_g=g_t * grid_kwh,
        cost_usd=p_t * grid_kwh,
        accuracy=action.mode.accuracy,
        latency_ms=action.mode.latency_ms,
        battery_mwh_after=new_state.energy_mwh,
        grid_energy_mwh=grid_mwh,
        forecast_age=forecast_age,
    )
    return new_state, record


def _finish(policy_name: str, records: list[SlotRecord], **extra) -> EpisodeReport:
    return EpisodeReport(
        policy=policy_name,
        total_carbon_g=float(sum(r.carbon_g for r in records)),
        total_cost_usd=float(sum(r.cost_usd for r in records)),
        mean_accuracy=float(np.mean([r.accuracy for r in records])),
        mean_latency_ms=float(np.mean([r.latency_ms for r in records])),
        per_slot=records,
        final_battery_mwh=records[-1].battery_mwh_after,
        **extra,
    )


def run_baseline(
    episode: Episode,
    policy: Policy,
    battery_params: BatteryParams,
    initial_state: BatteryState,
) -> EpisodeReport:
    """Per-slot policy query plus environment step, with MPC-identical accounting."""
    batt.validate_state(battery_params, initial_state)
    policy.reset()
    slot_hours = episode.slot_hours
    state = initial_state
    g_hist: list[float] = []
    p_hist: list[float] = []
    records: list[SlotRecord] = []
    for t in range(episode.length_slots):
        g_t = float(episode.carbon.values[t])
        p_t = float(episode.price.values[t])
        ctx = PolicyContext(t, state, g_t, p_t, g_hist, p_hist)
        action = policy.select(ctx)
        state, record = env_step(
            episode, t, action, battery_params, state, policy.inference_rate_hz, slot_hours
        )
        records.append(record)
        g_hist.append(g_t)
        p_hist.append(p_t)
    return _finish(policy.name, records)


class _SignalForecaster:
    """Per-signal forecast bookkeeping: calls, persistence fallback, MAPE."""

    def __init__(self, backend: Forecaster, clip_zero: bool):
        self.backend = backend
        self.clip_zero = clip_zero
        self.calls = 0
        self.fallbacks = 0

    def produce(self, history: Sequence[float], horizon: int, num_samples: int,
                origin: int) -> ForecastResult:
        request = ForecastRequest(
            history=np.asarray(history, dtype=float),
            horizon=horizon,
            num_samples=num_samples,
            origin=origin,
        )
        self.calls += 1
        try:
            result = forecast(self.backend, request)
        except ForecasterError:
            self.fallbacks += 1
            result = persistence_result(history[-1], horizon)
        if self.clip_zero:
            result = ForecastResult(mean=np.maximum(result.mean, 0.0), std=result.std)
        return result


def run_fmcac(
    episode: Episode,
    catalog: Sequence[OperatingMode],
    qos: QosConstraint,
    weights: UtilityWeights,
    battery_params: BatteryParams,
    controller: ControllerConfig,
    solver_config: SolverConfig,
    forecaster: Forecaster | tuple[Forecaster, Forecaster],
    initial_state: BatteryState,
) -> EpisodeReport:
    """The forecast-driven MPC loop (config policy name: "fmcac").

    Cold start runs the carbon-threshold heuristic; afterwards the
    forecaster is queried every `reforecast_interval` slots for a 2H-step
    probabilistic forecast, and each slot solves the DP on the current
    H-step slice, executing only the first action.
    """
    T = episode.length_slots
    H = solver_config.horizon
    K = controller.reforecast_interval
    if K > H:
        raise ConfigError(f"reforecast_interval {K} must not exceed the horizon {H}")
    if T < controller.cold_start_slots:
        raise ConfigError(
            f"episode of {T} slots is shorter than the cold start ({controller.cold_start_slots})"
        )
    batt.validate_state(battery_params, initial_state)
    feasible_modes(catalog, qos)  # fail fast on infeasible QoS

    if isinstance(forecaster, (tuple, list)):
        backend_g, backend_p = forecaster
    else:
        backend_g = backend_p = forecaster
    fc_g = _SignalForecaster(backend_g, clip_zero=True)
    fc_p = _SignalForecaster(backend_p, clip_zero=False)

    slot_hours = episode.slot_hours
    rate = controller.inference_rate_hz
    cold = cold_start_policy(catalog, qos, battery_params, slot_hours, rate)

    state = initial_state
    g_hist: list[float] = []
    p_hist: list[float] = []
    records: list[SlotRecord] = []
    mapes: list[float] = []
    g_result: ForecastResult | None = None
    p_result: ForecastResult | None = None
    t_last = -1

    for t in range(T):
        g_t = float(episode.carbon.values[t])
        p_t = float(episode.price.values[t])
        g_hist.append(g_t)
        p_hist.append(p_t)

        if t < controller.cold_start_slots:
            ctx = PolicyContext(t, state, g_t, p_t, g_hist[:-1], p_hist[:-1])
            action = cold.select(ctx)
            state, record = env_step(
                episode, t, action, battery_params, state, rate, slot_hours
            )
            records.append(record)
            continue

        if g_result is None or (t - t_last) >= K:
            context = g_hist[-controller.context_cap:]
            g_result = fc_g.produce(context, 2 * H, controller.num_samples, origin=t + 1)
            p_result = fc_p.produce(
                p_hist[-controller.context_cap:], 2 * H, controller.num_samples, origin=t + 1
            )
            t_last = t
            actual = episode.carbon.values[t + 1 : t + 1 + 2 * H]
            if actual.size:
                try:
                    mapes.append(mape(g_result.mean[: actual.size], actual))
                except UndefinedMetricError:
                    pass  # all-zero actuals leave this event unmeasured

        i = t - t_last
        if i + H > 2 * H:
            raise AssertionError("sliding-window contract violated: i + H > 2H")
        g_f = g_result.mean[i : i + H]
        p_f = p_result.mean[i : i + H]
        rho = confidence(g_result.std[i : i + H], p_result.std[i : i + H], g_f, p_f)
        tail_c, tail_p = tail_statistics(
            g_result.mean, p_result.mean, i + H, solver_config.deferred_percentile
        )
        local = dp_solve(
            solver_config,
            HorizonInputs(g_f, p_f, rho, tail_c, tail_p),
            catalog,
            qos,
            weights,
            battery_params,
            rate,
            slot_hours,
        )
        action = repair_action(
            lookup(local, 0, state.energy_mwh), battery_params, state, rate, slot_hours
        )
        state, record = env_step(
            episode, t, action, battery_params, state, rate, slot_hours, forecast_age=i
        )
        records.append(record)

    return _finish(
        "fmcac",
        records,
        forecast_mape_carbon=float(np.mean(mapes)) if mapes else None,
        forecaster_calls=fc_g.calls + fc_p.calls,
        forecast_fallbacks=fc_g.fallbacks + fc_p.fallbacks,
    )


def compare(reports: dict[str, EpisodeReport], reference: str = "rw") -> dict:
    """Four metrics per policy plus reductions relative to the reference."""
    if reference not in reports:
        raise ConfigError(f"reference policy {reference!r} not among {sorted(reports)}")
    ref = reports[reference]
    table: dict[str, dict] = {}
    for name, rep in reports.items():
        row = rep.metrics()
        for metric, ref_value in ref.metrics().items():
            key = f"{metric}_reduction_vs_{reference}"
            row[key] = (ref_value - row[metric]) / ref_value if ref_value != 0 else None
        table[name] = row
    return table
