"""Baseline per-slot controllers sharing one policy contract.

rw: highest-accuracy feasible mode, always Grid.
ee: lowest-energy feasible mode, always Grid.
dc: datacenter-style carbon thresholding on a rolling history.
ev: EV-style SoC hysteresis charging, Battery-first sourcing.

The dc policy doubles as the MPC controller's cold-start heuristic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import battery as batt
from .battery import Action, BatteryParams, BatteryState, Source
from .errors import ConfigError
from .modes import (
    MAX_ACCURACY,
    MIN_ENERGY,
    OperatingMode,
    QosConstraint,
    best_mode,
)

DC_WINDOW_SLOTS = 672  # 7 days of 15-minute slots
DC_HISTORY_MIN = 8


@dataclass(frozen=True)
class PolicyContext:
    """What a policy sees at one slot: state plus the observation history
    (slots before the current one)."""

    slot_index: int
    battery: BatteryState
    observed_carbon: float
    observed_price: float
    carbon_history: Sequence[float]
    price_history: Sequence[float]


class Policy:
    """Per-slot action selector over a fixed catalog and battery."""

    name = "base"

    def __init__(
        self,
        catalog: Sequence[OperatingMode],
        qos: QosConstraint,
        battery_params: BatteryParams,
        slot_hours: float,
        inference_rate_hz: float,
    ):
        self.catalog = list(catalog)
        self.qos = qos
        self.params = battery_params
        self.slot_hours = slot_hours
        self.inference_rate_hz = inference_rate_hz

    def reset(self) -> None:
        """Forget per-episode state; default policies are stateless."""

    def select(self, ctx: PolicyContext) -> Action:
        raise NotImplementedError

    # -- helpers shared by the concrete policies --

    def _discharge_ok(self, state: BatteryState, mode: OperatingMode, charge: int) -> bool:
        raw = batt.inference_energy(mode, self.inference_rate_hz, self.slot_hours)
        e_out = batt.peukert_factor(self.params, raw, self.slot_hours) * raw
        e_in = batt.charge_inflow(self.params, state, charge, self.slot_hours)
        if charge and self.params.forbid_charge_while_discharging:
            return False
        return state.energy_mwh + e_in - e_out >= self.params.floor_mwh

    def _can_charge(self, state: BatteryState) -> bool:
        return state.energy_mwh < self.params.ceiling_mwh


class RwPolicy(Policy):
    """Carbon-unaware deployment: best accuracy, grid power, never charges."""

    name = "rw"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._mode = best_mode(self.catalog, self.qos, MAX_ACCURACY)

    def select(self, ctx: PolicyContext) -> Action:
        return Action(self._mode, 0, Source.GRID)


class EePolicy(Policy):
    """Energy minimizer: cheapest feasible mode, grid power, never charges."""

    name = "ee"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._mode = best_mode(self.catalog, self.qos, MIN_ENERGY)

    def select(self, ctx: PolicyContext) -> Action:
        return Action(self._mode, 0, Source.GRID)


class DcPolicy(Policy):
    """Threshold policy on rolling carbon percentiles: charge when the current
    intensity is low, discharge when it is high, grid otherwise."""

    name = "dc"

    def __init__(
        self,
        *args,
        window_slots: int = DC_WINDOW_SLOTS,
        low_pct: float = 30.0,
        high_pct: float = 70.0,
        **kwargs,
    ):
        super().__init__(*args, **kwargs)
        if window_slots < 1:
            raise ConfigError("dc window_slots must be >= 1")
        if not 0 <= low_pct <= high_pct <= 100:
            raise ConfigError("need 0 <= low_pct <= high_pct <= 100")
        self.window_slots = window_slots
        self.low_pct = low_pct
        self.high_pct = high_pct
        self._mode = best_mode(self.catalog, self.qos, MAX_ACCURACY)

    def select(self, ctx: PolicyContext) -> Action:
        history = np.asarray(ctx.carbon_history[-self.window_slots:], dtype=float)
        if history.size < DC_HISTORY_MIN:
            return Action(self._mode, 0, Source.GRID)
        low_thr = float(np.percentile(history, self.low_pct))
        high_thr = float(np.percentile(history, self.high_pct))
        g = ctx.observed_carbon
        if g <= low_thr:
            charge = 1 if self._can_charge(ctx.battery) else 0
            return Action(self._mode, charge, Source.GRID)
        if g >= high_thr and self._discharge_ok(ctx.battery, self._mode, 0):
            return Action(self._mode, 0, Source.BATTERY)
        return Action(self._mode, 0, Source.GRID)


class _EvState(enum.Enum):
    IDLE = "idle"
    ARMED = "armed"
    CHARGING = "charging"


class EvPolicy(Policy):
    """SoC hysteresis: arm below the floor, start charging in a low-carbon
    window, keep charging until the target. Battery-first sourcing."""

    name = "ev"

    def __init__(
        self,
        *args,
        soc_floor_frac: float = 0.3,
        soc_target_frac: float = 0.7,
        low_carbon_pct: float = 40.0,
        window_slots: int = DC_WINDOW_SLOTS,
        **kwargs,
    ):
        super().__init__(*args, **kwargs)
        p = self.params
        if not p.soc_min_frac <= soc_floor_frac < soc_target_frac <= p.soc_max_frac:
            raise ConfigError(
                "need soc_min <= soc_floor_frac < soc_target_frac <= soc_max"
            )
        self.soc_floor_frac = soc_floor_frac
        self.soc_target_frac = soc_target_frac
        self.low_carbon_pct = low_carbon_pct
        self.window_slots = window_slots
        self._mode = best_mode(self.catalog, self.qos, MAX_ACCURACY)
        self._state = _EvState.IDLE

    def reset(self) -> None:
        self._state = _EvState.IDLE

    def select(self, ctx: PolicyContext) -> Action:
        soc = ctx.battery.soc(self.params)
        if self._state is _EvState.IDLE and soc < self.soc_floor_frac:
            self._state = _EvState.ARMED
        if self._state is _EvState.ARMED:
            history = np.asarray(ctx.carbon_history[-self.window_slots:], dtype=float)
            if history.size >= DC_HISTORY_MIN and ctx.observed_carbon <= float(
                np.percentile(history, self.low_carbon_pct)
            ):
                self._state = _EvState.CHARGING
        if self._state is _EvState.CHARGING and soc >= self.soc_target_frac:
            self._state = _EvState.IDLE

        charge = (
            1
            if self._state is _EvState.CHARGING and self._can_charge(ctx.battery)
            else 0
        )
        if self._discharge_ok(ctx.battery, self._mode, charge):
            return Action(self._mode, charge, Source.BATTERY)
        return Action(self._mode, charge, Source.GRID)


def cold_start_policy(
    catalog: Sequence[OperatingMode],
    qos: QosConstraint,
    battery_params: BatteryParams,
    slot_hours: float,
    inference_rate_hz: float,
) -> DcPolicy:
    """Heuristic used while the controller accumulates forecast context."""
    return DcPolicy(catalog, qos, battery_params, slot_hours, inference_rate_hz)


BASELINES = {"rw": RwPolicy, "ee": EePolicy, "dc": DcPolicy, "ev": EvPolicy}


def make_policy(
    name: str,
    catalog: Sequence[OperatingMode],
    qos: QosConstraint,
    battery_params: BatteryParams,
    slot_hours: float,
    inference_rate_hz: float,
    **params,
) -> Policy:
    try:
        cls = BASELINES[name]
    except KeyError:
        raise ConfigError(f"unknown baseline policy {name!r}") from None
    return cls(catalog, qos, battery_params, slot_hours, inference_rate_hz, **params)
