"""Battery state dynamics and action feasibility.

Energy bookkeeping is entirely in mWh. Charging stores grid energy at the
charger efficiency, capped by the remaining headroom below the SoC health
ceiling; discharging pays a Peukert rate penalty. The 20-80% SoC health
window is authoritative: states never leave it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ConfigError, FeasibilityError
from .modes import OperatingMode
from .units import power_to_mwh


class Source(enum.Enum):
    """Power source for the inference workload during one slot."""

    BATTERY = "battery"
    GRID = "grid"


@dataclass(frozen=True)
class Action:
    """One slot's control decision: operating mode, charge flag, power source."""

    mode: OperatingMode
    charge: int
    source: Source

    def __post_init__(self):
        if self.charge not in (0, 1):
            raise ConfigError(f"charge must be 0 or 1, got {self.charge}")


@dataclass(frozen=True)
class BatteryParams:
    capacity_mwh: float = 18_000.0
    charge_power_w: float = 20.0
    charge_efficiency: float = 0.90
    peukert_exponent: float = 1.05
    nominal_voltage_v: float = 3.7
    # None selects the conventional C/5 reference rate for this capacity.
    reference_current_a: float | None = None
    soc_min_frac: float = 0.2
    soc_max_frac: float = 0.8
    forbid_charge_while_discharging: bool = False

    def __post_init__(self):
        if self.capacity_mwh <= 0 or self.charge_power_w <= 0 or self.nominal_voltage_v <= 0:
            raise ConfigError("capacity, charge power and nominal voltage must be positive")
        if not 0 < self.charge_efficiency <= 1:
            raise ConfigError("charge_efficiency must lie in (0,1]")
        if self.peukert_exponent < 1:
            raise ConfigError("peukert_exponent must be >= 1")
        if not 0 <= self.soc_min_frac < self.soc_max_frac <= 1:
            raise ConfigError("need 0 <= soc_min_frac < soc_max_frac <= 1")
        if self.reference_current_a is None:
            capacity_ah = self.capacity_mwh / 1000.0 / self.nominal_voltage_v
            object.__setattr__(self, "reference_current_a", capacity_ah / 5.0)
        elif self.reference_current_a <= 0:
            raise ConfigError("reference_current_a must be positive")

    @property
    def floor_mwh(self) -> float:
        return self.soc_min_frac * self.capacity_mwh

    @property
    def ceiling_mwh(self) -> float:
        return self.soc_max_frac * self.capacity_mwh


@dataclass(frozen=True)
class BatteryState:
    energy_mwh: float

    def soc(self, params: BatteryParams) -> float:
        return self.energy_mwh / params.capacity_mwh


def validate_state(params: BatteryParams, state: BatteryState) -> None:
    if not params.floor_mwh <= state.energy_mwh <= params.ceiling_mwh:
        raise FeasibilityError(
            f"battery energy {state.energy_mwh} mWh outside the health window "
            f"[{params.floor_mwh}, {params.ceiling_mwh}]"
        )


def charge_inflow(
    params: BatteryParams, state: BatteryState, charge: int, slot_hours: float
) -> float:
    """Effective energy stored this slot: charger throughput after efficiency,
    capped at the headroom below the SoC ceiling."""
    if not charge:
        return 0.0
    offered = power_to_mwh(params.charge_power_w, slot_hours) * params.charge_efficiency
    return max(0.0, min(offered, params.ceiling_mwh - state.energy_mwh))


def charge_grid_draw(params: BatteryParams, charge: int, slot_hours: float) -> float:
    """Grid-side energy the charger pulls this slot (before efficiency losses)."""
    return charge * power_to_mwh(params.charge_power_w, slot_hours)


def inference_energy(mode: OperatingMode, inference_rate_hz: float, slot_hours: float) -> float:
    """Raw workload energy for the slot; fractional inference counts are kept."""
    if inference_rate_hz < 0:
        raise ConfigError("inference rate must be >= 0")
    n_infer = inference_rate_hz * slot_hours * 3600.0
    return n_infer * mode.energy_per_inference_mwh


def peukert_factor(params: BatteryParams, raw_energy_mwh: float, slot_hours: float) -> float:
    """Rate-dependent discharge penalty (i/i_ref)^(k-1); 1.0 when nothing flows."""
    if raw_energy_mwh < 0:
        raise ConfigError("raw energy must be >= 0")
    if raw_energy_mwh == 0.0:
        return 1.0
    current_a = raw_energy_mwh / (1000.0 * slot_hours * params.nominal_voltage_v)
    return (current_a / params.reference_current_a) ** (params.peukert_exponent - 1.0)


def step(
    params: BatteryParams,
    state: BatteryState,
    action: Action,
    mode_energy_mwh: float,
    slot_hours: float,
) -> tuple[BatteryState, float, float]:
    """Advance the battery one slot.

    Returns (new state, grid-side energy drawn, effective battery discharge),
    all in mWh. Grid draw covers charger input plus the workload when the
    source is Grid. Battery-sourced slots whose discharge would breach the
    SoC floor raise instead of clipping.
    """
    e_in = charge_inflow(params, state, action.charge, slot_hours)
    grid = charge_grid_draw(params, action.charge, slot_hours)
    if action.source is Source.BATTERY:
        factor = peukert_factor(params, mode_energy_mwh, slot_hours)
        e_out = factor * mode_energy_mwh
        net = state.energy_mwh + e_in - e_out
        if net < params.floor_mwh - 1e-9:
            raise FeasibilityError(
                f"discharge of {e_out:.3f} mWh from {state.energy_mwh:.3f} mWh "
                f"would breach the SoC floor {params.floor_mwh:.3f}"
            )
    else:
        e_out = 0.0
        grid += mode_energy_mwh
        net = state.energy_mwh + e_in
    new_energy = min(params.ceiling_mwh, max(params.floor_mwh, net))
    return BatteryState(new_energy), grid, e_out


def feasible_actions(
    params: BatteryParams,
    state: BatteryState,
    candidate_modes: list[OperatingMode],
    slot_hours: float,
    inference_rate_hz: float,
) -> list[Action]:
    """Enumerate admissible (mode, charge, source) triples at this state.

    Battery sourcing requires the post-slot energy to stay at or above the
    SoC floor; charging at the ceiling is a no-op and is normalized away.
    Grid actions are always admissible, so the result is never empty.
    """
    charges = [0, 1] if state.energy_mwh < params.ceiling_mwh else [0]
    actions: list[Action] = []
    for mode in candidate_modes:
        raw = inference_energy(mode, inference_rate_hz, slot_hours)
        e_out = peukert_factor(params, raw, slot_hours) * raw
        for charge in charges:
            e_in = charge_inflow(params, state, charge, slot_hours)
            actions.append(Action(mode, charge, Source.GRID))
            if charge and params.forbid_charge_while_discharging:
                continue
            if state.energy_mwh + e_in - e_out >= params.floor_mwh:
                actions.append(Action(mode, charge, Source.BATTERY))
    return actions
