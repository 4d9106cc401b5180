"""Receding-horizon dynamic programming over a discretized battery state.

Backward induction maximizes per-slot utility minus confidence-weighted
carbon/cost penalties. Net battery discharge additionally pays a deferred
penalty priced at the low-percentile grid conditions expected beyond the
horizon, divided by the charge efficiency: that is the grid energy the
future recharge must draw. Continuation values are linearly interpolated
on the level grid; snapping to the nearest level happens only at lookup.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import battery as batt
from .battery import Action, BatteryParams, Source
from .errors import ConfigError, DataError
from .forecasting import ConfidenceVector
from .modes import OperatingMode, QosConstraint, UtilityWeights, feasible_modes, perf_utility
from .units import mwh_to_kwh

# Candidate order per mode; also the action tie-break order.
_COMBO_GRID0, _COMBO_GRID1, _COMBO_BATT0, _COMBO_BATT1 = range(4)


@dataclass(frozen=True)
class SolverConfig:
    horizon: int = 96
    battery_levels: int = 100
    discount: float = 0.998
    deferred_weight: float = 0.3
    deferred_percentile: float = 10.0
    scale_deferred_by_confidence: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("solver horizon must be >= 1")
        if self.battery_levels < 2:
            raise ConfigError("battery_levels must be >= 2")
        if not 0 < self.discount <= 1:
            raise ConfigError("discount must lie in (0,1]")
        if not 0 <= self.deferred_weight <= 1:
            raise ConfigError("deferred_weight must lie in [0,1]")
        if not 0 <= self.deferred_percentile <= 100:
            raise ConfigError("deferred_percentile must lie in [0,100]")


@dataclass(frozen=True)
class HorizonInputs:
    """Forecast slices and tail statistics feeding one solve."""

    carbon_forecast: np.ndarray
    price_forecast: np.ndarray
    confidence: ConfidenceVector
    tail_carbon: float
    tail_price: float

    def __post_init__(self):
        g = np.asarray(self.carbon_forecast, dtype=float)
        p = np.asarray(self.price_forecast, dtype=float)
        object.__setattr__(self, "carbon_forecast", g)
        object.__setattr__(self, "price_forecast", p)
        if not g.shape == p.shape == self.confidence.rho.shape:
            raise DataError("carbon/price forecasts and confidence must share one length")
        if self.tail_carbon < 0:
            raise DataError("tail_carbon must be >= 0")


@dataclass(frozen=True)
class SlotFlows:
    """Energy flows of one slot: grid-side draw, stored inflow, effective discharge."""

    grid_mwh: float
    charge_mwh: float
    discharge_mwh: float


@dataclass(frozen=True)
class LocalPolicy:
    """Action and value tables over (look-ahead step, battery level)."""

    levels: np.ndarray
    modes: tuple[OperatingMode, ...]
    mode_index: np.ndarray  # (H, L) into `modes`
    charge: np.ndarray  # (H, L) in {0,1}
    source_battery: np.ndarray  # (H, L) bool
    values: np.ndarray  # (H, L)

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def action_at(self, k: int, level_index: int) -> Action:
        return Action(
            mode=self.modes[int(self.mode_index[k, level_index])],
            charge=int(self.charge[k, level_index]),
            source=Source.BATTERY if self.source_battery[k, level_index] else Source.GRID,
        )

    def value_at(self, k: int, level_index: int) -> float:
        return float(self.values[k, level_index])


def discretize(params: BatteryParams, levels: int) -> np.ndarray:
    """Evenly spaced battery energies spanning the SoC health window."""
    if levels < 2:
        raise ConfigError("need at least 2 battery levels")
    return np.linspace(params.floor_mwh, params.ceiling_mwh, levels)


def stage_reward(
    mode_utility: float,
    g_hat_k: float,
    p_hat_k: float,
    rho_k: float,
    weights: UtilityWeights,
    tail_carbon: float,
    tail_price: float,
    deferred_weight: float,
    flows: SlotFlows,
    charge_efficiency: float,
    scale_deferred_by_confidence: bool = True,
) -> float:
    """One slot's objective contribution under forecast conditions.

    Grid draw is priced at the forecast carbon/price; net battery discharge
    is priced at the tail statistics, grossed up by the charge efficiency.
    """
    grid_kwh = mwh_to_kwh(flows.grid_mwh)
    net_discharge_kwh = mwh_to_kwh(max(flows.discharge_mwh - flows.charge_mwh, 0.0))
    rho_deferred = rho_k if scale_deferred_by_confidence else 1.0
    reward = weights.w_perf * mode_utility
    reward -= rho_k * (weights.w_carb * g_hat_k + weights.w_cost * p_hat_k) * grid_kwh
    reward -= (
        deferred_weight
        * rho_deferred
        * (weights.w_carb * tail_carbon + weights.w_cost * tail_price)
        * net_discharge_kwh
        / charge_efficiency
    )
    return reward


def tail_statistics(
    carbon_mean: Sequence[float],
    price_mean: Sequence[float],
    horizon_end: int,
    q: float,
) -> tuple[float, float]:
    """q-th percentile of each forecast beyond `horizon_end` (linear
    interpolation); falls back to the whole visible forecast if nothing
    remains."""

    def tail(series: Sequence[float]) -> float:
        arr = np.asarray(series, dtype=float)
        remaining = arr[horizon_end:]
        if remaining.size == 0:
            remaining = arr
        return float(np.percentile(remaining, q))

    return max(tail(carbon_mean), 0.0), tail(price_mean)


def lookup(policy: LocalPolicy, k: int, battery_energy: float) -> Action:
    """Snap to the nearest level (ties toward the lower) and read the action."""
    if not 0 <= k < policy.horizon:
        raise IndexError(f"look-ahead step {k} outside [0, {policy.horizon})")
    idx = int(np.argmin(np.abs(policy.levels - battery_energy)))
    return policy.action_at(k, idx)


def dp_solve(
    config: SolverConfig,
    inputs: HorizonInputs,
    catalog: Sequence[OperatingMode],
    qos: QosConstraint,
    weights: UtilityWeights,
    battery_params: BatteryParams,
    inference_rate_hz: float,
    slot_hours: float,
) -> LocalPolicy:
    """Backward induction over (look-ahead step, battery level).

    Candidate actions are laid out mode-major in tie-break order (higher
    accuracy, lower energy, Grid before Battery, no-charge before charge),
    so the first argmax is the canonical choice.
    """
    H, L = config.horizon, config.battery_levels
    if inputs.carbon_forecast.size != H:
        raise DataError(
            f"horizon inputs have length {inputs.carbon_forecast.size}, expected {H}"
        )
    feasible = feasible_modes(catalog, qos)
    order = sorted(
        range(len(feasible)),
        key=lambda j: (
            -feasible[j].accuracy,
            feasible[j].energy_per_inference_mwh,
            j,
        ),
    )
    modes = tuple(feasible[j] for j in order)
    M = len(modes)

    e_raw = np.array([batt.inference_energy(m, inference_rate_hz, slot_hours) for m in modes])
    e_out = np.array(
        [batt.peukert_factor(battery_params, raw, slot_hours) * raw for raw in e_raw]
    )
    util = np.array([perf_utility(m, qos, weights) for m in modes])

    levels = discretize(battery_params, L)
    floor_, ceil_ = battery_params.floor_mwh, battery_params.ceiling_mwh
    eta = battery_params.charge_efficiency
    grid_charge = batt.charge_grid_draw(battery_params, 1, slot_hours)
    e_in_full = grid_charge * eta
    e_in1 = np.minimum(e_in_full, ceil_ - levels)  # (L,)
    can_charge = levels < ceil_  # (L,)

    # Slot physics is time-invariant, so next-state, flows, feasibility and
    # the interpolation stencil are all precomputed once.
    b_next = np.empty((L, M, 4))
    b_next[:, :, _COMBO_GRID0] = levels[:, None]
    b_next[:, :, _COMBO_GRID1] = (levels + e_in1)[:, None]
    b_next[:, :, _COMBO_BATT0] = levels[:, None] - e_out[None, :]
    b_next[:, :, _COMBO_BATT1] = (levels + e_in1)[:, None] - e_out[None, :]

    feas = np.ones((L, M, 4), dtype=bool)
    feas[:, :, _COMBO_GRID1] = can_charge[:, None]
    feas[:, :, _COMBO_BATT0] = b_next[:, :, _COMBO_BATT0] >= floor_
    feas[:, :, _COMBO_BATT1] = (b_next[:, :, _COMBO_BATT1] >= floor_) & can_charge[:, None]
    if battery_params.forbid_charge_while_discharging:
        feas[:, :, _COMBO_BATT1] = False

    grid_kwh = np.empty((L, M, 4))
    grid_kwh[:, :, _COMBO_GRID0] = mwh_to_kwh(e_raw)[None, :]
    grid_kwh[:, :, _COMBO_GRID1] = mwh_to_kwh(grid_charge + e_raw)[None, :]
    grid_kwh[:, :, _COMBO_BATT0] = 0.0
    grid_kwh[:, :, _COMBO_BATT1] = mwh_to_kwh(grid_charge)

    net_kwh = np.zeros((L, M, 4))
    net_kwh[:, :, _COMBO_BATT0] = mwh_to_kwh(e_out)[None, :]
    net_kwh[:, :, _COMBO_BATT1] = mwh_to_kwh(
        np.maximum(e_out[None, :] - e_in1[:, None], 0.0)
    )

    np.clip(b_next, floor_, ceil_, out=b_next)
    spacing = levels[1] - levels[0]
    lo = np.clip(((b_next - floor_) // spacing).astype(np.int64), 0, L - 2)
    frac = np.clip((b_next - levels[lo]) / spacing, 0.0, 1.0)
    lo_flat = lo.reshape(L, 4 * M)
    frac_flat = frac.reshape(L, 4 * M)
    w_lo = 1.0 - frac_flat

    util_term = (weights.w_perf * util)[None, :, None]
    grid_flat = grid_kwh.reshape(L, 4 * M)
    net_flat = (net_kwh / eta).reshape(L, 4 * M)
    util_flat = np.broadcast_to(util_term, (L, M, 4)).reshape(L, 4 * M)
    infeasible_flat = ~feas.reshape(L, 4 * M)

    g_f, p_f = inputs.carbon_forecast, inputs.price_forecast
    rho = inputs.confidence.rho
    tail_term = weights.w_carb * inputs.tail_carbon + weights.w_cost * inputs.tail_price

    mode_index = np.empty((H, L), dtype=np.int64)
    charge = np.empty((H, L), dtype=np.int8)
    source_battery = np.empty((H, L), dtype=bool)
    values = np.empty((H, L))

    v_next = np.zeros(L)
    for k in range(H - 1, -1, -1):
        grid_price_k = rho[k] * (weights.w_carb * g_f[k] + weights.w_cost * p_f[k])
        rho_deferred = rho[k] if config.scale_deferred_by_confidence else 1.0
        deferred_k = config.deferred_weight * rho_deferred * tail_term
        q_val = util_flat - grid_price_k * grid_flat - deferred_k * net_flat
        q_val += config.discount * (v_next[lo_flat] * w_lo + v_next[lo_flat + 1] * frac_flat)
        q_val[infeasible_flat] = -np.inf
        best = np.argmax(q_val, axis=1)
        values[k] = q_val[np.arange(L), best]
        mode_index[k] = best // 4
        combo = best % 4
        charge[k] = (combo % 2).astype(np.int8)
        source_battery[k] = combo >= 2
        v_next = values[k]

    return LocalPolicy(
        levels=levels,
        modes=modes,
        mode_index=mode_index,
        charge=charge,
        source_battery=source_battery,
        values=values,
    )
