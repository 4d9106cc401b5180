import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridbuffer.battery import (
    Action,
    BatteryParams,
    BatteryState,
    Source,
    charge_grid_draw,
    charge_inflow,
    feasible_actions,
    inference_energy,
    peukert_factor,
    step,
)
from gridbuffer.errors import ConfigError, FeasibilityError
from tests.test_modes import mk_mode

SLOT = 0.25


class TestChargeInflow:
    def test_no_charge(self, params, mid_state):
        assert charge_inflow(params, mid_state, 0, SLOT) == 0.0

    def test_full_rate(self, params, mid_state):
        # 20 W * 0.25 h * 0.9 with ample headroom
        assert charge_inflow(params, mid_state, 1, SLOT) == pytest.approx(4500.0)

    def test_headroom_cap(self, params):
        state = BatteryState(0.8 * 18000.0 - 1000.0)
        assert charge_inflow(params, state, 1, SLOT) == pytest.approx(1000.0)

    def test_never_exceeds_charger_throughput(self, params, rng):
        cap = params.charge_power_w * 1000 * SLOT * params.charge_efficiency
        for _ in range(200):
            b = rng.uniform(params.floor_mwh, params.ceiling_mwh)
            assert 0.0 <= charge_inflow(params, BatteryState(b), 1, SLOT) <= cap + 1e-12


class TestInferenceEnergy:
    def test_counts_at_paper_rate(self):
        mode = mk_mode(power=10.0, lat=100.0)  # 0.2778 mWh per inference
        # 1 Hz over a 15-minute slot is 900 inferences
        assert inference_energy(mode, 1.0, SLOT) == pytest.approx(250.0, rel=1e-12)

    def test_zero_rate(self):
        assert inference_energy(mk_mode(), 0.0, SLOT) == 0.0

    def test_fractional_counts_allowed(self):
        mode = mk_mode(power=10.0, lat=100.0)
        assert inference_energy(mode, 0.0005, SLOT) == pytest.approx(0.45 * 0.2777777777777778)


class TestPeukert:
    def test_reference_current_gives_unity(self, params):
        # raw energy that makes i_t equal i_ref exactly
        raw = params.reference_current_a * 1000.0 * SLOT * params.nominal_voltage_v
        assert peukert_factor(params, raw, SLOT) == pytest.approx(1.0, abs=1e-12)

    def test_worked_example(self):
        params = BatteryParams(reference_current_a=0.973)
        assert peukert_factor(params, 2500.0, SLOT) == pytest.approx(1.052408317489992, rel=1e-12)

    def test_exponent_one_is_identity(self):
        params = BatteryParams(peukert_exponent=1.0)
        for raw in (1.0, 500.0, 9000.0):
            assert peukert_factor(params, raw, SLOT) == 1.0

    def test_zero_energy_sentinel(self, params):
        assert peukert_factor(params, 0.0, SLOT) == 1.0

    def test_default_reference_current_is_c_over_5(self, params):
        assert params.reference_current_a == pytest.approx(18.0 / 3.7 / 5.0, rel=1e-12)

    def test_monotone_in_energy(self, params):
        grid = np.linspace(1.0, 5000.0, 100)
        factors = [peukert_factor(params, raw, SLOT) for raw in grid]
        assert all(b >= a for a, b in zip(factors, factors[1:]))


class TestStep:
    def test_grid_passthrough(self, params, mid_state):
        action = Action(mk_mode(), 0, Source.GRID)
        state, grid, out = step(params, mid_state, action, 250.0, SLOT)
        assert state.energy_mwh == mid_state.energy_mwh
        assert grid == 250.0
        assert out == 0.0

    def test_battery_discharge_with_peukert(self):
        params = BatteryParams(reference_current_a=0.973)
        b0 = BatteryState(10_000.0)
        action = Action(mk_mode(), 0, Source.BATTERY)
        state, grid, out = step(params, b0, action, 250.0, SLOT)
        factor = peukert_factor(params, 250.0, SLOT)
        assert out == pytest.approx(250.0 * factor)
        assert state.energy_mwh == pytest.approx(10_000.0 - 250.0 * factor)
        assert grid == 0.0

    def test_charge_while_discharging_nets_flows(self, params):
        b0 = BatteryState(9_000.0)
        action = Action(mk_mode(power=10.0, lat=100.0), 1, Source.BATTERY)
        state, grid, out = step(params, b0, action, 250.0, SLOT)
        assert grid == pytest.approx(5000.0)  # charger draw only, pre-efficiency
        assert state.energy_mwh == pytest.approx(9_000.0 + 4500.0 - out)

    def test_inflow_capped_against_pre_discharge_state(self, params):
        # headroom is measured before the discharge frees room
        b0 = BatteryState(10_000.0)
        action = Action(mk_mode(power=10.0, lat=100.0), 1, Source.BATTERY)
        state, _, out = step(params, b0, action, 250.0, SLOT)
        assert state.energy_mwh == pytest.approx(10_000.0 + 4400.0 - out)

    def test_charge_capped_at_ceiling(self, params):
        b0 = BatteryState(params.ceiling_mwh - 100.0)
        action = Action(mk_mode(), 1, Source.GRID)
        state, grid, _ = step(params, b0, action, 250.0, SLOT)
        assert state.energy_mwh == pytest.approx(params.ceiling_mwh)
        assert grid == pytest.approx(5000.0 + 250.0)  # full charger draw regardless

    def test_discharge_below_floor_raises(self, params):
        b0 = BatteryState(params.floor_mwh + 10.0)
        action = Action(mk_mode(), 0, Source.BATTERY)
        with pytest.raises(FeasibilityError):
            step(params, b0, action, 250.0, SLOT)


class TestFeasibleActions:
    def test_mid_soc_full_cross_product(self, params, mid_state):
        modes = [mk_mode(pid="a"), mk_mode(pid="b")]
        actions = feasible_actions(params, mid_state, modes, SLOT, 1.0)
        assert len(actions) == 8

    def test_at_floor_excludes_unassisted_battery(self, params):
        state = BatteryState(params.floor_mwh)
        actions = feasible_actions(params, state, [mk_mode()], SLOT, 1.0)
        battery = [a for a in actions if a.source is Source.BATTERY]
        # discharging is only possible together with charging (inflow covers it)
        assert all(a.charge == 1 for a in battery)

    def test_at_ceiling_normalizes_charge(self, params):
        state = BatteryState(params.ceiling_mwh)
        actions = feasible_actions(params, state, [mk_mode()], SLOT, 1.0)
        assert all(a.charge == 0 for a in actions)
        assert len(actions) == 2  # grid and battery, no-charge only

    def test_forbid_simultaneous_flag(self, mid_state):
        params = BatteryParams(forbid_charge_while_discharging=True)
        actions = feasible_actions(params, mid_state, [mk_mode()], SLOT, 1.0)
        assert not any(a.charge == 1 and a.source is Source.BATTERY for a in actions)

    def test_grid_always_available(self, params, rng):
        for _ in range(100):
            b = rng.uniform(params.floor_mwh, params.ceiling_mwh)
            actions = feasible_actions(params, BatteryState(b), [mk_mode()], SLOT, 1.0)
            assert any(a.source is Source.GRID for a in actions)


@given(
    soc=st.floats(min_value=0.0, max_value=1.0),
    charge=st.integers(min_value=0, max_value=1),
    battery=st.booleans(),
    raw=st.floats(min_value=0.0, max_value=2000.0),
)
@settings(max_examples=200, deadline=None)
def test_step_respects_window_and_bookkeeping(soc, charge, battery, raw):
    params = BatteryParams()
    b = params.floor_mwh + soc * (params.ceiling_mwh - params.floor_mwh)
    state = BatteryState(b)
    source = Source.BATTERY if battery else Source.GRID
    action = Action(mk_mode(), charge, source)
    e_in = charge_inflow(params, state, charge, SLOT)
    try:
        new_state, grid, e_out = step(params, state, action, raw, SLOT)
    except FeasibilityError:
        assert battery and b + e_in - peukert_factor(params, raw, SLOT) * raw < params.floor_mwh
        return
    assert params.floor_mwh - 1e-9 <= new_state.energy_mwh <= params.ceiling_mwh + 1e-9
    target = b + e_in - e_out
    if params.floor_mwh < target < params.ceiling_mwh:
        assert new_state.energy_mwh - b == pytest.approx(e_in - e_out, abs=1e-9)
    assert grid >= charge_grid_draw(params, charge, SLOT) - 1e-12


def test_invalid_params():
    with pytest.raises(ConfigError):
        BatteryParams(soc_min_frac=0.8, soc_max_frac=0.2)
    with pytest.raises(ConfigError):
        BatteryParams(peukert_exponent=0.9)
    with pytest.raises(ConfigError):
        BatteryParams(charge_efficiency=0.0)
    with pytest.raises(ConfigError):
        Action(mk_mode(), 2, Source.GRID)
