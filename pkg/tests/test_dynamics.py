import pytest

from conftest import map_from_rows
from uavgrid.dynamics import (
    Action,
    RewardWeights,
    StepFlags,
    UavState,
    legal_actions,
    safety_filter,
    step,
    step_reward,
)
from uavgrid.rng import stream
from uavgrid.world import MapGenSpec, generate_map

W = RewardWeights()


def uav(x, y, battery=10, operational=True):
    return UavState(x=x, y=y, operational=operational, battery=battery)


class TestLegalActions:
    def test_all_six_on_landing_cell(self, open4):
        assert legal_actions(uav(0, 0), open4) == set(Action)

    def test_five_off_landing_cell(self, open4):
        acts = legal_actions(uav(2, 2), open4)
        assert acts == set(Action) - {Action.LAND}
        assert len(acts) == 5

    def test_hover_always_legal(self, open4):
        for x in range(4):
            for y in range(4):
                assert Action.HOVER in legal_actions(uav(x, y), open4)


class TestSafetyFilter:
    def test_grid_boundary_blocks(self, open4):
        assert safety_filter(uav(3, 1), Action.EAST, open4) == (Action.HOVER, True)
        assert safety_filter(uav(0, 1), Action.WEST, open4) == (Action.HOVER, True)
        assert safety_filter(uav(1, 3), Action.NORTH, open4) == (Action.HOVER, True)
        assert safety_filter(uav(1, 0), Action.SOUTH, open4) == (Action.HOVER, True)

    def test_nfz_blocks(self):
        # enumerated 4x4 fixture: N sits directly north of (1, 1)
        m = map_from_rows(["....", ".N..", "....", "L..."])
        assert safety_filter(uav(1, 1), Action.NORTH, m) == (Action.HOVER, True)
        assert safety_filter(uav(1, 1), Action.EAST, m) == (Action.EAST, False)

    def test_tall_building_blocks_but_small_does_not(self):
        m = map_from_rows(["....", ".TS.", "....", "L..."])
        assert safety_filter(uav(1, 1), Action.NORTH, m) == (Action.HOVER, True)
        assert safety_filter(uav(2, 1), Action.NORTH, m) == (Action.NORTH, False)

    def test_hover_never_blocked(self, open4):
        for x in range(4):
            for y in range(4):
                assert safety_filter(uav(x, y), Action.HOVER, open4) == (Action.HOVER, False)


class TestStep:
    def test_hover_decrements_battery_only(self, open8):
        s2, flags = step(uav(5, 5), Action.HOVER, open8)
        assert (s2.x, s2.y, s2.operational, s2.battery) == (5, 5, True, 9)
        assert flags == StepFlags(False, False, False)

    def test_moves_update_position(self, open8):
        for action, (dx, dy) in [
            (Action.NORTH, (0, 1)), (Action.EAST, (1, 0)),
            (Action.SOUTH, (0, -1)), (Action.WEST, (-1, 0)),
        ]:
            s2, _ = step(uav(4, 4), action, open8)
            assert (s2.x, s2.y) == (4 + dx, 4 + dy)

    def test_land_deactivates(self, open4):
        s2, flags = step(uav(0, 0, battery=3), Action.LAND, open4)
        assert not s2.operational
        assert s2.battery == 2
        assert flags.landed and not flags.crashed

    def test_battery_exhaustion_airborne_is_crash(self, open8):
        s2, flags = step(uav(2, 2, battery=1), Action.EAST, open8)
        assert s2.battery == 0 and s2.operational
        assert flags.crashed and not flags.landed

    def test_landing_on_last_step_is_not_crash(self, open4):
        s2, flags = step(uav(0, 0, battery=1), Action.LAND, open4)
        assert s2.battery == 0 and not s2.operational
        assert flags.landed and not flags.crashed

    def test_blocked_move_costs_battery(self, open4):
        s2, flags = step(uav(3, 3, battery=5), Action.EAST, open4)
        assert (s2.x, s2.y) == (3, 3)
        assert s2.battery == 4
        assert flags.blocked

    def test_step_inactive_uav_is_an_error(self, open4):
        with pytest.raises(RuntimeError, match="inactive"):
            step(uav(0, 0, operational=False), Action.HOVER, open4)

    def test_step_empty_battery_is_an_error(self, open4):
        with pytest.raises(RuntimeError, match="battery"):
            step(uav(0, 0, battery=0), Action.HOVER, open4)

    def test_illegal_land_is_an_error(self, open4):
        with pytest.raises(ValueError, match="LAND"):
            step(uav(2, 2), Action.LAND, open4)

    def test_altitude_flag(self, open4):
        assert uav(0, 0).altitude(open4) == 25.0
        assert uav(0, 0, operational=False).altitude(open4) == 0.0


class TestStepReward:
    def test_plain_move_gets_mobility_penalty(self):
        assert step_reward(StepFlags(), 0, 0.0, W) == pytest.approx(-0.05)

    def test_landing_waives_mobility_penalty(self):
        assert step_reward(StepFlags(landed=True), 0, 0.0, W) == 0.0

    def test_blocked_move(self):
        assert step_reward(StepFlags(blocked=True), 0, 0.0, W) == pytest.approx(-1.05)

    def test_crash_charges_both_penalties(self):
        assert step_reward(StepFlags(crashed=True), 0, 0.0, W) == pytest.approx(-5.05)

    def test_coverage_and_data_terms(self):
        assert step_reward(StepFlags(), 3, 2.5, W) == pytest.approx(0.4 * 3 + 0.1 * 2.5 - 0.05)

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            RewardWeights(cell=-1.0).validate()
        with pytest.raises(ValueError):
            RewardWeights(crash=1.0).validate()
        with pytest.raises(ValueError):
            step_reward(StepFlags(), -1, 0.0, W)


class TestProperties:
    def test_battery_and_position_laws_random_walks(self):
        """10k-step fuzz: battery drops exactly 1 per active step and the UAV
        never ends up off-grid or on a no-occupy cell."""
        rng = stream(99)
        steps_done = 0
        map_seed = 0
        while steps_done < 10_000:
            m = generate_map(MapGenSpec(size_g=8, rng_seed=map_seed))
            map_seed += 1
            cells = m.landing_cells()
            x, y = cells[int(rng.integers(0, len(cells)))]
            state = UavState(x=x, y=y, operational=True, battery=int(rng.integers(3, 30)))
            while state.operational and state.battery > 0:
                acts = sorted(legal_actions(state, m))
                action = acts[int(rng.integers(0, len(acts)))]
                before = state.battery
                state, flags = step(state, action, m)
                steps_done += 1
                assert state.battery == before - 1
                assert m.in_bounds(state.x, state.y)
                assert not m.no_occupy[state.x, state.y]
                if flags.crashed:
                    assert state.battery == 0 and state.operational
                    break

    def test_inactive_state_is_frozen(self, open4):
        state, _ = step(uav(0, 0, battery=5), Action.LAND, open4)
        frozen = state
        with pytest.raises(RuntimeError):
            step(state, Action.HOVER, open4)
        assert state == frozen  # immutable dataclass; nothing can mutate it

    def test_legal_action_count_is_5_or_6(self):
        for seed in range(10):
            m = generate_map(MapGenSpec(size_g=6, rng_seed=seed))
            for x in range(6):
                for y in range(6):
                    if m.no_occupy[x, y]:
                        continue
                    n = len(legal_actions(UavState(x, y, True, 5), m))
                    assert n in (5, 6)
