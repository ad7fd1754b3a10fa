"""Episode runner: wires the map, UAV dynamics, mission and radio together.

One Env instance runs one episode at a time.  ``reset(episode_seed)`` draws a
fresh scenario, start cell and movement budget from streams derived from the
episode seed, so an episode is a pure function of (map, spec, params,
episode_seed).  The camera snapshot at the takeoff position counts as
coverage; collection and coverage afterwards happen at the post-move position
of every step on which the UAV is still airborne.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import dynamics, missions, observation, radio
from .dynamics import Action, RewardWeights, StepFlags, UavState
from .missions import Mission, MissionState, Metrics
from .observation import Observation, ObsParams
from .radio import ChannelParams
from .rng import STREAM_EPISODE, STREAM_SHADOW, stream
from .world import EnvironmentMap, ScenarioSpec, generate_scenario


@dataclass(frozen=True)
class StepResult:
    obs: Observation
    reward: float
    done: bool
    flags: StepFlags
    newly_covered: int
    collected: float


class Env:
    def __init__(
        self,
        env_map: EnvironmentMap,
        scenario: ScenarioSpec,
        channel: ChannelParams,
        obs_params: ObsParams,
        rewards: RewardWeights,
    ):
        env_map.validate()
        scenario.validate()
        channel.validate()
        obs_params.validate()
        rewards.validate()
        self.map = env_map
        self.scenario = scenario
        self.channel = channel
        self.obs_params = obs_params
        self.rewards = rewards
        self.mission: MissionState | None = None
        self.uav: UavState | None = None

    def reset(self, episode_seed: int) -> Observation:
        self.mission = generate_scenario(
            self.map, replace(self.scenario, rng_seed=episode_seed)
        )
        ep_rng = stream(episode_seed, STREAM_EPISODE)
        lo, hi = self.scenario.movement_budget_range
        budget = int(ep_rng.integers(lo, hi, endpoint=True))
        cells = self.map.landing_cells()
        start = cells[int(ep_rng.integers(0, len(cells)))]
        self.uav = UavState(x=start[0], y=start[1], operational=True, battery=budget)
        self.initial_budget = budget
        self.shadow_rng = stream(episode_seed, STREAM_SHADOW)
        self.trace: list[tuple[int, int]] = [start]
        self.steps_used = 0
        if self.mission.mission is Mission.CPP:
            fov = missions.compute_fov(start, self.map)
            missions.apply_coverage(self.mission, fov)
        self.initial_mission = self.mission.copy()
        self._landed = False
        return self._observe()

    @property
    def active(self) -> bool:
        return self.uav is not None and self.uav.operational and self.uav.battery > 0

    def legal_mask(self) -> np.ndarray:
        mask = np.ones(len(Action), dtype=bool)
        mask[Action.LAND] = bool(self.map.landing[self.uav.x, self.uav.y])
        return mask

    def step(self, action_index: int) -> StepResult:
        if not self.active:
            raise RuntimeError("step() on a finished episode")
        uav, flags = dynamics.step(self.uav, Action(action_index), self.map)
        newly = 0
        collected = 0.0
        if uav.operational:
            if self.mission.mission is Mission.CPP:
                fov = missions.compute_fov(uav.position, self.map)
                _, newly = missions.apply_coverage(self.mission, fov)
            else:
                missions.generate_device_data(
                    self.mission, self.shadow_rng, self.channel.poisson_rate
                )
                amounts, _ = radio.schedule_and_collect(
                    uav.position, self.mission.devices, self.map, self.channel,
                    self.shadow_rng,
                )
                _, collected = missions.apply_harvest(self.mission, amounts)
        reward = dynamics.step_reward(flags, newly, collected, self.rewards)
        self.uav = uav
        self.trace.append(uav.position)
        self.steps_used += 1
        if flags.landed:
            self._landed = True
        done = flags.landed or flags.crashed
        return StepResult(self._observe(), reward, done, flags, newly, collected)

    def metrics(self) -> Metrics:
        return missions.episode_metrics(self.initial_mission, self.mission, self._landed)

    def _observe(self) -> Observation:
        return observation.observe(
            self.map, self.mission, self.uav, self.obs_params, self.initial_budget
        )
