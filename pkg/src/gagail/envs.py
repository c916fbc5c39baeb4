"""The two benchmark environments, on low-dimensional feature observations.

Both tasks are fully deterministic with fixed initial states; all episode
variety comes from the policy. Evaluation rewards are computed from the
post-step state only, so they can be recomputed from any observation.

Twice-reaching: a 2-DoF planar arm must first touch a switch target;
touching it irreversibly moves the true target to a second position. The
observation is [sin t1, cos t1, sin t2, cos t2, phase].

Pick-and-place: a planar hand moves in 8 compass directions at two step
sizes, can grasp a block under it and release it; the goal is the block
near a fixed goal position. The observation is
[hand_x, hand_y, block_x, block_y, goal_x, goal_y, grasping].
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError
from .mdp import rollout
from .softpolicy import UniformRandomPolicy

JOINT_INCREMENTS = (-0.0875, -0.0175, 0.0, 0.0175, 0.0875)


def _wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


class TwiceReachEnv:
    """2-DoF manipulator twice-reaching task.

    Ten actions: action = joint * 5 + increment_index, one joint moves per
    step by one of ``JOINT_INCREMENTS`` radians. The evaluation reward is
    -(|Xt - X| + |Yt - Y|) against the phase-appropriate target, plus 5
    when the tip is within ``reach_threshold`` of that target. Touching
    the first target flips the phase irreversibly (checked after the
    reward so the switching step is still paid against the first target).

    Link lengths default to 0.3415 each so the fully stretched arm reaches
    exactly the second target's radius 0.6830. The first target sits at the
    same radius, an eighth turn away, so a 30-step demonstration episode
    has ample slack to complete both reaches.
    """

    name = "twice_reach"
    action_count = 10
    observation_dim = 5
    default_horizon = 300

    def __init__(
        self,
        link_lengths: Tuple[float, float] = (0.3415, 0.3415),
        second_target: Tuple[float, float] = (0.6830, 0.0),
        first_target: Optional[Tuple[float, float]] = None,
        reach_threshold: float = 0.2,
    ):
        self.link_lengths = (float(link_lengths[0]), float(link_lengths[1]))
        self.second_target = np.asarray(second_target, dtype=np.float64)
        if first_target is None:
            radius = float(np.linalg.norm(self.second_target))
            first_target = (radius / math.sqrt(2.0), radius / math.sqrt(2.0))
        self.first_target = np.asarray(first_target, dtype=np.float64)
        self.reach_threshold = float(reach_threshold)
        self.reset()

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """Both joint angles to 0 rad, phase to pre-switch; seed is unused
        (the task is deterministic) but accepted for interface parity."""
        self.joint_angles = np.zeros(2, dtype=np.float64)
        self.phase = 0
        return self.observation()

    def tip_position(self, angles: Optional[np.ndarray] = None) -> np.ndarray:
        if angles is None:
            angles = self.joint_angles
        l1, l2 = self.link_lengths
        t1, t12 = angles[0], angles[0] + angles[1]
        return np.array(
            [l1 * math.cos(t1) + l2 * math.cos(t12),
             l1 * math.sin(t1) + l2 * math.sin(t12)]
        )

    def observation(self) -> np.ndarray:
        t1, t2 = self.joint_angles
        return np.array(
            [math.sin(t1), math.cos(t1), math.sin(t2), math.cos(t2), float(self.phase)]
        )

    def _current_target(self) -> np.ndarray:
        return self.second_target if self.phase else self.first_target

    def step(self, action: int) -> Tuple[np.ndarray, float]:
        action = int(action)
        if not 0 <= action < self.action_count:
            raise ConfigurationError(f"action {action} out of range [0, {self.action_count})")
        joint, inc = divmod(action, len(JOINT_INCREMENTS))
        self.joint_angles[joint] = _wrap_angle(
            self.joint_angles[joint] + JOINT_INCREMENTS[inc]
        )
        tip = self.tip_position()
        target = self._current_target()
        reward = -(abs(target[0] - tip[0]) + abs(target[1] - tip[1]))
        if float(np.linalg.norm(tip - target)) < self.reach_threshold:
            reward += 5.0
        if self.phase == 0 and (
            float(np.linalg.norm(tip - self.first_target)) < self.reach_threshold
        ):
            self.phase = 1
        return self.observation(), float(reward)

    def tip_from_observation(self, obs: np.ndarray) -> np.ndarray:
        l1, l2 = self.link_lengths
        sin1, cos1, sin2, cos2 = obs[0], obs[1], obs[2], obs[3]
        # angle-sum identities avoid recovering the angles themselves
        cos12 = cos1 * cos2 - sin1 * sin2
        sin12 = sin1 * cos2 + cos1 * sin2
        return np.array([l1 * cos1 + l2 * cos12, l1 * sin1 + l2 * sin12])

    def is_goal(self, obs: np.ndarray) -> bool:
        """Goal: phase already switched and tip within threshold of the
        second target. Pure predicate on the observation."""
        if obs[4] < 0.5:
            return False
        tip = self.tip_from_observation(obs)
        return float(np.linalg.norm(tip - self.second_target)) < self.reach_threshold


# Compass directions, counterclockwise from +x in 45-degree steps.
_DIAG = math.sqrt(0.5)
COMPASS_DIRECTIONS = (
    (1.0, 0.0), (_DIAG, _DIAG), (0.0, 1.0), (-_DIAG, _DIAG),
    (-1.0, 0.0), (-_DIAG, -_DIAG), (0.0, -1.0), (_DIAG, -_DIAG),
)


class PickPlaceEnv:
    """Planar pick-and-place with 18 discrete actions.

    Actions 0..15 translate the hand: direction = action % 8 (compass,
    counterclockwise from +x), magnitude = (0.7, 0.2)[action // 8], clipped
    to the unit-square workspace. Action 16 is pick-or-place: it grasps
    when a block lies within ``pick_radius`` of the hand, and releases when
    already grasping. Action 17 is a stop (identity). While grasping the
    block tracks the hand exactly.

    Evaluation reward is r_r + r_d + r_p with r_r = -|hand - block|_1,
    r_d = -|block - goal|_1, and r_p = +2 / +1 when the block is within
    Euclidean 0.05 / 0.1 of the goal.
    """

    name = "pick_place"
    action_count = 18
    observation_dim = 7
    default_horizon = 150

    MOVE_MAGNITUDES = (0.7, 0.2)
    PICK_OR_PLACE = 16
    STOP = 17

    def __init__(
        self,
        hand_start: Tuple[float, float] = (0.5, 0.5),
        block_start: Tuple[float, float] = (0.3, 0.5),
        goal_position: Tuple[float, float] = (0.7, 0.5),
        pick_radius: float = 0.1,
        place_thresholds: Tuple[float, float] = (0.1, 0.05),
        place_bonuses: Tuple[float, float] = (1.0, 2.0),
    ):
        self.hand_start = np.asarray(hand_start, dtype=np.float64)
        self.block_start = np.asarray(block_start, dtype=np.float64)
        self.goal_position = np.asarray(goal_position, dtype=np.float64)
        self.pick_radius = float(pick_radius)
        self.place_thresholds = place_thresholds
        self.place_bonuses = place_bonuses
        self.reset()

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        self.hand = self.hand_start.copy()
        self.block = self.block_start.copy()
        self.grasping = 0
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.concatenate(
            [self.hand, self.block, self.goal_position, [float(self.grasping)]]
        )

    def _place_reward(self, block: np.ndarray) -> float:
        distance = float(np.linalg.norm(block - self.goal_position))
        loose, tight = self.place_thresholds
        if distance < tight:
            return float(self.place_bonuses[1])
        if distance < loose:
            return float(self.place_bonuses[0])
        return 0.0

    def step(self, action: int) -> Tuple[np.ndarray, float]:
        action = int(action)
        if not 0 <= action < self.action_count:
            raise ConfigurationError(f"action {action} out of range [0, {self.action_count})")
        if action < self.PICK_OR_PLACE:
            direction = np.asarray(COMPASS_DIRECTIONS[action % 8])
            magnitude = self.MOVE_MAGNITUDES[action // 8]
            self.hand = np.clip(self.hand + magnitude * direction, 0.0, 1.0)
            if self.grasping:
                self.block = self.hand.copy()
        elif action == self.PICK_OR_PLACE:
            if self.grasping:
                self.grasping = 0
            elif float(np.linalg.norm(self.hand - self.block)) <= self.pick_radius:
                self.grasping = 1
                self.block = self.hand.copy()
        # STOP: identity
        reward = (
            -float(np.abs(self.hand - self.block).sum())
            - float(np.abs(self.block - self.goal_position).sum())
            + self._place_reward(self.block)
        )
        return self.observation(), float(reward)

    def is_goal(self, obs: np.ndarray) -> bool:
        """Goal: block within the loose place threshold of the goal."""
        block = obs[2:4]
        goal = obs[4:6]
        return float(np.linalg.norm(block - goal)) < self.place_thresholds[0]


ENV_KINDS = ("twice_reach", "pick_place")


def make_env(kind: str, **overrides):
    """Construct a benchmark by name; overrides go to the constructor."""
    if kind == "twice_reach":
        return TwiceReachEnv(**overrides)
    if kind == "pick_place":
        return PickPlaceEnv(**overrides)
    raise ConfigurationError(f"unknown environment kind {kind!r}; choose from {ENV_KINDS}")


def is_goal(env_or_kind, obs: np.ndarray) -> bool:
    """Goal predicate usable with either an env instance or its name."""
    env = make_env(env_or_kind) if isinstance(env_or_kind, str) else env_or_kind
    return env.is_goal(obs)


def random_policy_baseline(
    env_or_kind, episodes: int, seed: int, horizon: Optional[int] = None
) -> float:
    """Mean total evaluation reward of uniform-random rollouts.

    This is the zero point of scaled performance.
    """
    if episodes < 1:
        raise ConfigurationError("episodes must be >= 1")
    env = make_env(env_or_kind) if isinstance(env_or_kind, str) else env_or_kind
    horizon = horizon or env.default_horizon
    policy = UniformRandomPolicy(env.action_count)
    totals = []
    for episode in range(episodes):
        episode_seed = int(
            np.random.SeedSequence([int(seed), 900 + episode]).generate_state(1)[0]
        )
        totals.append(rollout(env, policy, horizon, episode_seed).total_eval_reward)
    return float(np.mean(totals))
