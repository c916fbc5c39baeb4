"""Environment-agnostic MDP plumbing: transitions, trajectories, replay.

Transitions carry two reward slots: ``reward`` is the training signal
(absent at collection time, filled in later from the discriminators or,
for teacher runs, from the environment), and ``eval_reward`` is the
environment's evaluation-only reward, recorded on every step but never
shown to the generator.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError


@dataclass
class Transition:
    state: np.ndarray
    action: int
    next_state: np.ndarray
    eval_reward: float
    reward: Optional[float] = None


@dataclass
class Trajectory:
    transitions: List[Transition]
    episode_seed: int

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def total_eval_reward(self) -> float:
        return float(sum(t.eval_reward for t in self.transitions))

    @property
    def final_state(self) -> np.ndarray:
        return self.transitions[-1].next_state

    def states_visited(self) -> np.ndarray:
        """All post-step states, in order (one per transition)."""
        return np.stack([t.next_state for t in self.transitions])


def stack_states(transitions) -> np.ndarray:
    return np.stack([t.state for t in transitions])


def stack_next_states(transitions) -> np.ndarray:
    return np.stack([t.next_state for t in transitions])


def stack_actions(transitions) -> np.ndarray:
    return np.asarray([t.action for t in transitions], dtype=np.int64)


class ReplayMemory:
    """FIFO ring of transitions with seeded minibatch partitioning."""

    def __init__(self, capacity: int, minibatch_size: int):
        if capacity < 1:
            raise ConfigurationError("capacity must be >= 1")
        if minibatch_size < 1:
            raise ConfigurationError("minibatch_size must be >= 1")
        self.capacity = int(capacity)
        self.minibatch_size = int(minibatch_size)
        self._entries: List[Transition] = []
        self._next = 0  # ring write position once full

    def __len__(self) -> int:
        return len(self._entries)

    def store(self, t: Transition) -> None:
        """Append, evicting the oldest entry when at capacity."""
        if len(self._entries) < self.capacity:
            self._entries.append(t)
        else:
            self._entries[self._next] = t
            self._next = (self._next + 1) % self.capacity

    def extend(self, transitions) -> None:
        for t in transitions:
            self.store(t)

    def clear(self) -> None:
        self._entries = []
        self._next = 0

    def transitions(self) -> List[Transition]:
        """Entries in insertion order, oldest first."""
        return self._entries[self._next:] + self._entries[: self._next]

    @property
    def minibatch_count(self) -> int:
        return len(self._entries) // self.minibatch_size

    def shuffled_minibatches(self, seed: int) -> List[List[Transition]]:
        """Seeded permutation of all indices cut into disjoint minibatches.

        Covers every stored transition at most once; a remainder smaller
        than one minibatch is dropped for that sweep. If fewer entries than
        one minibatch exist, returns an empty list with a warning.
        """
        b = self.minibatch_count
        if b == 0:
            warnings.warn(
                f"replay holds {len(self._entries)} < {self.minibatch_size} "
                "transitions; no minibatches this sweep",
                stacklevel=2,
            )
            return []
        entries = self.transitions()
        order = np.random.default_rng(np.random.SeedSequence(seed)).permutation(
            len(entries)
        )
        return [
            [entries[j] for j in order[i * self.minibatch_size:(i + 1) * self.minibatch_size]]
            for i in range(b)
        ]


def rollout(env, policy, horizon: int, seed: int) -> Trajectory:
    """Run ``policy`` for exactly ``horizon`` steps from a fresh reset.

    Episodes are fixed-horizon: reaching a goal does not end them. The
    same (environment config, policy parameters, seed) triple reproduces
    the identical trajectory bit for bit.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    policy_actions = getattr(policy, "action_count", None)
    if policy_actions is not None and policy_actions != env.action_count:
        raise ConfigurationError(
            f"policy emits {policy_actions} actions but environment "
            f"expects {env.action_count}"
        )
    seed = int(seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    obs = env.reset(seed=seed)
    steps = []
    for _ in range(horizon):
        action = policy(obs, rng)
        next_obs, eval_reward = env.step(action)
        steps.append(
            Transition(
                state=obs, action=int(action), next_state=next_obs,
                eval_reward=float(eval_reward),
            )
        )
        obs = next_obs
    return Trajectory(transitions=steps, episode_seed=seed)


# ---------------------------------------------------------------------------
# Trajectory serialization: one JSON object per line
# ---------------------------------------------------------------------------

def trajectory_to_json(traj: Trajectory) -> str:
    return json.dumps(
        {
            "seed": traj.episode_seed,
            "steps": [
                {
                    "s": t.state.tolist(),
                    "a": t.action,
                    "s2": t.next_state.tolist(),
                    "r_eval": t.eval_reward,
                }
                for t in traj.transitions
            ],
        }
    )


def trajectory_from_json(line: str) -> Trajectory:
    payload = json.loads(line)
    steps = [
        Transition(
            state=np.asarray(s["s"], dtype=np.float64),
            action=int(s["a"]),
            next_state=np.asarray(s["s2"], dtype=np.float64),
            eval_reward=float(s["r_eval"]),
        )
        for s in payload["steps"]
    ]
    return Trajectory(transitions=steps, episode_seed=int(payload["seed"]))


def save_trajectories(path, trajectories) -> None:
    Path(path).write_text(
        "".join(trajectory_to_json(t) + "\n" for t in trajectories)
    )


def load_trajectories(path) -> List[Trajectory]:
    lines = Path(path).read_text().splitlines()
    return [trajectory_from_json(line) for line in lines if line.strip()]
