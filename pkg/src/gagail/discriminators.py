"""The two discriminators and the composite reward they induce.

The demonstration discriminator D_D(s) separates demonstration states from
generator states; the goal discriminator D_G(s) separates labeled goal
states from generator states. Both are sigmoid-output MLPs trained with
the usual adversarial cross-entropy pair

    J(params) = E_generated[-log(1 - D(s))] + E_reference[-log(D(s))]

and the generator's reward for a transition is read off the next state:

    r = -log(1 - D_D(s')) - log(1 - D_G(s')).

Outputs are clamped to [eps, 1-eps] before any logarithm, which bounds
every reward term by -log(eps).

Variants (ablation switches):
  full              both discriminators, adversarial
  no_goal           demonstration discriminator only
  no_demo           goal discriminator only
  demo_state_action D_D sees (state, one-hot action); its reward term then
                    depends on the transition's (s, a) instead of s'
  fixed_goal        D_G pretrained on goals vs random-policy states, frozen
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError
from .mdp import (
    ReplayMemory,
    Trajectory,
    Transition,
    load_trajectories,
    save_trajectories,
    stack_actions,
    stack_next_states,
    stack_states,
)
from .nets import MlpSpec, ParamSet, RmsProp, backward, forward, forward_cached, init_params

VARIANTS = ("full", "no_goal", "no_demo", "demo_state_action", "fixed_goal")


@dataclass
class DemoStore:
    """Demonstration set: trajectories, flattened to transitions on demand."""

    trajectories: List[Trajectory]

    @property
    def transitions(self) -> List[Transition]:
        return [t for traj in self.trajectories for t in traj.transitions]

    def __len__(self) -> int:
        return len(self.transitions)

    def states(self) -> np.ndarray:
        return stack_states(self.transitions)

    def save(self, path) -> None:
        save_trajectories(path, self.trajectories)

    @classmethod
    def load(cls, path) -> "DemoStore":
        return cls(trajectories=load_trajectories(path))


@dataclass
class GoalLabelSet:
    """Labeled goal states; always a subset of the demonstration states."""

    states: List[np.ndarray]
    strategy: str = "all_goals"
    sources: Optional[List[tuple]] = None  # (trajectory index, step index)

    def __len__(self) -> int:
        return len(self.states)

    def matrix(self) -> np.ndarray:
        return np.stack(self.states)

    def verify_subset(self, demos: DemoStore) -> bool:
        """Exact vector membership of every goal state among the states
        occurring in demo transitions (pre- or post-step)."""
        transitions = demos.transitions
        demo_states = np.concatenate(
            [stack_states(transitions), stack_next_states(transitions)]
        )
        for g in self.states:
            if not np.any(np.all(demo_states == g, axis=1)):
                return False
        return True

    def save(self, path) -> None:
        sources = self.sources or [(-1, -1)] * len(self.states)
        payload = {
            "strategy": self.strategy,
            "goals": [
                {"traj": int(t), "step": int(s), "state": state.tolist()}
                for (t, s), state in zip(sources, self.states)
            ],
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path) -> "GoalLabelSet":
        payload = json.loads(Path(path).read_text())
        goals = payload["goals"]
        return cls(
            states=[np.asarray(g["state"], dtype=np.float64) for g in goals],
            strategy=payload["strategy"],
            sources=[(g["traj"], g["step"]) for g in goals],
        )


def one_hot_actions(actions: np.ndarray, action_count: int) -> np.ndarray:
    encoded = np.zeros((len(actions), action_count))
    encoded[np.arange(len(actions)), np.asarray(actions, dtype=np.int64)] = 1.0
    return encoded


class DiscriminatorPair:
    """Demonstration and goal discriminators plus their variant wiring.

    The two networks never share parameters, in any variant. Optimizer
    state is owned by the caller (the trainer) and passed to
    :func:`update_discriminators`.
    """

    def __init__(
        self,
        observation_dim: int,
        action_count: int,
        variant: str,
        hidden: tuple,
        clamp_epsilon: float,
        rng: np.random.Generator,
    ):
        if variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        if not 0 < clamp_epsilon < 0.5:
            raise ConfigurationError("clamp_epsilon must lie in (0, 0.5)")
        self.variant = variant
        self.action_count = int(action_count)
        self.clamp_epsilon = float(clamp_epsilon)
        demo_input = observation_dim + (action_count if variant == "demo_state_action" else 0)

        self.demo_spec = self.demo_params = None
        if variant != "no_demo":
            self.demo_spec = MlpSpec((demo_input, *hidden, 1), output_activation="sigmoid")
            self.demo_params = init_params(self.demo_spec, rng)
        self.goal_spec = self.goal_params = None
        if variant != "no_goal":
            self.goal_spec = MlpSpec((observation_dim, *hidden, 1), output_activation="sigmoid")
            self.goal_params = init_params(self.goal_spec, rng)
        self.goal_frozen = False  # set by pretrain_fixed_goal

    @property
    def has_demo(self) -> bool:
        return self.demo_params is not None

    @property
    def has_goal(self) -> bool:
        return self.goal_params is not None

    def _clamp(self, outputs: np.ndarray) -> np.ndarray:
        eps = self.clamp_epsilon
        return np.clip(outputs, eps, 1.0 - eps)

    def demo_inputs(self, states: np.ndarray, actions=None) -> np.ndarray:
        if self.variant != "demo_state_action":
            return states
        if actions is None:
            raise ConfigurationError("demo_state_action variant needs actions")
        return np.concatenate([states, one_hot_actions(actions, self.action_count)], axis=1)

    def demo_outputs(self, states: np.ndarray, actions=None) -> np.ndarray:
        if not self.has_demo:
            raise ConfigurationError("variant has no demonstration discriminator")
        x = self.demo_inputs(np.atleast_2d(states), actions)
        return self._clamp(forward(self.demo_spec, self.demo_params, x)[:, 0])

    def goal_outputs(self, states: np.ndarray) -> np.ndarray:
        if not self.has_goal:
            raise ConfigurationError("variant has no goal discriminator")
        return self._clamp(
            forward(self.goal_spec, self.goal_params, np.atleast_2d(states))[:, 0]
        )


def _pair_loss_and_step(spec, params, clamp_eps, gen_x, ref_x, opt=None):
    """Adversarial pair loss; takes one gradient step when ``opt`` given.

    Loss = mean over generated of -log(1 - D) + mean over reference of
    -log(D), with outputs clamped before the logs. Clamped (saturated)
    outputs also receive zero gradient, which keeps the step finite.
    Returns (loss, new_params_or_None).
    """
    x = np.concatenate([gen_x, ref_x], axis=0)
    out, cache = forward_cached(spec, params, x)
    d = out[:, 0]
    clamped = np.clip(d, clamp_eps, 1.0 - clamp_eps)
    n_gen, n_ref = len(gen_x), len(ref_x)
    loss = float(
        np.mean(-np.log(1.0 - clamped[:n_gen]))
        + np.mean(-np.log(clamped[n_gen:]))
    )
    if opt is None:
        return loss, None
    inside = (d > clamp_eps) & (d < 1.0 - clamp_eps)
    grad = np.zeros_like(d)
    grad[:n_gen] = 1.0 / (1.0 - clamped[:n_gen]) / n_gen
    grad[n_gen:] = -1.0 / clamped[n_gen:] / n_ref
    grad *= inside
    grads = backward(spec, params, cache, grad[:, None])
    return loss, opt.step(params, grads)


def demo_disc_loss(pair: DiscriminatorPair, generated, demos, gen_actions=None, demo_actions=None) -> float:
    """Adversarial loss of D_D on a generated batch vs a demo batch."""
    generated, demos = np.atleast_2d(generated), np.atleast_2d(demos)
    if len(generated) == 0 or len(demos) == 0:
        raise ValueError("both batches must be nonempty")
    gen_x = pair.demo_inputs(generated, gen_actions)
    ref_x = pair.demo_inputs(demos, demo_actions)
    loss, _ = _pair_loss_and_step(
        pair.demo_spec, pair.demo_params, pair.clamp_epsilon, gen_x, ref_x
    )
    return loss


def goal_disc_loss(pair: DiscriminatorPair, generated, goals) -> float:
    """Adversarial loss of D_G on a generated batch vs a goal batch."""
    generated, goals = np.atleast_2d(generated), np.atleast_2d(goals)
    if len(generated) == 0 or len(goals) == 0:
        raise ValueError("both batches must be nonempty")
    loss, _ = _pair_loss_and_step(
        pair.goal_spec, pair.goal_params, pair.clamp_epsilon, generated, goals
    )
    return loss


def update_discriminators(
    pair: DiscriminatorPair,
    memory: ReplayMemory,
    demos: Optional[DemoStore],
    goals: Optional[GoalLabelSet],
    sweeps: int,
    demo_opt: Optional[RmsProp],
    goal_opt: Optional[RmsProp],
    seed: int,
):
    """J sweeps of combined discriminator steps over the replay memory.

    Each sweep shuffles the memory into B minibatches of generator states;
    per minibatch, equally sized reference batches are drawn with
    replacement from the demo and goal sets and one gradient step is taken
    on each active, unfrozen discriminator. Returns per-sweep mean losses
    as a dict with "demo" and "goal" arrays (NaN when inactive).
    """
    if pair.has_demo and (demos is None or len(demos.trajectories) == 0):
        raise ConfigurationError("demonstration discriminator active but no demos given")
    if pair.has_goal and (goals is None or len(goals) == 0):
        raise ConfigurationError("goal discriminator active but no goal labels given")

    demo_states = demos.states() if pair.has_demo else None
    demo_actions = stack_actions(demos.transitions) if pair.has_demo else None
    goal_states = goals.matrix() if pair.has_goal else None
    demo_sampler = np.random.default_rng(np.random.SeedSequence([int(seed), 77, 0]))
    goal_sampler = np.random.default_rng(np.random.SeedSequence([int(seed), 77, 1]))

    demo_losses, goal_losses = [], []
    for sweep in range(sweeps):
        shuffle_seed = int(np.random.SeedSequence([int(seed), 78, sweep]).generate_state(1)[0])
        sweep_demo, sweep_goal = [], []
        for batch in memory.shuffled_minibatches(shuffle_seed):
            gen_states = stack_states(batch)
            gen_actions = stack_actions(batch)
            if pair.has_demo:
                idx = demo_sampler.integers(len(demo_states), size=len(batch))
                loss, new_params = _pair_loss_and_step(
                    pair.demo_spec,
                    pair.demo_params,
                    pair.clamp_epsilon,
                    pair.demo_inputs(gen_states, gen_actions),
                    pair.demo_inputs(demo_states[idx], demo_actions[idx]),
                    demo_opt,
                )
                pair.demo_params = new_params
                sweep_demo.append(loss)
            if pair.has_goal:
                idx = goal_sampler.integers(len(goal_states), size=len(batch))
                loss, new_params = _pair_loss_and_step(
                    pair.goal_spec,
                    pair.goal_params,
                    pair.clamp_epsilon,
                    gen_states,
                    goal_states[idx],
                    None if pair.goal_frozen else goal_opt,
                )
                if new_params is not None:
                    pair.goal_params = new_params
                sweep_goal.append(loss)
        demo_losses.append(float(np.mean(sweep_demo)) if sweep_demo else float("nan"))
        goal_losses.append(float(np.mean(sweep_goal)) if sweep_goal else float("nan"))
    return {"demo": np.asarray(demo_losses), "goal": np.asarray(goal_losses)}


def pretrain_fixed_goal(
    pair: DiscriminatorPair,
    goals: GoalLabelSet,
    negatives: np.ndarray,
    steps: int,
    opt: RmsProp,
    seed: int,
    batch_size: int = 32,
) -> float:
    """Train the goal discriminator as a static classifier, then freeze it.

    Positives are the labeled goal states, negatives come from
    random-policy rollouts; both sides are sampled with replacement per
    step. Returns the final-step loss. Afterwards the goal parameters
    never change again.
    """
    if pair.variant != "fixed_goal":
        raise TypeError("pretraining applies only to the fixed_goal variant")
    positives = goals.matrix()
    negatives = np.atleast_2d(negatives)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 79]))
    loss = float("nan")
    for _ in range(steps):
        neg = negatives[rng.integers(len(negatives), size=batch_size)]
        pos = positives[rng.integers(len(positives), size=batch_size)]
        loss, pair.goal_params = _pair_loss_and_step(
            pair.goal_spec, pair.goal_params, pair.clamp_epsilon, neg, pos, opt
        )
    pair.goal_frozen = True
    return loss


def reward(
    pair: DiscriminatorPair,
    next_state: np.ndarray,
    state: Optional[np.ndarray] = None,
    action: Optional[int] = None,
) -> float:
    """Composite reward -log(1 - D_D) - log(1 - D_G) for one transition.

    The demonstration term is evaluated on the next state, except in the
    demo_state_action variant where it uses the transition's (state,
    action). Inactive discriminators simply drop their term.
    """
    total = 0.0
    if pair.has_demo:
        if pair.variant == "demo_state_action":
            if state is None or action is None:
                raise ConfigurationError("demo_state_action reward needs (state, action)")
            d = pair.demo_outputs(state[None, :], np.asarray([action]))[0]
        else:
            d = pair.demo_outputs(next_state[None, :])[0]
        total += -np.log(1.0 - d)
    if pair.has_goal:
        g = pair.goal_outputs(next_state[None, :])[0]
        total += -np.log(1.0 - g)
    return float(total)


def rewards_for(pair: DiscriminatorPair, transitions) -> np.ndarray:
    """Vectorized composite reward for a list of transitions."""
    next_states = stack_next_states(transitions)
    total = np.zeros(len(transitions))
    if pair.has_demo:
        if pair.variant == "demo_state_action":
            d = pair.demo_outputs(stack_states(transitions), stack_actions(transitions))
        else:
            d = pair.demo_outputs(next_states)
        total += -np.log(1.0 - d)
    if pair.has_goal:
        total += -np.log(1.0 - pair.goal_outputs(next_states))
    return total


def fill_rewards(pair: DiscriminatorPair, memory: ReplayMemory) -> None:
    """Overwrite every stored transition's reward from the current pair."""
    transitions = memory.transitions()
    if not transitions:
        return
    values = rewards_for(pair, transitions)
    for t, r in zip(transitions, values):
        t.reward = float(r)
