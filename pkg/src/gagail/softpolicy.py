"""Action-preference policies and their update operators.

The generator's policy is a softmax over an action-preference function
P(s, a) at effective inverse temperature eta / (1 + sigma * eta): eta
penalizes movement away from the previous policy, sigma adds an entropy
bonus, and together they only rescale the softmax temperature. The soft
state value is the matching log-sum-exp. Three update rules live here:

* a synchronous tabular sweep (KL-regularized value iteration) for exact
  tabular MDPs,
* the sampled teaching-signal regression used by the deep generator
  (reduces to the plain deep P-network rule at sigma = 0),
* the max-bootstrap Q-learning target used by the DQN baselines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .mdp import Transition
from .nets import (
    MlpSpec,
    ParamSet,
    RmsProp,
    backward,
    forward,
    forward_cached,
    init_params,
)


@dataclass(frozen=True)
class SoftPolicyParams:
    """Inverse temperature eta, entropy coefficient sigma, discount gamma."""

    eta: float
    sigma: float
    gamma: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError(f"eta must be > 0, got {self.eta}")
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 < self.gamma < 1:
            raise ConfigurationError(f"gamma must be in (0,1), got {self.gamma}")

    @property
    def beta(self) -> float:
        """Effective inverse temperature eta / (1 + sigma * eta)."""
        return self.eta / (1.0 + self.sigma * self.eta)


def soft_value(preferences: np.ndarray, params: SoftPolicyParams) -> np.ndarray:
    """Soft state value (1/beta) * log sum_a exp(beta * P(s, a)).

    Works on the trailing axis, so a (S, A) table yields S values and a
    single preference row yields a scalar. Computed with max subtraction.
    """
    prefs = np.asarray(preferences, dtype=np.float64)
    beta = params.beta
    m = prefs.max(axis=-1)
    z = np.exp(beta * (prefs - m[..., None]))
    return m + np.log(z.sum(axis=-1)) / beta


def policy_probs(preferences: np.ndarray, params: SoftPolicyParams) -> np.ndarray:
    """Softmax policy exp(beta * P) / sum exp(beta * P), max-subtracted."""
    prefs = np.asarray(preferences, dtype=np.float64)
    z = np.exp(params.beta * (prefs - prefs.max(axis=-1, keepdims=True)))
    return z / z.sum(axis=-1, keepdims=True)


def greedy_action(preference_row: np.ndarray) -> int:
    """Argmax with ties broken toward the lowest action index."""
    return int(np.argmax(preference_row))


# ---------------------------------------------------------------------------
# Preference function backends
# ---------------------------------------------------------------------------

class TabularPreference:
    """Preference table P[s, a] over an enumerated state space."""

    def __init__(self, table: np.ndarray):
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.ndim != 2:
            raise ConfigurationError("preference table must be 2-D (states x actions)")

    @property
    def action_count(self) -> int:
        return self.table.shape[1]

    @property
    def state_count(self) -> int:
        return self.table.shape[0]

    def values(self, state_ids) -> np.ndarray:
        return self.table[np.asarray(state_ids, dtype=np.int64)]

    @classmethod
    def zeros(cls, state_count: int, action_count: int) -> "TabularPreference":
        return cls(np.zeros((state_count, action_count)))


class MlpPreference:
    """Preference function approximated by a dense network over observations."""

    def __init__(self, spec: MlpSpec, params: ParamSet):
        if spec.output_activation != "identity":
            raise ConfigurationError("preference networks use identity outputs")
        self.spec = spec
        self.params = params

    @property
    def action_count(self) -> int:
        return self.spec.output_dim

    def values(self, observations: np.ndarray) -> np.ndarray:
        return forward(self.spec, self.params, observations)

    def copy(self) -> "MlpPreference":
        return MlpPreference(self.spec, [p.copy() for p in self.params])

    @classmethod
    def create(
        cls,
        observation_dim: int,
        action_count: int,
        hidden: tuple,
        rng: np.random.Generator,
    ) -> "MlpPreference":
        spec = MlpSpec((observation_dim, *hidden, action_count))
        return cls(spec, init_params(spec, rng))


# ---------------------------------------------------------------------------
# Tabular MDPs and the synchronous sweep
# ---------------------------------------------------------------------------

@dataclass
class TabularMDP:
    """Finite MDP with dense transition tensor T[s, a, s'] and rewards."""

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.transitions.ndim != 3 or self.transitions.shape != self.rewards.shape:
            raise ConfigurationError("transition and reward tensors must both be (S, A, S)")
        rows = self.transitions.sum(axis=2)
        if np.any(self.transitions < 0) or np.any(np.abs(rows - 1.0) > 1e-12):
            raise ConfigurationError("each T[s, a, :] must be a probability distribution")
        if not 0 < self.gamma < 1:
            raise ConfigurationError(f"gamma must be in (0,1), got {self.gamma}")

    @property
    def state_count(self) -> int:
        return self.transitions.shape[0]

    @property
    def action_count(self) -> int:
        return self.transitions.shape[1]


def dpp_operator(
    pref: TabularPreference, mdp: TabularMDP, params: SoftPolicyParams
) -> TabularPreference:
    """One synchronous KL-regularized sweep over every (s, a).

    new P(s, a) = P(s, a) - V(s) + sum_s' T[s,a,s'] (r[s,a,s'] + gamma V(s'))
    with V the sigma = 0 soft value at inverse temperature eta. Preferences
    of suboptimal actions drift to -inf across sweeps; the soft values and
    the greedy policy converge.
    """
    if not isinstance(pref, TabularPreference):
        raise TypeError("dpp_operator only supports the tabular backend")
    if params.sigma != 0.0:
        raise ConfigurationError("the plain sweep is defined for sigma = 0")
    if params.gamma != mdp.gamma:
        raise ConfigurationError(
            f"params.gamma={params.gamma} disagrees with mdp.gamma={mdp.gamma}"
        )
    v = soft_value(pref.table, params)
    expected = np.einsum("san,san->sa", mdp.transitions, mdp.rewards)
    expected += mdp.gamma * (mdp.transitions @ v)
    return TabularPreference(pref.table - v[:, None] + expected)


# ---------------------------------------------------------------------------
# Sampled targets and regression updates
# ---------------------------------------------------------------------------

def edpn_targets(
    prefs_state: np.ndarray,
    actions: np.ndarray,
    rewards: np.ndarray,
    prefs_next: np.ndarray,
    params: SoftPolicyParams,
) -> np.ndarray:
    """Batched teaching signal from frozen target-network preferences.

    y = (P(s,a) - V(s)) / (1 + sigma*eta) + r + gamma * V(s')
    where both soft values come from the same (target) preference rows.
    """
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    v_s = soft_value(prefs_state, params)
    v_next = soft_value(prefs_next, params)
    picked = prefs_state[np.arange(len(actions)), actions]
    shrink = 1.0 / (1.0 + params.sigma * params.eta)
    return shrink * (picked - v_s) + rewards + params.gamma * v_next


def edpn_target(
    target_pref, transition: Transition, params: SoftPolicyParams
) -> float:
    """Teaching signal for a single reward-filled transition."""
    if transition.reward is None:
        raise ValueError("transition reward missing; fill rewards first")
    p_s = target_pref.values(transition.state[None, :])
    p_next = target_pref.values(transition.next_state[None, :])
    y = edpn_targets(
        p_s, [transition.action], [transition.reward], p_next, params
    )
    return float(y[0])


def dqn_target(target_pref, transition: Transition, gamma: float) -> float:
    """Q-learning bootstrap r + gamma * max_a' Q(s', a')."""
    if transition.reward is None:
        raise ValueError("transition reward missing; fill rewards first")
    q_next = target_pref.values(transition.next_state[None, :])[0]
    return float(transition.reward + gamma * q_next.max())


def _batch_arrays(batch):
    states = np.stack([t.state for t in batch])
    actions = np.asarray([t.action for t in batch], dtype=np.int64)
    next_states = np.stack([t.next_state for t in batch])
    rewards = np.asarray([t.reward for t in batch], dtype=np.float64)
    if np.any([t.reward is None for t in batch]):
        raise ValueError("minibatch contains transitions without rewards")
    return states, actions, next_states, rewards


def _fit_action_values(
    pref: MlpPreference, states, actions, targets, opt: RmsProp
) -> float:
    """One gradient step of (y - P(s,a))^2; only the taken action's output
    receives gradient. Returns the pre-step batch-mean loss."""
    out, cache = forward_cached(pref.spec, pref.params, states)
    n = len(actions)
    picked = out[np.arange(n), actions]
    residual = picked - targets
    loss = float(np.mean(residual * residual))
    grad_out = np.zeros_like(out)
    grad_out[np.arange(n), actions] = 2.0 * residual / n
    grads = backward(pref.spec, pref.params, cache, grad_out)
    pref.params = opt.step(pref.params, grads)
    return loss


def edpn_update(
    pref: MlpPreference,
    minibatch,
    target_pref: MlpPreference,
    opt: RmsProp,
    params: SoftPolicyParams,
) -> float:
    """Regress the taken action's preference onto the teaching signal."""
    states, actions, next_states, rewards = _batch_arrays(minibatch)
    y = edpn_targets(
        target_pref.values(states), actions, rewards,
        target_pref.values(next_states), params,
    )
    return _fit_action_values(pref, states, actions, y, opt)


def dqn_update(
    pref: MlpPreference,
    minibatch,
    target_pref: MlpPreference,
    opt: RmsProp,
    gamma: float,
) -> float:
    """Regress Q(s,a) onto the max-bootstrap target."""
    states, actions, next_states, rewards = _batch_arrays(minibatch)
    y = rewards + gamma * target_pref.values(next_states).max(axis=1)
    return _fit_action_values(pref, states, actions, y, opt)


# ---------------------------------------------------------------------------
# Behavior policies
# ---------------------------------------------------------------------------

class SoftmaxPolicy:
    """Samples from the softmax policy of a preference function."""

    def __init__(self, pref, params: SoftPolicyParams):
        self.pref = pref
        self.params = params

    @property
    def action_count(self) -> int:
        return self.pref.action_count

    def probabilities(self, observation: np.ndarray) -> np.ndarray:
        return policy_probs(self.pref.values(observation[None, :])[0], self.params)

    def __call__(self, observation: np.ndarray, rng: np.random.Generator) -> int:
        p = self.probabilities(observation)
        return int(np.searchsorted(np.cumsum(p), rng.random(), side="right").clip(0, len(p) - 1))


class GreedyPolicy:
    """Deterministic argmax policy used for evaluation rollouts."""

    def __init__(self, pref):
        self.pref = pref

    @property
    def action_count(self) -> int:
        return self.pref.action_count

    def __call__(self, observation: np.ndarray, rng: np.random.Generator) -> int:
        return greedy_action(self.pref.values(observation[None, :])[0])


class EpsilonGreedyPolicy:
    """Greedy policy with uniform exploration at rate epsilon."""

    def __init__(self, pref, epsilon: float):
        self.pref = pref
        self.epsilon = float(epsilon)

    @property
    def action_count(self) -> int:
        return self.pref.action_count

    def __call__(self, observation: np.ndarray, rng: np.random.Generator) -> int:
        if rng.random() < self.epsilon:
            return int(rng.integers(self.action_count))
        return greedy_action(self.pref.values(observation[None, :])[0])


class UniformRandomPolicy:
    """Uniform random actions; the zero point of scaled performance."""

    def __init__(self, action_count: int):
        self.action_count = int(action_count)

    def __call__(self, observation: np.ndarray, rng: np.random.Generator) -> int:
        return int(rng.integers(self.action_count))
