"""End-to-end training loop and experiment bookkeeping.

One iteration has four phases, in a fixed order:

1. roll out M episodes of T steps with the current behavior policy into a
   freshly cleared replay memory;
2. update the discriminators for J sweeps over the memory;
3. overwrite every stored transition's reward from the updated
   discriminators (teacher runs copy the environment's evaluation reward
   instead);
4. update the generator for K sweeps of minibatch regression, then refresh
   the target network.

Each iteration appends one metrics row; a greedy evaluation supplies the
mean return, success rate, and scaled performance (0 = random policy,
1 = the demonstrations the run learned from).
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .discriminators import (
    DemoStore,
    DiscriminatorPair,
    GoalLabelSet,
    VARIANTS,
    fill_rewards,
    pretrain_fixed_goal,
    update_discriminators,
)
from .envs import make_env, random_policy_baseline
from .errors import ConfigurationError, DivergenceError
from .mdp import ReplayMemory, rollout, stack_actions, stack_states
from .nets import RmsProp, softmax_cross_entropy_loss, forward_cached, backward
from .seeding import rng_for, seed_for
from .softpolicy import (
    EpsilonGreedyPolicy,
    GreedyPolicy,
    MlpPreference,
    SoftPolicyParams,
    SoftmaxPolicy,
    dqn_update,
    edpn_update,
)

METHODS = ("gagail_edpn", "gail_edpn", "gagail_dqn", "gail_dqn", "bc")

# seed-path tags
_INIT, _ROLLOUT, _DISC, _GEN, _EVAL, _BASELINE, _PRETRAIN, _BC = range(8)


@dataclass(frozen=True)
class OptimizerSettings:
    learning_rate: float = 0.00025
    momentum: float = 0.95
    epsilon: float = 0.01
    clip_norm: float = 5.0
    batch_size: int = 32

    def make(self) -> RmsProp:
        return RmsProp(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            epsilon=self.epsilon,
            clip_norm=self.clip_norm,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run."""

    env: str
    method: str
    variant: str = "full"
    iterations: int = 10
    episodes_per_iteration: int = 10
    steps_per_episode: int = 300
    disc_sweeps: int = 1
    gen_sweeps: int = 1
    soft: SoftPolicyParams = SoftPolicyParams(eta=0.25, sigma=0.04, gamma=0.95)
    optimizer: OptimizerSettings = OptimizerSettings()
    generator_optimizer: Optional[OptimizerSettings] = None
    hidden: tuple = (64, 64)
    replay_capacity: int = 0  # 0 -> episodes_per_iteration * steps_per_episode
    clamp_epsilon: float = 1e-6
    demo_file: str = ""
    goal_file: str = ""
    seed: int = 0
    eval_episodes: int = 5
    baseline_episodes: int = 20
    epsilon_start: float = 1.0
    epsilon_final: float = 0.1
    pretrain_negatives: int = 4500
    pretrain_steps: int = 2000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.method.startswith("gail_") and self.variant != "no_goal":
            raise ConfigurationError(
                f"method {self.method} runs without a goal discriminator; "
                "set variant = 'no_goal'"
            )
        for name in ("iterations", "episodes_per_iteration", "steps_per_episode",
                     "disc_sweeps", "gen_sweeps"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    @property
    def generator_kind(self) -> str:
        return "dqn" if self.method.endswith("_dqn") else "edpn"

    @property
    def effective_capacity(self) -> int:
        return self.replay_capacity or (
            self.episodes_per_iteration * self.steps_per_episode
        )

    @property
    def gen_opt_settings(self) -> OptimizerSettings:
        return self.generator_optimizer or self.optimizer


@dataclass
class IterationRecord:
    iteration: int
    samples: int
    mean_return: float
    scaled_perf: float
    success_rate: float
    loss_demo_disc: float
    loss_goal_disc: float
    loss_generator: float


CSV_COLUMNS = tuple(f.name for f in fields(IterationRecord))


class RunRecord:
    """Per-iteration metric trail of one run."""

    def __init__(self, rows: Optional[List[IterationRecord]] = None, diverged: bool = False):
        self.rows = rows or []
        self.diverged = diverged

    def append(self, row: IterationRecord) -> None:
        self.rows.append(row)

    @property
    def final(self) -> IterationRecord:
        return self.rows[-1]

    def column(self, name: str) -> np.ndarray:
        return np.asarray([getattr(r, name) for r in self.rows], dtype=np.float64)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [r.iteration, r.samples]
                + [repr(float(getattr(r, c))) for c in CSV_COLUMNS[2:]]
            )
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv_text())

    @classmethod
    def load(cls, path) -> "RunRecord":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(
                    IterationRecord(
                        iteration=int(rec["iteration"]),
                        samples=int(rec["samples"]),
                        **{c: float(rec[c]) for c in CSV_COLUMNS[2:]},
                    )
                )
        return cls(rows)


@dataclass(frozen=True)
class Anchors:
    """Affine anchors of scaled performance."""

    random_baseline: float
    demo_mean: float


def scaled_performance(mean_return: float, random_baseline: float, demo_mean: float) -> float:
    """Affine rescaling: random policy -> 0, demonstration mean -> 1."""
    span = demo_mean - random_baseline
    if span == 0 or not np.isfinite(span):
        raise ConfigurationError(
            f"degenerate scaling anchors: demo_mean={demo_mean}, random={random_baseline}"
        )
    return float((mean_return - random_baseline) / span)


@dataclass
class EvalResult:
    mean_return: float
    success_rate: float


def evaluate(policy, env_or_kind, episodes: int, seed: int, horizon: Optional[int] = None) -> EvalResult:
    """Greedy evaluation rollouts; success is the goal predicate at episode end."""
    env = make_env(env_or_kind) if isinstance(env_or_kind, str) else env_or_kind
    horizon = horizon or env.default_horizon
    returns, successes = [], []
    for episode in range(episodes):
        traj = rollout(env, policy, horizon, seed_for(seed, _EVAL, episode))
        returns.append(traj.total_eval_reward)
        successes.append(env.is_goal(traj.final_state))
    return EvalResult(float(np.mean(returns)), float(np.mean(successes)))


def demo_performance(demos: DemoStore) -> float:
    """Mean total evaluation reward per demonstration trajectory."""
    return float(np.mean([t.total_eval_reward for t in demos.trajectories]))


class Trainer:
    """Runs the iteration loop for one experiment or teacher run.

    reward_source "adversarial" fills rewards from the discriminators;
    "environment" copies each transition's evaluation reward (used to
    train demonstration teachers with plain RL).
    """

    def __init__(
        self,
        config: ExperimentConfig,
        demos: Optional[DemoStore] = None,
        goals: Optional[GoalLabelSet] = None,
        reward_source: str = "adversarial",
        anchors: Optional[Anchors] = None,
        keep_checkpoints: bool = False,
    ):
        if reward_source not in ("adversarial", "environment"):
            raise ConfigurationError(f"unknown reward source {reward_source!r}")
        if config.method == "bc":
            raise ConfigurationError("behavior cloning runs through train_bc, not Trainer")
        self.config = config
        self.reward_source = reward_source
        self.env = make_env(config.env)
        self.demos = demos
        self.goals = goals
        self.keep_checkpoints = keep_checkpoints
        self.checkpoints: List[list] = []

        self.record = RunRecord()
        self.events: List[str] = []
        self.env_steps = 0

        init_rng = rng_for(config.seed, _INIT)
        self.pref = MlpPreference.create(
            self.env.observation_dim, self.env.action_count, config.hidden, init_rng
        )
        self.target = self.pref.copy()
        self.gen_opt = config.gen_opt_settings.make()

        self.pair = None
        self.demo_opt = self.goal_opt = None
        if reward_source == "adversarial":
            self.pair = DiscriminatorPair(
                self.env.observation_dim,
                self.env.action_count,
                config.variant,
                config.hidden,
                config.clamp_epsilon,
                init_rng,
            )
            if self.pair.has_demo:
                if demos is None or not demos.trajectories:
                    raise ConfigurationError("method needs demonstrations but none were given")
                self.demo_opt = config.optimizer.make()
            if self.pair.has_goal:
                if goals is None or len(goals) == 0:
                    raise ConfigurationError("method needs goal labels but none were given")
                self.goal_opt = config.optimizer.make()
            if config.variant == "fixed_goal":
                self._pretrain_goal_classifier()

        self.memory = ReplayMemory(config.effective_capacity, config.optimizer.batch_size)
        self.anchors = anchors

    # -- setup ---------------------------------------------------------

    def _pretrain_goal_classifier(self) -> None:
        """Static goals-vs-random-states classifier, trained then frozen."""
        cfg = self.config
        negatives = []
        episode = 0
        while len(negatives) < cfg.pretrain_negatives:
            traj = rollout(
                self.env,
                _uniform_policy(self.env.action_count),
                cfg.steps_per_episode,
                seed_for(cfg.seed, _PRETRAIN, episode),
            )
            negatives.extend(t.next_state for t in traj.transitions)
            episode += 1
        negatives = np.stack(negatives[: cfg.pretrain_negatives])
        pretrain_fixed_goal(
            self.pair,
            self.goals,
            negatives,
            cfg.pretrain_steps,
            cfg.optimizer.make(),
            seed_for(cfg.seed, _PRETRAIN, 9999),
            batch_size=cfg.optimizer.batch_size,
        )
        self.events.append(
            f"pretrain phase=fixed_goal negatives={len(negatives)} steps={cfg.pretrain_steps}"
        )

    def behavior_policy(self, iteration: int):
        if self.config.generator_kind == "dqn":
            anneal = max(1, round(self.config.iterations / 3))
            frac = min(1.0, iteration / anneal)
            eps = self.config.epsilon_start + frac * (
                self.config.epsilon_final - self.config.epsilon_start
            )
            return EpsilonGreedyPolicy(self.pref, eps)
        return SoftmaxPolicy(self.pref, self.config.soft)

    # -- the four phases -------------------------------------------------

    def run_iteration(self, iteration: int) -> IterationRecord:
        cfg = self.config
        policy = self.behavior_policy(iteration)

        self.memory.clear()
        for episode in range(cfg.episodes_per_iteration):
            traj = rollout(
                self.env, policy, cfg.steps_per_episode,
                seed_for(cfg.seed, _ROLLOUT, iteration, episode),
            )
            self.memory.extend(traj.transitions)
        self.env_steps += cfg.episodes_per_iteration * cfg.steps_per_episode
        self.events.append(
            f"iter={iteration} phase=rollout episodes={cfg.episodes_per_iteration} "
            f"env_steps={cfg.episodes_per_iteration * cfg.steps_per_episode}"
        )

        loss_demo = loss_goal = float("nan")
        if self.pair is not None:
            losses = update_discriminators(
                self.pair, self.memory, self.demos, self.goals,
                cfg.disc_sweeps, self.demo_opt, self.goal_opt,
                seed_for(cfg.seed, _DISC, iteration),
            )
            loss_demo = float(losses["demo"][-1])
            loss_goal = float(losses["goal"][-1])
            self.events.append(
                f"iter={iteration} phase=discriminators sweeps={cfg.disc_sweeps} "
                f"steps={cfg.disc_sweeps * self.memory.minibatch_count}"
            )

        if self.reward_source == "adversarial":
            fill_rewards(self.pair, self.memory)
        else:
            for t in self.memory.transitions():
                t.reward = t.eval_reward
        self.events.append(
            f"iter={iteration} phase=fill transitions={len(self.memory)}"
        )

        gen_losses = []
        for sweep in range(cfg.gen_sweeps):
            for batch in self.memory.shuffled_minibatches(
                seed_for(cfg.seed, _GEN, iteration, sweep)
            ):
                if cfg.generator_kind == "dqn":
                    gen_losses.append(
                        dqn_update(self.pref, batch, self.target, self.gen_opt, cfg.soft.gamma)
                    )
                else:
                    gen_losses.append(
                        edpn_update(self.pref, batch, self.target, self.gen_opt, cfg.soft)
                    )
        loss_generator = float(np.mean(gen_losses)) if gen_losses else float("nan")
        if not math.isnan(loss_generator) and not math.isfinite(loss_generator):
            raise DivergenceError(f"generator loss diverged at iteration {iteration}")
        self.events.append(
            f"iter={iteration} phase=generator sweeps={cfg.gen_sweeps} "
            f"steps={len(gen_losses)}"
        )

        self.target = self.pref.copy()
        self.events.append(f"iter={iteration} phase=target_refresh")
        if self.keep_checkpoints:
            self.checkpoints.append([p.copy() for p in self.pref.params])

        result = evaluate(
            GreedyPolicy(self.pref), self.env, cfg.eval_episodes,
            seed_for(cfg.seed, _EVAL, iteration), cfg.steps_per_episode,
        )
        scaled = float("nan")
        if self.anchors is not None:
            scaled = scaled_performance(
                result.mean_return, self.anchors.random_baseline, self.anchors.demo_mean
            )
        return IterationRecord(
            iteration=iteration,
            samples=self.env_steps,
            mean_return=result.mean_return,
            scaled_perf=scaled,
            success_rate=result.success_rate,
            loss_demo_disc=loss_demo,
            loss_goal_disc=loss_goal,
            loss_generator=loss_generator,
        )

    def run(self) -> RunRecord:
        """Run all iterations; a divergence aborts with a diagnostic row."""
        for iteration in range(self.config.iterations):
            start = time.perf_counter()
            try:
                row = self.run_iteration(iteration)
            except DivergenceError as exc:
                self.events.append(f"iter={iteration} phase=abort reason={exc}")
                self.record.append(
                    IterationRecord(
                        iteration=iteration,
                        samples=self.env_steps,
                        mean_return=float("nan"),
                        scaled_perf=float("nan"),
                        success_rate=float("nan"),
                        loss_demo_disc=float("nan"),
                        loss_goal_disc=float("nan"),
                        loss_generator=float("nan"),
                    )
                )
                self.record.diverged = True
                return self.record
            self.events.append(
                f"iter={iteration} wall_ms={1000.0 * (time.perf_counter() - start):.1f}"
            )
            self.record.append(row)
        return self.record


def _uniform_policy(action_count: int):
    from .softpolicy import UniformRandomPolicy

    return UniformRandomPolicy(action_count)


# ---------------------------------------------------------------------------
# Behavior cloning baseline
# ---------------------------------------------------------------------------

class _BcFit:
    """Shared epoch machinery for the behavior-cloning classifier."""

    def __init__(self, demos: DemoStore, settings: OptimizerSettings, seed: int,
                 hidden: tuple, action_count: int):
        transitions = demos.transitions
        if not transitions:
            raise ConfigurationError("behavior cloning needs a nonempty demo set")
        self.states = stack_states(transitions)
        self.actions = stack_actions(transitions)
        self.net = MlpPreference.create(
            self.states.shape[1], action_count, hidden, rng_for(seed, _BC, 0)
        )
        self.opt = settings.make()
        self.shuffler = rng_for(seed, _BC, 1)
        self.batch = settings.batch_size

    def epoch(self) -> float:
        """One shuffled pass; demo sets below one minibatch train full-batch."""
        n = len(self.states)
        order = self.shuffler.permutation(n)
        slices = (
            [order[s:s + self.batch] for s in range(0, n - self.batch + 1, self.batch)]
            if n >= self.batch else [order]
        )
        losses = []
        for idx in slices:
            out, cache = forward_cached(self.net.spec, self.net.params, self.states[idx])
            loss, grad = softmax_cross_entropy_loss(out, self.actions[idx])
            grads = backward(self.net.spec, self.net.params, cache, grad)
            self.net.params = self.opt.step(self.net.params, grads)
            losses.append(loss)
        return float(np.mean(losses))


def train_bc(
    demos: DemoStore,
    epochs: int,
    opt_settings: OptimizerSettings,
    seed: int,
    hidden: tuple,
    action_count: int,
):
    """Cross-entropy classifier over demonstration (state, action) pairs.

    Returns (policy_net, per-epoch mean losses). The policy acts greedily
    on the class logits at evaluation time.
    """
    fit = _BcFit(demos, opt_settings, seed, hidden, action_count)
    losses = [fit.epoch() for _ in range(epochs)]
    return fit.net, losses


def run_bc_experiment(config: ExperimentConfig, demos: DemoStore, anchors: Anchors):
    """BC with one metrics row per epoch, evaluated greedily like the rest."""
    env = make_env(config.env)
    fit = _BcFit(demos, config.gen_opt_settings, config.seed, config.hidden, env.action_count)
    record = RunRecord()
    events = []
    for epoch in range(config.iterations):
        loss = fit.epoch()
        events.append(f"iter={epoch} phase=bc_epoch")
        result = evaluate(
            GreedyPolicy(fit.net), env, config.eval_episodes,
            seed_for(config.seed, _EVAL, epoch), config.steps_per_episode,
        )
        record.append(
            IterationRecord(
                iteration=epoch,
                samples=len(fit.states) * (epoch + 1),
                mean_return=result.mean_return,
                scaled_perf=scaled_performance(
                    result.mean_return, anchors.random_baseline, anchors.demo_mean
                ),
                success_rate=result.success_rate,
                loss_demo_disc=float("nan"),
                loss_goal_disc=float("nan"),
                loss_generator=loss,
            )
        )
    return record, fit.net, events


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

def compute_anchors(config: ExperimentConfig, demos: DemoStore) -> Anchors:
    baseline = random_policy_baseline(
        config.env, config.baseline_episodes,
        seed_for(config.seed, _BASELINE), config.steps_per_episode,
    )
    return Anchors(random_baseline=baseline, demo_mean=demo_performance(demos))


def run_experiment(config: ExperimentConfig, out_dir=None):
    """Run one configured experiment; optionally write artifacts.

    Returns (record, artifacts dict). Artifacts include the final
    generator network and, when present, both discriminators.
    """
    demos = DemoStore.load(config.demo_file) if config.demo_file else None
    goals = GoalLabelSet.load(config.goal_file) if config.goal_file else None
    if demos is None:
        raise ConfigurationError("experiments need a demo_file")
    anchors = compute_anchors(config, demos)

    start = time.perf_counter()
    if config.method == "bc":
        record, net, events = run_bc_experiment(config, demos, anchors)
        artifacts = {"generator": net, "pair": None, "events": events}
    else:
        trainer = Trainer(config, demos=demos, goals=goals, anchors=anchors)
        record = trainer.run()
        artifacts = {"generator": trainer.pref, "pair": trainer.pair, "events": trainer.events}
    artifacts["wall_s"] = time.perf_counter() - start
    artifacts["anchors"] = anchors

    if out_dir is not None:
        write_run_artifacts(out_dir, config, record, artifacts)
    return record, artifacts


def write_run_artifacts(out_dir, config: ExperimentConfig, record: RunRecord, artifacts) -> None:
    from . import config as config_mod
    from .nets import save_params

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record.save(out / "metrics.csv")
    config_mod.save_config(out / "resolved.toml", config)
    (out / "events.log").write_text("\n".join(artifacts["events"]) + "\n")
    net = artifacts["generator"]
    save_params(out / "generator.json", net.spec, net.params)
    pair = artifacts.get("pair")
    if pair is not None and pair.has_demo:
        save_params(out / "discriminator_demo.json", pair.demo_spec, pair.demo_params)
    if pair is not None and pair.has_goal:
        save_params(out / "discriminator_goal.json", pair.goal_spec, pair.goal_params)
    summary = {
        "diverged": record.diverged,
        "wall_s": artifacts["wall_s"],
        "random_baseline": artifacts["anchors"].random_baseline,
        "demo_mean": artifacts["anchors"].demo_mean,
        "final_scaled_perf": record.final.scaled_perf if record.rows else float("nan"),
        "final_success_rate": record.final.success_rate if record.rows else float("nan"),
    }
    import json

    (out / "summary.json").write_text(json.dumps(summary, indent=2))
