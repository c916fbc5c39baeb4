"""Demonstration pipeline: teachers, collection, quality, goal labels.

Teachers are plain RL agents (the same generator machinery, rewarded by
the environment's evaluation reward). Checkpoints along the teacher's own
learning curve provide demonstrations of graded quality:

* imperfect: an early checkpoint whose stochastic rollouts sometimes reach
  the goal and sometimes do not;
* perfect: the final checkpoint, whose rollouts all reach it.

Demonstrations are short stochastic rollouts (by default 5 episodes of 30
steps). Goal labels are then selected from the demo states by one of three
strategies; every selected state passes the environment's goal predicate
and appears verbatim in the demonstrations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import default_config
from .discriminators import DemoStore, GoalLabelSet
from .envs import make_env
from .errors import GoalLabelingError
from .mdp import Trajectory, rollout
from .nets import MlpSpec, load_params, params_from_dict, params_to_dict, save_params
from .seeding import seed_for
from .softpolicy import GreedyPolicy, MlpPreference, SoftPolicyParams, SoftmaxPolicy
from .trainer import RunRecord, Trainer, evaluate

GOAL_STRATEGIES = ("all_goals", "last_of_best", "one_best")

# seed-path tags (disjoint from the trainer's by construction: these are
# only ever combined with demo-pipeline master seeds)
_COLLECT, _CONFIRM = 100, 101


class TeacherConvergenceFailure(RuntimeError):
    """The teacher did not reach the required success rate in budget."""


@dataclass
class TeacherCheckpoint:
    iteration: int
    params: list
    mean_return: float
    success_rate: float


@dataclass
class TeacherRun:
    env: str
    seed: int
    soft: SoftPolicyParams
    spec: MlpSpec
    checkpoints: List[TeacherCheckpoint]
    record: RunRecord

    def preference(self, checkpoint: TeacherCheckpoint) -> MlpPreference:
        return MlpPreference(self.spec, [p.copy() for p in checkpoint.params])

    @property
    def final(self) -> TeacherCheckpoint:
        return self.checkpoints[-1]


@dataclass
class DemoQuality:
    """Which checkpoint produced a demo set, and what it promises."""

    kind: str  # "imperfect" | "perfect"
    teacher_seed: int
    checkpoint_iteration: int
    goal_fraction: float


def train_teacher(
    env_kind: str,
    seed: int,
    max_iterations: int = 150,
    min_iterations: int = 4,
    stable_iterations: int = 3,
    success_threshold: float = 0.9,
    confirm_episodes: int = 50,
    eta: float = 1.0,
    generator_learning_rate: float = 2.5e-3,
    demo_probe: tuple = (5, 30),
) -> TeacherRun:
    """RL teacher trained on the evaluation reward, checkpointed per iteration.

    Stops once the greedy policy has succeeded for ``stable_iterations``
    consecutive iterations AND a probe of stochastic demo-length rollouts
    (``demo_probe`` = episodes, steps) reaches the goal every time; the
    probe is what "stably achieves the goal" means for demonstration
    collection. The final checkpoint is then confirmed over
    ``confirm_episodes`` greedy episodes at ``success_threshold``. Raises
    :class:`TeacherConvergenceFailure` if the budget runs out.

    Teachers learn on the raw evaluation reward, whose magnitude dwarfs the
    adversarial reward, so they default to a sharper softmax (eta = 1) and
    a larger generator learning rate than the adversarial defaults.
    """
    config = default_config(env_kind, method="gail_edpn", variant="no_goal")
    config = replace(
        config,
        seed=int(seed),
        iterations=max_iterations,
        eval_episodes=1,
        soft=replace(config.soft, eta=eta),
        generator_optimizer=replace(
            config.optimizer, learning_rate=generator_learning_rate
        ),
    )
    trainer = Trainer(config, reward_source="environment")
    checkpoints: List[TeacherCheckpoint] = []
    streak = 0
    for iteration in range(max_iterations):
        row = trainer.run_iteration(iteration)
        trainer.record.append(row)
        checkpoints.append(
            TeacherCheckpoint(
                iteration=iteration,
                params=[p.copy() for p in trainer.pref.params],
                mean_return=row.mean_return,
                success_rate=row.success_rate,
            )
        )
        streak = streak + 1 if row.success_rate >= 1.0 else 0
        if iteration + 1 >= min_iterations and streak >= stable_iterations:
            probe = collect_demos(
                trainer.pref, env_kind, demo_probe[0], demo_probe[1],
                seed_for(seed, _CONFIRM, iteration), config.soft,
            )
            if goal_reach_fraction(probe, env_kind) >= 1.0:
                break
            streak = 0
    run = TeacherRun(
        env=env_kind,
        seed=int(seed),
        soft=config.soft,
        spec=trainer.pref.spec,
        checkpoints=checkpoints,
        record=trainer.record,
    )
    confirm = evaluate(
        GreedyPolicy(run.preference(run.final)),
        env_kind,
        confirm_episodes,
        seed_for(seed, _CONFIRM),
        config.steps_per_episode,
    )
    if confirm.success_rate < success_threshold:
        raise TeacherConvergenceFailure(
            f"teacher on {env_kind} (seed {seed}) reached success rate "
            f"{confirm.success_rate:.2f} < {success_threshold} after "
            f"{len(checkpoints)} iterations"
        )
    return run


def collect_demos(
    pref: MlpPreference,
    env_kind: str,
    episodes: int,
    steps: int,
    seed: int,
    soft: SoftPolicyParams,
) -> DemoStore:
    """Stochastic (softmax) rollouts of a checkpointed policy."""
    env = make_env(env_kind)
    policy = SoftmaxPolicy(pref, soft)
    trajectories = [
        rollout(env, policy, steps, seed_for(seed, _COLLECT, episode))
        for episode in range(episodes)
    ]
    return DemoStore(trajectories=trajectories)


def trajectory_reaches_goal(traj: Trajectory, env) -> bool:
    return any(env.is_goal(t.next_state) for t in traj.transitions)


def goal_reach_fraction(demos: DemoStore, env_or_kind) -> float:
    """Fraction of demo trajectories that touch a goal state at least once."""
    env = make_env(env_or_kind) if isinstance(env_or_kind, str) else env_or_kind
    flags = [trajectory_reaches_goal(t, env) for t in demos.trajectories]
    return float(np.mean(flags))


def collect_imperfect_demos(
    run: TeacherRun, episodes: int = 5, steps: int = 30, seed: int = 0,
    tries_per_checkpoint: int = 3,
):
    """Earliest checkpoint that *repeatably* mixes successes and failures.

    "Sometimes achieves the goal" is a property of the checkpointed policy,
    not of one lucky rollout: a checkpoint qualifies only if a majority of
    its candidate demo sets are mixed, which skips near-random early
    checkpoints that fluke a single success. Returns (DemoStore,
    DemoQuality); raises if no checkpoint qualifies (retrain the teacher
    with a different seed).
    """
    majority = tries_per_checkpoint // 2 + 1
    for checkpoint in run.checkpoints:
        candidates = []
        for attempt in range(tries_per_checkpoint):
            demos = collect_demos(
                run.preference(checkpoint), run.env, episodes, steps,
                seed_for(seed, 11, checkpoint.iteration, attempt), run.soft,
            )
            fraction = goal_reach_fraction(demos, run.env)
            if 0.0 < fraction < 1.0:
                candidates.append((demos, fraction))
        if len(candidates) >= majority:
            # keep the draw with the most goal-reaching trajectories: it is
            # still imperfect, but carries the richest goal-side coverage
            demos, fraction = max(candidates, key=lambda c: c[1])
            quality = DemoQuality(
                kind="imperfect",
                teacher_seed=run.seed,
                checkpoint_iteration=checkpoint.iteration,
                goal_fraction=fraction,
            )
            return demos, quality
    raise TeacherConvergenceFailure(
        f"no checkpoint of teacher {run.env}/{run.seed} yields mixed-quality "
        "demonstrations; regenerate with a different seed"
    )


def collect_perfect_demos(
    run: TeacherRun, episodes: int = 5, steps: int = 30, seed: int = 0, max_tries: int = 20
):
    """Final-checkpoint demos in which every trajectory reaches the goal."""
    for attempt in range(max_tries):
        demos = collect_demos(
            run.preference(run.final), run.env, episodes, steps,
            seed_for(seed, 12, attempt), run.soft,
        )
        fraction = goal_reach_fraction(demos, run.env)
        if fraction == 1.0:
            quality = DemoQuality(
                kind="perfect",
                teacher_seed=run.seed,
                checkpoint_iteration=run.final.iteration,
                goal_fraction=fraction,
            )
            return demos, quality
    raise TeacherConvergenceFailure(
        f"final checkpoint of teacher {run.env}/{run.seed} failed to produce "
        f"an all-success demo set in {max_tries} tries"
    )


# ---------------------------------------------------------------------------
# Goal labeling
# ---------------------------------------------------------------------------

def _goal_candidates(demos: DemoStore, env):
    """All (traj index, step index, state) whose state passes the goal test."""
    for ti, traj in enumerate(demos.trajectories):
        for si, transition in enumerate(traj.transitions):
            if env.is_goal(transition.next_state):
                yield ti, si, transition.next_state


def label_goals(demos: DemoStore, env_or_kind, strategy: str = "all_goals") -> GoalLabelSet:
    """Select goal states from demonstrations by one of three strategies.

    all_goals     every demo state passing the goal predicate
    last_of_best  the final two states of the top half of trajectories
                  (by total evaluation reward), filtered by the predicate
    one_best      the latest goal state of the single best trajectory

    The selection is never empty: an empty result raises
    :class:`GoalLabelingError` telling the caller to regenerate demos.
    """
    if strategy not in GOAL_STRATEGIES:
        raise GoalLabelingError(f"unknown strategy {strategy!r}; choose from {GOAL_STRATEGIES}")
    if not demos.trajectories:
        raise GoalLabelingError("demo set is empty")
    env = make_env(env_or_kind) if isinstance(env_or_kind, str) else env_or_kind

    selected = []
    if strategy == "all_goals":
        selected = [(ti, si, s) for ti, si, s in _goal_candidates(demos, env)]
    elif strategy == "last_of_best":
        order = np.argsort(
            [-t.total_eval_reward for t in demos.trajectories], kind="stable"
        )
        top = order[: int(np.ceil(len(order) / 2))]
        for ti in sorted(int(i) for i in top):
            traj = demos.trajectories[ti]
            for si in range(max(0, len(traj) - 2), len(traj)):
                state = traj.transitions[si].next_state
                if env.is_goal(state):
                    selected.append((ti, si, state))
    else:  # one_best
        returns = [t.total_eval_reward for t in demos.trajectories]
        best = int(np.argmax(returns))
        goals_in_best = [
            (ti, si, s) for ti, si, s in _goal_candidates(demos, env) if ti == best
        ]
        if goals_in_best:
            selected = [goals_in_best[-1]]

    if not selected:
        raise GoalLabelingError(
            f"strategy {strategy!r} selected no goal states; regenerate the "
            "demonstrations from a different checkpoint or seed"
        )
    return GoalLabelSet(
        states=[s for _, _, s in selected],
        strategy=strategy,
        sources=[(ti, si) for ti, si, _ in selected],
    )


# ---------------------------------------------------------------------------
# Teacher persistence (used by the command-line pipeline)
# ---------------------------------------------------------------------------

def save_teacher_run(out_dir, run: TeacherRun) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "env": run.env,
        "seed": run.seed,
        "soft": {"eta": run.soft.eta, "sigma": run.soft.sigma, "gamma": run.soft.gamma},
        "checkpoints": [
            {
                "iteration": c.iteration,
                "mean_return": c.mean_return,
                "success_rate": c.success_rate,
                "file": f"checkpoint_{c.iteration:04d}.json",
            }
            for c in run.checkpoints
        ],
    }
    (out / "teacher.json").write_text(json.dumps(meta, indent=2))
    run.record.save(out / "metrics.csv")
    for c in run.checkpoints:
        save_params(out / f"checkpoint_{c.iteration:04d}.json", run.spec, c.params)


def load_teacher_run(out_dir) -> TeacherRun:
    out = Path(out_dir)
    meta = json.loads((out / "teacher.json").read_text())
    checkpoints = []
    spec = None
    for entry in meta["checkpoints"]:
        spec, params = load_params(out / entry["file"])
        checkpoints.append(
            TeacherCheckpoint(
                iteration=entry["iteration"],
                params=params,
                mean_return=entry["mean_return"],
                success_rate=entry["success_rate"],
            )
        )
    return TeacherRun(
        env=meta["env"],
        seed=meta["seed"],
        soft=SoftPolicyParams(**meta["soft"]),
        spec=spec,
        checkpoints=checkpoints,
        record=RunRecord.load(out / "metrics.csv"),
    )
