"""Goal-aware adversarial imitation learning laboratory.

A small numpy library implementing a dual-discriminator imitation trainer
with an entropy-maximizing soft value-iteration generator, two
discrete-action control benchmarks, an imperfect-demonstration pipeline,
and a batch experiment driver.
"""

from .discriminators import (
    DemoStore,
    DiscriminatorPair,
    GoalLabelSet,
    demo_disc_loss,
    fill_rewards,
    goal_disc_loss,
    pretrain_fixed_goal,
    reward,
    update_discriminators,
)
from .envs import PickPlaceEnv, TwiceReachEnv, is_goal, make_env, random_policy_baseline
from .errors import ConfigurationError, DivergenceError, GoalLabelingError
from .mdp import ReplayMemory, Trajectory, Transition, rollout
from .nets import GradCheckReport, MlpSpec, RmsProp, grad_check
from .softpolicy import (
    MlpPreference,
    SoftPolicyParams,
    TabularMDP,
    TabularPreference,
    dpp_operator,
    dqn_target,
    edpn_target,
    edpn_update,
    policy_probs,
    soft_value,
)
from .trainer import (
    Anchors,
    ExperimentConfig,
    OptimizerSettings,
    RunRecord,
    Trainer,
    evaluate,
    run_experiment,
    scaled_performance,
    train_bc,
)
from .demos import (
    DemoQuality,
    TeacherRun,
    collect_demos,
    collect_imperfect_demos,
    collect_perfect_demos,
    goal_reach_fraction,
    label_goals,
    train_teacher,
)

__version__ = "0.1.0"
