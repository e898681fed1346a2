"""Cooperative edge inference simulator with learned distributed resource bidding."""

from .baselines import (
    DqnConfig,
    JointAction,
    JointInferenceEnv,
    SibConfig,
    dqn_train,
    enumerate_joint_actions,
    sib_policy,
)
from .config import (
    ConfigError,
    MdConfig,
    SystemConfig,
    default_system_config,
    snr_for_feasibility,
    validate_system_config,
    with_budgets,
    with_weights,
)
from .env import (
    Action,
    CoopInferenceEnv,
    Observation,
    StepResult,
    SystemState,
    compute_reward,
    observation_vector,
    payload_bits,
    run_auction,
    sample_channel_rate,
)
from .harness import (
    ExperimentConfig,
    MetricsRecord,
    calibrate_snr,
    default_experiment_config,
    evaluate_policy,
    evaluate_run,
    load_config,
    read_metrics,
    run_budget_sweep,
    run_policy_episode,
    run_tradeoff_sweep,
    run_train,
    save_config,
    summarize_eval,
    train_one,
)
from .maddpg import (
    Episode,
    MaddpgPolicy,
    MaddpgTrainer,
    ReplayBuffer,
    TrainConfig,
    episode_summary,
    load_policy,
    make_variant,
)
from .nets import Adam, MlpNet, gumbel_softmax, load_nets, save_nets, soft_update
from .surrogate import (
    CalibrationError,
    SurrogateParams,
    calibrate,
    calibration_report,
    draw_datum,
    edge_infer,
    local_infer,
    ssim_exact,
    ssim_surrogate,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Adam",
    "CalibrationError",
    "ConfigError",
    "CoopInferenceEnv",
    "DqnConfig",
    "Episode",
    "ExperimentConfig",
    "JointAction",
    "JointInferenceEnv",
    "MaddpgPolicy",
    "MaddpgTrainer",
    "MdConfig",
    "MetricsRecord",
    "MlpNet",
    "Observation",
    "ReplayBuffer",
    "SibConfig",
    "StepResult",
    "SurrogateParams",
    "SystemConfig",
    "SystemState",
    "TrainConfig",
    "calibrate",
    "calibrate_snr",
    "calibration_report",
    "compute_reward",
    "default_experiment_config",
    "default_system_config",
    "dqn_train",
    "draw_datum",
    "edge_infer",
    "enumerate_joint_actions",
    "episode_summary",
    "evaluate_policy",
    "evaluate_run",
    "gumbel_softmax",
    "load_config",
    "load_nets",
    "load_policy",
    "local_infer",
    "make_variant",
    "observation_vector",
    "payload_bits",
    "read_metrics",
    "run_auction",
    "run_budget_sweep",
    "run_policy_episode",
    "run_tradeoff_sweep",
    "run_train",
    "sample_channel_rate",
    "save_config",
    "save_nets",
    "snr_for_feasibility",
    "soft_update",
    "ssim_exact",
    "ssim_surrogate",
    "summarize_eval",
    "train_one",
    "validate_system_config",
    "with_budgets",
    "with_weights",
]
