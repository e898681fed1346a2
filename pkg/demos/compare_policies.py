"""
Side-by-side of the four serving policies on one config: the learned
decentralized bidders, their difficulty-blind ablation, the centralized
value-iteration baseline that skips the auction, and the fixed
statistics-only heuristic. Short schedules; numbers are illustrative.
"""
import tempfile

from edgebid.baselines import DqnConfig, SibConfig
from edgebid.config import default_system_config, with_weights
from edgebid.harness import ExperimentConfig, evaluate_run, run_dir, run_train
from edgebid.maddpg import TrainConfig

exp = ExperimentConfig(
    system=with_weights(default_system_config(), 0.7, 0.3),
    train=TrainConfig(episodes=800, batch_episodes=64, buffer_capacity=512),
    dqn=DqnConfig(episodes=1200, eps_decay_episodes=800, batch_size=64,
                  replay_capacity=20_000),
    sib=SibConfig(),
    eval_episodes=200,
)

print(f"{'policy':12s} {'md1 acc':>8s} {'md1 ssim':>9s} {'md2 acc':>8s} {'md2 ssim':>9s}")
with tempfile.TemporaryDirectory() as out:
    for algo in ("maddpg", "maddpg-dd", "dqn", "sib"):
        run_train(exp, algo=algo, seeds=(1,), out_root=out)
        summary = evaluate_run(exp, algo, 1, ckpt_dir=run_dir(out, algo, 1))
        d1, d2 = summary["per_device"]
        print(f"{algo:12s} {d1['accuracy_mean']:8.3f} {d1['ssim_mean']:9.3f} "
              f"{d2['accuracy_mean']:8.3f} {d2['ssim_mean']:9.3f}")
