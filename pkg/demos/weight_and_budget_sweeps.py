"""
The two experiment grids: reward-weight pairs tracing the accuracy/privacy
tradeoff, and budget splits showing service following the money. Scaled-down
schedules; the full grids run through the command line interface.
"""
import tempfile

from edgebid.baselines import DqnConfig, SibConfig
from edgebid.config import default_system_config
from edgebid.harness import ExperimentConfig, run_budget_sweep, run_tradeoff_sweep
from edgebid.maddpg import TrainConfig

exp = ExperimentConfig(
    system=default_system_config(),
    train=TrainConfig(episodes=400, batch_episodes=32, buffer_capacity=256),
    dqn=DqnConfig(),
    sib=SibConfig(),
    seeds=(1, 2),
    eval_episodes=100,
)

with tempfile.TemporaryDirectory() as out:
    rows = run_tradeoff_sweep(exp, out_dir=out, algos=("maddpg", "sib"),
                              pairs=((0.7, 0.3), (0.2, 0.8)))
    print("tradeoff sweep (seed-level rows):")
    for row in rows:
        print(f"  {row['algo']:8s} t=({row['t1']:.1f},{row['t2']:.1f}) seed {row['seed']} "
              f"md{row['device']}: acc {row['accuracy']:.3f} ssim {row['ssim']:.3f}")

with tempfile.TemporaryDirectory() as out:
    rows = run_budget_sweep(exp, out_dir=out, splits=(2.0, 8.0), seeds=(1,))
    print("budget sweep rows:")
    for row in rows:
        print(f"  m={row['split']:.0f} seed {row['seed']} md{row['device']}: "
              f"acc {row['accuracy']:.3f} serve {row['serve_rate']:.2f}")
