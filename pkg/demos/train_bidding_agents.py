"""
Train the decentralized bidding agents for a short run and inspect what they
learned. Full-scale runs use the config defaults (5,000 episodes); this demo
cuts the schedule down so it finishes in about a minute on a laptop core.
"""
import numpy as np
from numpy.random import default_rng

from edgebid.config import default_system_config, with_weights
from edgebid.harness import evaluate_policy
from edgebid.maddpg import MaddpgTrainer, TrainConfig

sys_cfg = with_weights(default_system_config(), 0.7, 0.3)
tcfg = TrainConfig(episodes=800, batch_episodes=64, buffer_capacity=512)
trainer = MaddpgTrainer(sys_cfg, tcfg, seed=1)

rewards = []
summaries = trainer.train()
rewards = np.array([s["reward"] for s in summaries])

print("mean episode reward by training quarter:")
q = len(rewards) // 4
for i in range(4):
    block = rewards[i * q:(i + 1) * q]
    print(f"  episodes {i * q:4d}-{(i + 1) * q:4d}: {np.round(block.mean(axis=0), 3)}")

summary = evaluate_policy(sys_cfg, trainer.policy(), episodes=200, seed=123)
for i, dev in enumerate(summary["per_device"], 1):
    print(f"greedy md{i}: accuracy {dev['accuracy_mean']:.3f}  "
          f"ssim {dev['ssim_mean']:.3f}  serve rate {dev['serve_rate']:.2f}")
