"""
The statistical stand-in for the split classifier pair.

Each datum carries a latent difficulty; local and edge classifiers read
confidence off clipped affine curves in that difficulty, and the privacy
side assigns each compression ratio a mean reconstruction SSIM from a
power law. Calibration solves the curve intercepts and the SSIM exponent
so population means hit the targets stored in the config.
"""
import numpy as np
from numpy.random import default_rng

from edgebid.config import default_system_config
from edgebid.env import compute_reward
from edgebid.surrogate import draw_datum, edge_infer, local_infer, ssim_surrogate

cfg = default_system_config()
rng = default_rng(42)

for md in cfg.devices:
    p = md.surrogate
    n = 100_000
    local = np.empty(n)
    edge_full = np.empty(n)
    for i in range(n):
        d = draw_datum(rng, md.class_count, p)
        local[i] = local_infer(d, p).confidence
        edge_full[i] = edge_infer(d, 1.0, p).confidence
    print(f"md{md.index}: mean local acc {local.mean():.4f}  mean edge acc {edge_full.mean():.4f}")
    curve = {ratio: ssim_surrogate(ratio, p) for ratio in md.ratio_set}
    print(f"md{md.index}: ssim per ratio {{{', '.join(f'{r:.2f}: {s:.3f}' for r, s in curve.items())}}}")

# the reward trades classification loss against reconstruction leakage
print("reward at loss 0.105, leak 0.26, weights (0.2, 0.8):",
      compute_reward(0.105, 0.26, 0.2, 0.8))
