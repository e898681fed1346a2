"""
Walk through the physical layer of the simulator: Rayleigh-faded link rates,
payload sizes under feature compression, and one slot of the sealed-bid
service auction.
"""
import numpy as np
from numpy.random import default_rng

from edgebid.config import default_system_config
from edgebid.env import Action, CoopInferenceEnv, payload_bits, run_auction

cfg = default_system_config()
rng = default_rng(7)

print("per-device uplink payloads (bits):")
for md in cfg.devices:
    for ratio in md.ratio_set:
        print(f"  md{md.index} ratio {ratio:4.2f}: {payload_bits(ratio, md.feature_dims, md.bits_per_dim):10.1f}")

# empirical feasibility of the full-ratio payload under fading
draws = 20_000
for md in cfg.devices:
    gains = rng.exponential(1.0, draws)
    rate = cfg.symbol_budget * np.log2(1.0 + md.mean_snr * gains)
    need = payload_bits(1.0, md.feature_dims, md.bits_per_dim)
    print(f"md{md.index}: P(full payload fits) ~ {np.mean(rate >= need):.3f}")

# one auction: three bidders, one server slot, middle bidder infeasible
bids = [(0, 0.4, True), (1, 0.9, False), (2, 0.6, True)]
winners = run_auction(bids, 1, rng)
print(f"bids {bids} -> served {sorted(winners)}")

# a full episode under a fixed mid-level bid policy
env = CoopInferenceEnv(cfg, default_rng(0))
state = env.reset()
served = np.zeros(cfg.device_count)
for n in range(cfg.horizon):
    acts = [Action(bid=min(0.5, state.budgets[k]), ratio_index=0)
            for k in range(cfg.device_count)]
    out = env.step(state, acts)
    served += out.served
    state = out.next_state
print("served slots per device:", served, "budgets left:", np.round(state.budgets, 3))
