"""Reference policies to bracket the learned bidders.

A centralized action-value learner sees every device's rate and entropy, picks
the served subset and ratios directly (no bids, no budgets), and optimizes the
summed reward; it upper-bounds what decentralized bidding can reach.  A static
information-bottleneck rule lower-bounds it: fixed bid, and the least
compressed ratio whose leakage stays at or below a target, chosen with no
channel knowledge at all.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .env import CoopInferenceEnv, rate_scale
from .maddpg import Episode
from .nets import Adam, MlpNet, soft_update
from .surrogate import ssim_surrogate


@dataclass(frozen=True)
class JointAction:
    """Served device positions (ascending) and one ratio index per member."""

    served: tuple
    ratios: tuple


def enumerate_joint_actions(sys_cfg, cap=100_000):
    """All assignments of at most server_capacity devices, each with a ratio.

    Listed smallest subset first, then lexicographically, so indexes are
    stable for a given config.  Raises once the list would exceed `cap`.
    """
    actions = []
    for size in range(min(sys_cfg.server_capacity, sys_cfg.device_count) + 1):
        for subset in itertools.combinations(range(sys_cfg.device_count), size):
            choice_ranges = [range(len(sys_cfg.devices[k].ratio_set)) for k in subset]
            for ratios in itertools.product(*choice_ranges):
                actions.append(JointAction(served=subset, ratios=ratios))
                if len(actions) > cap:
                    raise ValueError(f"joint action space exceeds cap {cap}")
    return actions


@dataclass
class DqnConfig:
    episodes: int = 5000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_episodes: int = 3000
    lr: float = 1e-3
    tau_sync: float = 0.01
    replay_capacity: int = 50_000
    batch_size: int = 128
    hidden: tuple = (32, 32)


def epsilon_schedule(cfg, episode):
    """Linear decay from eps_start to eps_end over eps_decay_episodes."""
    frac = min(1.0, episode / max(1, cfg.eps_decay_episodes))
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def dqn_policy_step(net, obs_vec, n_actions, epsilon, rng):
    """Epsilon-greedy over the net's action values."""
    if rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(net.forward(obs_vec)))


class TransitionBuffer:
    """Flat ring of (obs, action, reward, next_obs, done) transitions."""

    def __init__(self, capacity, obs_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.count = 0
        self._cursor = 0

    def __len__(self):
        return self.count

    def push(self, obs, action, reward, next_obs, done):
        i = self._cursor
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = done
        self._cursor = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def sample(self, rng, size):
        idx = rng.integers(self.count, size=size)
        return {
            "obs": self.obs[idx],
            "action": self.action[idx],
            "reward": self.reward[idx],
            "next_obs": self.next_obs[idx],
            "done": self.done[idx],
        }


def dqn_train(env, cfg, seed, episode_hook=None):
    """Train an action-value net on any episodic task with a discrete action list.

    `env` must expose obs_dim, n_actions, reset() -> obs, and
    step(action_index) -> (next_obs, reward, done).  Undiscounted targets
    bootstrap through a softly synced target net except at terminal steps.
    Returns the net and the per-episode summed rewards.
    """
    init_ss, act_ss, sample_ss = np.random.SeedSequence(seed).spawn(3)
    init_rng = np.random.default_rng(init_ss)
    act_rng = np.random.default_rng(act_ss)
    sample_rng = np.random.default_rng(sample_ss)
    net = MlpNet((env.obs_dim, *cfg.hidden, env.n_actions), "identity", rng=init_rng)
    target = net.copy()
    opt = Adam(net, lr=cfg.lr)
    buffer = TransitionBuffer(cfg.replay_capacity, env.obs_dim)
    returns = []
    for episode in range(cfg.episodes):
        eps = epsilon_schedule(cfg, episode)
        obs = env.reset()
        done = False
        total = 0.0
        while not done:
            action = dqn_policy_step(net, obs, env.n_actions, eps, act_rng)
            next_obs, reward, done = env.step(action)
            buffer.push(obs, action, reward, next_obs, done)
            if len(buffer) >= cfg.batch_size:
                batch = buffer.sample(sample_rng, cfg.batch_size)
                q_next = target.forward(batch["next_obs"]).max(axis=1)
                z = batch["reward"] + np.where(batch["done"], 0.0, q_next)
                q_all = net.forward(batch["obs"])
                rows = np.arange(cfg.batch_size)
                resid = q_all[rows, batch["action"]] - z
                upstream = np.zeros_like(q_all)
                upstream[rows, batch["action"]] = 2.0 * resid / cfg.batch_size
                opt.step(net, net.backward(batch["obs"], upstream))
                soft_update(target, net, cfg.tau_sync)
            obs = next_obs
            total += reward
        returns.append(total)
        if episode_hook is not None:
            episode_hook(episode, total)
    return net, returns


class JointInferenceEnv:
    """Centralized view of the offloading process for the action-value learner.

    One observation stacks the slot index with every device's normalized rate
    and entropy; budgets are bypassed entirely.  step() serves exactly the
    chosen subset (infeasible picks fall back to local inference inside the
    env) and returns the reward summed over devices.  The episode record of
    the latest rollout is kept for metrics.
    """

    def __init__(self, sys_cfg, rng):
        self.cfg = sys_cfg
        self.env = CoopInferenceEnv(sys_cfg, rng)
        self.actions = enumerate_joint_actions(sys_cfg)
        self.n_actions = len(self.actions)
        self.obs_dim = 1 + 2 * sys_cfg.device_count
        self._scales = [rate_scale(md, sys_cfg) for md in sys_cfg.devices]
        self._caps = [math.log(md.class_count) for md in sys_cfg.devices]
        self.state = None
        self.episode = None
        self._slot = 0

    def _obs(self):
        parts = [self.state.slot / self.cfg.horizon]
        for k in range(self.cfg.device_count):
            parts.append(float(self.state.rates[k]) / self._scales[k])
            parts.append(self.state.data[k].entropy / self._caps[k])
        return np.array(parts)

    def reset(self):
        self.state = self.env.reset()
        self.episode = Episode(
            self.cfg.device_count, self.cfg.horizon, [len(md.ratio_set) for md in self.cfg.devices]
        )
        self._slot = 0
        return self._obs()

    def step(self, action_index):
        ja = self.actions[action_index]
        n = self._slot
        ep = self.episode
        for k in range(self.cfg.device_count):
            o = self.env.observe(self.state, k)
            ep.obs[k, n] = (o.slot, o.rate, o.budget, o.entropy)
        res = self.env.step_assigned(self.state, dict(zip(ja.served, ja.ratios)))
        for pos, k in enumerate(ja.served):
            ep.ratios[k, n] = ja.ratios[pos]
        ep.rewards[:, n] = res.rewards
        ep.served[:, n] = res.served
        ep.correct[:, n] = res.correct
        ep.leaks[:, n] = res.priv_leaks
        self.state = res.next_state
        self._slot += 1
        done = self._slot >= self.cfg.horizon
        return self._obs(), float(res.rewards.sum()), done


@dataclass
class SibConfig:
    target_ssim: float = 0.26
    # fixed per-slot bid; None spreads the initial budget evenly over the horizon
    bid: float | None = None


def sib_policy(md_cfg, sys_cfg, sib_cfg):
    """Static bid and ratio for one device under the leakage-target rule.

    Bid: a fixed constant, by default the initial budget spread evenly over
    the horizon (capped by the bid limit).  Ratio: the largest ratio whose
    leakage stays at or below the target; if none qualifies, the most
    compressed one.  Channel state is deliberately not an input.
    """
    bid = sib_cfg.bid
    if bid is None:
        bid = md_cfg.initial_budget / sys_cfg.horizon
    bid = min(md_cfg.max_bid, bid)
    for i, w in enumerate(md_cfg.ratio_set):
        if ssim_surrogate(w, md_cfg.surrogate) <= sib_cfg.target_ssim + 1e-12:
            return bid, i
    return bid, len(md_cfg.ratio_set) - 1
