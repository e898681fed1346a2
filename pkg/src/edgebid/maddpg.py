"""Decentralized bid/ratio actors with one centralized critic per device.

Each device owns two actor heads fed its own normalized observation: a logistic
bid head scaled to the bid cap and a softmax head over its compression choices.
Each device's critic scores the concatenation of every device's observation and
action encoding (scaled bid plus ratio one-hot).  Whole episodes are stored and
replayed; every update draws a batch of episodes, flattens the (episode, slot)
grid, and takes one exact-gradient Adam step per net.  Undiscounted returns:
targets bootstrap through the target nets except at the final slot.

Ablations are plain config fields: `mask_entropy` zeroes the entropy channel in
every observation a net ever sees, and `ratio_pin` freezes the compression
choice to the full-rate or the most-compressed entry of the ratio set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigError
from .env import Action, CoopInferenceEnv, OBS_FIELDS, observation_vector
from .nets import Adam, MlpNet, gumbel_softmax, load_nets, save_nets, soft_update

RATIO_PINS = (None, "full", "compressed")


@dataclass
class TrainConfig:
    episodes: int = 5000
    batch_episodes: int = 256
    buffer_capacity: int = 2000
    hidden: tuple = (32, 32)
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    tau_actor: float = 0.01
    tau_critic: float = 0.01
    sigma_z_sq: float = 0.1
    gumbel_tau: float = 1.0
    # optional linear anneal of the relaxation temperature across the run
    gumbel_tau_final: float | None = None
    update_every: int = 1
    mask_entropy: bool = False
    ratio_pin: str | None = None
    # alternate reading of the "most compressed" pin: largest ratio instead
    pin_compressed_as_largest: bool = False


def validate_train_config(cfg):
    if cfg.episodes < 1 or cfg.batch_episodes < 1 or cfg.buffer_capacity < 1:
        raise ConfigError("episodes, batch_episodes, buffer_capacity must be positive")
    if not cfg.hidden or any(int(h) < 1 for h in cfg.hidden):
        raise ConfigError("hidden sizes must be positive")
    if cfg.lr_actor <= 0.0 or cfg.lr_critic <= 0.0:
        raise ConfigError("learning rates must be positive")
    if not 0.0 < cfg.tau_actor <= 1.0 or not 0.0 < cfg.tau_critic <= 1.0:
        raise ConfigError("soft-update rates must lie in (0, 1]")
    if cfg.sigma_z_sq < 0.0:
        raise ConfigError("sigma_z_sq must be nonnegative")
    if cfg.gumbel_tau <= 0.0:
        raise ConfigError("gumbel_tau must be positive")
    if cfg.gumbel_tau_final is not None and cfg.gumbel_tau_final <= 0.0:
        raise ConfigError("gumbel_tau_final must be positive when set")
    if cfg.update_every < 1:
        raise ConfigError("update_every must be positive")
    if cfg.ratio_pin not in RATIO_PINS:
        raise ConfigError(f"ratio_pin must be one of {RATIO_PINS}, got {cfg.ratio_pin!r}")


VARIANT_FIELDS = {
    "maddpg": {},
    "dd": {"mask_entropy": True},
    "dt": {"ratio_pin": "full"},
    "mc": {"ratio_pin": "compressed"},
}


def make_variant(base_cfg, tag):
    """Derive an ablation config from a base config; only documented fields move."""
    key = tag.lower().removeprefix("maddpg").lstrip("-") or "maddpg"
    if key not in VARIANT_FIELDS:
        raise ConfigError(f"unknown variant tag {tag!r}")
    moves = {"mask_entropy": False, "ratio_pin": None}
    moves.update(VARIANT_FIELDS[key])
    return replace(base_cfg, **moves)


class Episode:
    """One full horizon of per-device experience plus evaluation extras.

    Arrays are indexed [device, slot]; `obs` rows hold the raw
    (slot, rate, budget, entropy) fields and `obs_vec` their normalized view.
    """

    def __init__(self, n_devices, horizon, ratio_sizes):
        self.obs = np.zeros((n_devices, horizon, OBS_FIELDS))
        self.next_obs = np.zeros((n_devices, horizon, OBS_FIELDS))
        self.obs_vec = np.zeros((n_devices, horizon, OBS_FIELDS))
        self.next_obs_vec = np.zeros((n_devices, horizon, OBS_FIELDS))
        self.bids = np.zeros((n_devices, horizon))
        self.ratios = np.zeros((n_devices, horizon), dtype=np.int64)
        self.onehot = [np.zeros((horizon, m)) for m in ratio_sizes]
        self.rewards = np.zeros((n_devices, horizon))
        self.served = np.zeros((n_devices, horizon), dtype=bool)
        self.correct = np.zeros((n_devices, horizon), dtype=bool)
        self.leaks = np.zeros((n_devices, horizon))


def episode_summary(ep):
    """Per-device aggregates of one episode: return, accuracy, leakage, spend."""
    n_devices = ep.rewards.shape[0]
    ssim = np.zeros(n_devices)
    for k in range(n_devices):
        mask = ep.served[k]
        ssim[k] = float(ep.leaks[k][mask].mean()) if mask.any() else 0.0
    return {
        "reward": ep.rewards.sum(axis=1),
        "accuracy": ep.correct.mean(axis=1),
        "ssim": ssim,
        "spend": (ep.bids * ep.served).sum(axis=1),
        "served": ep.served.sum(axis=1).astype(float),
    }


class ReplayBuffer:
    """Ring of whole episodes; at capacity the oldest entry is overwritten."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items = []
        self._cursor = 0

    def __len__(self):
        return len(self._items)

    def append(self, episode):
        if len(self._items) < self.capacity:
            self._items.append(episode)
        else:
            self._items[self._cursor] = episode
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, rng, count):
        """Uniform episode sample; falls back to replacement while underfilled."""
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        n = len(self._items)
        idx = rng.choice(n, size=count, replace=n < count)
        return [self._items[i] for i in idx]


class ActorPair:
    """The two per-device policy heads."""

    def __init__(self, bid, ratio):
        self.bid = bid
        self.ratio = ratio


def act_explore(actor, obs_vec, budget, max_bid, sigma_z_sq, gumbel_tau, rng, pin=None):
    """Noisy bid plus a concrete-relaxation draw for the compression choice.

    The bid is the head output plus Gaussian noise, clipped to what the budget
    allows.  The ratio index is the argmax of a relaxation sample, i.e. a draw
    from the head's own categorical distribution.
    """
    raw = float(actor.bid.forward(obs_vec)[0])
    noisy = raw + rng.normal(0.0, math.sqrt(sigma_z_sq))
    bid = float(np.clip(noisy, 0.0, min(max_bid, budget)))
    if pin is None:
        probs = actor.ratio.forward(obs_vec)
        relaxed = gumbel_softmax(np.log(np.maximum(probs, 1e-300)), gumbel_tau, rng)
        ridx = int(np.argmax(relaxed))
    else:
        ridx = pin
    return Action(bid=bid, ratio_index=ridx)


def act_greedy(actor, obs_vec, budget, max_bid, pin=None):
    """Deterministic action: raw bid head under the budget clip, modal ratio."""
    raw = float(actor.bid.forward(obs_vec)[0])
    bid = float(np.clip(raw, 0.0, min(max_bid, budget)))
    ridx = pin if pin is not None else int(np.argmax(actor.ratio.forward(obs_vec)))
    return Action(bid=bid, ratio_index=ridx)


def resolve_pin(ratio_set, pin, compressed_as_largest=False):
    """Map a pin tag to an index into a descending ratio set."""
    if pin is None:
        return None
    if pin == "full":
        for i, w in enumerate(ratio_set):
            if math.isclose(w, 1.0):
                return i
        raise ConfigError(f"ratio set {ratio_set} has no full-rate entry to pin")
    if pin == "compressed":
        return 0 if compressed_as_largest else len(ratio_set) - 1
    raise ConfigError(f"unknown ratio pin {pin!r}")


class MaddpgTrainer:
    """Owns the envs, nets, optimizers, and replay for one training run."""

    def __init__(self, sys_cfg, train_cfg, seed):
        validate_train_config(train_cfg)
        self.cfg = sys_cfg
        self.tcfg = train_cfg
        env_ss, init_ss, act_ss, sample_ss, update_ss = np.random.SeedSequence(seed).spawn(5)
        self.env = CoopInferenceEnv(sys_cfg, np.random.default_rng(env_ss))
        self.act_rng = np.random.default_rng(act_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.update_rng = np.random.default_rng(update_ss)
        init_rng = np.random.default_rng(init_ss)

        K = sys_cfg.device_count
        self.ratio_sizes = [len(md.ratio_set) for md in sys_cfg.devices]
        self.pins = [
            resolve_pin(md.ratio_set, train_cfg.ratio_pin, train_cfg.pin_compressed_as_largest)
            for md in sys_cfg.devices
        ]
        # critic input: per device (obs fields, scaled bid, ratio one-hot)
        self.joint_dim = sum(OBS_FIELDS + 1 + m for m in self.ratio_sizes)
        self.offsets = np.cumsum([0] + [OBS_FIELDS + 1 + m for m in self.ratio_sizes])[:-1]

        hidden = tuple(train_cfg.hidden)
        self.actors = []
        self.critics = []
        for k, md in enumerate(sys_cfg.devices):
            bid = MlpNet((OBS_FIELDS, *hidden, 1), "bounded", head_scale=md.max_bid, rng=init_rng)
            ratio = MlpNet((OBS_FIELDS, *hidden, self.ratio_sizes[k]), "softmax", rng=init_rng)
            self.actors.append(ActorPair(bid, ratio))
            self.critics.append(MlpNet((self.joint_dim, *hidden, 1), "identity", rng=init_rng))
        self.target_actors = [ActorPair(a.bid.copy(), a.ratio.copy()) for a in self.actors]
        self.target_critics = [c.copy() for c in self.critics]

        self.bid_opts = [Adam(a.bid, lr=train_cfg.lr_actor) for a in self.actors]
        self.ratio_opts = [Adam(a.ratio, lr=train_cfg.lr_actor) for a in self.actors]
        self.critic_opts = [Adam(c, lr=train_cfg.lr_critic) for c in self.critics]
        self.buffer = ReplayBuffer(train_cfg.buffer_capacity)
        self.episodes_done = 0

    # ------------------------------------------------------------------ rollout

    def gumbel_tau_now(self):
        """Relaxation temperature for the current episode, annealed if configured."""
        final = self.tcfg.gumbel_tau_final
        if final is None:
            return self.tcfg.gumbel_tau
        span = max(self.tcfg.episodes - 1, 1)
        frac = min(self.episodes_done / span, 1.0)
        return self.tcfg.gumbel_tau + frac * (final - self.tcfg.gumbel_tau)

    def observe_pair(self, env, state, k):
        """Raw observation (entropy masked if configured) and its vector view."""
        obs = env.observe(state, k)
        if self.tcfg.mask_entropy:
            obs = replace(obs, entropy=0.0)
        return obs, observation_vector(obs, self.cfg.devices[k], self.cfg)

    def run_episode(self, explore=True, env=None, rng=None):
        """Roll one full episode; exploration draws come from the given rng."""
        env = self.env if env is None else env
        rng = self.act_rng if rng is None else rng
        K = self.cfg.device_count
        N = self.cfg.horizon
        ep = Episode(K, N, self.ratio_sizes)
        state = env.reset()
        for n in range(N):
            actions = []
            for k, md in enumerate(self.cfg.devices):
                obs, vec = self.observe_pair(env, state, k)
                ep.obs[k, n] = (obs.slot, obs.rate, obs.budget, obs.entropy)
                ep.obs_vec[k, n] = vec
                if explore:
                    act = act_explore(
                        self.actors[k], vec, obs.budget, md.max_bid,
                        self.tcfg.sigma_z_sq, self.gumbel_tau_now(), rng, self.pins[k],
                    )
                else:
                    act = act_greedy(self.actors[k], vec, obs.budget, md.max_bid, self.pins[k])
                actions.append(act)
                ep.bids[k, n] = act.bid
                ep.ratios[k, n] = act.ratio_index
                ep.onehot[k][n, act.ratio_index] = 1.0
            res = env.step(state, actions)
            ep.rewards[:, n] = res.rewards
            ep.served[:, n] = res.served
            ep.correct[:, n] = res.correct
            ep.leaks[:, n] = res.priv_leaks
            state = res.next_state
            for k in range(K):
                obs, vec = self.observe_pair(env, state, k)
                ep.next_obs[k, n] = (obs.slot, obs.rate, obs.budget, obs.entropy)
                ep.next_obs_vec[k, n] = vec
        return ep

    # ------------------------------------------------------------------ updates

    def prepare_batch(self, episodes):
        """Flatten an episode batch into per-device row blocks and joint inputs."""
        K = self.cfg.device_count
        N = self.cfg.horizon
        rows = len(episodes) * N
        obs = [np.concatenate([e.obs_vec[k] for e in episodes]) for k in range(K)]
        next_obs = [np.concatenate([e.next_obs_vec[k] for e in episodes]) for k in range(K)]
        bids = [
            np.concatenate([e.bids[k] for e in episodes])[:, None] / self.cfg.devices[k].max_bid
            for k in range(K)
        ]
        onehot = [np.concatenate([e.onehot[k] for e in episodes]) for k in range(K)]
        rewards = [np.concatenate([e.rewards[k] for e in episodes]) for k in range(K)]
        terminal = np.tile(np.arange(N) == N - 1, len(episodes))
        joint = np.concatenate(
            [part for k in range(K) for part in (obs[k], bids[k], onehot[k])], axis=1
        )
        # joint next input under the deterministic target policies
        parts = []
        for k, md in enumerate(self.cfg.devices):
            tgt = self.target_actors[k]
            bid_t = tgt.bid.forward(next_obs[k]) / md.max_bid
            if self.pins[k] is None:
                probs_t = tgt.ratio.forward(next_obs[k])
                pick = np.argmax(probs_t, axis=1)
            else:
                pick = np.full(rows, self.pins[k])
            oh = np.zeros((rows, self.ratio_sizes[k]))
            oh[np.arange(rows), pick] = 1.0
            parts.extend((next_obs[k], bid_t, oh))
        joint_next = np.concatenate(parts, axis=1)
        return {
            "rows": rows,
            "obs": obs,
            "rewards": rewards,
            "terminal": terminal,
            "joint": joint,
            "joint_next": joint_next,
        }

    def critic_update(self, batch, k):
        """One mean-squared TD step for device k's critic; returns the loss."""
        q_next = self.target_critics[k].forward(batch["joint_next"])[:, 0]
        z = batch["rewards"][k] + np.where(batch["terminal"], 0.0, q_next)
        q = self.critics[k].forward(batch["joint"])[:, 0]
        resid = q - z
        loss = float(np.mean(resid**2))
        upstream = (2.0 / batch["rows"]) * resid[:, None]
        grads = self.critics[k].backward(batch["joint"], upstream)
        self.critic_opts[k].step(self.critics[k], grads)
        return loss

    def actor_update(self, batch, k):
        """One ascent step on device k's mean critic value; returns the objective.

        Device k's stored action is replaced by a differentiable recompute:
        the raw bid head and a fresh concrete-relaxation sample of the ratio
        head.  The critic's input gradient is then chained through both heads.
        """
        noise = self.update_rng.random((batch["rows"], self.ratio_sizes[k]))
        return self._actor_step(batch, k, noise, apply=True)[0]

    def actor_objective(self, batch, k, noise):
        """Mean critic value under the recomputed action, no parameter updates."""
        return self._actor_step(batch, k, noise, apply=False)[0]

    def _actor_step(self, batch, k, noise, apply):
        """Composed objective and its actor gradients; optionally steps Adam.

        The returned bundles are the ascent direction negated, exactly what
        the minimizing optimizer consumes.
        """
        md = self.cfg.devices[k]
        rows = batch["rows"]
        obs_k = batch["obs"][k]
        off = self.offsets[k]
        bid_col = off + OBS_FIELDS
        ratio_cols = slice(bid_col + 1, bid_col + 1 + self.ratio_sizes[k])

        bid = self.actors[k].bid.forward(obs_k)
        pin = self.pins[k]
        tau = self.gumbel_tau_now()
        if pin is None:
            probs = self.actors[k].ratio.forward(obs_k)
            u = np.clip(noise, np.finfo(float).tiny, np.nextafter(1.0, 0.0))
            g = -np.log(-np.log(u))
            logp = np.log(np.maximum(probs, 1e-300))
            e = np.exp((logp + g) / tau)
            relaxed = e / e.sum(axis=1, keepdims=True)
        else:
            relaxed = np.zeros((rows, self.ratio_sizes[k]))
            relaxed[:, pin] = 1.0

        joint = batch["joint"].copy()
        joint[:, bid_col] = bid[:, 0] / md.max_bid
        joint[:, ratio_cols] = relaxed
        q = self.critics[k].forward(joint)[:, 0]
        objective = float(q.mean())
        d_joint = self.critics[k].backward(joint, np.full((rows, 1), 1.0 / rows)).input
        # ascent: hand Adam the negated gradients
        d_bid = -d_joint[:, bid_col : bid_col + 1] / md.max_bid
        bid_grads = self.actors[k].bid.backward(obs_k, d_bid)
        ratio_grads = None
        if pin is None:
            d_relax = d_joint[:, ratio_cols]
            du = relaxed * (d_relax - np.sum(relaxed * d_relax, axis=1, keepdims=True))
            du /= tau
            # chain through log_softmax straight to the head pre-activations
            dz = du - probs * du.sum(axis=1, keepdims=True)
            ratio_grads = self.actors[k].ratio.backward(obs_k, -dz, at_preact=True)
        if apply:
            self.bid_opts[k].step(self.actors[k].bid, bid_grads)
            if ratio_grads is not None:
                self.ratio_opts[k].step(self.actors[k].ratio, ratio_grads)
        return objective, (bid_grads, ratio_grads)

    def update(self):
        """One replay-batch update of every critic and actor plus soft syncs."""
        episodes = self.buffer.sample(self.sample_rng, self.tcfg.batch_episodes)
        batch = self.prepare_batch(episodes)
        stats = {}
        for k in range(self.cfg.device_count):
            stats[f"critic_loss_{k}"] = self.critic_update(batch, k)
            stats[f"actor_objective_{k}"] = self.actor_update(batch, k)
        for k in range(self.cfg.device_count):
            soft_update(self.target_actors[k].bid, self.actors[k].bid, self.tcfg.tau_actor)
            soft_update(self.target_actors[k].ratio, self.actors[k].ratio, self.tcfg.tau_actor)
            soft_update(self.target_critics[k], self.critics[k], self.tcfg.tau_critic)
        return stats

    # ------------------------------------------------------------------ driver

    def train(self, episode_hook=None):
        """Run the configured number of episodes; returns per-episode summaries."""
        summaries = []
        for _ in range(self.tcfg.episodes):
            ep = self.run_episode(explore=True)
            self.buffer.append(ep)
            if (self.episodes_done + 1) % self.tcfg.update_every == 0:
                self.update()
            self.episodes_done += 1
            summaries.append(episode_summary(ep))
            if episode_hook is not None:
                episode_hook(self.episodes_done - 1, ep)
        return summaries

    def policy(self):
        return MaddpgPolicy(
            self.actors, self.pins, self.tcfg.mask_entropy, self.cfg
        )

    # ------------------------------------------------------------------ IO

    def save_checkpoints(self, out_dir):
        """Write per-device actor and critic files (plus targets) under out_dir."""
        import os

        os.makedirs(out_dir, exist_ok=True)
        for k, md in enumerate(self.cfg.devices):
            tag = f"md{md.index}"
            save_nets(
                os.path.join(out_dir, f"actor_{tag}.json"),
                {"bid": self.actors[k].bid, "ratio": self.actors[k].ratio},
            )
            save_nets(
                os.path.join(out_dir, f"critic_{tag}.json"), {"critic": self.critics[k]}
            )
            save_nets(
                os.path.join(out_dir, f"target_actor_{tag}.json"),
                {"bid": self.target_actors[k].bid, "ratio": self.target_actors[k].ratio},
            )
            save_nets(
                os.path.join(out_dir, f"target_critic_{tag}.json"),
                {"critic": self.target_critics[k]},
            )


class MaddpgPolicy:
    """Greedy evaluation wrapper around per-device actor heads."""

    def __init__(self, actors, pins, mask_entropy, sys_cfg):
        self.actors = actors
        self.pins = pins
        self.mask_entropy = mask_entropy
        self.cfg = sys_cfg

    def action(self, k, obs_vec, budget):
        return act_greedy(
            self.actors[k], obs_vec, budget, self.cfg.devices[k].max_bid, self.pins[k]
        )


def load_policy(ckpt_dir, sys_cfg, train_cfg):
    """Rebuild a greedy policy from actor checkpoints; shapes must match config."""
    import os

    validate_train_config(train_cfg)
    actors = []
    pins = []
    for md in sys_cfg.devices:
        nets, _ = load_nets(os.path.join(ckpt_dir, f"actor_md{md.index}.json"))
        bid, ratio = nets["bid"], nets["ratio"]
        want_bid = (OBS_FIELDS, *train_cfg.hidden, 1)
        want_ratio = (OBS_FIELDS, *train_cfg.hidden, len(md.ratio_set))
        if bid.sizes != want_bid or ratio.sizes != want_ratio:
            raise ConfigError(
                f"checkpoint shapes {bid.sizes}/{ratio.sizes} do not match config "
                f"{want_bid}/{want_ratio}"
            )
        actors.append(ActorPair(bid, ratio))
        pins.append(resolve_pin(md.ratio_set, train_cfg.ratio_pin, train_cfg.pin_compressed_as_largest))
    return MaddpgPolicy(actors, pins, train_cfg.mask_entropy, sys_cfg)
