"""Experiment drivers: config files, metrics streams, training runs, sweeps.

One YAML document configures the whole stack.  Loading validates every key
against the dataclass schemas, fills mean SNRs from the feasibility closed
form when omitted, and calibrates any uncalibrated surrogate, so a loaded
config is always ready to run.  Runs write one metrics row per episode, JSON
checkpoints, and a JSON summary; sweeps write tidy CSVs with one row per
(point, seed, device).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np
import yaml

from .baselines import DqnConfig, JointInferenceEnv, SibConfig, dqn_policy_step, dqn_train, sib_policy
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
from .env import Action, CoopInferenceEnv, observation_vector, payload_bits
from .maddpg import (
    Episode,
    MaddpgTrainer,
    TrainConfig,
    episode_summary,
    load_policy,
    make_variant,
    validate_train_config,
)
from .nets import load_nets, save_nets
from .surrogate import CalibrationError, SurrogateParams, calibrate, calibration_report

ALGOS = ("maddpg", "maddpg-dd", "maddpg-dt", "maddpg-mc", "dqn", "sib")
MADDPG_ALGOS = ("maddpg", "maddpg-dd", "maddpg-dt", "maddpg-mc")

# fixed stream tags so every rng is a pure function of (seed, role)
EVAL_TAG = 7919
SIB_TAG = 6607
DQN_ENV_TAG = 104_729


@dataclass
class ExperimentConfig:
    system: SystemConfig
    train: TrainConfig
    dqn: DqnConfig
    sib: SibConfig
    algo: str = "maddpg"
    seeds: tuple = (1, 2, 3, 4, 5)
    out_dir: str = "runs"
    eval_episodes: int = 100
    tradeoff_pairs: tuple = (
        (0.05, 0.95),
        (0.1, 0.9),
        (0.2, 0.8),
        (0.35, 0.65),
        (0.5, 0.5),
        (0.7, 0.3),
        (0.9, 0.1),
    )
    tradeoff_algos: tuple = ALGOS
    budget_splits: tuple = (1.0, 3.0, 5.0, 7.0, 9.0)
    budget_weights: tuple = (0.9, 0.1)


def default_experiment_config():
    return ExperimentConfig(
        system=default_system_config(),
        train=TrainConfig(),
        dqn=DqnConfig(),
        sib=SibConfig(),
    )


def validate_experiment_config(cfg):
    validate_system_config(cfg.system)
    validate_train_config(cfg.train)
    if cfg.algo not in ALGOS:
        raise ConfigError(f"algo must be one of {ALGOS}, got {cfg.algo!r}")
    if not cfg.seeds:
        raise ConfigError("at least one seed required")
    if cfg.eval_episodes < 0:
        raise ConfigError("eval_episodes must be nonnegative")
    for pair in cfg.tradeoff_pairs:
        if len(pair) != 2 or pair[0] <= 0.0 or pair[1] <= 0.0:
            raise ConfigError(f"tradeoff pair {pair} must hold two positive weights")
    for algo in cfg.tradeoff_algos:
        if algo not in ALGOS:
            raise ConfigError(f"unknown sweep algo {algo!r}")
    total = sum(md.initial_budget for md in cfg.system.devices)
    for m in cfg.budget_splits:
        if not 0.0 < m < total:
            raise ConfigError(
                f"budget split {m} must keep every budget positive (total {total})"
            )
    if len(cfg.budget_weights) != 2 or any(w <= 0.0 for w in cfg.budget_weights):
        raise ConfigError("budget_weights must hold two positive weights")
    if cfg.dqn.episodes < 1 or cfg.dqn.batch_size < 1 or cfg.dqn.replay_capacity < 1:
        raise ConfigError("dqn episodes, batch_size, replay_capacity must be positive")
    if cfg.dqn.lr <= 0.0 or not 0.0 < cfg.dqn.tau_sync <= 1.0:
        raise ConfigError("dqn lr must be positive and tau_sync in (0, 1]")
    if not 0.0 <= cfg.dqn.eps_end <= cfg.dqn.eps_start <= 1.0:
        raise ConfigError("need 0 <= eps_end <= eps_start <= 1")
    if not 0.0 < cfg.sib.target_ssim <= 1.0:
        raise ConfigError("sib target_ssim must lie in (0, 1]")
    if cfg.sib.bid is not None and cfg.sib.bid < 0.0:
        raise ConfigError("sib bid must be nonnegative")


# --------------------------------------------------------------------- config IO


def _scalar(caster, kinds):
    def cast(value, where):
        if isinstance(value, bool) and bool not in kinds:
            raise ConfigError(f"{where}: expected {kinds}, got bool")
        if not isinstance(value, kinds):
            raise ConfigError(f"{where}: expected {kinds}, got {type(value).__name__}")
        return caster(value)

    return cast


_float = _scalar(float, (int, float))
_int = _scalar(int, (int,))
_bool = _scalar(bool, (bool,))
_str = _scalar(str, (str,))


def _opt(cast):
    def inner(value, where):
        return None if value is None else cast(value, where)

    return inner


def _tuple_of(cast):
    def inner(value, where):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(cast(v, f"{where}[{i}]") for i, v in enumerate(value))

    return inner


def _apply_fields(obj, data, casts, where):
    unknown = set(data) - set(casts)
    if unknown:
        raise ConfigError(f"unknown key {where}.{sorted(unknown)[0]}")
    updates = {name: casts[name](data[name], f"{where}.{name}") for name in data}
    return replace(obj, **updates)


_SURROGATE_CASTS = {
    "local_mean_acc": _float,
    "edge_mean_acc_full": _float,
    "acc_floor_ratio": _float,
    "ssim_full": _float,
    "ssim_anchor": _float,
    "difficulty_shape": _tuple_of(_float),
    "entropy_noise_std": _float,
    "conf_slope_local": _float,
    "conf_slope_edge": _float,
    "conf_floor": _float,
    "conf_ceiling": _float,
    "conf_intercept_local": _opt(_float),
    "conf_intercept_edge": _opt(_float),
    "ssim_exponent": _opt(_float),
    "ratio_min": _opt(_float),
}

_MD_CASTS = {
    "index": _int,
    "feature_dims": _int,
    "bits_per_dim": _int,
    "ratio_set": _tuple_of(_float),
    "max_bid": _float,
    "initial_budget": _float,
    "class_count": _int,
    "mean_snr": _opt(_float),
    "weight_t1": _float,
}

_SYSTEM_CASTS = {
    "device_count": _int,
    "server_capacity": _int,
    "horizon": _int,
    "slot_duration": _float,
    "bandwidth": _float,
    "weight_t2": _float,
}

_TRAIN_CASTS = {
    "episodes": _int,
    "batch_episodes": _int,
    "buffer_capacity": _int,
    "hidden": _tuple_of(_int),
    "lr_actor": _float,
    "lr_critic": _float,
    "tau_actor": _float,
    "tau_critic": _float,
    "sigma_z_sq": _float,
    "gumbel_tau": _float,
    "gumbel_tau_final": _opt(_float),
    "update_every": _int,
    "mask_entropy": _bool,
    "ratio_pin": _opt(_str),
    "pin_compressed_as_largest": _bool,
}

_DQN_CASTS = {
    "episodes": _int,
    "eps_start": _float,
    "eps_end": _float,
    "eps_decay_episodes": _int,
    "lr": _float,
    "tau_sync": _float,
    "replay_capacity": _int,
    "batch_size": _int,
    "hidden": _tuple_of(_int),
}

_SIB_CASTS = {"target_ssim": _float, "bid": _opt(_float)}

_EXPERIMENT_CASTS = {
    "algo": _str,
    "seeds": _tuple_of(_int),
    "out_dir": _str,
    "eval_episodes": _int,
    "tradeoff_pairs": _tuple_of(_tuple_of(_float)),
    "tradeoff_algos": _tuple_of(_str),
    "budget_splits": _tuple_of(_float),
    "budget_weights": _tuple_of(_float),
}


def _build_device(data, where, symbol_budget):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    surrogate_data = data.pop("surrogate", {})
    if not isinstance(surrogate_data, dict):
        raise ConfigError(f"{where}.surrogate: expected a mapping")
    params = _apply_fields(SurrogateParams(), surrogate_data, _SURROGATE_CASTS, f"{where}.surrogate")
    md = MdConfig(
        index=0,
        feature_dims=1,
        bits_per_dim=1,
        ratio_set=(1.0,),
        max_bid=1.0,
        initial_budget=0.0,
        class_count=2,
        mean_snr=None,
        weight_t1=1.0,
        surrogate=params,
    )
    md = _apply_fields(md, data, _MD_CASTS, where)
    if "index" not in data or "feature_dims" not in data:
        raise ConfigError(f"{where}: index and feature_dims are required")
    if md.mean_snr is None:
        md = replace(
            md,
            mean_snr=snr_for_feasibility(
                payload_bits(1.0, md.feature_dims, md.bits_per_dim), symbol_budget
            ),
        )
    if not md.surrogate.calibrated:
        md = replace(md, surrogate=calibrate(md.surrogate, min(md.ratio_set)))
    return md


def config_from_dict(data):
    """Build a validated ExperimentConfig from plain nested dicts."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(data) - {"system", "train", "dqn", "sib", "experiment"}
    if unknown:
        raise ConfigError(f"unknown top-level section {sorted(unknown)[0]!r}")
    system_data = dict(data.get("system") or {})
    device_entries = system_data.pop("devices", None)
    system = _apply_fields(SystemConfig(), system_data, _SYSTEM_CASTS, "system")
    if device_entries is None:
        system.devices = default_system_config().devices
    else:
        if not isinstance(device_entries, list):
            raise ConfigError("system.devices: expected a list")
        system.devices = [
            _build_device(dict(d), f"system.devices[{i}]", system.symbol_budget)
            for i, d in enumerate(device_entries)
        ]
    if "device_count" not in system_data:
        system.device_count = len(system.devices)
    train = _apply_fields(TrainConfig(), dict(data.get("train") or {}), _TRAIN_CASTS, "train")
    dqn = _apply_fields(DqnConfig(), dict(data.get("dqn") or {}), _DQN_CASTS, "dqn")
    sib = _apply_fields(SibConfig(), dict(data.get("sib") or {}), _SIB_CASTS, "sib")
    cfg = ExperimentConfig(system=system, train=train, dqn=dqn, sib=sib)
    cfg = _apply_fields(cfg, dict(data.get("experiment") or {}), _EXPERIMENT_CASTS, "experiment")
    validate_experiment_config(cfg)
    return cfg


def _dataclass_dict(obj):
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def config_to_dict(cfg):
    """Plain nested dicts mirroring config_from_dict, solved fields included."""
    system = {
        name: getattr(cfg.system, name)
        for name in ("device_count", "server_capacity", "horizon", "slot_duration", "bandwidth", "weight_t2")
    }
    system["devices"] = []
    for md in cfg.system.devices:
        entry = _dataclass_dict(md)
        entry["surrogate"] = _dataclass_dict(md.surrogate)
        system["devices"].append(entry)
    experiment = {
        name: getattr(cfg, name)
        for name in (
            "algo",
            "seeds",
            "out_dir",
            "eval_episodes",
            "tradeoff_pairs",
            "tradeoff_algos",
            "budget_splits",
            "budget_weights",
        )
    }
    experiment = {
        k: [list(p) if isinstance(p, tuple) else p for p in v] if isinstance(v, tuple) else v
        for k, v in experiment.items()
    }
    return {
        "system": system,
        "train": _dataclass_dict(cfg.train),
        "dqn": _dataclass_dict(cfg.dqn),
        "sib": _dataclass_dict(cfg.sib),
        "experiment": experiment,
    }


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data or {})


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)


# --------------------------------------------------------------------- metrics


@dataclass
class MetricsRecord:
    episode: int
    reward: tuple
    accuracy: tuple
    ssim: tuple
    spend: tuple
    served: tuple


def record_from_episode(index, ep):
    s = episode_summary(ep)
    return MetricsRecord(
        episode=index,
        reward=tuple(float(x) for x in s["reward"]),
        accuracy=tuple(float(x) for x in s["accuracy"]),
        ssim=tuple(float(x) for x in s["ssim"]),
        spend=tuple(float(x) for x in s["spend"]),
        served=tuple(int(x) for x in s["served"]),
    )


def metrics_header(n_devices):
    cols = ["episode"]
    for name in ("reward", "accuracy", "ssim", "spend", "served"):
        cols.extend(f"{name}_md{k + 1}" for k in range(n_devices))
    return cols


class MetricsWriter:
    """Streams one CSV row per episode; numbers render via repr so reruns
    with the same seed produce byte-identical files."""

    def __init__(self, path, n_devices):
        self.fh = open(path, "w", encoding="utf-8", newline="")
        self.fh.write(",".join(metrics_header(n_devices)) + "\n")

    def write(self, rec):
        parts = [str(rec.episode)]
        for group in (rec.reward, rec.accuracy, rec.ssim, rec.spend):
            parts.extend(repr(float(x)) for x in group)
        parts.extend(str(int(x)) for x in rec.served)
        self.fh.write(",".join(parts) + "\n")

    def close(self):
        self.fh.close()


def read_metrics(path):
    """Metrics CSV back as {column: numpy array}."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float) if rows else np.zeros((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


# --------------------------------------------------------------------- rollouts


class SibPolicy:
    """Constant-action policy from the leakage-target rule."""

    mask_entropy = False

    def __init__(self, sys_cfg, sib_cfg):
        self._static = [sib_policy(md, sys_cfg, sib_cfg) for md in sys_cfg.devices]

    def action(self, k, obs_vec, budget):
        bid, ridx = self._static[k]
        return Action(bid=min(bid, budget), ratio_index=ridx)


def run_policy_episode(env, policy):
    """Greedy rollout of one episode under any per-device policy object."""
    cfg = env.cfg
    n_devices = cfg.device_count
    ep = Episode(n_devices, cfg.horizon, [len(md.ratio_set) for md in cfg.devices])
    state = env.reset()
    for n in range(cfg.horizon):
        actions = []
        for k, md in enumerate(cfg.devices):
            obs = env.observe(state, k)
            if policy.mask_entropy:
                obs = replace(obs, entropy=0.0)
            vec = observation_vector(obs, md, cfg)
            ep.obs[k, n] = (obs.slot, obs.rate, obs.budget, obs.entropy)
            ep.obs_vec[k, n] = vec
            act = policy.action(k, vec, obs.budget)
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
    return ep


def eval_rng(seed, tag=EVAL_TAG):
    return np.random.default_rng(np.random.SeedSequence((int(seed), tag)))


def summarize_eval(episodes):
    """Aggregate greedy-rollout episodes into per-device evaluation stats."""
    if not episodes:
        return {"episodes": 0, "note": "no data"}
    n_devices = episodes[0].rewards.shape[0]
    out = {"episodes": len(episodes), "per_device": []}
    for k in range(n_devices):
        acc = np.array([ep.correct[k].mean() for ep in episodes])
        reward = np.array([ep.rewards[k].sum() for ep in episodes])
        leaks = np.concatenate([ep.leaks[k][ep.served[k]] for ep in episodes])
        slots = sum(ep.served[k].shape[0] for ep in episodes)
        ssim_std = float(leaks.std()) if leaks.size else 0.0
        out["per_device"].append(
            {
                "accuracy_mean": float(acc.mean()),
                "accuracy_stderr": float(acc.std(ddof=1) / math.sqrt(len(acc))) if len(acc) > 1 else 0.0,
                "reward_mean": float(reward.mean()),
                "ssim_mean": float(leaks.mean()) if leaks.size else 0.0,
                "ssim_std": ssim_std,
                "ssim_stderr": ssim_std / math.sqrt(leaks.size) if leaks.size else 0.0,
                "served_slots": int(leaks.size),
                "serve_rate": float(leaks.size / slots),
            }
        )
    return out


def evaluate_policy(sys_cfg, policy, episodes, seed):
    env = CoopInferenceEnv(sys_cfg, eval_rng(seed))
    return summarize_eval([run_policy_episode(env, policy) for _ in range(episodes)])


def evaluate_dqn(sys_cfg, net, episodes, seed):
    adapter = JointInferenceEnv(sys_cfg, eval_rng(seed))
    rng = eval_rng(seed, tag=EVAL_TAG + 1)
    collected = []
    for _ in range(episodes):
        obs = adapter.reset()
        done = False
        while not done:
            action = dqn_policy_step(net, obs, adapter.n_actions, 0.0, rng)
            obs, _, done = adapter.step(action)
        collected.append(adapter.episode)
    return summarize_eval(collected)


# --------------------------------------------------------------------- training


def train_one(exp_cfg, algo, seed, out_dir=None, metrics_path=None):
    """Train a single (algo, seed) run; returns records plus the trained policy."""
    validate_experiment_config(exp_cfg)
    if algo not in ALGOS:
        raise ConfigError(f"unknown algo {algo!r}")
    sys_cfg = exp_cfg.system
    records = []
    writer = MetricsWriter(metrics_path, sys_cfg.device_count) if metrics_path else None

    def keep(index, episode):
        rec = record_from_episode(index, episode)
        records.append(rec)
        if writer:
            writer.write(rec)

    try:
        if algo in MADDPG_ALGOS:
            trainer = MaddpgTrainer(sys_cfg, make_variant(exp_cfg.train, algo), seed)
            trainer.train(keep)
            if out_dir:
                trainer.save_checkpoints(os.path.join(out_dir, "checkpoints"))
            return {"records": records, "policy": trainer.policy(), "trainer": trainer}
        if algo == "dqn":
            adapter = JointInferenceEnv(sys_cfg, eval_rng(seed, tag=DQN_ENV_TAG))
            net, _ = dqn_train(
                adapter, exp_cfg.dqn, seed, lambda i, _r: keep(i, adapter.episode)
            )
            if out_dir:
                ckpt = os.path.join(out_dir, "checkpoints")
                os.makedirs(ckpt, exist_ok=True)
                save_nets(os.path.join(ckpt, "dqn.json"), {"q": net})
            return {"records": records, "net": net}
        policy = SibPolicy(sys_cfg, exp_cfg.sib)
        env = CoopInferenceEnv(sys_cfg, eval_rng(seed, tag=SIB_TAG))
        for i in range(exp_cfg.train.episodes):
            keep(i, run_policy_episode(env, policy))
        return {"records": records, "policy": policy}
    finally:
        if writer:
            writer.close()


def run_dir(out_root, algo, seed):
    return os.path.join(out_root, algo, f"seed_{seed}")


def run_train(exp_cfg, algo=None, seeds=None, out_root=None):
    """Train each seed to disk: metrics.csv, checkpoints/, summary.json."""
    algo = algo or exp_cfg.algo
    seeds = tuple(seeds) if seeds is not None else exp_cfg.seeds
    out_root = out_root or exp_cfg.out_dir
    summaries = []
    for seed in seeds:
        d = run_dir(out_root, algo, seed)
        os.makedirs(d, exist_ok=True)
        res = train_one(
            exp_cfg, algo, seed, out_dir=d, metrics_path=os.path.join(d, "metrics.csv")
        )
        records = res["records"]
        tail = records[-min(100, len(records)) :]
        summary = {
            "algo": algo,
            "seed": seed,
            "episodes": len(records),
            "mean_reward_last_100": [
                float(np.mean([r.reward[k] for r in tail]))
                for k in range(exp_cfg.system.device_count)
            ],
            "calibration": {
                f"md{md.index}": calibration_report(md.surrogate)
                for md in exp_cfg.system.devices
            },
        }
        with open(os.path.join(d, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
        summaries.append(summary)
    return summaries


def evaluate_run(exp_cfg, algo, seed, ckpt_dir=None, episodes=None):
    """Greedy evaluation of a trained run (or of the static rule, which needs
    no checkpoint); returns the summary dict."""
    episodes = exp_cfg.eval_episodes if episodes is None else episodes
    sys_cfg = exp_cfg.system
    if episodes == 0:
        return {"episodes": 0, "note": "no data"}
    if algo == "sib":
        return evaluate_policy(sys_cfg, SibPolicy(sys_cfg, exp_cfg.sib), episodes, seed)
    if ckpt_dir is None:
        raise ConfigError(f"algo {algo!r} needs a checkpoint directory")
    nested = os.path.join(ckpt_dir, "checkpoints")
    if os.path.isdir(nested):
        ckpt_dir = nested
    if algo == "dqn":
        nets, _ = load_nets(os.path.join(ckpt_dir, "dqn.json"))
        return evaluate_dqn(sys_cfg, nets["q"], episodes, seed)
    policy = load_policy(ckpt_dir, sys_cfg, make_variant(exp_cfg.train, algo))
    return evaluate_policy(sys_cfg, policy, episodes, seed)


# --------------------------------------------------------------------- sweeps


def _csv_rows(path, rows, columns):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            rendered = []
            for c in columns:
                v = row[c]
                rendered.append(repr(float(v)) if isinstance(v, float) else str(v))
            fh.write(",".join(rendered) + "\n")


def _eval_rows(summary, sys_cfg, base):
    rows = []
    for k, md in enumerate(sys_cfg.devices):
        d = summary["per_device"][k]
        rows.append(
            {
                **base,
                "device": md.index,
                "accuracy": d["accuracy_mean"],
                "ssim": d["ssim_mean"],
                "ssim_std": d["ssim_std"],
                "reward": d["reward_mean"],
                "serve_rate": d["serve_rate"],
            }
        )
    return rows


TRADEOFF_COLUMNS = (
    "algo", "t1", "t2", "seed", "device", "accuracy", "ssim", "ssim_std", "reward", "serve_rate",
)


def run_tradeoff_sweep(exp_cfg, out_dir=None, algos=None, pairs=None, seeds=None):
    """Train and evaluate each algorithm at each accuracy/privacy weight pair."""
    validate_experiment_config(exp_cfg)
    algos = tuple(algos) if algos is not None else exp_cfg.tradeoff_algos
    pairs = tuple(pairs) if pairs is not None else exp_cfg.tradeoff_pairs
    seeds = tuple(seeds) if seeds is not None else exp_cfg.seeds
    rows = []
    for algo in algos:
        for t1, t2 in pairs:
            cfg_point = replace(exp_cfg, system=with_weights(exp_cfg.system, t1, t2))
            for seed in seeds:
                if algo == "sib":
                    summary = evaluate_policy(
                        cfg_point.system,
                        SibPolicy(cfg_point.system, exp_cfg.sib),
                        exp_cfg.eval_episodes,
                        seed,
                    )
                elif algo == "dqn":
                    res = train_one(cfg_point, "dqn", seed)
                    summary = evaluate_dqn(cfg_point.system, res["net"], exp_cfg.eval_episodes, seed)
                else:
                    res = train_one(cfg_point, algo, seed)
                    summary = evaluate_policy(
                        cfg_point.system, res["policy"], exp_cfg.eval_episodes, seed
                    )
                rows.extend(
                    _eval_rows(
                        summary,
                        cfg_point.system,
                        {"algo": algo, "t1": t1, "t2": t2, "seed": seed},
                    )
                )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _csv_rows(os.path.join(out_dir, "tradeoff.csv"), rows, TRADEOFF_COLUMNS)
    return rows


BUDGET_COLUMNS = (
    "split", "seed", "device", "accuracy", "ssim", "ssim_std", "reward", "serve_rate",
)


def run_budget_sweep(exp_cfg, out_dir=None, splits=None, seeds=None):
    """Train the bidding learner across budget splits at the sweep weights."""
    validate_experiment_config(exp_cfg)
    if exp_cfg.system.device_count != 2:
        raise ConfigError("budget sweep is defined for exactly two devices")
    splits = tuple(splits) if splits is not None else exp_cfg.budget_splits
    seeds = tuple(seeds) if seeds is not None else exp_cfg.seeds
    total = sum(md.initial_budget for md in exp_cfg.system.devices)
    t1, t2 = exp_cfg.budget_weights
    rows = []
    for m in splits:
        if not 0.0 < m < total:
            raise ConfigError(f"budget split {m} outside (0, {total})")
        sys_m = with_budgets(with_weights(exp_cfg.system, t1, t2), (m, total - m))
        cfg_point = replace(exp_cfg, system=sys_m)
        for seed in seeds:
            res = train_one(cfg_point, "maddpg", seed)
            summary = evaluate_policy(sys_m, res["policy"], exp_cfg.eval_episodes, seed)
            rows.extend(_eval_rows(summary, sys_m, {"split": m, "seed": seed}))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _csv_rows(os.path.join(out_dir, "budget.csv"), rows, BUDGET_COLUMNS)
    return rows


# --------------------------------------------------------------------- channel calibration


def calibrate_snr(sys_cfg, target, mc_samples=100_000, seed=20240502, snr_cap=1e12):
    """Per-device mean SNR bisected until the full payload fits a slot with
    probability `target`, estimated on one shared Monte-Carlo fading sample."""
    if not 0.0 < target < 1.0:
        raise CalibrationError(f"feasibility target must lie in (0, 1), got {target}")
    gains = np.sort(np.random.default_rng(seed).exponential(1.0, size=mc_samples))
    out = {}
    for md in sys_cfg.devices:
        need = payload_bits(1.0, md.feature_dims, md.bits_per_dim)
        factor = 2.0 ** (need / sys_cfg.symbol_budget) - 1.0

        def feasible_fraction(snr):
            # P[rate >= need] = P[gain >= factor / snr] on the frozen sample
            return 1.0 - np.searchsorted(gains, factor / snr, side="left") / mc_samples

        hi = 1.0
        while feasible_fraction(hi) < target:
            hi *= 4.0
            if hi > snr_cap:
                raise CalibrationError(
                    f"feasibility {target} unattainable for device {md.index} below SNR {snr_cap}"
                )
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= 0.0:
                lo = mid
                continue
            if feasible_fraction(mid) < target:
                lo = mid
            else:
                hi = mid
        out[md.index] = hi
    return out
