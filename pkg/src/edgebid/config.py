"""System and device configuration plus factories for the evaluated default setup."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .surrogate import SurrogateParams, calibrate


class ConfigError(ValueError):
    """Raised when a configuration violates a structural constraint."""


@dataclass
class MdConfig:
    """Static description of one mobile device."""

    index: int
    feature_dims: int
    bits_per_dim: int
    ratio_set: tuple
    max_bid: float
    initial_budget: float
    class_count: int
    mean_snr: float
    weight_t1: float
    surrogate: SurrogateParams


@dataclass
class SystemConfig:
    """Shared system parameters and the device roster."""

    device_count: int = 2
    server_capacity: int = 1
    horizon: int = 10
    slot_duration: float = 0.1
    bandwidth: float = 50_000.0
    weight_t2: float = 0.8
    devices: list = field(default_factory=list)

    @property
    def symbol_budget(self):
        # symbols available per uplink slot
        return self.slot_duration * self.bandwidth


def validate_md_config(md):
    if md.index < 1:
        raise ConfigError(f"device index must be >= 1, got {md.index}")
    if md.feature_dims < 1 or md.bits_per_dim < 1:
        raise ConfigError("feature_dims and bits_per_dim must be positive")
    if not md.ratio_set:
        raise ConfigError("ratio_set must be non-empty")
    if any(not 0.0 < w <= 1.0 for w in md.ratio_set):
        raise ConfigError(f"ratios must lie in (0, 1]: {md.ratio_set}")
    if any(a <= b for a, b in zip(md.ratio_set, md.ratio_set[1:])):
        raise ConfigError(f"ratio_set must be strictly descending: {md.ratio_set}")
    if md.max_bid <= 0.0:
        raise ConfigError("max_bid must be positive")
    if md.initial_budget < 0.0:
        raise ConfigError("initial_budget must be nonnegative")
    if md.class_count < 2:
        raise ConfigError("class_count must be at least 2")
    if md.mean_snr <= 0.0:
        raise ConfigError("mean_snr must be positive")
    if md.weight_t1 <= 0.0:
        raise ConfigError("weight_t1 must be positive")
    s = md.surrogate
    for name in ("local_mean_acc", "edge_mean_acc_full"):
        v = getattr(s, name)
        if not 0.0 < v < 1.0:
            raise ConfigError(f"{name} must lie in (0, 1), got {v}")
    if s.edge_mean_acc_full <= s.local_mean_acc:
        raise ConfigError("edge_mean_acc_full must exceed local_mean_acc")
    if not 0.0 < s.acc_floor_ratio <= 1.0:
        raise ConfigError("acc_floor_ratio must lie in (0, 1]")
    if not 0.0 < s.ssim_full <= 1.0:
        raise ConfigError("ssim_full must lie in (0, 1]")
    if not 0.0 < s.ssim_anchor <= s.ssim_full:
        raise ConfigError("ssim_anchor must lie in (0, ssim_full]")
    if s.difficulty_shape[0] <= 0.0 or s.difficulty_shape[1] <= 0.0:
        raise ConfigError("difficulty_shape parameters must be positive")
    if s.entropy_noise_std < 0.0:
        raise ConfigError("entropy_noise_std must be nonnegative")
    if not 0.0 < s.conf_floor < s.conf_ceiling < 1.0:
        raise ConfigError("need 0 < conf_floor < conf_ceiling < 1")


def validate_system_config(cfg):
    if cfg.device_count < 1:
        raise ConfigError("device_count must be at least 1")
    if len(cfg.devices) != cfg.device_count:
        raise ConfigError(
            f"device_count {cfg.device_count} does not match {len(cfg.devices)} device entries"
        )
    if not 1 <= cfg.server_capacity <= cfg.device_count:
        raise ConfigError("server_capacity must lie in [1, device_count]")
    if cfg.horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if cfg.slot_duration <= 0.0 or cfg.bandwidth <= 0.0:
        raise ConfigError("slot_duration and bandwidth must be positive")
    if cfg.weight_t2 <= 0.0:
        raise ConfigError("weight_t2 must be positive")
    if len({md.index for md in cfg.devices}) != len(cfg.devices):
        raise ConfigError("device indexes must be unique")
    for md in cfg.devices:
        validate_md_config(md)


def snr_for_feasibility(payload_bits, symbol_budget, target=0.5):
    """Mean SNR at which a unit-mean exponential fading slot carries
    `payload_bits` with probability `target` (closed form)."""
    if not 0.0 < target < 1.0:
        raise ConfigError(f"feasibility target must lie in (0, 1), got {target}")
    return (2.0 ** (payload_bits / symbol_budget) - 1.0) / (-math.log(target))


def default_device(index, feature_dims, ratio_set, local_mean_acc, edge_mean_acc_full,
                   budget=5.0, weight_t1=0.2, bits_per_dim=8, class_count=10,
                   symbol_budget=5_000.0, feasibility=0.5):
    """Build one calibrated device with the default surrogate family."""
    params = calibrate(
        SurrogateParams(local_mean_acc=local_mean_acc, edge_mean_acc_full=edge_mean_acc_full),
        ratio_min=min(ratio_set),
    )
    return MdConfig(
        index=index,
        feature_dims=feature_dims,
        bits_per_dim=bits_per_dim,
        ratio_set=tuple(ratio_set),
        max_bid=1.0,
        initial_budget=budget,
        class_count=class_count,
        mean_snr=snr_for_feasibility(feature_dims * bits_per_dim, symbol_budget, feasibility),
        weight_t1=weight_t1,
        surrogate=params,
    )


def default_system_config(weight_t1=0.2, weight_t2=0.8, budgets=(5.0, 5.0)):
    """Two-device setup: wide feature maps on device 1, compact embeddings on device 2.

    Mean SNRs are set so each device's uncompressed payload fits in a slot
    with probability one half.
    """
    sys_cfg = SystemConfig(weight_t2=weight_t2)
    sys_cfg.devices = [
        default_device(1, 8192, (1.0, 0.8, 0.6, 0.4), 0.730, 0.900,
                       budget=budgets[0], weight_t1=weight_t1,
                       symbol_budget=sys_cfg.symbol_budget),
        default_device(2, 128, (1.0, 0.75, 0.5, 0.25), 0.720, 0.884,
                       budget=budgets[1], weight_t1=weight_t1,
                       symbol_budget=sys_cfg.symbol_budget),
    ]
    validate_system_config(sys_cfg)
    return sys_cfg


def with_weights(sys_cfg, weight_t1, weight_t2):
    """Copy of a system config with the reward weights replaced everywhere."""
    out = replace(sys_cfg, weight_t2=weight_t2)
    out.devices = [replace(md, weight_t1=weight_t1) for md in sys_cfg.devices]
    return out


def with_budgets(sys_cfg, budgets):
    """Copy of a system config with per-device initial budgets replaced."""
    if len(budgets) != len(sys_cfg.devices):
        raise ConfigError("one budget per device required")
    out = replace(sys_cfg)
    out.devices = [replace(md, initial_budget=float(b)) for md, b in zip(sys_cfg.devices, budgets)]
    return out
