"""Slotted offloading environment: block-fading uplink, sealed-bid admission, budgets.

Every slot each device sees its own rate, remaining budget, and the entropy of
its current datum, then submits a bid and a compression choice.  The server
admits the highest feasible bidders up to capacity; admitted devices pay their
bid and classify at the server, everyone else classifies locally and leaks
nothing.  State is passed explicitly so rollout drivers stay in control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import surrogate
from .config import ConfigError, validate_system_config

OBS_FIELDS = 4  # slot, rate, budget, entropy


@dataclass
class Observation:
    slot: int
    rate: float
    budget: float
    entropy: float


@dataclass
class Action:
    bid: float
    ratio_index: int


@dataclass
class SystemState:
    slot: int
    rates: np.ndarray
    budgets: np.ndarray
    data: list


@dataclass
class StepResult:
    served: np.ndarray
    rewards: np.ndarray
    acc_losses: np.ndarray
    priv_leaks: np.ndarray
    correct: np.ndarray
    next_state: SystemState


def payload_bits(ratio, feature_dims, bits_per_dim):
    """Bits on the air for a feature map compressed to `ratio`."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio {ratio} outside (0, 1]")
    return ratio * feature_dims * bits_per_dim


def sample_channel_rate(rng, md_cfg, sys_cfg):
    """Deliverable bits this slot under unit-mean exponential block fading."""
    gain = rng.exponential(1.0)
    return sys_cfg.symbol_budget * math.log2(1.0 + md_cfg.mean_snr * gain)


def rate_scale(md_cfg, sys_cfg):
    """Slot capacity at unit fading gain; the natural rate normalizer."""
    return sys_cfg.symbol_budget * math.log2(1.0 + md_cfg.mean_snr)


def run_auction(bids, capacity, rng):
    """Admit up to `capacity` of the highest feasible positive bidders.

    `bids` holds (device, bid, feasible) triples.  Ties at the admission
    boundary are broken uniformly via one i.i.d. jitter key per eligible
    bidder; the jitter draw happens on every call so the rng stream advances
    identically whether or not the auction is contested.
    """
    if capacity < 0:
        raise ValueError("capacity must be nonnegative")
    eligible = [(k, v) for k, v, ok in bids if ok and v > 0.0]
    jitter = rng.random(len(eligible))
    if len(eligible) <= capacity:
        return {k for k, _ in eligible}
    order = sorted(range(len(eligible)), key=lambda i: (eligible[i][1], jitter[i]), reverse=True)
    return {eligible[i][0] for i in order[:capacity]}


def compute_reward(acc_loss, priv_leak, weight_t1, weight_t2):
    """Negative weighted sum of classification loss and reconstruction leakage."""
    return -weight_t1 * acc_loss - weight_t2 * priv_leak


def observation_vector(obs, md_cfg, sys_cfg):
    """Normalized feature view of an observation for function approximators."""
    budget_scale = md_cfg.initial_budget if md_cfg.initial_budget > 0.0 else 1.0
    return np.array(
        [
            obs.slot / sys_cfg.horizon,
            obs.rate / rate_scale(md_cfg, sys_cfg),
            obs.budget / budget_scale,
            obs.entropy / math.log(md_cfg.class_count),
        ]
    )


class CoopInferenceEnv:
    """Finite-horizon decision process shared by K devices and one server."""

    def __init__(self, cfg, rng):
        validate_system_config(cfg)
        for md in cfg.devices:
            if not md.surrogate.calibrated:
                raise ConfigError(f"device {md.index} surrogate is uncalibrated")
        self.cfg = cfg
        self.rng = rng

    def reset(self):
        """Fresh episode: slot 1, full budgets, new rates and data."""
        budgets = np.array([md.initial_budget for md in self.cfg.devices], float)
        return SystemState(slot=1, rates=self._draw_rates(), budgets=budgets, data=self._draw_data())

    def observe(self, state, device):
        return Observation(
            slot=state.slot,
            rate=float(state.rates[device]),
            budget=float(state.budgets[device]),
            entropy=state.data[device].entropy,
        )

    def step(self, state, actions):
        """Run one auction round and advance the slot.

        Bids must already respect the per-device cap min(max_bid, budget);
        anything outside is a caller bug and raises.
        """
        self._check_slot(state)
        if len(actions) != self.cfg.device_count:
            raise ValueError("one action per device required")
        bids = []
        for k, (md, act) in enumerate(zip(self.cfg.devices, actions)):
            if not 0 <= act.ratio_index < len(md.ratio_set):
                raise ValueError(f"device {md.index}: ratio index {act.ratio_index} out of range")
            cap = min(md.max_bid, float(state.budgets[k]))
            if not 0.0 <= act.bid <= cap:
                raise ValueError(f"device {md.index}: bid {act.bid} outside [0, {cap}]")
            ratio = md.ratio_set[act.ratio_index]
            feasible = act.bid > 0.0 and payload_bits(
                ratio, md.feature_dims, md.bits_per_dim
            ) <= float(state.rates[k])
            bids.append((k, act.bid, feasible))
        served = run_auction(bids, self.cfg.server_capacity, self.rng)
        return self._resolve(
            state,
            {k: actions[k].ratio_index for k in served},
            charge={k: actions[k].bid for k in served},
        )

    def step_assigned(self, state, assignment):
        """Serve an externally chosen subset, bypassing bids and budgets.

        `assignment` maps device position to ratio index.  Choices whose
        payload does not fit the current rate silently degrade to local
        inference; budgets never move in this mode.
        """
        self._check_slot(state)
        if len(assignment) > self.cfg.server_capacity:
            raise ValueError("assignment exceeds server capacity")
        served_ratios = {}
        for k, ridx in assignment.items():
            md = self.cfg.devices[k]
            if not 0 <= ridx < len(md.ratio_set):
                raise ValueError(f"device {md.index}: ratio index {ridx} out of range")
            ratio = md.ratio_set[ridx]
            if payload_bits(ratio, md.feature_dims, md.bits_per_dim) <= float(state.rates[k]):
                served_ratios[k] = ridx
        return self._resolve(state, served_ratios, charge=None)

    def _check_slot(self, state):
        if state.slot > self.cfg.horizon:
            raise ValueError(f"stepping past the horizon (slot {state.slot} > {self.cfg.horizon})")

    def _draw_rates(self):
        return np.array([sample_channel_rate(self.rng, md, self.cfg) for md in self.cfg.devices])

    def _draw_data(self):
        return [surrogate.draw_datum(self.rng, md.class_count, md.surrogate) for md in self.cfg.devices]

    def _resolve(self, state, served_ratios, charge):
        K = self.cfg.device_count
        served = np.zeros(K, dtype=bool)
        rewards = np.zeros(K)
        acc_losses = np.zeros(K)
        priv_leaks = np.zeros(K)
        correct = np.zeros(K, dtype=bool)
        for k, md in enumerate(self.cfg.devices):
            if k in served_ratios:
                ratio = md.ratio_set[served_ratios[k]]
                out = surrogate.edge_infer(state.data[k], ratio, md.surrogate)
                leak = surrogate.ssim_surrogate(ratio, md.surrogate)
                served[k] = True
            else:
                out = surrogate.local_infer(state.data[k], md.surrogate)
                leak = 0.0
            acc_losses[k] = out.ce_proxy
            priv_leaks[k] = leak
            correct[k] = out.correct
            rewards[k] = compute_reward(out.ce_proxy, leak, md.weight_t1, self.cfg.weight_t2)
        budgets = state.budgets.copy()
        if charge is not None:
            for k, v in charge.items():
                budgets[k] = budgets[k] - v
        next_state = SystemState(
            slot=state.slot + 1,
            rates=self._draw_rates(),
            budgets=budgets,
            data=self._draw_data(),
        )
        return StepResult(
            served=served,
            rewards=rewards,
            acc_losses=acc_losses,
            priv_leaks=priv_leaks,
            correct=correct,
            next_state=next_state,
        )
