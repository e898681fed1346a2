"""Statistical stand-ins for on-device and server-side classification quality.

Each datum carries a latent difficulty in [0, 1].  Classifier confidence is a
clamped affine function of that difficulty, with the intercept calibrated by
bisection so the population mean hits a measured accuracy target.  Transmitting
a compressed feature map leaks a reconstruction-similarity score modelled as a
power law in the kept fraction, anchored so the most aggressive compression
level sits at a chosen leakage threshold.  All sampling goes through injected
numpy Generators, so runs reproduce bit for bit.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np


class CalibrationError(ValueError):
    """Raised when requested population targets cannot be met."""


@dataclass(frozen=True)
class SurrogateParams:
    """Quality-model parameters for one device.

    The last four fields are solved by calibrate(); construct with them unset
    and calibrate before use.
    """

    local_mean_acc: float = 0.73
    edge_mean_acc_full: float = 0.90
    acc_floor_ratio: float = 0.93
    ssim_full: float = 0.60
    ssim_anchor: float = 0.26
    difficulty_shape: tuple = (2.0, 2.0)
    entropy_noise_std: float = 0.05
    conf_slope_local: float = 0.5
    conf_slope_edge: float = 0.2
    conf_floor: float = 0.01
    conf_ceiling: float = 0.995
    conf_intercept_local: float | None = None
    conf_intercept_edge: float | None = None
    ssim_exponent: float | None = None
    ratio_min: float | None = None

    @property
    def calibrated(self):
        return None not in (
            self.conf_intercept_local,
            self.conf_intercept_edge,
            self.ssim_exponent,
            self.ratio_min,
        )


@dataclass(frozen=True)
class Datum:
    """One sampled input: latent difficulty, observed pseudo-entropy, and the
    uniform draw deciding correctness wherever the datum is classified."""

    difficulty: float
    entropy: float
    coin: float


@dataclass(frozen=True)
class InferenceOutcome:
    correct: bool
    ce_proxy: float
    confidence: float


def entropy_from_difficulty(difficulty, class_count, noise):
    """Noisy pseudo-entropy in nats, clipped to [0, ln(class_count)]."""
    cap = math.log(class_count)
    return float(np.clip(difficulty * cap + noise, 0.0, cap))


def draw_datum(rng, class_count, params):
    """Sample difficulty from the Beta prior, then entropy and correctness coin.

    Consumes exactly three draws (beta, normal, uniform) in that order.
    """
    u = float(rng.beta(params.difficulty_shape[0], params.difficulty_shape[1]))
    eps = float(rng.normal(0.0, params.entropy_noise_std))
    return Datum(
        difficulty=u,
        entropy=entropy_from_difficulty(u, class_count, eps),
        coin=float(rng.uniform()),
    )


def _require_calibrated(params):
    if not params.calibrated:
        raise CalibrationError("surrogate params are uncalibrated; run calibrate() first")


def local_confidence(difficulty, params):
    """Probability mass on the true class for on-device classification."""
    _require_calibrated(params)
    return np.clip(
        params.conf_intercept_local - params.conf_slope_local * np.asarray(difficulty, float),
        params.conf_floor,
        params.conf_ceiling,
    )


def edge_confidence_full(difficulty, params):
    """Server-side true-class confidence before any compression penalty."""
    _require_calibrated(params)
    return np.clip(
        params.conf_intercept_edge - params.conf_slope_edge * np.asarray(difficulty, float),
        params.conf_floor,
        params.conf_ceiling,
    )


def ratio_accuracy_factor(ratio, params):
    """Linear ramp from (ratio_min, acc_floor_ratio) up to (1, 1)."""
    _require_calibrated(params)
    if params.ratio_min >= 1.0:
        return 1.0
    frac = (ratio - params.ratio_min) / (1.0 - params.ratio_min)
    return params.acc_floor_ratio + (1.0 - params.acc_floor_ratio) * frac


def local_infer(datum, params):
    """Classify on the device; the shared coin decides correctness."""
    p = float(local_confidence(datum.difficulty, params))
    return InferenceOutcome(correct=bool(datum.coin < p), ce_proxy=-math.log(p), confidence=p)


def edge_infer(datum, ratio, params):
    """Classify at the server from a feature map compressed to `ratio`.

    Confidence is the full-rate curve scaled by the compression accuracy
    factor; the same coin as local_infer decides correctness, so the two
    outcomes for one datum are coupled.
    """
    _require_calibrated(params)
    if not params.ratio_min - 1e-12 <= ratio <= 1.0 + 1e-12:
        raise ValueError(f"ratio {ratio} outside [{params.ratio_min}, 1]")
    p = float(edge_confidence_full(datum.difficulty, params)) * ratio_accuracy_factor(ratio, params)
    return InferenceOutcome(correct=bool(datum.coin < p), ce_proxy=-math.log(p), confidence=p)


def ssim_surrogate(ratio, params):
    """Reconstruction-similarity leakage for transmitting at `ratio`."""
    _require_calibrated(params)
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio {ratio} outside (0, 1]")
    return params.ssim_full * ratio ** params.ssim_exponent


def _mean_conf(intercept, slope, u, params):
    return float(np.mean(np.clip(intercept - slope * u, params.conf_floor, params.conf_ceiling)))


def _solve_intercept(u, slope, target, params):
    # the clamped mean spans [conf_floor, conf_ceiling] monotonically in the intercept
    if not params.conf_floor < target < params.conf_ceiling:
        raise CalibrationError(
            f"target mean {target} outside clamp range "
            f"({params.conf_floor}, {params.conf_ceiling})"
        )
    lo = params.conf_floor
    hi = params.conf_ceiling + slope
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _mean_conf(mid, slope, u, params) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return 0.5 * (lo + hi)


def _solve_exponent(ssim_full, anchor, ratio_min):
    if ratio_min >= 1.0:
        if abs(anchor - ssim_full) > 1e-9:
            raise CalibrationError("single-ratio device cannot reach an anchor below ssim_full")
        return 1.0
    if not 0.0 < anchor < ssim_full:
        raise CalibrationError(f"anchor {anchor} must lie in (0, ssim_full={ssim_full})")
    gamma = math.log(anchor / ssim_full) / math.log(ratio_min)
    # keep the anchored value on the safe side of the threshold under rounding
    while ssim_full * ratio_min**gamma > anchor:
        gamma *= 1.0 + 1e-12
    return gamma


@functools.lru_cache(maxsize=128)
def calibrate(params, ratio_min, mc_samples=200_000, seed=20240501):
    """Solve confidence intercepts and the leakage exponent against targets.

    Intercepts come from bisection of the Monte-Carlo population mean over the
    difficulty prior; the exponent has a closed form from the anchor at the
    smallest ratio.  Deterministic for a fixed seed.  Raises CalibrationError
    when a target is unreachable or a residual ends up above 0.005.
    """
    if not 0.0 < ratio_min <= 1.0:
        raise CalibrationError(f"ratio_min {ratio_min} outside (0, 1]")
    a, b = params.difficulty_shape
    u = np.random.default_rng(seed).beta(a, b, size=mc_samples)
    out = replace(
        params,
        conf_intercept_local=_solve_intercept(u, params.conf_slope_local, params.local_mean_acc, params),
        conf_intercept_edge=_solve_intercept(u, params.conf_slope_edge, params.edge_mean_acc_full, params),
        ssim_exponent=_solve_exponent(params.ssim_full, params.ssim_anchor, ratio_min),
        ratio_min=float(ratio_min),
    )
    residuals = calibration_residuals(out, u)
    if max(abs(r) for r in residuals.values()) > 0.005:
        raise CalibrationError(f"calibration residuals too large: {residuals}")
    return out


def calibration_residuals(params, u):
    """Signed target errors of a calibrated parameter set over difficulty sample u."""
    _require_calibrated(params)
    return {
        "local_mean_acc": _mean_conf(params.conf_intercept_local, params.conf_slope_local, u, params)
        - params.local_mean_acc,
        "edge_mean_acc_full": _mean_conf(params.conf_intercept_edge, params.conf_slope_edge, u, params)
        - params.edge_mean_acc_full,
        "ssim_anchor": params.ssim_full * params.ratio_min**params.ssim_exponent - params.ssim_anchor,
    }


def calibration_report(params, mc_samples=200_000, seed=20240501):
    """Structured record of targets, solved coefficients, and residuals."""
    _require_calibrated(params)
    a, b = params.difficulty_shape
    u = np.random.default_rng(seed).beta(a, b, size=mc_samples)
    return {
        "targets": {
            "local_mean_acc": params.local_mean_acc,
            "edge_mean_acc_full": params.edge_mean_acc_full,
            "ssim_anchor": params.ssim_anchor,
        },
        "solved": {
            "conf_intercept_local": params.conf_intercept_local,
            "conf_intercept_edge": params.conf_intercept_edge,
            "ssim_exponent": params.ssim_exponent,
            "ratio_min": params.ratio_min,
        },
        "residuals": calibration_residuals(params, u),
        "ssim_at_min_ratio": params.ssim_full * params.ratio_min**params.ssim_exponent,
    }


def ssim_exact(x, xhat, value_range=1.0):
    """Global structural similarity of two equal-shape arrays.

    Uses single-window statistics over all pixels with population moments;
    3-D inputs are treated as (H, W, C) and averaged over the trailing
    channel axis.
    """
    x = np.asarray(x, float)
    xhat = np.asarray(xhat, float)
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {xhat.shape}")
    if x.size == 0:
        raise ValueError("empty input")
    if x.ndim == 3:
        return float(np.mean([_ssim_single(x[..., c], xhat[..., c], value_range) for c in range(x.shape[2])]))
    return _ssim_single(x, xhat, value_range)


def _ssim_single(x, xhat, value_range):
    c1 = (0.01 * value_range) ** 2
    c2 = (0.03 * value_range) ** 2
    mu_x = x.mean()
    mu_y = xhat.mean()
    var_x = x.var()
    var_y = xhat.var()
    cov = float(np.mean((x - mu_x) * (xhat - mu_y)))
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(num / den)
