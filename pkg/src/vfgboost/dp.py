"""Gaussian-mechanism perturbation of released leaf weights.

Leaf values are clipped to a configured magnitude C before release; the
sensitivity of a clipped leaf is 2C (two stat sets differing in one sample can
move the weight from -C to +C at most), so the perturbed copy carries noise
from N(0, (2*C*sigma)^2) with sigma calibrated as
    sigma = c * q * sqrt(T * ln(1/delta)) / epsilon   (natural log).
Only the copy addressed to the split's source client is perturbed; the
protocol layer enforces that partiality.
"""

import math
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class DpParams:
    epsilon: float = 8.0
    delta: float = 1e-5
    clip: float = 2.0
    sample_rate: float = 1.0
    steps: int = 1
    calibration: float = 1.0
    enabled: bool = True

    def validate(self):
        if self.epsilon <= 0 or not 0 < self.delta < 1:
            raise ValueError("epsilon must be > 0 and delta in (0,1)")
        if self.clip <= 0 or not 0 < self.sample_rate <= 1:
            raise ValueError("clip must be > 0 and sample_rate in (0,1]")
        if self.steps < 1 or self.calibration <= 0:
            raise ValueError("steps must be >= 1 and calibration > 0")


@dataclass(frozen=True)
class NoisyLeaf:
    value: float
    was_perturbed: bool


def clip_leaf(w: float, clip: float) -> float:
    """w / max(1, |w|/C): unchanged inside the bound, scaled to magnitude C outside."""
    if clip <= 0:
        raise ValueError("clip must be positive")
    return w / max(1.0, abs(w) / clip)


def noise_sigma(params: DpParams) -> float:
    params.validate()
    return (params.calibration * params.sample_rate
            * math.sqrt(params.steps * math.log(1.0 / params.delta))
            / params.epsilon)


def perturb_leaf(w: float, params: DpParams, rng: random.Random) -> NoisyLeaf:
    """Clip then add N(0, (2*C*sigma)^2); 2C is the clipped-leaf sensitivity."""
    if not params.enabled:
        raise ValueError("perturb_leaf called with DP disabled")
    clipped = clip_leaf(w, params.clip)
    sigma = noise_sigma(params)
    return NoisyLeaf(value=clipped + rng.gauss(0.0, 2.0 * params.clip * sigma),
                     was_perturbed=True)
