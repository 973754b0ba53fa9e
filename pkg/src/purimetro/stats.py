"""Seeds, shot sampling, confidence intervals and per-trial records."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def trial_seed(master_seed: int, index: int) -> int:
    """seed_i = splitmix64(master ^ splitmix64(i)), all arithmetic mod 2^64."""
    return splitmix64((int(master_seed) & _MASK) ^ splitmix64(int(index)))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK))


def shot_sample_ratio(
    joint: np.ndarray, shots: int, rng: np.random.Generator, gamma: float = 1.0
) -> tuple[np.ndarray, float]:
    """Sample ``shots`` joint outcomes and estimate every outcome's numerator.

    ``joint[s, x, k]`` is the probability of sign s (index 0: +1), control
    outcome x (index 0: +1) and target outcome k.  Returns per-outcome
    numerator estimates mean(γ·s·x·[o = k]) and the shared denominator
    mean(x), both computed from the same samples.
    """
    joint = np.asarray(joint, dtype=float)
    if shots < 1:
        raise ValueError("shots must be >= 1")
    flat = np.clip(joint.reshape(-1), 0.0, None)
    flat = flat / flat.sum()
    counts = rng.multinomial(shots, flat).reshape(joint.shape)
    sx = np.array([1.0, -1.0])
    weights = sx[:, None, None] * sx[None, :, None]
    nums = gamma * (weights * counts).sum(axis=(0, 1)) / shots
    den = float((sx[None, :, None] * counts).sum() / shots)
    return nums, den


def exact_moments(joint: np.ndarray, eigs: np.ndarray, gamma: float = 1.0) -> dict:
    """Single-shot moments of x̂ = γ s x o and ŷ = x for a diagonal observable.

    ``eigs`` lists the observable's eigenvalue on each target outcome.
    """
    joint = np.asarray(joint, dtype=float)
    eigs = np.asarray(eigs, dtype=float)
    s = np.array([1.0, -1.0])[:, None, None]
    x = np.array([1.0, -1.0])[None, :, None]
    o = eigs[None, None, :]
    mu_x = float(np.sum(joint * gamma * s * x * o))
    mu_y = float(np.sum(joint * x))
    ex2 = float(np.sum(joint * gamma**2 * o**2))
    exy = float(np.sum(joint * gamma * s * o))
    return {
        "mu_x": mu_x,
        "mu_y": mu_y,
        "var_x": ex2 - mu_x**2,
        "var_y": 1.0 - mu_y**2,
        "cov_xy": exy - mu_x * mu_y,
    }


def confidence_interval(values) -> tuple[float, float, float]:
    """Normal-approximation 95% interval mean ± 1.96·s/√T."""
    v = np.asarray(list(values), dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values for an interval")
    mean = float(v.mean())
    half = 1.96 * float(v.std(ddof=1)) / math.sqrt(v.size)
    return mean, mean - half, mean + half


@dataclass
class EstimateRecord:
    trial: int
    method: str
    N: int
    params: tuple
    gap: float
    p: float = float("nan")
    layers: int = 1
    m: int = 2
    numerators: tuple = ()
    denominator: float = float("nan")
    gamma: float = 1.0
    eta: float = float("nan")
    seed: int = 0
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    extra: dict = field(default_factory=dict)

    def sort_key(self):
        return (self.method, self.N, self.trial, self.layers, self.m)
