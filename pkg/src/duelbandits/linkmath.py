"""Logistic link arithmetic, Bradley-Terry sampling, and the non-linearity coefficient."""

from __future__ import annotations

import math
from typing import Iterable, Tuple

import numpy as np

__all__ = [
    "sigmoid_pair",
    "log_loss",
    "bt_sample",
    "kappa_bound",
    "kappa_empirical",
]


def sigmoid_pair(w: float) -> Tuple[float, float]:
    """Return (sigma(w), sigma'(w)) for the logistic link sigma(w) = 1/(1+e^-w).

    Computed via exp(-|w|) so that arguments up to +-700 neither overflow
    nor lose the derivative to cancellation.
    """
    w = float(w)
    if not math.isfinite(w):
        raise ValueError(f"sigmoid argument must be finite, got {w!r}")
    e = math.exp(-abs(w))
    if w >= 0:
        s = 1.0 / (1.0 + e)
    else:
        s = e / (1.0 + e)
    ds = s * (1.0 - s)
    return s, ds


def log_loss(w: float, y: int) -> float:
    """Binary logistic loss -y*log(sigma(w)) - (1-y)*log(1-sigma(w)), overflow-safe."""
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    # log sigma(w) = -log(1+e^-w), log(1-sigma(w)) = -log(1+e^w)
    if y == 1:
        return float(np.logaddexp(0.0, -w))
    return float(np.logaddexp(0.0, w))


def bt_sample(reward_a: float, reward_b: float, rng: np.random.Generator) -> int:
    """Draw a Bradley-Terry preference label.

    Returns 1 (first action preferred) with probability sigma(reward_a - reward_b).
    """
    if not (math.isfinite(reward_a) and math.isfinite(reward_b)):
        raise ValueError("rewards must be finite")
    p, _ = sigmoid_pair(reward_a - reward_b)
    return 1 if rng.random() < p else 0


def kappa_bound(B: float, L: float) -> float:
    """Closed-form upper bound 3 + exp(2*B*L) on the non-linearity coefficient."""
    if B <= 0 or L <= 0:
        raise ValueError(f"B and L must be positive, got B={B}, L={L}")
    return 3.0 + math.exp(2.0 * B * L)


def kappa_empirical(data: Iterable[Tuple[np.ndarray, np.ndarray]]) -> float:
    """Realized non-linearity coefficient max over (z, theta) pairs of 1/sigma'(z.theta).

    The true coefficient maximizes over the whole feature/parameter product set,
    which is not computable; this evaluates the same quantity at the supplied pairs.
    """
    worst = 0.0
    empty = True
    for z, theta in data:
        empty = False
        _, ds = sigmoid_pair(float(np.dot(z, theta)))
        worst = max(worst, 1.0 / ds)
    if empty:
        raise ValueError("kappa_empirical needs at least one (z, theta) pair")
    return worst
