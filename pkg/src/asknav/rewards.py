"""Reward computation for help-policy training.

The cumulative help reward at step t sums the per-step changes of the
navigation reward r_nav (negative geodesic distance to goal), divides by
the constant 1 + lambda_d, and scales the whole sum by 1/(1 + C_r * c_p).
The sum of differences telescopes, so the closed form below is exact.

The total episode reward adds success-weighted path length and subtracts
lambda_h times the human action ratio.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .metrics import ZeroSteps

DEFAULT_LAMBDA_D = 0.99
DEFAULT_LAMBDA_H = 0.5


@dataclass(frozen=True)
class RewardConfig:
    lambda_d: float = DEFAULT_LAMBDA_D
    lambda_h: float = DEFAULT_LAMBDA_H

    def __post_init__(self):
        if self.lambda_d < 0 or self.lambda_h < 0:
            raise ValueError("lambda_d and lambda_h must be nonnegative")


def help_reward(r_nav_history: Sequence[float], C_r: int, c_p: int,
                config: RewardConfig = RewardConfig()) -> float:
    """Cumulative help reward through the last entry of r_nav_history.

    The i = 0 difference term is defined as zero, so only the telescoped
    r_nav(t) - r_nav(0) remains.
    """
    if len(r_nav_history) < 1:
        raise ValueError("need at least the initial r_nav value")
    scale = 1.0 / (1.0 + C_r * c_p)
    return scale * (r_nav_history[-1] - r_nav_history[0]) / (1.0 + config.lambda_d)


def total_reward(r_help: float, r_spl: float, C_h: int, C_a: int,
                 config: RewardConfig = RewardConfig()) -> float:
    """r_help + r_spl - lambda_h * C_h / (C_h + C_a)."""
    if C_h + C_a == 0:
        raise ZeroSteps("episode executed no steps")
    return r_help + r_spl - config.lambda_h * C_h / (C_h + C_a)
