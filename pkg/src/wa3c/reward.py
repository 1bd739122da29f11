"""Per-step reward calculus: five components and their weighted total.

Component conventions (enforced by tests):
  qos       in [-1, 1]   (1 - latency/L_max, clamped)
  priority  in [0, 1]    (priority * (1 - normalized latency))
  energy    <= 0         (-alpha * normalized energy)
  fairness  <= 0         (-lambda * population variance of utilization shares)
  dismissal <= 0         (-mu * dismissed count)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class RewardWeights:
    """Mixing weights for the five components; must sum to 1."""

    qos: float = 0.25
    energy: float = 0.2
    priority: float = 0.25
    fairness: float = 0.15
    dismissal: float = 0.15

    def __post_init__(self):
        vals = self.as_tuple()
        for name, w in zip(("qos", "energy", "priority", "fairness", "dismissal"), vals):
            if not 0.0 <= w <= 1.0:
                raise ConfigError(f"weight {name}={w} outside [0, 1]")
        if abs(sum(vals) - 1.0) > WEIGHT_SUM_TOL:
            raise ConfigError(f"weights sum to {sum(vals)!r}, expected 1.0")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.qos, self.energy, self.priority, self.fairness, self.dismissal)


# Weight vector used by the plain (unweighted-policy) ablation: only the
# latency and energy terms drive learning.
ABLATION_WEIGHTS = RewardWeights(qos=0.5, energy=0.5, priority=0.0, fairness=0.0, dismissal=0.0)


@dataclass(frozen=True)
class RewardParams:
    """Scales and bounds shared by the reward components and the energy model."""

    l_max: float = 100.0
    alpha_energy: float = 1.0
    lambda_fair: float = 1.0
    mu_dismiss: float = 0.5
    w_base: float = 100.0
    w_max: float = 200.0
    z: float = 0.3

    def __post_init__(self):
        if self.l_max <= 0:
            raise ConfigError(f"l_max must be > 0, got {self.l_max}")
        if self.alpha_energy < 0 or self.lambda_fair < 0 or self.mu_dismiss < 0:
            raise ConfigError("penalty scales alpha/lambda/mu must be >= 0")
        if not self.w_max >= self.w_base > 0:
            raise ConfigError(f"need w_max >= w_base > 0, got ({self.w_base}, {self.w_max})")
        if not 0.0 <= self.z <= 1.0:
            raise ConfigError(f"z must be in [0, 1], got {self.z}")


@dataclass(frozen=True)
class RewardBreakdown:
    """The five components of one step plus their weighted total."""

    qos: float
    energy: float
    priority: float
    fairness: float
    dismissal: float
    total: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.qos, self.energy, self.priority, self.fairness, self.dismissal)


ZERO_BREAKDOWN = RewardBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def qos_reward(latency: float, l_max: float) -> float:
    """Latency reward ``1 - L/L_max``, clamped to [-1, 1].

    The clamp floor bounds the per-step reward magnitude when a job blows
    past twice the tolerable latency.
    """
    if l_max <= 0:
        raise ValueError(f"l_max must be > 0, got {l_max}")
    if latency < 0:
        raise ValueError(f"latency must be >= 0, got {latency}")
    return float(min(1.0, max(-1.0, 1.0 - latency / l_max)))


def energy_reward(energy_normalized: float, alpha_energy: float) -> float:
    """Energy penalty ``-alpha * E_norm`` for E_norm in [0, 1]."""
    if not 0.0 <= energy_normalized <= 1.0:
        raise ValueError(f"energy_normalized must be in [0, 1], got {energy_normalized}")
    return -alpha_energy * energy_normalized


def priority_reward(priority: float, latency_normalized: float) -> float:
    """Responsiveness reward ``P * (1 - L_norm)`` with both args in [0, 1]."""
    if not 0.0 <= priority <= 1.0:
        raise ValueError(f"priority must be in [0, 1], got {priority}")
    if not 0.0 <= latency_normalized <= 1.0:
        raise ValueError(f"latency_normalized must be in [0, 1], got {latency_normalized}")
    return priority * (1.0 - latency_normalized)


def fairness_reward(utilization_shares, lambda_fair: float) -> float:
    """Fairness penalty ``-lambda * var(shares)`` (population variance).

    The active job set is treated as the full population at that instant;
    empty or singleton share vectors have zero variance by definition.
    """
    shares = np.asarray(utilization_shares, dtype=float)
    if shares.size < 2:
        return 0.0
    if np.any(shares < 0):
        raise ValueError("utilization shares must be non-negative")
    return float(-lambda_fair * np.var(shares))


def dismissal_reward(dismissed_count: int, mu_dismiss: float) -> float:
    """Dismissal penalty ``-mu * D_t``."""
    if dismissed_count < 0:
        raise ValueError(f"dismissed_count must be >= 0, got {dismissed_count}")
    return -mu_dismiss * dismissed_count


def total_reward(
    qos: float,
    energy: float,
    priority: float,
    fairness: float,
    dismissal: float,
    weights: RewardWeights,
) -> RewardBreakdown:
    """Combine components into the weighted step total, keeping the breakdown."""
    components = (qos, energy, priority, fairness, dismissal)
    total = float(np.dot(components, weights.as_tuple()))
    return RewardBreakdown(qos, energy, priority, fairness, dismissal, total)
