"""Group-relative advantage computation and the KL penalty term.

An external trainer owns the optimiser, the surrogate ratio clipping and the
model weights; this module only turns grouped rewards into normalised
advantages and per-token log-probabilities into a scalar penalty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .rewards import RewardBreakdown


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    kl_coeff: float = 5e-3
    std_floor: float = 1e-6
    kl_estimator: str = "k3"  # "k1" = plain mean(policy - ref)

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if self.kl_coeff < 0:
            raise ValueError(f"kl_coeff must be >= 0, got {self.kl_coeff}")


@dataclass(frozen=True)
class Rollout:
    """One sampled completion and its scored reward."""

    raw: str
    reward: float
    breakdown: Optional[RewardBreakdown] = None


@dataclass(frozen=True)
class RolloutGroup:
    sample_id: str
    rollouts: tuple[Rollout, ...]

    def __post_init__(self) -> None:
        if len(self.rollouts) < 2:
            raise ValueError("a rollout group needs at least 2 rollouts")

    @property
    def rewards(self) -> list[float]:
        return [r.reward for r in self.rollouts]


def group_advantages(rewards: Sequence[float], cfg: GrpoConfig) -> np.ndarray:
    """(r - mean) / population std; all zeros when the std falls below the
    floor, so all-correct groups late in training produce no gradient signal
    instead of an error."""
    arr = np.asarray(rewards, dtype=np.float64)
    if arr.ndim != 1 or arr.size != cfg.group_size:
        raise ValueError(
            f"expected {cfg.group_size} rewards, got shape {arr.shape}"
        )
    std = float(arr.std())
    if std < cfg.std_floor:
        return np.zeros_like(arr)
    return (arr - arr.mean()) / std


def kl_penalty(
    policy_logprobs: Sequence[float],
    ref_logprobs: Sequence[float],
    estimator: str = "k3",
) -> float:
    """Scalar KL penalty from per-token log-probs of the sampled tokens.

    The default is the non-negative estimator mean(exp(d) - d - 1) with
    d = ref - policy, which is zero iff the distributions agree on the
    sampled tokens; estimator="k1" gives the plain mean(policy - ref).
    """
    pol = np.asarray(policy_logprobs, dtype=np.float64)
    ref = np.asarray(ref_logprobs, dtype=np.float64)
    if pol.shape != ref.shape or pol.ndim != 1 or pol.size == 0:
        raise ValueError(f"logprob vectors must be equal-length 1-D, got {pol.shape} vs {ref.shape}")
    if not (np.isfinite(pol).all() and np.isfinite(ref).all()):
        raise ValueError("logprob vectors must be finite")
    d = ref - pol
    if estimator == "k3":
        return float(np.mean(np.exp(d) - d - 1.0))
    if estimator == "k1":
        return float(np.mean(-d))
    raise ValueError(f"unknown estimator {estimator!r}")


def objective_terms(
    group: RolloutGroup,
    advantages: Sequence[float],
    kl: float,
    cfg: GrpoConfig,
    weights: Optional[Sequence[float]] = None,
) -> dict[str, float]:
    """Bookkeeping the trainer combines into its loss: the advantage-weighted
    policy term and the scaled KL term."""
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.size != len(group.rollouts):
        raise ValueError(
            f"{adv.size} advantages for {len(group.rollouts)} rollouts"
        )
    w = np.ones_like(adv) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != adv.shape:
        raise ValueError("weights must match advantages")
    return {
        "policy_term": float(np.dot(adv, w)),
        "kl_term": float(cfg.kl_coeff * kl),
    }
