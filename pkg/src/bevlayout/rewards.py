"""Verifiable rewards and GRPO group computations.

``R = alpha * R_format + (1 - alpha) * R_task`` where ``R_task`` is an exact
letter match for multiple-choice items and a threshold-ladder relative
accuracy for numerical ones. Group advantages standardize rewards within a
group of sampled responses; the clipped surrogate is the usual PPO-style
``min(r * A, clip(r) * A)`` averaged over the group (no KL term).
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import cot
from .tasks import TaskType

DEFAULT_THRESHOLDS: tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))

# Relative errors are compared with this slack so that e.g. 2.2 vs 2.0
# (rel. error 0.1 + 1 ulp) still clears the 0.90 threshold.
REL_TOL = 1e-9


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.1
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    zero_truth_epsilon: float = 0.01
    clip_epsilon: float = 0.2
    std_floor: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        ts = self.thresholds
        if not ts or any(not 0.0 < t < 1.0 for t in ts) or any(a >= b for a, b in zip(ts, ts[1:])):
            raise ValueError(f"thresholds must be strictly increasing in (0, 1): {ts}")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive")
        if self.zero_truth_epsilon < 0 or self.std_floor <= 0:
            raise ValueError("zero_truth_epsilon must be >= 0 and std_floor > 0")

    @property
    def _margins(self) -> list[float]:
        # ascending allowed relative errors, one per threshold
        return sorted((1.0 - t) + REL_TOL for t in self.thresholds)


DEFAULT_CONFIG = RewardConfig()


@dataclass(frozen=True)
class RewardBreakdown:
    r_format: int
    r_task: float
    r_total: float
    task: TaskType | None = None

    def as_dict(self) -> dict:
        return {"r_format": self.r_format, "r_task": self.r_task, "r_total": self.r_total}


@dataclass
class GroupRollout:
    query_id: str
    responses: list = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    advantages: list[float] | None = None
    ratios: list[float] | None = None

    def compute_advantages(self, cfg: RewardConfig = DEFAULT_CONFIG) -> list[float]:
        self.advantages = group_advantages(self.rewards, cfg)
        return self.advantages

    def objective(self, cfg: RewardConfig = DEFAULT_CONFIG) -> float:
        if self.ratios is None:
            raise ValueError(f"group {self.query_id!r} has no policy ratios")
        if self.advantages is None:
            self.compute_advantages(cfg)
        return clipped_objective(self.ratios, self.advantages, cfg)


def format_reward(raw: str) -> int:
    return 1 if cot.check_format(raw) else 0


def mc_reward(pred: str, truth: str) -> int:
    return 1 if pred == truth else 0


def num_reward(pred: float, truth: float, cfg: RewardConfig = DEFAULT_CONFIG) -> float:
    """Fraction of confidence thresholds whose relative-error bound ``pred`` meets."""
    if truth < 0 or not math.isfinite(truth):
        raise ValueError(f"ground truth must be finite and >= 0, got {truth}")
    if not math.isfinite(pred):
        return 0.0
    if truth == 0:
        return 1.0 if abs(pred) <= cfg.zero_truth_epsilon else 0.0
    rel = abs(pred - truth) / truth
    margins = cfg._margins
    return (len(margins) - bisect_left(margins, rel)) / len(margins)


def combined_reward(
    r_format: int, r_task: float, cfg: RewardConfig = DEFAULT_CONFIG, task: TaskType | None = None
) -> RewardBreakdown:
    if r_format not in (0, 1) or not 0.0 <= r_task <= 1.0:
        raise ValueError(f"reward inputs out of range: format={r_format}, task={r_task}")
    total = cfg.alpha * r_format + (1 - cfg.alpha) * r_task
    return RewardBreakdown(r_format, r_task, total, task)


def group_advantages(rewards: Sequence[float], cfg: RewardConfig = DEFAULT_CONFIG) -> list[float]:
    """Standardize rewards within a group using the population standard deviation."""
    if len(rewards) < 2:
        raise ValueError(f"group needs at least 2 rewards, got {len(rewards)}")
    r = np.asarray(rewards, dtype=np.float64)
    if np.all(r == r[0]):
        return [0.0] * len(r)
    std = max(float(r.std()), cfg.std_floor)
    return ((r - r.mean()) / std).tolist()


def clipped_objective(
    ratios: Sequence[float], advantages: Sequence[float], cfg: RewardConfig = DEFAULT_CONFIG
) -> float:
    if len(ratios) != len(advantages) or not ratios:
        raise ValueError("ratios and advantages must be non-empty and of equal length")
    lo, hi = 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon
    total = 0.0
    for r, a in zip(ratios, advantages):
        if not r > 0:
            raise ValueError(f"policy ratio must be positive, got {r}")
        total += min(r * a, min(max(r, lo), hi) * a)
    return total / len(ratios)


def task_reward(task: TaskType, answer, raw: str, cfg: RewardConfig = DEFAULT_CONFIG) -> float:
    """Score the answer in ``raw`` against a QA answer; unparseable text scores 0."""
    try:
        parsed = cot.extract_answer(cot.answer_text(raw), task)
    except cot.AnswerParseError:
        return 0.0
    if task.multiple_choice:
        return float(mc_reward(parsed.letter, answer.letter))
    return num_reward(parsed.value, answer.value, cfg)


def score_response(qa, raw: str, cfg: RewardConfig = DEFAULT_CONFIG) -> RewardBreakdown:
    """Format + task reward for one response to a QA pair. Never raises on model text."""
    return combined_reward(format_reward(raw), task_reward(qa.task, qa.answer, raw, cfg), cfg, qa.task)
