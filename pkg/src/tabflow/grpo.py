"""Group-relative policy optimization math and the two-part reward.

Pure numeric functions: group-normalized advantages, per-token probability
ratios, the token-level clipped objective (no KL term), its analytic gradient
with respect to the new log-probabilities, and a code-execution reward that
combines judge-scored accuracy with a think-block format bonus.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    pass


class LengthMismatch(ShapeMismatch):
    pass


@dataclass
class GrpoConfig:
    eps_low: float = 0.2
    eps_high: float = 0.2
    std_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        for name in ("eps_low", "eps_high"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")


@dataclass
class GroupRollout:
    """G candidate responses: scalar rewards plus per-token log-probs."""

    rewards: list[float]
    token_logp_new: list[list[float]]
    token_logp_old: list[list[float]]

    def __post_init__(self) -> None:
        g = len(self.rewards)
        if g < 2:
            raise ValueError(f"a group needs at least 2 responses, got {g}")
        if not (len(self.token_logp_new) == len(self.token_logp_old) == g):
            raise ShapeMismatch("log-prob lists must have one entry per response")
        for i, (new, old) in enumerate(zip(self.token_logp_new, self.token_logp_old)):
            if len(new) != len(old):
                raise LengthMismatch(
                    f"response {i}: {len(new)} new vs {len(old)} old log-probs"
                )

    @property
    def lengths(self) -> list[int]:
        return [len(t) for t in self.token_logp_new]


def group_advantages(
    rewards: Sequence[float], std_epsilon: float = 1e-8
) -> np.ndarray:
    """Per-response advantages: (R_i - mean) / max(population std, epsilon)."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ValueError("need at least 2 rewards")
    std = float(r.std())
    return (r - r.mean()) / max(std, std_epsilon)


def token_ratios(
    logp_new: Sequence[float], logp_old: Sequence[float]
) -> np.ndarray:
    """Elementwise probability ratios exp(logp_new - logp_old)."""
    new = np.asarray(logp_new, dtype=np.float64)
    old = np.asarray(logp_old, dtype=np.float64)
    if new.shape != old.shape:
        raise LengthMismatch(f"shape {new.shape} vs {old.shape}")
    return np.exp(new - old)


def grpo_objective(
    rollout: GroupRollout,
    advantages: Optional[np.ndarray] = None,
    cfg: GrpoConfig | None = None,
) -> float:
    """Token-level clipped objective, averaged over all tokens in the group.

    J = (1/sum|o_i|) * sum_i sum_t min(r*A_i, clip(r, 1-eps_low, 1+eps_high)*A_i)
    """
    cfg = cfg or GrpoConfig()
    if advantages is None:
        advantages = group_advantages(rollout.rewards, cfg.std_epsilon)
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.shape != (len(rollout.rewards),):
        raise ShapeMismatch(f"advantages shape {adv.shape}, expected ({len(rollout.rewards)},)")
    total_tokens = sum(rollout.lengths)
    if total_tokens == 0:
        return 0.0
    acc = 0.0
    for i, a in enumerate(adv):
        r = token_ratios(rollout.token_logp_new[i], rollout.token_logp_old[i])
        clipped = np.clip(r, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high)
        acc += float(np.minimum(r * a, clipped * a).sum())
    return acc / total_tokens


def grpo_objective_grad(
    rollout: GroupRollout,
    advantages: Optional[np.ndarray] = None,
    cfg: GrpoConfig | None = None,
) -> list[np.ndarray]:
    """Analytic dJ/dlogp_new per response (advantages treated as constants).

    A token contributes gradient r*A/total when the unclipped branch is
    selected by the min; a token stuck on the clipped branch outside the band
    contributes zero.
    """
    cfg = cfg or GrpoConfig()
    if advantages is None:
        advantages = group_advantages(rollout.rewards, cfg.std_epsilon)
    adv = np.asarray(advantages, dtype=np.float64)
    total_tokens = sum(rollout.lengths)
    grads: list[np.ndarray] = []
    for i, a in enumerate(adv):
        r = token_ratios(rollout.token_logp_new[i], rollout.token_logp_old[i])
        clipped = np.clip(r, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high)
        unclipped_active = (r * a) <= (clipped * a)
        grad = np.where(unclipped_active, r * a, 0.0)
        grads.append(grad / total_tokens if total_tokens else grad * 0.0)
    return grads


@dataclass
class RewardConfig:
    accuracy_weight: float = 0.9
    format_base: float = 0.1


@dataclass
class RewardBreakdown:
    accuracy: float
    format: float
    reason: str = ""
    accuracy_weight: float = 0.9

    @property
    def total(self) -> float:
        return self.accuracy_weight * self.accuracy + self.format


_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_CODE_FENCE_RE = re.compile(r"```(?:[\w+-]*)\n(.*?)```", re.DOTALL)


def check_think_format(text: str) -> bool:
    """True when exactly one well-formed <think>...</think> block opens the
    response and a non-empty solution follows it."""
    if text.count("<think>") != 1 or text.count("</think>") != 1:
        return False
    match = _THINK_RE.search(text)
    if match is None:
        return False
    before = text[: match.start()]
    after = text[match.end() :]
    return before.strip() == "" and after.strip() != ""


def parse_unit_score(text: str) -> Optional[float]:
    """Parse a judge response into [0, 1]; accepts 0-1, x/10, or 0-10 scales."""
    frac = re.search(r"(\d+(?:\.\d+)?)\s*/\s*10\b", text)
    if frac:
        value = float(frac.group(1))
        return min(max(value / 10.0, 0.0), 1.0) if value <= 10 else None
    nums = re.findall(r"-?\d+(?:\.\d+)?", text)
    if not nums:
        return None
    value = float(nums[0])
    if 0.0 <= value <= 1.0:
        return value
    if 1.0 < value <= 10.0:
        return value / 10.0
    return None


def compute_reward(
    trace_text: str,
    gold_answer: str,
    sandbox,
    judge,
    tables: Optional[dict] = None,
    cfg: RewardConfig | None = None,
) -> RewardBreakdown:
    """Score a response: sandbox-executed output judged against the gold
    answer (accuracy in [0,1]) plus a base reward for think-block formatting.
    """
    from .sandbox import ExecRequest, ExecStatus

    cfg = cfg or RewardConfig()
    fmt = cfg.format_base if check_think_format(trace_text) else 0.0
    solution = trace_text
    match = _THINK_RE.search(trace_text)
    if match is not None:
        solution = trace_text[match.end() :]
    code_match = _CODE_FENCE_RE.search(solution)
    if code_match is None:
        return RewardBreakdown(
            accuracy=0.0, format=fmt, reason="no code block",
            accuracy_weight=cfg.accuracy_weight,
        )
    result = sandbox.execute(
        ExecRequest(code=code_match.group(1), tables=dict(tables or {}))
    )
    if result.status is not ExecStatus.OK:
        return RewardBreakdown(
            accuracy=0.0, format=fmt,
            reason=f"sandbox {result.status.value}: {result.stderr[:200]}",
            accuracy_weight=cfg.accuracy_weight,
        )
    prompt = (
        "Score how well the produced output answers the question compared to "
        "the reference answer. Reply with a single number between 0 and 1.\n"
        f"Reference answer: {gold_answer}\n"
        f"Produced output: {result.stdout.strip()}\n"
    )
    response = judge.complete([{"role": "user", "content": prompt}])
    score = parse_unit_score(response)
    if score is None:
        return RewardBreakdown(
            accuracy=0.0, format=fmt, reason="judge response unparseable",
            accuracy_weight=cfg.accuracy_weight,
        )
    return RewardBreakdown(
        accuracy=score, format=fmt, accuracy_weight=cfg.accuracy_weight
    )


def rollout_from_dict(raw: dict) -> GroupRollout:
    return GroupRollout(
        rewards=[float(x) for x in raw["rewards"]],
        token_logp_new=[[float(x) for x in row] for row in raw["token_logp_new"]],
        token_logp_old=[[float(x) for x in row] for row in raw["token_logp_old"]],
    )
