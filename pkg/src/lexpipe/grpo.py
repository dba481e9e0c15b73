"""Group-relative policy optimization on :class:`ToyPolicy`.

Rollouts for a query are scored as a group; rewards are standardized within
the group to form advantages, so no value model is needed. The objective per
group is the clipped-ratio surrogate averaged over outputs minus ``beta``
times the exact KL to a frozen reference policy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .policy import (
    DivergenceDetected,
    Token,
    ToyPolicy,
    grad_log_prob,
    sample_batch,
    transition_counts,
)

__all__ = [
    "GroupTooSmall",
    "SupportMismatch",
    "NonFiniteRatio",
    "GrpoConfig",
    "RolloutGroup",
    "GrpoLog",
    "advantages",
    "categorical_kl",
    "kl_divergence",
    "kl_gradient",
    "visited_contexts",
    "clipped_term",
    "surrogate",
    "make_group",
    "train_grpo",
    "total_variation",
]

STD_FLOOR = 1e-8


class GroupTooSmall(ValueError):
    pass


class SupportMismatch(ValueError):
    pass


class NonFiniteRatio(FloatingPointError):
    pass


@dataclass(frozen=True)
class GrpoConfig:
    G: int = 8
    eps: float = 0.2
    beta: float = 0.01
    lr: float = 0.1
    updates: int = 100
    seed: int = 0
    max_len: int = 12

    def __post_init__(self):
        if self.G < 2:
            raise GroupTooSmall("G must be >= 2")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


def advantages(rewards: Sequence[float]) -> np.ndarray:
    """(r - mean) / std with the population std; flat groups map to zeros."""
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise GroupTooSmall(f"need at least 2 rewards, got {r.size}")
    centered = r - r.mean()
    std = math.sqrt(float(np.mean(centered**2)))
    if std < STD_FLOOR:
        return np.zeros_like(r)
    return centered / std


def categorical_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Forward KL(p || q) along the last axis; zero-mass terms of p vanish."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((q == 0) & (p > 0)):
        raise SupportMismatch("reference assigns zero probability where the policy does not")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(np.where(q > 0, q, 1.0))), 0.0)
    return terms.sum(axis=-1)


def _check_pair(policy: ToyPolicy, ref: ToyPolicy) -> None:
    if policy.vocab != ref.vocab:
        raise ValueError("policy and reference must share a vocabulary")


def kl_divergence(policy: ToyPolicy, ref: ToyPolicy, contexts: Iterable[int]) -> float:
    """Exact per-context KL(policy || ref), averaged over distinct contexts."""
    _check_pair(policy, ref)
    ctx = sorted(set(int(c) for c in contexts))
    if not ctx:
        return 0.0
    kl = categorical_kl(policy.probs()[ctx], ref.probs()[ctx])
    return float(np.mean(kl))


def kl_gradient(policy: ToyPolicy, ref: ToyPolicy, contexts: Iterable[int]) -> np.ndarray:
    _check_pair(policy, ref)
    ctx = sorted(set(int(c) for c in contexts))
    grad = np.zeros_like(policy.logits)
    if not ctx:
        return grad
    Lp, Lq = policy.log_probs()[ctx], ref.log_probs()[ctx]
    P = np.exp(Lp)
    kl = categorical_kl(P, np.exp(Lq))
    with np.errstate(invalid="ignore"):
        diff = np.where(P > 0, Lp - Lq, 0.0)
    grad[ctx] = P * (diff - kl[:, None]) / len(ctx)
    return grad


def total_variation(policy: ToyPolicy, ref: ToyPolicy) -> np.ndarray:
    """Per-context total-variation distance between the two policies."""
    return 0.5 * np.abs(policy.probs() - ref.probs()).sum(axis=1)


def clipped_term(ratio, adv, eps: float):
    """min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A), elementwise."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)


@dataclass
class RolloutGroup:
    query: list[int]
    outputs: list[list[int]]
    old_logps: np.ndarray
    rewards: np.ndarray
    advantages: np.ndarray

    def __post_init__(self):
        if len(self.outputs) < 2:
            raise GroupTooSmall("a rollout group needs at least 2 outputs")

    def contexts(self, policy: ToyPolicy) -> list[int]:
        return visited_contexts(policy, self.query, self.outputs)


def visited_contexts(policy: ToyPolicy, query: Sequence[Token], outputs: Iterable[Sequence[int]]) -> list[int]:
    q = policy.vocab.encode(query)
    first = q[-1] if q else policy.vocab.bos
    seen = set()
    for o in outputs:
        if o:
            seen.add(first)
            seen.update(o[:-1])
    return sorted(seen)


def make_group(query, outputs, old_logps, rewards) -> RolloutGroup:
    return RolloutGroup(
        query=list(query),
        outputs=[list(o) for o in outputs],
        old_logps=np.asarray(old_logps, dtype=float),
        rewards=np.asarray(rewards, dtype=float),
        advantages=advantages(rewards),
    )


def surrogate(
    group: RolloutGroup,
    policy: ToyPolicy,
    config: GrpoConfig,
    ref: ToyPolicy | None = None,
) -> tuple[float, np.ndarray]:
    """Group objective and its exact gradient with respect to the logits.

    Ratios are sequence-level, pi(o|q) / pi_old(o|q). Where the clipped
    branch is the minimum the term is flat in theta, so its gradient is zero.
    """
    L = policy.log_probs()
    P = np.exp(L)
    G = len(group.outputs)
    obj = 0.0
    grad = np.zeros_like(policy.logits)
    for o, old_lp, A in zip(group.outputs, group.old_logps, group.advantages):
        C = transition_counts(policy, group.query, o)
        mask = C > 0
        lp = float(np.sum(C[mask] * L[mask]))
        with np.errstate(over="ignore"):
            ratio = float(np.exp(lp - old_lp))
        if not math.isfinite(ratio):
            raise NonFiniteRatio("ratio is not finite; old log-probs do not match the outputs")
        unclipped = ratio * A
        clipped = min(max(ratio, 1 - config.eps), 1 + config.eps) * A
        obj += min(unclipped, clipped) / G
        if unclipped <= clipped and A != 0:
            grad += (A * ratio / G) * grad_log_prob(policy, C, P)
    if config.beta > 0:
        ref = policy if ref is None else ref
        ctx = group.contexts(policy)
        obj -= config.beta * kl_divergence(policy, ref, ctx)
        grad -= config.beta * kl_gradient(policy, ref, ctx)
    return obj, grad


@dataclass
class GrpoLog:
    objective: list[float] = field(default_factory=list)
    mean_reward: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.objective)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["step", "objective", "mean_reward", "kl"])
            for i, row in enumerate(zip(self.objective, self.mean_reward, self.kl)):
                w.writerow([i, *map(repr, row)])


RewardFn = Callable[[str, str], float]


def train_grpo(
    policy: ToyPolicy,
    reward_fn: RewardFn,
    config: GrpoConfig,
    queries: Sequence[Sequence[Token]] = ((),),
    ref: ToyPolicy | None = None,
) -> tuple[ToyPolicy, GrpoLog]:
    """Optimize ``policy`` in place by gradient ascent on the group objective.

    Each update snapshots pi_old, samples ``G`` outputs per query from it,
    scores the decoded text with ``reward_fn(output, query)`` and takes one
    step along the objective gradient averaged over queries. The reference
    defaults to a frozen copy of the initial policy.
    """
    ref = policy.copy() if ref is None else ref
    rng = np.random.default_rng(config.seed)
    vocab = policy.vocab
    log = GrpoLog()
    for _ in range(config.updates):
        old = policy.copy()
        L_old = old.log_probs()
        step = np.zeros_like(policy.logits)
        objs, rewards_seen, kls = [], [], []
        for q in queries:
            outs, lps = sample_batch(old, q, config.G, config.max_len, rng, L_old)
            q_text = vocab.decode(vocab.encode(q))
            rewards = [reward_fn(vocab.decode(o), q_text) for o in outs]
            group = make_group(q, outs, [float(lp.sum()) for lp in lps], rewards)
            obj, grad = surrogate(group, policy, config, ref)
            if not math.isfinite(obj):
                raise DivergenceDetected(f"non-finite objective at update {len(log)}")
            step += grad
            objs.append(obj)
            rewards_seen.extend(rewards)
            kls.append(kl_divergence(policy, ref, group.contexts(policy)))
        policy.logits += config.lr * step / len(queries)
        log.objective.append(float(np.mean(objs)))
        log.mean_reward.append(float(np.mean(rewards_seen)))
        log.kl.append(float(np.mean(kls)))
    return policy, log
