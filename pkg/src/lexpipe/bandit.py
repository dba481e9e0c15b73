"""Format bandit: a 32-token policy must learn to answer in whole months.

An output is format-valid when the whole of it is a month count such as
``18个月``, with no garbled characters and no echoed input. The reward is
the combined rule-based reward with only the format weight switched on.

Group-standardized advantages blow up tiny reward differences: in a group
where no output fits the format, a small garbled-character penalty still
produces unit-size advantages, and the cheapest clean output (an immediate
end marker) wins every such group. With penalty weights above zero the
policy collapses to empty answers before it finds the format, so the
penalties are left to :meth:`FormatBandit.is_valid`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .policy import EOS, BOS, ToyPolicy, Vocab, sample_batch
from .rewards import FormatSpec, combined_reward, duplication_penalty, format_reward, garbled_penalty

__all__ = ["BANDIT_TOKENS", "BANDIT_WEIGHTS", "answer_spec", "FormatBandit", "make_format_bandit", "format_valid_mass"]

BANDIT_TOKENS = (
    BOS, EOS,
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "个月", "年", "。", "，", "有期徒刑", "判处", "被告人", "缓刑", "拘役",
    "罚金", "元", "本院认为", "犯", "故意伤害罪",
    # mojibake fragments
    "�", "Ã©", "â€", "ï¿½", "Â",
    "锟斤拷",
)

BANDIT_WEIGHTS = {"format": 1.0, "garbled": 0.0, "duplication": 0.0, "process": 0.0}


def answer_spec() -> FormatSpec:
    """The entire output must be a month count."""
    return FormatSpec("[answer]", ("answer",), {"answer": "[0-9]+个月"})


@dataclass(frozen=True)
class FormatBandit:
    vocab: Vocab
    spec: FormatSpec
    query: tuple[str, ...] = ()
    max_len: int = 12
    weights: dict = field(default_factory=lambda: dict(BANDIT_WEIGHTS))

    def reward(self, output: str, query_text: str = "") -> float:
        return combined_reward(output, query_text, self.spec, weights=self.weights).total

    def is_valid(self, output: str, query_text: str = "") -> bool:
        return (
            format_reward(output, self.spec) == 1.0
            and garbled_penalty(output) == 0.0
            and duplication_penalty(output, query_text) == 0.0
        )

    def uniform_policy(self) -> ToyPolicy:
        return ToyPolicy(self.vocab)


def make_format_bandit(max_len: int = 12, weights: dict | None = None) -> FormatBandit:
    vocab = Vocab(BANDIT_TOKENS)
    assert len(vocab) == 32
    return FormatBandit(vocab, answer_spec(), max_len=max_len, weights=dict(weights or BANDIT_WEIGHTS))


def format_valid_mass(
    policy: ToyPolicy, bandit: FormatBandit, n: int = 10_000, seed: int = 0
) -> float:
    """Monte-Carlo estimate of the probability of a format-valid output."""
    rng = np.random.default_rng(seed)
    seqs, _ = sample_batch(policy, bandit.query, n, bandit.max_len, rng)
    q_text = policy.vocab.decode(policy.vocab.encode(bandit.query))
    return float(np.mean([bandit.is_valid(policy.vocab.decode(s), q_text) for s in seqs]))
