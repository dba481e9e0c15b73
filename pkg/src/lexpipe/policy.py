"""First-order autoregressive categorical policy with exact gradients.

The model is a table of logits ``theta[prev, next]``; each row is softmaxed
into ``P(next | prev)``. Logits may be ``-inf`` to make a transition
impossible. Everything the trainers need (sequence log-probabilities, their
gradients, sampling) is computed in closed form from transition counts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "BOS",
    "EOS",
    "Vocab",
    "ToyPolicy",
    "TrainLog",
    "UnknownToken",
    "EmptyDataset",
    "DivergenceDetected",
    "transition_counts",
    "log_prob",
    "grad_log_prob",
    "sft_loss",
    "train_sft",
    "sample_batch",
    "sample",
]

BOS = "<s>"
EOS = "</s>"
MAX_VOCAB = 4096
CHECKPOINT_FORMAT = "lexpipe.policy"
CHECKPOINT_VERSION = 1

Token = Union[int, str]


class UnknownToken(KeyError):
    pass


class EmptyDataset(ValueError):
    pass


class DivergenceDetected(FloatingPointError):
    pass


class Vocab:
    def __init__(self, tokens: Iterable[str]):
        tokens = list(tokens)
        for marker in (EOS, BOS):
            if marker not in tokens:
                tokens.insert(0, marker)
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be distinct")
        if len(tokens) > MAX_VOCAB:
            raise ValueError(f"vocabulary larger than {MAX_VOCAB}")
        self.tokens = tuple(tokens)
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        self.bos = self._ids[BOS]
        self.eos = self._ids[EOS]

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocab":
        """Character vocabulary in first-seen order."""
        seen: dict[str, None] = {}
        for t in texts:
            seen.update(dict.fromkeys(t))
        return cls(seen)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def id(self, token: Token) -> int:
        if isinstance(token, (int, np.integer)) and not isinstance(token, bool):
            if 0 <= token < len(self.tokens):
                return int(token)
            raise UnknownToken(token)
        try:
            return self._ids[token]
        except KeyError:
            raise UnknownToken(token) from None

    def encode(self, seq: Iterable[Token]) -> list[int]:
        return [self.id(t) for t in seq]

    def encode_chars(self, text: str, eos: bool = False) -> list[int]:
        ids = [self.id(c) for c in text]
        return ids + [self.eos] if eos else ids

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self.tokens[i] for i in ids if i not in (self.bos, self.eos))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ValueError("every row needs at least one finite logit")
    z = logits - m
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


class ToyPolicy:
    def __init__(self, vocab: Vocab, logits: np.ndarray | None = None):
        self.vocab = vocab
        V = len(vocab)
        self.logits = np.zeros((V, V)) if logits is None else np.array(logits, dtype=float)
        if self.logits.shape != (V, V):
            raise ValueError(f"logits must have shape {(V, V)}")

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.vocab, self.logits.copy())

    def log_probs(self) -> np.ndarray:
        return _log_softmax(self.logits)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    # -- checkpoints --
    def save(self, path: str | Path) -> None:
        rows = [[None if math.isinf(v) and v < 0 else float(v) for v in row] for row in self.logits]
        Path(path).write_text(
            json.dumps(
                {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                 "vocab": list(self.vocab.tokens), "logits": rows},
                ensure_ascii=False,
            ),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "ToyPolicy":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("format") != CHECKPOINT_FORMAT or obj.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} policy checkpoint")
        logits = np.array([[-np.inf if v is None else v for v in row] for row in obj["logits"]])
        return cls(Vocab(obj["vocab"]), logits)


def _context_ids(policy: ToyPolicy, x: Sequence[Token], y: Sequence[Token]) -> tuple[list[int], list[int]]:
    vocab = policy.vocab
    xi, yi = vocab.encode(x), vocab.encode(y)
    prev = xi[-1] if xi else vocab.bos
    ctx = [prev] + yi[:-1]
    return ctx, yi


def transition_counts(policy: ToyPolicy, x: Sequence[Token], y: Sequence[Token]) -> np.ndarray:
    """Counts C[prev, next] of the transitions that generate ``y`` after ``x``."""
    ctx, yi = _context_ids(policy, x, y)
    V = len(policy.vocab)
    C = np.zeros((V, V))
    np.add.at(C, (ctx, yi), 1.0)
    return C


def log_prob(policy: ToyPolicy, x: Sequence[Token], y: Sequence[Token]) -> float:
    """log P(y | x) in nats; the context of each step is the preceding token."""
    ctx, yi = _context_ids(policy, x, y)
    if not yi:
        return 0.0
    L = policy.log_probs()
    return float(np.sum(L[ctx, yi]))


def grad_log_prob(policy: ToyPolicy, counts: np.ndarray, probs: np.ndarray | None = None) -> np.ndarray:
    """Gradient of ``sum(counts * log P)`` with respect to the logits."""
    P = policy.probs() if probs is None else probs
    return counts - counts.sum(axis=1, keepdims=True) * P


def _dataset_counts(policy: ToyPolicy, dataset: Sequence[tuple]) -> np.ndarray:
    V = len(policy.vocab)
    C = np.zeros((V, V))
    for x, y in dataset:
        C += transition_counts(policy, x, y)
    return C


def _loss_from_counts(C: np.ndarray, L: np.ndarray) -> float:
    mask = C > 0
    return float(-np.sum(C[mask] * L[mask]))


def sft_loss(policy: ToyPolicy, dataset: Sequence[tuple], reduction: str = "sum") -> tuple[float, np.ndarray]:
    """Token cross-entropy over (x, y*) pairs and its exact logit gradient.

    ``reduction="sum"`` is the plain negative log-likelihood summed over every
    target token; ``"mean"`` divides loss and gradient by the token count.
    """
    if len(dataset) == 0:
        raise EmptyDataset("SFT dataset is empty")
    C = _dataset_counts(policy, dataset)
    L = policy.log_probs()
    loss = _loss_from_counts(C, L)
    grad = C.sum(axis=1, keepdims=True) * np.exp(L) - C
    if reduction == "mean":
        n = C.sum()
        if n == 0:
            raise EmptyDataset("dataset has no target tokens")
        return loss / n, grad / n
    if reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return loss, grad


@dataclass
class TrainLog:
    loss: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)

    def append(self, loss: float, grad_norm: float) -> None:
        self.loss.append(float(loss))
        self.grad_norm.append(float(grad_norm))

    def __len__(self) -> int:
        return len(self.loss)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["step", "loss", "grad_norm"])
            for i, (l, g) in enumerate(zip(self.loss, self.grad_norm)):
                w.writerow([i, repr(l), repr(g)])


def train_sft(
    policy: ToyPolicy,
    dataset: Sequence[tuple],
    steps: int,
    lr: float,
    grad_accum: int = 1,
) -> TrainLog:
    """Full-batch gradient descent on the mean per-token cross-entropy.

    The dataset is split into ``grad_accum`` fixed contiguous micro-batches;
    their summed gradients are accumulated and divided by the total token
    count, which makes the update identical to one large batch. The log
    records the loss before each update. Updates ``policy`` in place.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if len(dataset) == 0:
        raise EmptyDataset("SFT dataset is empty")
    grad_accum = max(1, min(grad_accum, len(dataset)))
    bounds = np.linspace(0, len(dataset), grad_accum + 1).astype(int)
    micro = [_dataset_counts(policy, dataset[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    n_tokens = sum(C.sum() for C in micro)
    if n_tokens == 0:
        raise EmptyDataset("dataset has no target tokens")

    log = TrainLog()
    for _ in range(steps):
        L = policy.log_probs()
        P = np.exp(L)
        loss, grad = 0.0, np.zeros_like(policy.logits)
        for C in micro:
            loss += _loss_from_counts(C, L)
            grad += C.sum(axis=1, keepdims=True) * P - C
        loss /= n_tokens
        grad /= n_tokens
        gnorm = float(np.linalg.norm(grad))
        if not (math.isfinite(loss) and math.isfinite(gnorm)):
            raise DivergenceDetected(f"non-finite loss at step {len(log)}")
        log.append(loss, gnorm)
        policy.logits -= lr * grad
    return log


def sample_batch(
    policy: ToyPolicy,
    x: Sequence[Token],
    n: int,
    max_len: int,
    rng: np.random.Generator,
    log_probs: np.ndarray | None = None,
) -> tuple[list[list[int]], list[np.ndarray]]:
    """Draw ``n`` independent continuations of ``x`` by ancestral sampling.

    Each sequence stops after emitting the end marker or at ``max_len``.
    Returns token ids and the per-step log-probabilities of the draws.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    L = policy.log_probs() if log_probs is None else log_probs
    cdf = np.cumsum(np.exp(L), axis=1)
    xi = policy.vocab.encode(x)
    prev = np.full(n, xi[-1] if xi else policy.vocab.bos)
    alive = np.ones(n, dtype=bool)
    toks = np.zeros((n, max_len), dtype=int)
    lps = np.zeros((n, max_len))
    lengths = np.zeros(n, dtype=int)
    V = L.shape[1]
    for t in range(max_len):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        rows = cdf[prev[idx]]
        u = (1.0 - rng.random(idx.size)) * rows[:, -1]
        nxt = np.minimum((rows < u[:, None]).sum(axis=1), V - 1)
        toks[idx, t] = nxt
        lps[idx, t] = L[prev[idx], nxt]
        lengths[idx] += 1
        prev[idx] = nxt
        alive[idx[nxt == policy.vocab.eos]] = False
    seqs = [toks[i, :lengths[i]].tolist() for i in range(n)]
    return seqs, [lps[i, :lengths[i]].copy() for i in range(n)]


def sample(policy: ToyPolicy, x: Sequence[Token], max_len: int, seed: int) -> tuple[list[int], np.ndarray]:
    seqs, lps = sample_batch(policy, x, 1, max_len, np.random.default_rng(seed))
    return seqs[0], lps[0]
