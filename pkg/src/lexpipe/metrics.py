"""ROUGE, embedding greedy-match score and element-extraction scoring."""

from __future__ import annotations

import csv
import io
import json
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping, Sequence

import numpy as np

from .clients import Embedder
from .textutil import tokenize

__all__ = [
    "EmptyAfterTokenization",
    "UnknownGroupLabel",
    "PRF",
    "RougeScore",
    "ExtractionScore",
    "DocCounts",
    "prf",
    "ngram_counts",
    "lcs_length",
    "rouge",
    "embed_score",
    "normalize_value",
    "score_document",
    "extraction_score",
    "aggregate_by_group",
    "report_csv",
    "report_json",
]


class EmptyAfterTokenization(ValueError):
    pass


class UnknownGroupLabel(KeyError):
    pass


@dataclass(frozen=True)
class PRF:
    recall: float
    precision: float
    f1: float


def prf(recall: float, precision: float) -> PRF:
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRF(recall, precision, f1)


@dataclass(frozen=True)
class RougeScore:
    r1: PRF
    r2: PRF
    rl: PRF


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def _tokens(text: str) -> list[str]:
    toks = tokenize(text)
    if not toks:
        raise EmptyAfterTokenization(repr(text[:40]))
    return toks


def _rouge_n(cand: list[str], ref: list[str], n: int) -> PRF:
    c, r = ngram_counts(cand, n), ngram_counts(ref, n)
    overlap = sum((c & r).values())
    nc, nr = sum(c.values()), sum(r.values())
    return prf(overlap / nr if nr else 0.0, overlap / nc if nc else 0.0)


def rouge(candidate: str, reference: str) -> RougeScore:
    """ROUGE-1/2 from clipped n-gram overlap, ROUGE-L from the plain LCS.

    A side with no n-grams of the given order (a one-token string has no
    bigrams) scores 0 for that order.
    """
    cand, ref = _tokens(candidate), _tokens(reference)
    lcs = lcs_length(cand, ref)
    return RougeScore(
        r1=_rouge_n(cand, ref, 1),
        r2=_rouge_n(cand, ref, 2),
        rl=prf(lcs / len(ref), lcs / len(cand)),
    )


def embed_score(candidate: str, reference: str, embedder: Embedder) -> PRF:
    """Greedy token matching on embedding cosine (negative cosines floor at 0)."""
    cand, ref = _tokens(candidate), _tokens(reference)
    C = np.vstack([_unit(embedder.embed(t)) for t in cand])
    R = np.vstack([_unit(embedder.embed(t)) for t in ref])
    sim = np.clip(R @ C.T, 0.0, 1.0)
    return prf(float(sim.max(axis=1).mean()), float(sim.max(axis=0).mean()))


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# --- element extraction -----------------------------------------------------------

def normalize_value(value: object) -> object:
    """Canonical form for exact-match comparison of element values."""
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float, Decimal)):
        return Decimal(str(value)).normalize()
    if isinstance(value, str):
        s = unicodedata.normalize("NFKC", value).strip()
        try:
            return Decimal(s).normalize()
        except InvalidOperation:
            return s
    return value


@dataclass(frozen=True)
class DocCounts:
    tp: int
    fp: int
    fn: int
    n_gold: int

    @property
    def accuracy(self) -> float:
        return self.tp / self.n_gold if self.n_gold else 0.0


def score_document(gold: Mapping[str, object], pred: Mapping[str, object]) -> DocCounts:
    """Slot counts for one document; a wrong value on a shared slot is FP and FN."""
    tp = fp = fn = 0
    for name, gv in gold.items():
        if name in pred and normalize_value(pred[name]) == normalize_value(gv):
            tp += 1
        else:
            fn += 1
    for name, pv in pred.items():
        if name not in gold or normalize_value(pv) != normalize_value(gold[name]):
            fp += 1
    return DocCounts(tp, fp, fn, len(gold))


@dataclass(frozen=True)
class ExtractionScore:
    accuracy: float
    recall: float
    precision: float
    f1: float
    group: str = ""


def _score_from_counts(counts: Sequence[DocCounts], group: str) -> ExtractionScore:
    tp = sum(c.tp for c in counts)
    fp = sum(c.fp for c in counts)
    fn = sum(c.fn for c in counts)
    scored = [c for c in counts if c.n_gold]
    acc = float(np.mean([c.accuracy for c in scored])) if scored else 0.0
    p = prf(tp / (tp + fn) if tp + fn else 0.0, tp / (tp + fp) if tp + fp else 0.0)
    return ExtractionScore(acc, p.recall, p.precision, p.f1, group)


def extraction_score(
    gold: Sequence[Mapping[str, object]],
    pred: Sequence[Mapping[str, object]],
    group: str = "",
) -> ExtractionScore:
    """Micro precision/recall/F1 over all slots; accuracy is averaged per document."""
    if len(gold) != len(pred):
        raise ValueError("gold and pred must cover the same documents")
    if not gold:
        raise ValueError("gold is empty")
    return _score_from_counts([score_document(g, p) for g, p in zip(gold, pred)], group)


def aggregate_by_group(
    counts: Sequence[DocCounts],
    labels: Sequence[str],
    known_groups: Iterable[str] | None = None,
) -> list[ExtractionScore]:
    """One micro-aggregated row per group (sorted by label) plus an ``Average`` row.

    The average row is the unweighted mean of the group rows.
    """
    if len(counts) != len(labels):
        raise ValueError("every document needs a group label")
    known = set(known_groups) if known_groups is not None else None
    by_group: dict[str, list[DocCounts]] = {}
    for c, label in zip(counts, labels):
        if not label or (known is not None and label not in known):
            raise UnknownGroupLabel(label)
        by_group.setdefault(label, []).append(c)
    rows = [_score_from_counts(by_group[g], g) for g in sorted(by_group)]
    if rows:
        rows.append(
            ExtractionScore(
                *(float(np.mean([getattr(r, f) for r in rows])) for f in ("accuracy", "recall", "precision", "f1")),
                group="Average",
            )
        )
    return rows


_COLUMNS = ("group", "accuracy", "recall", "precision", "f1")


def report_csv(rows: Sequence[ExtractionScore]) -> str:
    """Percentages with one decimal, the way result tables are printed."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    for r in rows:
        w.writerow([r.group] + [f"{100 * getattr(r, c):.1f}" for c in _COLUMNS[1:]])
    return buf.getvalue()


def report_json(rows: Sequence[ExtractionScore]) -> str:
    return json.dumps([asdict(r) for r in rows], ensure_ascii=False, indent=2) + "\n"
