"""Chunk-to-element retrieval and the overlap-accuracy comparison."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .augment import render_template
from .clients import EmptyText, Embedder
from .elements import ElementCatalog
from .prompts import TEMPLATES
from .textutil import token_spans

__all__ = [
    "DEFAULT_MAX_CHUNK_TOKENS",
    "Chunk",
    "ChunkMatch",
    "RetrievalContext",
    "EmptyTruth",
    "MissingAugmentedDescriptions",
    "chunk_text",
    "match_elements",
    "build_context",
    "overlap_accuracy",
    "retrieve_elements",
    "compare_augmentation",
    "ComparisonRow",
    "ComparisonReport",
]

DEFAULT_MAX_CHUNK_TOKENS = 512


class EmptyTruth(ValueError):
    pass


class MissingAugmentedDescriptions(ValueError):
    pass


@dataclass(frozen=True)
class Chunk:
    index: int
    text: str
    token_span: tuple[int, int]


@dataclass(frozen=True)
class ChunkMatch:
    chunk_index: int
    element_name: str
    cosine: float


@dataclass(frozen=True)
class RetrievalContext:
    document: str
    matched_elements: tuple[str, ...]

    def instruction(self, catalog: ElementCatalog | None = None) -> str:
        """Extraction prompt listing only the retrieved elements.

        With nothing retrieved the full catalog is listed instead.
        """
        names = list(self.matched_elements)
        if not names and catalog is not None:
            names = catalog.names
        return render_template(
            TEMPLATES["element_extraction"], elements="、".join(names), document=self.document
        )


def chunk_text(text: str, max_chunk_tokens: int = DEFAULT_MAX_CHUNK_TOKENS) -> list[Chunk]:
    """Greedy fixed-size partition of ``text`` by token count.

    Chunk boundaries fall at token starts, so whitespace rides along with the
    preceding token and joining the chunk texts restores ``text`` exactly.
    """
    if max_chunk_tokens < 1:
        raise ValueError("max_chunk_tokens must be >= 1")
    spans = token_spans(text)
    if not spans:
        raise EmptyText("text has no tokens")
    chunks = []
    for k, first in enumerate(range(0, len(spans), max_chunk_tokens)):
        last = min(first + max_chunk_tokens, len(spans))
        start = 0 if first == 0 else spans[first][0]
        end = len(text) if last == len(spans) else spans[last][0]
        chunks.append(Chunk(k, text[start:end], (first, last)))
    return chunks


def _element_matrix(catalog: ElementCatalog, embedder: Embedder, use_augmented: bool) -> np.ndarray:
    rows = []
    for e in catalog:
        desc = e.augmented_description if use_augmented else e.description
        if use_augmented and not desc:
            raise MissingAugmentedDescriptions(e.name)
        rows.append(_unit(embedder.embed(desc)))
    return np.vstack(rows)


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def match_elements(
    chunks: Sequence[Chunk],
    catalog: ElementCatalog,
    embedder: Embedder,
    use_augmented: bool = False,
    top_k: int = 1,
) -> list[ChunkMatch]:
    """Most cosine-similar catalog element(s) for every chunk.

    Ties go to the lower catalog index. ``top_k > 1`` returns the k best per
    chunk in descending similarity.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    E = _element_matrix(catalog, embedder, use_augmented)
    matches = []
    for chunk in chunks:
        if not chunk.text.strip():
            continue
        sims = np.clip(E @ _unit(embedder.embed(chunk.text)), -1.0, 1.0)
        order = np.lexsort((np.arange(len(sims)), -sims))[:top_k]
        matches.extend(ChunkMatch(chunk.index, catalog[i].name, float(sims[i])) for i in order)
    return matches


def build_context(document: str, matches: Iterable[ChunkMatch]) -> RetrievalContext:
    names = dict.fromkeys(m.element_name for m in matches)
    return RetrievalContext(document, tuple(names))


def overlap_accuracy(true_elements: Iterable[str], retrieved: Iterable[str]) -> float:
    truth = set(true_elements)
    if not truth:
        raise EmptyTruth("overlap accuracy needs at least one true element")
    return len(truth & set(retrieved)) / len(truth)


def retrieve_elements(
    document: str,
    catalog: ElementCatalog,
    embedder: Embedder,
    use_augmented: bool = False,
    max_chunk_tokens: int = DEFAULT_MAX_CHUNK_TOKENS,
    top_k: int = 1,
) -> RetrievalContext:
    chunks = chunk_text(document, max_chunk_tokens)
    return build_context(document, match_elements(chunks, catalog, embedder, use_augmented, top_k))


@dataclass(frozen=True)
class ComparisonRow:
    doc_id: str
    original: float
    augmented: float


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]

    @property
    def mean_original(self) -> float:
        return float(np.mean([r.original for r in self.rows])) if self.rows else 0.0

    @property
    def mean_augmented(self) -> float:
        return float(np.mean([r.augmented for r in self.rows])) if self.rows else 0.0

    def to_csv_rows(self) -> list[list[str]]:
        out = [["doc_id", "original", "augmented"]]
        out += [[r.doc_id, f"{r.original:.6f}", f"{r.augmented:.6f}"] for r in self.rows]
        out.append(["mean", f"{self.mean_original:.6f}", f"{self.mean_augmented:.6f}"])
        return out


def compare_augmentation(
    dataset: Iterable[tuple[str, str, Iterable[str]]],
    catalog: ElementCatalog,
    embedder: Embedder,
    max_chunk_tokens: int = DEFAULT_MAX_CHUNK_TOKENS,
    top_k: int = 1,
) -> ComparisonReport:
    """Overlap accuracy per document with plain vs augmented element text.

    ``dataset`` yields ``(doc_id, text, true_element_names)``.
    """
    missing = [e.name for e in catalog if not e.augmented_description]
    if missing:
        raise MissingAugmentedDescriptions(", ".join(missing))
    rows = []
    for doc_id, text, truth in dataset:
        truth = list(truth)
        chunks = chunk_text(text, max_chunk_tokens)
        scores = []
        for aug in (False, True):
            got = {m.element_name for m in match_elements(chunks, catalog, embedder, aug, top_k)}
            scores.append(overlap_accuracy(truth, got))
        rows.append(ComparisonRow(doc_id, *scores))
    return ComparisonReport(tuple(rows))
