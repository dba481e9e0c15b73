"""Raw judgment ingestion: anchor-based section extraction, filtering, records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .elements import ElementCatalog, UnknownElementKey
from .textutil import normalize_text

__all__ = [
    "DEFAULT_ANCHORS",
    "DOC_TYPES",
    "RawDocument",
    "DocRecord",
    "FilterDecision",
    "NoAnchorsFound",
    "extract_sections",
    "filter_document",
    "build_record",
    "serialize_record",
    "parse_record",
    "load_anchors",
    "load_documents",
]

DEFAULT_ANCHORS = ("本院查明", "本院认为", "判决如下", "裁判结果", "审理查明")
DOC_TYPES = ("judgment", "ruling", "other")


class NoAnchorsFound(ValueError):
    pass


@dataclass(frozen=True)
class RawDocument:
    id: str
    body: str
    doc_type: str
    year: int
    province: str = ""
    crime_type: str = ""
    procedure: str = ""
    features: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.body:
            raise ValueError(f"document {self.id!r} has an empty body")
        if self.doc_type not in DOC_TYPES:
            raise ValueError(f"unknown doc_type {self.doc_type!r}")
        if not (1000 <= int(self.year) <= 9999):
            raise ValueError(f"year must have four digits, got {self.year!r}")


@dataclass(frozen=True)
class DocRecord:
    index: str
    doc_type: str
    procedure: str
    features: dict[str, str]
    sections: dict[str, str]


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: str | None = None


def _check_anchors(anchors: Iterable[str]) -> tuple[str, ...]:
    anchors = tuple(anchors)
    if not anchors:
        raise ValueError("anchor set is empty")
    if len(set(anchors)) != len(anchors):
        raise ValueError("anchor phrases must be unique")
    return anchors


def extract_sections(doc: RawDocument, anchors: Iterable[str] = DEFAULT_ANCHORS) -> dict[str, str]:
    """Slice the body into spans that start after each anchor's first occurrence.

    A span ends where the next located anchor begins (or at end of body), so
    spans come back in document order. Later repeats of an anchor are plain
    text inside whichever span contains them.
    """
    anchors = _check_anchors(anchors)
    body = normalize_text(doc.body)
    hits = sorted(
        (pos, a) for a in anchors if (pos := body.find(a)) >= 0
    )
    if not hits:
        raise NoAnchorsFound(doc.id)
    sections: dict[str, str] = {}
    for k, (pos, anchor) in enumerate(hits):
        start = pos + len(anchor)
        end = hits[k + 1][0] if k + 1 < len(hits) else len(body)
        sections[anchor] = body[start:max(start, end)]
    return sections


def filter_document(doc: RawDocument, min_year: int = 2020) -> FilterDecision:
    if doc.doc_type == "ruling":
        return FilterDecision(False, "ruling_excluded")
    if doc.doc_type != "judgment":
        return FilterDecision(False, "other_type_excluded")
    if doc.year < min_year:
        return FilterDecision(False, "too_old")
    return FilterDecision(True)


def build_record(
    doc: RawDocument,
    sections: Mapping[str, str],
    features: Mapping[str, str],
    catalog: ElementCatalog,
) -> DocRecord:
    for name in features:
        if name not in catalog:
            raise UnknownElementKey(name)
    return DocRecord(
        index=doc.id,
        doc_type=doc.doc_type,
        procedure=doc.procedure,
        features={k: str(v) for k, v in features.items()},
        sections=dict(sections),
    )


def serialize_record(record: DocRecord) -> str:
    return json.dumps(
        {
            "index": record.index,
            "doc_type": record.doc_type,
            "procedure": record.procedure,
            "features": record.features,
            "sections": record.sections,
        },
        ensure_ascii=False,
    )


def parse_record(line: str) -> DocRecord:
    obj = json.loads(line)
    return DocRecord(
        index=obj["index"],
        doc_type=obj["doc_type"],
        procedure=obj["procedure"],
        features=dict(obj["features"]),
        sections=dict(obj["sections"]),
    )


def load_anchors(path: str | Path) -> tuple[str, ...]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return _check_anchors(s.strip() for s in lines if s.strip())


def load_documents(text_dir: str | Path, meta_path: str | Path) -> list[RawDocument]:
    """Join ``<id>.txt`` bodies with one-JSON-object-per-line metadata."""
    text_dir = Path(text_dir)
    docs = []
    with open(meta_path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            meta = json.loads(line)
            body = (text_dir / f"{meta['id']}.txt").read_text(encoding="utf-8")
            docs.append(
                RawDocument(
                    id=meta["id"],
                    body=body,
                    doc_type=meta["doc_type"],
                    year=int(meta["year"]),
                    province=meta.get("province", ""),
                    crime_type=meta.get("crime_type", ""),
                    procedure=meta.get("procedure", ""),
                    features=meta.get("features", {}),
                )
            )
    return docs
