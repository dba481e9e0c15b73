"""QA-pair augmentation: prompt rendering, generation, response parsing."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable

from .clients import GenerationRequest, Generator
from .elements import ElementCatalog
from .prompts import TEMPLATES

__all__ = [
    "QAPair",
    "AugmentJob",
    "Diagnostic",
    "UnknownTemplate",
    "UnresolvedPlaceholder",
    "NoParsableArray",
    "render_template",
    "render_prompt",
    "parse_qa",
    "augment_laws",
    "augment_catalog",
]

_PLACEHOLDER = re.compile(r"\{([A-Za-z_]\w*)\}")


class UnknownTemplate(KeyError):
    pass


class UnresolvedPlaceholder(ValueError):
    pass


class NoParsableArray(ValueError):
    pass


@dataclass(frozen=True)
class QAPair:
    input: str
    output: str
    source_article: str | None = None

    def __post_init__(self):
        if not self.input or not self.output:
            raise ValueError("QA pair needs a non-empty input and output")

    def to_json(self) -> dict:
        return {"input": self.input, "output": self.output, "source_article": self.source_article}


@dataclass(frozen=True)
class AugmentJob:
    legal_text: str
    num_qa: int
    template_id: str = "qa_generation"
    source_article: str | None = None

    def __post_init__(self):
        if self.num_qa < 1:
            raise ValueError("num_qa must be >= 1")


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # count_mismatch | empty_field | duplicate_question | malformed_entry
    detail: str


def render_template(template: str, **values) -> str:
    """Substitute ``{name}`` placeholders in a single pass.

    Every placeholder in the template must be supplied; substituted values
    are never re-scanned, so braces inside them are safe.
    """
    missing = sorted(set(_PLACEHOLDER.findall(template)) - values.keys())
    if missing:
        raise UnresolvedPlaceholder(", ".join(missing))
    return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), template)


def render_prompt(job: AugmentJob, templates: dict[str, str] | None = None) -> str:
    templates = TEMPLATES if templates is None else templates
    try:
        template = templates[job.template_id]
    except KeyError:
        raise UnknownTemplate(job.template_id) from None
    return render_template(template, prompt=job.legal_text, num_qa=job.num_qa)


def _ws(s: str) -> str:
    return re.sub(r"\s+", " ", s).strip()


def _first_qa_array(response: str) -> list:
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\[", response):
        try:
            value, _ = decoder.raw_decode(response, m.start())
        except ValueError:
            continue
        if isinstance(value, list) and any(
            isinstance(x, dict) and ("input" in x or "output" in x) for x in value
        ):
            return value
    raise NoParsableArray("no JSON array of input/output objects in response")


def parse_qa(
    response: str, expected: int, source_article: str | None = None
) -> tuple[list[QAPair], list[Diagnostic]]:
    """Recover QA pairs from a generator reply.

    The first JSON array holding input/output objects wins, wherever it sits
    in the reply. Malformed or empty entries and repeated questions are
    dropped with a diagnostic; a count different from ``expected`` is also
    reported (pairs are never silently truncated).
    """
    items = _first_qa_array(response)
    pairs: list[QAPair] = []
    diags: list[Diagnostic] = []
    seen: set[str] = set()
    for k, item in enumerate(items):
        if not isinstance(item, dict) or not isinstance(item.get("input"), str) \
                or not isinstance(item.get("output"), str):
            diags.append(Diagnostic("malformed_entry", f"entry {k}"))
            continue
        q, a = item["input"].strip(), item["output"].strip()
        if not q or not a:
            diags.append(Diagnostic("empty_field", f"entry {k}"))
            continue
        key = _ws(q)
        if key in seen:
            diags.append(Diagnostic("duplicate_question", key))
            continue
        seen.add(key)
        pairs.append(QAPair(q, a, source_article))
    if len(pairs) != expected:
        diags.append(Diagnostic("count_mismatch", f"got {len(pairs)}, expected {expected}"))
    return pairs, diags


def augment_laws(
    laws: Iterable[dict],
    generator: Generator,
    num_qa: int,
    seed: int | None = None,
) -> tuple[list[QAPair], list[Diagnostic]]:
    """Run one QA job per law article ``{"source": ..., "text": ...}``."""
    pairs, diags = [], []
    for law in laws:
        job = AugmentJob(law["text"], num_qa, source_article=law.get("source"))
        reply = generator.generate(GenerationRequest(render_prompt(job), seed=seed))
        try:
            got, d = parse_qa(reply, num_qa, job.source_article)
        except NoParsableArray as exc:
            diags.append(Diagnostic("no_array", f"{job.source_article}: {exc}"))
            continue
        pairs.extend(got)
        diags.extend(d)
    return pairs, diags


def augment_catalog(catalog: ElementCatalog, generator: Generator, seed: int | None = None) -> ElementCatalog:
    """Fill in missing augmented descriptions with one generated gloss each."""
    for e in list(catalog):
        if e.augmented_description:
            continue
        prompt = render_template(TEMPLATES["element_augmentation"], element=e.name)
        text = generator.generate(GenerationRequest(prompt, seed=seed)).strip()
        if text:
            catalog = catalog.replace(e.name, augmented_description=text.splitlines()[0])
    return catalog
