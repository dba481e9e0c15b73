"""Rule-based rewards: format conformance, readability penalties, process steps."""

from __future__ import annotations

import difflib
import json
import re
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Mapping

from .textutil import is_cjk_ideograph, is_cjk_punct

__all__ = [
    "FormatSpec",
    "AmountTask",
    "RewardBreakdown",
    "COMPONENTS",
    "format_reward",
    "slot_report",
    "is_allowed_char",
    "garbled_penalty",
    "longest_common_substring",
    "duplication_penalty",
    "process_breakdown",
    "process_reward",
    "combined_reward",
    "load_format_spec",
    "summary_template",
    "month_template",
]

LAMBDA_GARBLED = 1.0
LAMBDA_DUPLICATION = 0.5
DUPLICATION_MIN_CHARS = 30
DUPLICATION_FRACTION = 0.5

COMPONENTS = (
    "format_conformance",
    "garbled_penalty",
    "duplication_penalty",
    "step_structure",
    "arithmetic_consistency",
)

_PART_RE = re.compile(r"\[([^\[\]]+)\]|（[^（）]*）|\([^()]*\)")


# --- format ---------------------------------------------------------------------

@dataclass(frozen=True)
class FormatSpec:
    """A template whose ``[slot]`` placeholders must be filled in order.

    Parenthesized text in the template (ASCII or fullwidth brackets) marks
    free-form content and matches anything; remaining text is literal and
    must appear verbatim (whitespace-insensitive) in the output.
    """

    template_text: str
    required_slots: tuple[str, ...]
    slot_patterns: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "required_slots", tuple(self.required_slots))
        found = [p[1] for p in self.parts() if p[0] == "slot"]
        if set(found) - set(self.required_slots):
            raise ValueError(f"placeholders missing from required_slots: {sorted(set(found) - set(self.required_slots))}")
        if set(self.required_slots) - set(found):
            raise ValueError(f"required slots absent from template: {sorted(set(self.required_slots) - set(found))}")
        parts = self.parts()
        for k, part in enumerate(parts):
            if part[0] == "slot" and k + 1 < len(parts) and parts[k + 1][0] != "lit":
                raise ValueError(f"slot [{part[1]}] must be followed by literal text")

    def parts(self) -> list[tuple[str, str]]:
        out: list[tuple[str, str]] = []
        pos = 0
        for m in _PART_RE.finditer(self.template_text):
            lit = _ws(self.template_text[pos:m.start()])
            if lit:
                out.append(("lit", lit))
            if m.group(1) is not None:
                out.append(("slot", m.group(1)))
            elif not out or out[-1][0] != "free":
                out.append(("free", ""))
            pos = m.end()
        tail = _ws(self.template_text[pos:])
        if tail:
            out.append(("lit", tail))
        return out

    def render(self, values: Mapping[str, str]) -> str:
        return re.sub(r"\[([^\[\]]+)\]", lambda m: values.get(m.group(1), m.group(0)), self.template_text)

    @classmethod
    def from_json(cls, obj: Mapping) -> "FormatSpec":
        return cls(obj["template_text"], tuple(obj["required_slots"]), dict(obj.get("slot_patterns", {})))

    def to_json(self) -> dict:
        return {
            "template_text": self.template_text,
            "required_slots": list(self.required_slots),
            "slot_patterns": dict(self.slot_patterns),
        }


def _ws(s: str) -> str:
    return re.sub(r"\s+", " ", s).strip()


def load_format_spec(path: str | Path) -> FormatSpec:
    return FormatSpec.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _bundled(name: str) -> FormatSpec:
    with resources.as_file(resources.files("lexpipe.data") / name) as p:
        return load_format_spec(p)


def summary_template() -> FormatSpec:
    """Supervision-decision case-summary template."""
    return _bundled("summary_template.json")


def month_template() -> FormatSpec:
    """Sentence-term answer template: a number of months."""
    return _bundled("month_template.json")


def slot_report(output: str, spec: FormatSpec) -> dict[str, bool]:
    """Validity of each required slot in ``output``.

    A slot occurrence is valid when the literal before it is found after the
    previous match, the literal after it follows, and the text in between is
    non-empty, is not an unfilled ``[placeholder]`` and fully matches the
    slot's pattern. A name is valid only if all its occurrences are.
    """
    text = _ws(output)
    parts = spec.parts()
    valid = {name: True for name in spec.required_slots}
    cursor = 0
    anchored = True  # the previous part pinned the cursor
    for k, (kind, value) in enumerate(parts):
        if kind == "lit":
            pos = text.find(value, cursor)
            anchored = pos >= 0
            if anchored:
                cursor = pos + len(value)
            continue
        if kind == "free":
            anchored = False
            continue
        ok = anchored or k == 0
        end = len(text)
        if ok and k + 1 < len(parts):
            end = text.find(parts[k + 1][1], cursor)
            ok = end >= 0
        if ok:
            filled = text[cursor:end].strip()
            pattern = spec.slot_patterns.get(value, r".+")
            ok = (
                bool(filled)
                and re.search(r"\[[^\[\]]+\]", filled) is None
                and re.fullmatch(pattern, filled, re.S) is not None
            )
            cursor = end
        if not ok:
            valid[value] = False
        anchored = ok
    return valid


def format_reward(output: str, spec: FormatSpec) -> float:
    """Fraction of required slots filled validly, in template order."""
    report = slot_report(output, spec)
    return sum(report.values()) / len(spec.required_slots)


# --- readability penalties ---------------------------------------------------------

def is_allowed_char(ch: str) -> bool:
    if ch == "�":
        return False
    return ch in "\n\t" or " " <= ch <= "~" or is_cjk_ideograph(ch) or is_cjk_punct(ch)


def garbled_penalty(output: str, lam: float = LAMBDA_GARBLED) -> float:
    """-lam times the fraction of characters outside the readable repertoire."""
    if not output:
        return 0.0
    bad = sum(1 for ch in output if not is_allowed_char(ch))
    return -lam * bad / len(output) if bad else 0.0


def longest_common_substring(a: str, b: str) -> int:
    if not a or not b:
        return 0
    m = difflib.SequenceMatcher(None, a, b, autojunk=False).find_longest_match(0, len(a), 0, len(b))
    return m.size


def duplication_penalty(output: str, input: str, lam: float = LAMBDA_DUPLICATION) -> float:
    """-lam when the output echoes a long verbatim stretch of the input."""
    threshold = max(DUPLICATION_MIN_CHARS, DUPLICATION_FRACTION * len(output))
    return -lam if longest_common_substring(output, input) > threshold else 0.0


# --- process ---------------------------------------------------------------------

@dataclass(frozen=True)
class AmountTask:
    """Step markers for amount extraction: incidents, items, item values, total."""

    markers: tuple[str, str, str, str] = ("作案次数", "涉案物品", "物品价值", "涉案总金额")
    tolerance: Decimal = Decimal("0.01")

    def __post_init__(self):
        if len(self.markers) != 4:
            raise ValueError("an amount task has exactly four step markers")


_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")


def process_breakdown(output: str, task: AmountTask) -> tuple[float, float]:
    """(step credit for the first three markers, credit for the total step).

    Markers are searched in order, each after the previous one found. The
    total step earns its 0.25 only if the first number after it equals the
    sum of the numbers in the item-value step, within the task tolerance.
    """
    cursor = 0
    spans: list[tuple[int, int] | None] = []
    for marker in task.markers:
        pos = output.find(marker, cursor)
        if pos < 0:
            spans.append(None)
            continue
        spans.append((pos, pos + len(marker)))
        cursor = pos + len(marker)
    steps = 0.25 * sum(s is not None for s in spans[:3])
    values_span, total_span = spans[2], spans[3]
    arithmetic = 0.0
    if values_span is not None and total_span is not None:
        items = [Decimal(v) for v in _NUMBER_RE.findall(output[values_span[1]:total_span[0]])]
        total = _NUMBER_RE.search(output, total_span[1])
        if items and total is not None and abs(Decimal(total.group(0)) - sum(items)) <= task.tolerance:
            arithmetic = 0.25
    return steps, arithmetic


def process_reward(output: str, task: AmountTask) -> float:
    return sum(process_breakdown(output, task))


# --- composition -------------------------------------------------------------------

@dataclass(frozen=True)
class RewardBreakdown:
    total: float
    components: dict[str, float]


DEFAULT_WEIGHTS = {"format": 1.0, "garbled": 1.0, "duplication": 1.0, "process": 1.0}


def combined_reward(
    output: str,
    input: str,
    spec: FormatSpec | None,
    task: AmountTask | None = None,
    weights: Mapping[str, float] | None = None,
) -> RewardBreakdown:
    """Weighted sum of format, garbled, duplication and process rewards.

    The process weight scales both of its parts. A missing spec or task
    contributes zero for that family.
    """
    w = dict(DEFAULT_WEIGHTS, **(weights or {}))
    if any(v < 0 for v in w.values()):
        raise ValueError("reward weights must be non-negative")
    steps, arith = process_breakdown(output, task) if task is not None else (0.0, 0.0)
    components = {
        "format_conformance": w["format"] * (format_reward(output, spec) if spec is not None else 0.0),
        "garbled_penalty": w["garbled"] * garbled_penalty(output),
        "duplication_penalty": w["duplication"] * duplication_penalty(output, input),
        "step_structure": w["process"] * steps,
        "arithmetic_consistency": w["process"] * arith,
    }
    total = 0.0
    for name in COMPONENTS:
        total += components[name]
    return RewardBreakdown(total, components)
