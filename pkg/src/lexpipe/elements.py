"""Legal-element catalog, typed element values and unit normalization."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Union

__all__ = [
    "KINDS",
    "ElementDef",
    "ElementCatalog",
    "ElementValue",
    "Violation",
    "UnparseableDuration",
    "UnknownElementKey",
    "parse_numeral",
    "normalize_duration",
    "coerce_value",
    "validate_extraction",
    "load_catalog",
    "default_catalog",
]

KINDS = ("flag", "count", "duration_months", "amount", "text")

Scalar = Union[bool, int, Decimal, float, str]


class UnparseableDuration(ValueError):
    pass


class UnknownElementKey(KeyError):
    pass


@dataclass(frozen=True)
class ElementDef:
    name: str
    kind: str
    description: str
    augmented_description: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown element kind {self.kind!r}")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "description": self.description,
            "augmented_description": self.augmented_description,
        }


class ElementCatalog:
    """Ordered, immutable collection of element definitions.

    Ordering matters: retrieval breaks similarity ties by catalog index.
    """

    def __init__(self, elements: Iterable[ElementDef]):
        self._elements = tuple(elements)
        if not self._elements:
            raise ValueError("catalog must contain at least one element")
        self._index = {}
        for i, e in enumerate(self._elements):
            if e.name in self._index:
                raise ValueError(f"duplicate element name {e.name!r}")
            self._index[e.name] = i

    def __len__(self) -> int:
        return len(self._elements)

    def __iter__(self) -> Iterator[ElementDef]:
        return iter(self._elements)

    def __getitem__(self, i: int) -> ElementDef:
        return self._elements[i]

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ElementCatalog) and self._elements == other._elements

    @property
    def names(self) -> list[str]:
        return [e.name for e in self._elements]

    def get(self, name: str) -> ElementDef:
        try:
            return self._elements[self._index[name]]
        except KeyError:
            raise UnknownElementKey(name) from None

    def index_of(self, name: str) -> int:
        return self._index[name]

    def replace(self, name: str, **changes) -> "ElementCatalog":
        from dataclasses import replace

        return ElementCatalog(
            replace(e, **changes) if e.name == name else e for e in self._elements
        )

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for e in self._elements:
                f.write(json.dumps(e.to_json(), ensure_ascii=False) + "\n")


def load_catalog(path: str | Path) -> ElementCatalog:
    elements = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            elements.append(
                ElementDef(
                    name=obj["name"],
                    kind=obj["kind"],
                    description=obj.get("description") or obj["name"],
                    augmented_description=obj.get("augmented_description"),
                )
            )
    return ElementCatalog(elements)


def default_catalog() -> ElementCatalog:
    """The bundled starter catalog."""
    with resources.as_file(resources.files("lexpipe.data") / "catalog.jsonl") as p:
        return load_catalog(p)


# --- numerals and durations -------------------------------------------------

_DIGITS = {"〇": 0, "零": 0, "一": 1, "二": 2, "两": 2, "三": 3, "四": 4,
           "五": 5, "六": 6, "七": 7, "八": 8, "九": 9}
_UNITS = {"十": 10, "百": 100}
_NUMERAL_CHARS = "".join(_DIGITS) + "".join(_UNITS) + "0123456789"


def parse_numeral(text: str) -> int:
    """Parse a non-negative integer written in ASCII digits or Chinese numerals.

    Any ASCII digit in the string makes it a digit string. Chinese numerals
    without 十/百 are read digit by digit (二〇 -> 20).
    """
    s = text.strip()
    if not s:
        raise ValueError("empty numeral")
    if any(c.isascii() and c.isdigit() for c in s):
        if not s.isascii() or not s.isdigit():
            raise ValueError(f"mixed numeral {text!r}")
        return int(s)
    if any(c not in _DIGITS and c not in _UNITS for c in s):
        raise ValueError(f"not a numeral: {text!r}")
    if not any(c in _UNITS for c in s):
        return int("".join(str(_DIGITS[c]) for c in s))

    total, pending, last_unit = 0, None, 1000
    for c in s:
        if c in _DIGITS:
            d = _DIGITS[c]
            if d == 0:
                pending = None
                continue
            if pending is not None:
                raise ValueError(f"malformed numeral {text!r}")
            pending = d
        else:
            unit = _UNITS[c]
            if unit >= last_unit:
                raise ValueError(f"malformed numeral {text!r}")
            # bare 十 at the head means 一十
            total += (1 if pending is None else pending) * unit
            pending, last_unit = None, unit
    if pending is not None:
        total += pending
    return total


_NUM = f"[{_NUMERAL_CHARS}]+"
_DURATION_RE = re.compile(
    rf"^(?:(?P<y>{_NUM})年)?零?(?:(?P<m>{_NUM})个?月)?$"
)


def normalize_duration(text_value: str) -> int:
    """Convert a years/months expression to whole months (12 * years + months)."""
    s = re.sub(r"\s+", "", text_value)
    m = _DURATION_RE.match(s)
    if not s or m is None or (m.group("y") is None and m.group("m") is None):
        raise UnparseableDuration(text_value)
    try:
        years = parse_numeral(m.group("y")) if m.group("y") else 0
        months = parse_numeral(m.group("m")) if m.group("m") else 0
    except ValueError as exc:
        raise UnparseableDuration(text_value) from exc
    return 12 * years + months


# --- typed values -------------------------------------------------------------

@dataclass(frozen=True)
class ElementValue:
    name: str
    value: Scalar


@dataclass(frozen=True)
class Violation:
    name: str
    kind: str  # "hallucinated_element" | "type_mismatch"
    detail: str = ""


def _kind_accepts(kind: str, value: object) -> bool:
    if kind == "flag":
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if kind in ("count", "duration_months"):
        return isinstance(value, int) and value >= 0
    if kind == "amount":
        if isinstance(value, (int, Decimal)):
            return value >= 0
        if isinstance(value, float):
            return value == value and value >= 0
        return False
    return isinstance(value, str)


_TRUE_WORDS = {"是", "有", "true", "yes", "1"}
_FALSE_WORDS = {"否", "无", "false", "no", "0"}


def coerce_value(definition: ElementDef, raw: object) -> Scalar:
    """Convert a raw extracted value (usually a string) to the element's kind.

    Raises ValueError when the raw value cannot represent that kind.
    """
    kind = definition.kind
    if _kind_accepts(kind, raw):
        return raw
    if not isinstance(raw, (str, int, float, Decimal)) or isinstance(raw, bool):
        raise ValueError(f"{definition.name}: cannot coerce {raw!r} to {kind}")
    s = str(raw).strip()
    if kind == "flag":
        if s.lower() in _TRUE_WORDS:
            return True
        if s.lower() in _FALSE_WORDS:
            return False
        raise ValueError(f"{definition.name}: not a flag value {raw!r}")
    if kind == "count":
        s = re.sub(r"[人名个]$", "", s)
        return parse_numeral(s)
    if kind == "duration_months":
        if s.isdigit():
            return int(s)
        return normalize_duration(s)
    if kind == "amount":
        s = re.sub(r"(人民币|元|,|，)", "", s)
        try:
            value = Decimal(s)
        except InvalidOperation:
            value = Decimal(parse_numeral(s))
        if value < 0 or not value.is_finite():
            raise ValueError(f"{definition.name}: bad amount {raw!r}")
        return value
    return s


def validate_extraction(
    pred: Iterable[ElementValue], catalog: ElementCatalog
) -> tuple[list[ElementValue], list[Violation]]:
    """Split predictions into schema-valid values and violations.

    Names outside the catalog are hallucinations; values whose Python type
    does not fit the element kind are type mismatches. Out-of-scale values
    (a duration reported in years) pass: that is a scoring matter.
    """
    valid: list[ElementValue] = []
    violations: list[Violation] = []
    for ev in pred:
        if ev.name not in catalog:
            violations.append(Violation(ev.name, "hallucinated_element"))
            continue
        kind = catalog.get(ev.name).kind
        if not _kind_accepts(kind, ev.value):
            violations.append(Violation(ev.name, "type_mismatch", f"expected {kind}"))
            continue
        valid.append(ev)
    return valid, violations
