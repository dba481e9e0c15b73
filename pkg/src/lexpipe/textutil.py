"""Text normalization and the shared CJK/Latin tokenizer."""

from __future__ import annotations

import unicodedata

__all__ = [
    "normalize_text",
    "is_cjk_ideograph",
    "is_cjk_punct",
    "token_spans",
    "tokenize",
]

# CJK punctuation here means the CJK Symbols block, the fullwidth ASCII
# variants, and the handful of general punctuation marks Chinese text uses.
_CJK_PUNCT_EXTRA = frozenset("‘’“”—…·–")


def normalize_text(text: str) -> str:
    """NFC-normalize and fold CRLF / CR line endings to LF."""
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return unicodedata.normalize("NFC", text)


def is_cjk_ideograph(ch: str) -> bool:
    cp = ord(ch)
    return (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0xF900 <= cp <= 0xFAFF
        or 0x20000 <= cp <= 0x2A6DF
    )


def is_cjk_punct(ch: str) -> bool:
    cp = ord(ch)
    return 0x3000 <= cp <= 0x303F or 0xFF01 <= cp <= 0xFF5E or ch in _CJK_PUNCT_EXTRA


def _is_single_token_char(ch: str) -> bool:
    return is_cjk_ideograph(ch) or is_cjk_punct(ch)


def token_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of tokens in ``text``.

    Every CJK ideograph or CJK punctuation mark is its own token; any other
    maximal run of non-whitespace characters is one word. Whitespace belongs
    to no token.
    """
    spans: list[tuple[int, int]] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if _is_single_token_char(ch):
            spans.append((i, i + 1))
            i += 1
            continue
        j = i + 1
        while j < n and not text[j].isspace() and not _is_single_token_char(text[j]):
            j += 1
        spans.append((i, j))
        i = j
    return spans


def tokenize(text: str) -> list[str]:
    return [text[a:b] for a, b in token_spans(text)]
