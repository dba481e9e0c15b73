"""Independent reference implementations used as test oracles."""

from functools import lru_cache

_DIGIT_CHARS = "零一二三四五六七八九"


def chinese_numeral(n: int) -> str:
    """Write 0 <= n < 1000 the way court documents do (十二, 二十, 一百零五)."""
    if n < 10:
        return _DIGIT_CHARS[n]
    if n < 20:
        return "十" + (_DIGIT_CHARS[n - 10] if n > 10 else "")
    if n < 100:
        t, o = divmod(n, 10)
        return _DIGIT_CHARS[t] + "十" + (_DIGIT_CHARS[o] if o else "")
    h, rest = divmod(n, 100)
    out = _DIGIT_CHARS[h] + "百"
    if rest == 0:
        return out
    if rest < 10:
        return out + "零" + _DIGIT_CHARS[rest]
    t, o = divmod(rest, 10)
    return out + _DIGIT_CHARS[t] + "十" + (_DIGIT_CHARS[o] if o else "")


def numeral_value(s: str) -> int:
    """Table-driven inverse of ``chinese_numeral``; built by enumeration."""
    return _TABLE[s]


_TABLE = {chinese_numeral(n): n for n in range(1000)}


def _ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _prf(overlap, n_ref, n_cand):
    r = overlap / n_ref if n_ref else 0.0
    p = overlap / n_cand if n_cand else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return (r, p, f)


def brute_rouge(cand, ref):
    out = {}
    for n, name in ((1, "r1"), (2, "r2")):
        c, r = _ngrams(cand, n), _ngrams(ref, n)
        overlap = sum(min(c.count(g), r.count(g)) for g in set(c))
        out[name] = _prf(overlap, len(r), len(c))

    @lru_cache(maxsize=None)
    def lcs(i, j):
        if i == len(cand) or j == len(ref):
            return 0
        if cand[i] == ref[j]:
            return 1 + lcs(i + 1, j + 1)
        return max(lcs(i + 1, j), lcs(i, j + 1))

    k = lcs(0, 0)
    out["rl"] = _prf(k, len(ref), len(cand))
    return out
