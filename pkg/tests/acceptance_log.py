"""Collects one verdict per acceptance criterion for the terminal summary."""

TITLES = {
    1: "gradient correctness (finite differences)",
    2: "advantage invariants",
    3: "KL properties",
    4: "clipping bounds",
    5: "GRPO format bandit",
    6: "SFT convergence",
    7: "ROUGE oracle equivalence",
    8: "overlap accuracy",
    9: "retrieval recovery",
    10: "duration normalization",
    11: "process-reward arithmetic gate",
    12: "end-to-end determinism",
}

_results: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    _results[n] = (bool(ok), detail)
    print(line(n))


def line(n: int) -> str:
    if n not in _results:
        return f"[{n:>2}] FAIL  {TITLES[n]}: did not reach a verdict (error before check)"
    ok, detail = _results[n]
    return f"[{n:>2}] {'PASS' if ok else 'FAIL'}  {TITLES[n]}: {detail}"


def summary_lines() -> list[str]:
    if not _results:
        return []
    return [line(n) for n in sorted(TITLES)]
