import numpy as np
import pytest
from hypothesis import given, strategies as st

from lexpipe.clients import EmptyText, HashingEmbedder
from lexpipe.elements import ElementCatalog, ElementDef, default_catalog
from lexpipe.retrieve import (
    Chunk,
    ChunkMatch,
    EmptyTruth,
    MissingAugmentedDescriptions,
    build_context,
    chunk_text,
    compare_augmentation,
    match_elements,
    overlap_accuracy,
    retrieve_elements,
)


class TableEmbedder:
    """Fixed vectors per text, for exact control over cosines."""

    def __init__(self, table: dict[str, list[float]]):
        self.table = table

    def embed(self, text: str) -> np.ndarray:
        return np.asarray(self.table[text], dtype=float)


def small_catalog(aug: bool = True) -> ElementCatalog:
    return ElementCatalog([
        ElementDef("A", "flag", "da", "aa" if aug else ""),
        ElementDef("B", "flag", "db", "ab" if aug else ""),
        ElementDef("C", "flag", "dc", "ac" if aug else ""),
    ])


class TestChunk:
    def test_sizes(self):
        chunks = chunk_text("字" * 2500, 1000)
        assert [c.token_span for c in chunks] == [(0, 1000), (1000, 2000), (2000, 2500)]

    def test_validation(self):
        with pytest.raises(ValueError):
            chunk_text("abc", 0)
        with pytest.raises(EmptyText):
            chunk_text("   ")

    @given(st.text(min_size=1, max_size=120).filter(lambda s: s.strip()), st.integers(1, 20))
    def test_rejoin_is_identity(self, text, k):
        chunks = chunk_text(text, k)
        assert "".join(c.text for c in chunks) == text
        assert [c.index for c in chunks] == list(range(len(chunks)))
        assert all(b - a <= k for a, b in (c.token_span for c in chunks))


class TestMatch:
    def test_self_match(self):
        cat = default_catalog()
        emb = HashingEmbedder()
        for k, e in enumerate(cat):
            m = match_elements([Chunk(0, e.description, (0, 1))], cat, emb)
            assert m[0].element_name == e.name
            assert abs(m[0].cosine - 1) < 1e-9

    def test_tie_goes_to_lower_index(self):
        emb = TableEmbedder({"da": [1, 0], "db": [1, 0], "dc": [0, 1], "x": [1, 0]})
        m = match_elements([Chunk(0, "x", (0, 1))], small_catalog(), emb)
        assert m[0].element_name == "A"

    def test_top_k_descending(self):
        emb = TableEmbedder({"da": [1, 0], "db": [0.6, 0.8], "dc": [0, 1], "x": [0, 1]})
        m = match_elements([Chunk(0, "x", (0, 1))], small_catalog(), emb, top_k=2)
        assert [x.element_name for x in m] == ["C", "B"]
        with pytest.raises(ValueError):
            match_elements([], small_catalog(), emb, top_k=0)

    def test_augmented_uses_other_text(self):
        emb = TableEmbedder({"aa": [0, 1], "ab": [1, 0], "ac": [0.6, 0.8], "x": [1, 0]})
        m = match_elements([Chunk(0, "x", (0, 1))], small_catalog(), emb, use_augmented=True)
        assert m[0].element_name == "B"

    def test_missing_augmented(self):
        emb = TableEmbedder({"da": [1], "db": [1], "dc": [1]})
        with pytest.raises(MissingAugmentedDescriptions):
            match_elements([Chunk(0, "x", (0, 1))], small_catalog(aug=False), emb, use_augmented=True)
        with pytest.raises(MissingAugmentedDescriptions):
            compare_augmentation([("d", "x", ["A"])], small_catalog(aug=False), emb)


class TestContext:
    def test_dedup_keeps_first_order(self):
        ms = [ChunkMatch(i, n, 1.0) for i, n in enumerate("ABAC")]
        assert build_context("doc", ms).matched_elements == ("A", "B", "C")

    def test_instruction_lists_matches(self):
        ctx = build_context("文书", [ChunkMatch(0, "自首", 1.0)])
        text = ctx.instruction(default_catalog())
        assert "自首" in text and "文书" in text and "缓刑" not in text

    def test_empty_falls_back_to_catalog(self):
        cat = default_catalog()
        text = build_context("文书", []).instruction(cat)
        assert all(name in text for name in cat.names)

    def test_retrieve_elements(self):
        cat = default_catalog()
        ctx = retrieve_elements(cat.get("自首").description, cat, HashingEmbedder())
        assert ctx.matched_elements == ("自首",)


class TestOverlap:
    def test_four_of_five(self):
        assert overlap_accuracy("abcde", "abcdz") == 0.8

    def test_empty_truth(self):
        with pytest.raises(EmptyTruth):
            overlap_accuracy([], ["a"])

    @given(st.sets(st.integers(0, 9), min_size=1), st.sets(st.integers(0, 9)), st.sets(st.integers(0, 9)))
    def test_monotone_in_retrieved(self, truth, got, extra):
        assert overlap_accuracy(truth, got | extra) >= overlap_accuracy(truth, got)
        assert 0 <= overlap_accuracy(truth, got) <= 1


class TestCompare:
    def test_rows_and_identical_variants(self):
        cat = ElementCatalog([ElementDef(e.name, e.kind, e.description, e.description) for e in default_catalog()])
        data = [(f"d{i}", e.description, [e.name]) for i, e in enumerate(cat)]
        report = compare_augmentation(data, cat, HashingEmbedder())
        assert len(report.rows) == len(data)
        assert all(r.original == r.augmented == 1.0 for r in report.rows)
        csv_rows = report.to_csv_rows()
        assert csv_rows[0] == ["doc_id", "original", "augmented"]
        assert csv_rows[-1][0] == "mean" and len(csv_rows) == len(data) + 2
