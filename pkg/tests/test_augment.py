import json

import pytest
from hypothesis import given, strategies as st

from lexpipe.augment import (
    AugmentJob,
    NoParsableArray,
    UnknownTemplate,
    UnresolvedPlaceholder,
    augment_catalog,
    augment_laws,
    parse_qa,
    render_prompt,
    render_template,
)
from lexpipe.clients import StubGenerator
from lexpipe.elements import ElementCatalog, ElementDef
from lexpipe.prompts import QA_GENERATION


class TestRender:
    def test_substitution(self):
        out = render_prompt(AugmentJob("X条文", 3))
        assert out.count("X条文") == 1
        assert "Please generate 3 high-quality" in out
        assert "{prompt}" not in out and "{num_qa}" not in out

    def test_json_braces_in_template_are_literal(self):
        assert '"input": "Question 1"' in render_prompt(AugmentJob("t", 1))

    def test_single(self):
        assert "Please generate 1 high-quality" in render_prompt(AugmentJob("t", 1))

    def test_stray_placeholder(self):
        with pytest.raises(UnresolvedPlaceholder):
            render_prompt(AugmentJob("t", 1, template_id="x"), {"x": "{prompt} {foo}"})

    def test_unknown_template(self):
        with pytest.raises(UnknownTemplate):
            render_prompt(AugmentJob("t", 1, template_id="nope"))

    def test_values_not_rescanned(self):
        assert render_template("{a}", a="{b}") == "{b}"

    def test_num_qa_positive(self):
        with pytest.raises(ValueError):
            AugmentJob("t", 0)

    @given(st.text(min_size=1, max_size=50), st.text(min_size=1, max_size=50))
    def test_injective_in_text(self, a, b):
        ra, rb = render_prompt(AugmentJob(a, 2)), render_prompt(AugmentJob(b, 2))
        assert (ra == rb) == (a == b)
        prefix = QA_GENERATION.split("{prompt}")[0]
        assert ra[len(prefix):].startswith(a)


class TestParse:
    def test_two_pairs(self):
        resp = json.dumps([{"input": "q1", "output": "a1"}, {"input": "q2", "output": "a2"}])
        pairs, diags = parse_qa(resp, 2)
        assert [p.input for p in pairs] == ["q1", "q2"] and diags == []

    def test_article_one_seed_pair(self):
        resp = json.dumps([{"input": "刑法第一条的内容是什么？",
                            "output": "为了惩罚犯罪，保护人民，根据宪法，结合我国同犯罪作斗争的具体经验及实际情况，制定本法。"}],
                          ensure_ascii=False)
        pairs, diags = parse_qa(resp, 1, source_article="刑法第一条")
        assert len(pairs) == 1 and pairs[0].source_article == "刑法第一条" and diags == []

    def test_prose_before_and_after(self):
        resp = 'Sure! Here [are] the pairs:\n[{"input": "q", "output": "a"}]\nHope this helps [1].'
        pairs, _ = parse_qa(resp, 1)
        assert pairs[0].output == "a"

    def test_no_array(self):
        with pytest.raises(NoParsableArray):
            parse_qa("no json here", 1)

    def test_diagnostics(self):
        resp = json.dumps([
            {"input": "q", "output": "a"},
            {"input": " q ", "output": "b"},
            {"input": "", "output": "c"},
            {"question": "x"},
            "junk",
        ])
        pairs, diags = parse_qa(resp, 3)
        kinds = [d.kind for d in diags]
        assert len(pairs) == 1
        assert kinds.count("duplicate_question") == 1
        assert kinds.count("empty_field") == 1
        assert kinds.count("malformed_entry") == 2
        assert kinds[-1] == "count_mismatch"

    @given(st.lists(st.tuples(st.text(min_size=1, max_size=5), st.text(min_size=1, max_size=5)), min_size=1, max_size=8),
           st.integers(1, 8))
    def test_more_than_expected_is_always_reported(self, items, expected):
        resp = json.dumps([{"input": q, "output": a} for q, a in items])
        pairs, diags = parse_qa(resp, expected)
        if len(pairs) != expected:
            assert any(d.kind == "count_mismatch" for d in diags)


def test_augment_laws_with_stub():
    laws = [{"source": "第一条", "text": "甲。乙。丙。"}]
    pairs, diags = augment_laws(laws, StubGenerator(1), 3, seed=1)
    assert len(pairs) == 3 and diags == []
    assert all(p.source_article == "第一条" for p in pairs)
    assert augment_laws(laws, StubGenerator(1), 3, seed=1) == (pairs, diags)


def test_augment_catalog_fills_missing_only():
    cat = ElementCatalog([ElementDef("自首", "flag", "自首"), ElementDef("坦白", "flag", "坦白", "已有")])
    out = augment_catalog(cat, StubGenerator())
    assert out.get("自首").augmented_description.startswith("自首（")
    assert out.get("坦白").augmented_description == "已有"
