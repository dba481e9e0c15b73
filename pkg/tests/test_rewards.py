import itertools
import math

import pytest
from hypothesis import given, strategies as st

from lexpipe.rewards import (
    COMPONENTS,
    AmountTask,
    FormatSpec,
    combined_reward,
    duplication_penalty,
    format_reward,
    garbled_penalty,
    is_allowed_char,
    load_format_spec,
    longest_common_substring,
    month_template,
    process_reward,
    summary_template,
)

FILL = {"applicant": "张某", "court": "杭州市中级", "case information": "张某诉某局行政处罚一案", "law article": "101"}


class TestFormat:
    def test_full(self):
        spec = summary_template()
        assert format_reward(spec.render(FILL), spec) == 1.0

    def test_empty(self):
        assert format_reward("", summary_template()) == 0.0

    def test_unfilled_law_article(self):
        spec = summary_template()
        values = {k: v for k, v in FILL.items() if k != "law article"}
        k = len(spec.required_slots)
        assert math.isclose(format_reward(spec.render(values), spec), (k - 1) / k)

    def test_pattern_enforced(self):
        spec = summary_template()
        assert format_reward(spec.render(dict(FILL, **{"law article": "abc"})), spec) == 0.75

    def test_order_enforced(self):
        spec = FormatSpec("A [x] B [y] C", ("x", "y"))
        assert format_reward("A 1 B 2 C", spec) == 1.0
        assert format_reward("B 2 C A 1", spec) < 1.0

    def test_month_template(self):
        spec = month_template()
        assert format_reward("18个月", spec) == 1.0
        assert format_reward("十八个月", spec) == 0.0

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            FormatSpec("[a] [b]", ("a",))
        with pytest.raises(ValueError):
            FormatSpec("[a]", ("a", "b"))

    def test_json_round_trip(self, tmp_path):
        import json

        spec = summary_template()
        (tmp_path / "s.json").write_text(json.dumps(spec.to_json()))
        assert load_format_spec(tmp_path / "s.json") == spec

    @given(st.sets(st.sampled_from(sorted(FILL))), st.sampled_from(sorted(FILL)))
    def test_monotone_in_filled_slots(self, filled, extra):
        spec = summary_template()
        base = format_reward(spec.render({k: FILL[k] for k in filled}), spec)
        more = format_reward(spec.render({k: FILL[k] for k in filled | {extra}}), spec)
        assert more >= base


class TestGarbled:
    def test_clean(self):
        assert garbled_penalty("本院认为，被告人犯故意伤害罪。") == 0.0

    def test_replacement_chars(self):
        assert math.isclose(garbled_penalty("abcdefgh��"), -0.2)

    def test_empty(self):
        assert garbled_penalty("") == 0.0

    def test_mojibake_matches_class_count(self):
        s = "判决Ã©â€锟斤拷ï¿½"
        bad = sum(not is_allowed_char(c) for c in s)
        assert bad == 7  # Ã © â € ï ¿ ½
        assert math.isclose(garbled_penalty(s), -bad / len(s))

    @given(st.text(max_size=40))
    def test_zero_iff_all_allowed(self, s):
        assert (garbled_penalty(s) == 0.0) == all(is_allowed_char(c) for c in s)
        assert -1.0 <= garbled_penalty(s) <= 0.0


class TestDuplication:
    INPUT = "".join(chr(0x4E00 + (i * 37) % 2000) for i in range(200))

    def test_disjoint(self):
        assert duplication_penalty("完全无关", self.INPUT) == 0.0

    def test_full_copy(self):
        assert duplication_penalty(self.INPUT, self.INPUT) == -0.5

    def test_short_span_in_long_output(self):
        out = "甲" * 30 + self.INPUT[10:50] + "乙" * 30
        assert len(out) == 100
        assert longest_common_substring(out, self.INPUT) == 40
        assert duplication_penalty(out, self.INPUT) == 0.0

    @given(st.text("ab", max_size=15), st.text("ab", max_size=15))
    def test_lcs_matches_brute_force(self, a, b):
        brute = max(
            (j - i for i, j in itertools.combinations(range(len(a) + 1), 2) if a[i:j] in b),
            default=0,
        )
        assert longest_common_substring(a, b) == brute


TASK = AmountTask()
FULL = "作案次数：2次。涉案物品：手机、项链。物品价值：585.3元、77.7元。涉案总金额：663.0元。"


class TestProcess:
    def test_full(self):
        assert process_reward(FULL, TASK) == 1.0

    def test_wrong_total(self):
        assert process_reward(FULL.replace("663.0", "585.3"), TASK) == 0.75

    def test_tolerance(self):
        assert process_reward(FULL.replace("663.0", "663.01"), TASK) == 1.0

    def test_order_matters(self):
        swapped = "涉案物品：手机。作案次数：1次。物品价值：5元。涉案总金额：5元。"
        assert process_reward(swapped, TASK) < 1.0

    def test_empty(self):
        assert process_reward("", TASK) == 0.0

    @given(st.sets(st.integers(0, 3)))
    def test_removing_markers_never_helps(self, drop):
        text = FULL
        for k in drop:
            text = text.replace(TASK.markers[k], "")
        r = process_reward(text, TASK)
        assert 0.0 <= r <= process_reward(FULL, TASK)


class TestCombined:
    def test_zero(self):
        assert combined_reward("", "", None).total == 0.0

    def test_example_total(self):
        # components (1, -0.2, 0, 0.75) under unit weights
        spec = FormatSpec("[a]", ("a",))
        base = FULL.replace("663.0", "1.0")
        base += "。" * (-len(base) % 4)
        out = base + "�" * (len(base) // 4)
        bd = combined_reward(out, "", spec, TASK)
        assert bd.components["format_conformance"] == 1.0
        assert math.isclose(bd.components["garbled_penalty"], -0.2)
        assert bd.components["duplication_penalty"] == 0.0
        assert bd.components["step_structure"] + bd.components["arithmetic_consistency"] == 0.75
        assert math.isclose(bd.total, 1.55)

    def test_negative_weights(self):
        with pytest.raises(ValueError):
            combined_reward("x", "", None, weights={"format": -1})

    @given(st.text(max_size=30), st.permutations(COMPONENTS))
    def test_total_is_order_free(self, s, order):
        bd = combined_reward(s, "", month_template(), TASK)
        assert math.isclose(bd.total, sum(bd.components[c] for c in order), abs_tol=1e-12)
