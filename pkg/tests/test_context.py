"""Token estimation, compaction trigger, and tool-result budgeting."""

from __future__ import annotations

import math
import random
import threading

import pytest
from hypothesis import given, strategies as st

from agentkernel.context import (
    BudgetConfig,
    ContextLimits,
    ToolResultPointer,
    budget_tool_result,
    estimate_history_tokens,
    estimate_tokens,
    should_compact,
)
from agentkernel.protocol import InputItem, ItemKind


def _text_item(i: int, chars: int) -> InputItem:
    return InputItem(kind=ItemKind.ASSISTANT_TEXT, id=f"i{i}", content="x" * chars)


class TestEstimate:
    def test_empty(self):
        assert estimate_tokens("") == 0

    def test_four_thousand_chars(self):
        assert estimate_tokens("a" * 4000) == 1000

    def test_matches_ceil_formula_on_random_lengths(self):
        rng = random.Random(11)
        for _ in range(10):
            n = rng.randint(1, 50_000)
            assert estimate_tokens("y" * n) == math.ceil(n / 4)

    def test_linearity_for_multiples_of_four(self):
        for n in (4, 8, 400, 4096):
            x = "z" * n
            assert estimate_tokens(x * 2) == 2 * estimate_tokens(x)

    @given(st.text(max_size=200), st.text(max_size=200))
    def test_monotone_in_concatenation(self, a, b):
        assert estimate_tokens(a + b) >= estimate_tokens(a)

    def test_cache_field_short_circuits(self):
        item = InputItem(kind=ItemKind.USER_TEXT, id="c", content="abcd" * 10, token_estimate_cache=3)
        assert estimate_history_tokens([item]) == 3


class TestShouldCompact:
    def test_empty_history_false(self):
        assert not should_compact([], ContextLimits(model_context_tokens=1000))

    def test_exact_trigger_boundary_inclusive(self):
        limits = ContextLimits(model_context_tokens=1000, compact_trigger_fraction=0.8)
        # 800 tokens == trigger, >= is inclusive
        history = [_text_item(0, 800 * 4)]
        assert should_compact(history, limits)
        assert not should_compact([_text_item(0, 799 * 4)], limits)

    def test_paper_sizing_case(self):
        limits = ContextLimits(model_context_tokens=120_000, compact_trigger_fraction=0.8)
        history = [_text_item(i, 40_000) for i in range(10)]  # 100K tokens
        assert estimate_history_tokens(history) == 100_000
        assert should_compact(history, limits)

    def test_monotone_under_append(self):
        limits = ContextLimits(model_context_tokens=100, compact_trigger_fraction=0.5)
        history: list[InputItem] = []
        was_true = False
        for i in range(30):
            history.append(_text_item(i, 17))
            now = should_compact(history, limits)
            assert not (was_true and not now)
            was_true = now


class TestBudget:
    def test_small_output_identity(self, tmp_path):
        cfg = BudgetConfig(spill_dir=tmp_path)
        assert budget_tool_result("ok", cfg) == "ok"

    def test_exact_threshold_is_inline(self, tmp_path):
        cfg = BudgetConfig(spill_dir=tmp_path)
        output = "a" * 100_000
        assert budget_tool_result(output, cfg) == output

    def test_over_threshold_spills(self, tmp_path):
        cfg = BudgetConfig(spill_dir=tmp_path)
        output = "b" * 100_001
        pointer = budget_tool_result(output, cfg)
        assert isinstance(pointer, ToolResultPointer)
        assert pointer.original_length == 100_001
        assert len(pointer.head) == cfg.head_preview
        assert len(pointer.tail) == cfg.tail_preview
        assert pointer.spill_path.read_bytes() == output.encode("utf-8")

    def test_identity_below_threshold_property(self, tmp_path):
        cfg = BudgetConfig(tool_result_char_threshold=120, head_preview=30, tail_preview=30, spill_dir=tmp_path)
        rng = random.Random(5)
        alphabet = "abc \n\tδλ"
        for _ in range(1000):
            n = rng.randint(0, 120)
            text = "".join(rng.choice(alphabet) for _ in range(n))
            assert budget_tool_result(text, cfg) == text

    def test_recoverability_byte_exact(self, tmp_path):
        cfg = BudgetConfig(tool_result_char_threshold=100, head_preview=10, tail_preview=10, spill_dir=tmp_path)
        rng = random.Random(6)
        for i in range(50):
            text = "".join(rng.choice("xyφ\n") for _ in range(rng.randint(101, 400)))
            pointer = budget_tool_result(text, cfg)
            assert isinstance(pointer, ToolResultPointer)
            assert pointer.spill_path.read_text() == text

    def test_spill_failure_degrades_to_previews(self, tmp_path):
        blocked = tmp_path / "not-a-dir"
        blocked.write_text("file in the way")
        cfg = BudgetConfig(tool_result_char_threshold=50, head_preview=10, tail_preview=10, spill_dir=blocked)
        result = budget_tool_result("c" * 60, cfg)
        assert isinstance(result, str)
        assert "warning" in result
        assert "c" * 10 in result

    def test_concurrent_spills_of_same_content(self, tmp_path):
        cfg = BudgetConfig(tool_result_char_threshold=100, head_preview=10, tail_preview=10, spill_dir=tmp_path)
        output = "d" * 5000
        results = []

        def spill():
            results.append(budget_tool_result(output, cfg))

        threads = [threading.Thread(target=spill) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(isinstance(r, ToolResultPointer) for r in results)
        assert results[0].spill_path.read_text() == output

    def test_invariant_threshold_exceeds_previews(self):
        with pytest.raises(ValueError):
            BudgetConfig(tool_result_char_threshold=100, head_preview=60, tail_preview=60)
