"""
Tests for governed prompt assembly.

Run: pytest tests/test_assembler.py -v
"""

import sys
from pathlib import Path

import pytest

# Add parent to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.assembler import SECTION_HEADINGS, TokenBudget, assemble_prompt, estimate_tokens
from app.errors import BudgetInfeasible
from app.governance import load_skill
from app.graph import add_node, graph_for_track, replace_graph
from app.memory import parse_state_lines, replay_discoveries
from app.models import LinkSet, NodeKind, Priority, RoleMode, Track

FIXTURES_DIR = Path(__file__).parent / "fixtures"
UI_MANAGER = "skill:rbnerr-viz-builder:ui-manager"


@pytest.fixture
def step4_state(graphs, seed_state, mock_dir):
    """Seed state plus the scripted discoveries of steps 1-3."""
    candidates = []
    for k in (1, 2, 3):
        candidates.extend(parse_state_lines((mock_dir / f"step-{k}.state").read_text(), k))
    return replay_discoveries(candidates, seed_state, graphs).state


@pytest.fixture
def step4_prompt(graphs, graph_dir, step4_state):
    return assemble_prompt(4, load_skill(graphs, UI_MANAGER), graphs, step4_state, TokenBudget(1680), graph_dir)


class TestEstimate:
    """Test the token estimate."""

    def test_chars_over_four_rounded_up(self):
        """Four characters per token, rounded up."""
        assert estimate_tokens("") == 0
        assert estimate_tokens("abcd") == 1
        assert estimate_tokens("abcde") == 2

    def test_budget_must_be_positive(self):
        """A zero budget is a configuration error."""
        with pytest.raises(ValueError):
            TokenBudget(0)


class TestStepFourPrompt:
    """Test the governed prompt for the UIManager step."""

    def test_matches_golden_file(self, step4_prompt):
        """Section order, delimiters and state lines match the golden prompt byte for byte."""
        golden = (FIXTURES_DIR / "step4_prompt.txt").read_text(encoding="utf-8")
        assert step4_prompt.text == golden

    def test_section_order(self, step4_prompt):
        """Role, Critical, High, then accumulated state; no advisory section."""
        assert [s.name for s in step4_prompt.sections] == [
            "role-and-context", "mandatory-constraints", "required-constraints", "accumulated-state",
        ]
        assert step4_prompt.text.startswith("## Role & Context\nYou are performing step 4")

    def test_rules_in_their_sections(self, step4_prompt):
        """Critical rules are mandatory, the observer rule is required."""
        assert step4_prompt.section("mandatory-constraints").sources == [
            "behavior:rbnerr-viz-builder:cross-module-event-contract",
            "behavior:rbnerr-viz-builder:dom-id-preservation",
        ]
        assert step4_prompt.section("required-constraints").sources == [
            "behavior:rbnerr-viz-builder:mutation-observer-replacement",
        ]

    def test_state_carries_earlier_steps(self, step4_prompt):
        """Config keys from step 1 and handlers from step 2 are injected."""
        state = step4_prompt.section("accumulated-state").body
        assert "CONFIG.mapbox.token" in state
        assert "MapManager.handleEvent()" in state
        assert len(state.splitlines()) == 15

    def test_within_budget(self, step4_prompt):
        """About 1,400 tokens, within +/- 20%."""
        assert 1120 <= step4_prompt.estimated_tokens <= 1680
        assert step4_prompt.estimated_tokens == estimate_tokens(step4_prompt.text)
        assert not step4_prompt.truncated and not step4_prompt.compressed

    def test_deterministic(self, graphs, graph_dir, step4_state, step4_prompt):
        """The same inputs assemble the same text."""
        again = assemble_prompt(4, load_skill(graphs, UI_MANAGER), graphs, step4_state, TokenBudget(1680), graph_dir)
        assert again.text == step4_prompt.text

    def test_step_one_sees_seed_only(self, graphs, graph_dir, step4_state):
        """Nothing discovered at step 1 or later is injected into step 1."""
        skill = load_skill(graphs, "skill:rbnerr-viz-builder:config-extraction")
        prompt = assemble_prompt(1, skill, graphs, step4_state, None, graph_dir)
        lines = prompt.section("accumulated-state").body.splitlines()
        assert len(lines) == 4
        assert all(line.endswith("(seed)") for line in lines)


class TestTruncation:
    """Test the over-budget ladder."""

    def test_high_rule_compressed(self, graphs, graph_dir, step4_state):
        """A tight budget cuts the High rule to its first statement."""
        prompt = assemble_prompt(4, load_skill(graphs, UI_MANAGER), graphs, step4_state, TokenBudget(1150), graph_dir)
        assert prompt.compressed == ["behavior:rbnerr-viz-builder:mutation-observer-replacement"]
        body = prompt.section("required-constraints").body
        assert "Do not use MutationObserver" in body
        assert "UI changes that other modules" not in body
        assert prompt.estimated_tokens <= 1150

    def test_critical_never_cut(self, graphs, graph_dir, step4_state):
        """When compression is not enough, assembly fails instead of dropping Critical rules."""
        with pytest.raises(BudgetInfeasible) as exc:
            assemble_prompt(4, load_skill(graphs, UI_MANAGER), graphs, step4_state, TokenBudget(1100), graph_dir)
        assert exc.value.budget == 1100
        assert exc.value.required > 1100

    def test_medium_rule_dropped_first(self, graphs, graph_dir, step4_state, make_node, step4_prompt):
        """An advisory rule is dropped before anything else is touched."""
        behaviors = graph_for_track(graphs, Track.BEHAVIORS)
        advisory = make_node(
            "behavior:rbnerr-viz-builder:prefer-const",
            kind=NodeKind.BEHAVIOR,
            parent="behavior:rbnerr-viz-builder",
            priority=Priority.MEDIUM,
            content="Prefer const over let.\nKeep handlers short.",
            links=LinkSet(governs=[UI_MANAGER]),
        )
        peers = [g for g in graphs if g.track is not Track.BEHAVIORS]
        extended = replace_graph(graphs, add_node(behaviors, advisory, RoleMode.BUILDER, peers))
        skill = load_skill(extended, UI_MANAGER)

        unbounded = assemble_prompt(4, skill, extended, step4_state, None, graph_dir)
        assert unbounded.section("advisory-notes") is not None
        assert SECTION_HEADINGS["advisory-notes"] in unbounded.text

        bounded = assemble_prompt(4, skill, extended, step4_state, TokenBudget(step4_prompt.estimated_tokens), graph_dir)
        assert bounded.truncated == ["behavior:rbnerr-viz-builder:prefer-const"]
        assert bounded.compressed == []
        assert bounded.text == step4_prompt.text


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
