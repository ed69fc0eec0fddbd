"""
Tests for session memory: STATE parsing, the learning cycle, injection and persistence.

Run: pytest tests/test_memory.py -v
"""

import random
import sys
from pathlib import Path

import pytest

# Add parent to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.access import AuditLog
from app.errors import ApprovalWithheld, LinkTargetMissing, MalformedDocument, StaleWrite, ValidationFailed
from app.governance import GovernanceEngine
from app.graph import graph_for_track
from app.memory import (
    LearningMode, extract_state_blocks, inject_state, learning_cycle, load_state,
    parse_state_lines, persist_state, replay_discoveries,
)
from app.models import DiscoveryCandidate, EntryKind, NodeKind, RoleMode, SessionState, Track

DATA_DIR = Path(__file__).parent.parent / "data"


def _candidate(kind=EntryKind.CONFIG_KEY, key="CONFIG.ui.status", value="live region id", step=1, **extra):
    return DiscoveryCandidate(
        raw=f"{kind.value if kind else 'bogus'} | {key} | {value}",
        proposed_kind=kind,
        proposed_key=key,
        proposed_value=value,
        origin_step=step,
        **extra,
    )


class TestParsing:
    """Test STATE line and block parsing."""

    def test_four_field_line(self):
        """A trailing node field marks the discovery durable."""
        [c] = parse_state_lines("pattern | lazy-charts | init on demand | node:knowledge:a:b", 3)
        assert c.proposed_kind is EntryKind.PATTERN
        assert c.durable and c.category == "knowledge:a:b"
        assert c.origin_step == 3

    def test_skips_comments_and_marker(self):
        """Blank lines, comments and the STATE: marker are not candidates."""
        text = "STATE:\n# note\n\nconfig-key | CONFIG.a | b\n"
        assert [c.proposed_key for c in parse_state_lines(text, 1)] == ["CONFIG.a"]

    def test_unknown_kind_kept_for_rejection(self):
        """An unknown kind yields a candidate with no proposed kind."""
        [c] = parse_state_lines("colour | red | warm", 1)
        assert c.proposed_kind is None

    def test_tagged_blocks(self):
        """Tagged blocks carry their own step; untagged ones use the default."""
        text = "```STATE step=2\ndom-id | a | b\n```\nprose\n```STATE\ndom-id | c | d\n```"
        assert [(c.proposed_key, c.origin_step) for c in extract_state_blocks(text, 5)] == [("a", 2), ("c", 5)]

    def test_discovery_log_has_thirteen(self):
        """The shipped log scripts thirteen discoveries over steps 1-4."""
        candidates = extract_state_blocks((DATA_DIR / "state" / "discoveries.log").read_text())
        assert len(candidates) == 13
        assert sorted({c.origin_step for c in candidates}) == [1, 2, 3, 4]


class TestLearningCycle:
    """Test the five-stage cycle."""

    def test_auto_mode_persists_validated(self, graphs, seed_state):
        """A well-formed discovery becomes a validated entry; inputs are untouched."""
        result = learning_cycle(_candidate(), graphs, seed_state)
        assert len(result.state.entries) == 5
        assert result.state.entries[-1].validated
        assert len(seed_state.entries) == 4
        assert result.node is None

    def test_key_inferred_from_sentence(self, graphs, seed_state):
        """'initMap() belongs to MapManager' becomes the key MapManager.initMap."""
        [c] = parse_state_lines("class-signature | | initMap() belongs to MapManager", 2)
        entry = learning_cycle(c, graphs, seed_state).state.entries[-1]
        assert entry.key == "MapManager.initMap"
        assert entry.render() == "- [class-signature] MapManager.initMap: initMap() belongs to MapManager (S2)"

    def test_duplicate_rejected(self, graphs, seed_state):
        """An entry already recorded under the same kind and key fails validation."""
        with pytest.raises(ValidationFailed):
            learning_cycle(_candidate(EntryKind.DOM_ID, "ej-polygons1"), graphs, seed_state)

    def test_missing_kind_rejected(self, graphs, seed_state):
        """Structuring needs a proposed kind."""
        with pytest.raises(ValidationFailed):
            learning_cycle(_candidate(kind=None), graphs, seed_state)

    def test_reviewed_needs_approval(self, graphs, seed_state):
        """Reviewed mode without an approver, or with a refusal, persists nothing."""
        with pytest.raises(ApprovalWithheld):
            learning_cycle(_candidate(), graphs, seed_state, LearningMode.REVIEWED)
        with pytest.raises(ApprovalWithheld):
            learning_cycle(_candidate(), graphs, seed_state, LearningMode.REVIEWED, approver=lambda e, n: False)
        seen = []
        result = learning_cycle(
            _candidate(), graphs, seed_state, "reviewed",
            approver=lambda entry, node: seen.append(entry.key) or True,
        )
        assert seen == ["CONFIG.ui.status"]
        assert len(result.state.entries) == 5

    def test_durable_promotes_node(self, graphs, seed_state):
        """A durable discovery adds a concept node under the builder role and returns to expert."""
        engine = GovernanceEngine(audit=AuditLog())
        candidate = _candidate(EntryKind.PATTERN, "lazy-charts", "init on first use", step=3, durable=True)
        result = learning_cycle(candidate, graphs, seed_state, engine=engine)

        assert result.node.id == "knowledge:lazy-charts"
        assert result.node.kind is NodeKind.CONCEPT
        assert result.node.parent == "knowledge:rbnerr-viz-builder:architecture"
        assert len(graph_for_track(result.graphs, Track.KNOWLEDGE).nodes) == 16
        assert len(graph_for_track(graphs, Track.KNOWLEDGE).nodes) == 15
        assert engine.role is RoleMode.EXPERT
        assert [r.op for r in engine.audit.records] == ["switch-role", "structure-mutation:allow", "switch-role"]

    def test_durable_needs_category(self, graphs, seed_state):
        """Promotion under a non-category parent fails at the linking stage."""
        candidate = _candidate(EntryKind.PATTERN, "lazy-charts", "x", durable=True, category="knowledge:echarts")
        with pytest.raises(LinkTargetMissing):
            learning_cycle(candidate, graphs, seed_state)


class TestReplay:
    """Test discovery-log replay."""

    def test_four_to_seventeen(self, graphs, seed_state):
        """The scripted log grows the seed state from 4 to 17 entries and knowledge from 15 to 16."""
        log = extract_state_blocks((DATA_DIR / "state" / "discoveries.log").read_text())
        result = replay_discoveries(log, seed_state, graphs)
        assert len(result.state.entries) == 17
        assert result.rejected == []
        assert result.added_nodes == ["knowledge:delayed-chart-init"]
        assert len(graph_for_track(result.graphs, Track.KNOWLEDGE).nodes) == 16

    def test_rejected_lines_skipped(self, graphs, seed_state):
        """A bad line is reported and the rest still land."""
        log = parse_state_lines("colour | red | warm\nconfig-key | CONFIG.a | b", 1)
        result = replay_discoveries(log, seed_state, graphs)
        assert result.rejected == ["colour | red | warm"]
        assert len(result.state.entries) == 5


class TestInjection:
    """Test what each step sees."""

    def test_strictly_earlier_steps(self, graphs, seed_state):
        """Step k sees the seed plus discoveries from steps before k."""
        log = extract_state_blocks((DATA_DIR / "state" / "discoveries.log").read_text())
        state = replay_discoveries(log, seed_state, graphs).state
        assert [len(inject_state(state, k)) for k in range(1, 6)] == [4, 8, 12, 15, 17]

    def test_step_must_be_positive(self, seed_state):
        with pytest.raises(ValueError):
            inject_state(seed_state, 0)

    def test_monotone_over_random_logs(self, graphs):
        """Injected entries only grow with the step and keep their relative order."""
        rng = random.Random(17)
        kinds = list(EntryKind)
        for _ in range(1000):
            log = [
                _candidate(rng.choice(kinds), f"key-{rng.randint(0, 12)}", "v", step=rng.randint(1, 5))
                for _ in range(rng.randint(0, 8))
            ]
            state = replay_discoveries(log, SessionState(), graphs).state
            previous = []
            for k in range(1, 7):
                injected = inject_state(state, k)
                assert [e for e in injected if e in previous] == previous
                assert all(e.origin_step < k for e in injected)
                previous = injected


class TestPersistence:
    """Test state files."""

    def test_round_trip(self, tmp_path, seed_state):
        """Persist then load gives identical entries; the version is bumped."""
        path = tmp_path / "state.json"
        persist_state(seed_state, path)
        loaded = load_state(path)
        assert loaded.entries == seed_state.entries
        assert loaded.version == 2 == seed_state.version

    def test_stale_write(self, tmp_path, seed_state):
        """Writing an older state over a newer file is rejected."""
        path = tmp_path / "state.json"
        newer = seed_state.copy()
        persist_state(newer, path)
        persist_state(newer, path)
        with pytest.raises(StaleWrite):
            persist_state(load_state(DATA_DIR / "state" / "seed.json"), path)

    def test_malformed_file(self, tmp_path):
        """Unparseable state is a malformed document."""
        path = tmp_path / "state.json"
        path.write_text("{not json")
        with pytest.raises(MalformedDocument):
            load_state(path)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
