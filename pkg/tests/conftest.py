"""
Shared fixtures built from the shipped data/ directory.
"""

import shutil
import sys
from pathlib import Path

import pytest

# Add parent to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.assembler import TokenBudget
from app.checks import load_manifest
from app.graph import load_graphs
from app.memory import load_state
from app.models import NodeKind, NodeMetadata, KnowledgeNode, Transcript, StepRecord, ConditionKind
from app.orchestrator import TrialContext, WorkflowSpec

PROJECT_ROOT = Path(__file__).parent.parent
DATA_DIR = PROJECT_ROOT / "data"
FIXTURES_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture
def graph_dir():
    return DATA_DIR / "graph"


@pytest.fixture
def graphs(graph_dir):
    """The three seed track graphs (15 + 5 + 8 nodes)."""
    return load_graphs(graph_dir)


@pytest.fixture
def graph_copy(tmp_path, graph_dir):
    """A writable copy of the seed graph directory."""
    target = tmp_path / "graph"
    shutil.copytree(graph_dir, target)
    return target


@pytest.fixture
def seed_state():
    return load_state(DATA_DIR / "state" / "seed.json")


@pytest.fixture
def manifest():
    return load_manifest(DATA_DIR / "manifest.json")


@pytest.fixture
def workflow():
    return WorkflowSpec.from_yaml(DATA_DIR / "workflow.yaml")


@pytest.fixture
def mock_dir():
    return DATA_DIR / "mock"


@pytest.fixture
def trial_context(graphs, seed_state, manifest, graph_dir):
    """Context for mock trials without a judge."""
    return TrialContext(
        graphs=graphs,
        seed_state=seed_state,
        manifest=manifest,
        graph_base=graph_dir,
        budget=TokenBudget(1680),
    )


@pytest.fixture
def make_node():
    """Factory for minimal valid nodes."""
    def _make(node_id, kind=NodeKind.CONCEPT, parent=None, **fields):
        fields.setdefault("title", node_id.rsplit(":", 1)[-1].replace("-", " ").title())
        return KnowledgeNode(
            id=node_id,
            kind=kind,
            parent=parent,
            metadata=NodeMetadata(created="2025-03-01T09:00:00Z", updated="2025-03-01T09:00:00Z", version=1),
            **fields,
        )
    return _make


@pytest.fixture
def mock_outputs(mock_dir):
    """Shared scripted outputs, step -> text."""
    return {k: (mock_dir / f"step-{k}.txt").read_text(encoding="utf-8") for k in range(1, 6)}


@pytest.fixture
def make_transcript():
    """Build a transcript from a step -> output mapping."""
    def _make(outputs, condition=ConditionKind.C_DYNAMIC):
        return Transcript(
            condition=condition.value,
            steps=[StepRecord(step=k, user_message=f"step {k}", assistant_output=text) for k, text in sorted(outputs.items())],
        )
    return _make
