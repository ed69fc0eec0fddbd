"""
Governance Harness

Stores domain knowledge, behavioral constraints and skills as validated
knowledge graphs, assembles governed step prompts with accumulated session
state, and runs and scores multi-step refactoring workflows under three
prompting conditions.
"""

__version__ = "1.0.0"

from .models import (
    ConditionKind, Dimension, GraphDocument, KnowledgeNode, RoleMode, SessionState, Track, Transcript,
)
from .graph import add_node, load_graphs, save_graph, validate_all, validate_graph
from .governance import GovernanceEngine, load_skill, precheck_compliance
from .assembler import TokenBudget, assemble_prompt
from .memory import LearningMode, learning_cycle, replay_discoveries
from .orchestrator import TrialContext, WorkflowSpec, run_trials, run_workflow
from .evaluator import cumulative_score, score_transcript
from .stats import trial_stats
from .metrics import analyze_source
from .reports import ReportGenerator

__all__ = [
    "ConditionKind",
    "Dimension",
    "GraphDocument",
    "KnowledgeNode",
    "RoleMode",
    "SessionState",
    "Track",
    "Transcript",
    "add_node",
    "load_graphs",
    "save_graph",
    "validate_all",
    "validate_graph",
    "GovernanceEngine",
    "load_skill",
    "precheck_compliance",
    "TokenBudget",
    "assemble_prompt",
    "LearningMode",
    "learning_cycle",
    "replay_discoveries",
    "TrialContext",
    "WorkflowSpec",
    "run_trials",
    "run_workflow",
    "cumulative_score",
    "score_transcript",
    "trial_stats",
    "analyze_source",
    "ReportGenerator",
]
