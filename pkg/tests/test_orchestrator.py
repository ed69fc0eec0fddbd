"""
Tests for the workflow orchestrator and trial runner.

Run: pytest tests/test_orchestrator.py -v
"""

import sys
from dataclasses import replace
from pathlib import Path

import pytest

# Add parent to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.assembler import estimate_tokens
from app.errors import MalformedDocument, ProviderError, ValidationFailed
from app.memory import LearningMode
from app.models import ConditionKind, Dimension
from app.orchestrator import WorkflowSpec, run_trials, run_workflow
from app.providers import Completion, MockProvider

FIXTURES_DIR = Path(__file__).parent / "fixtures"


class FailingProvider:
    """Answers until a given step, then raises."""

    serialize = False

    def __init__(self, inner, fail_at):
        self.inner = inner
        self.fail_at = fail_at

    def complete(self, system, messages):
        if sum(1 for m in messages if m["role"] == "user") == self.fail_at:
            raise ProviderError("connection reset")
        return self.inner.complete(system, messages)


class RecordingProvider:
    """Keeps every (system, messages) pair it was called with."""

    serialize = True

    def __init__(self):
        self.calls = []

    def complete(self, system, messages):
        self.calls.append((system, list(messages)))
        return Completion(f"output {len(self.calls)}")


def _run(workflow, condition, mock_dir, trial_context):
    return run_workflow(
        workflow, condition, MockProvider(mock_dir, condition), trial_context.graphs,
        trial_context.seed_state, trial_context.budget, trial_context.graph_base,
    )


class TestWorkflowSpec:
    """Test loading and validating the workflow file."""

    def test_five_steps(self, workflow):
        """Steps are 1..5, each names a skill, step 1 carries the legacy file."""
        assert [s.index for s in workflow.steps] == [1, 2, 3, 4, 5]
        assert all(s.skill for s in workflow.steps)
        assert "Attachment: index.js" in workflow.steps[0].user_message()
        assert workflow.steps[4].applicable_dimensions == [Dimension.E4, Dimension.E6]

    def test_gap_in_indices(self, workflow):
        """Indices must run 1..n with no gaps."""
        broken = replace(workflow, steps=[workflow.steps[0], workflow.steps[2]])
        with pytest.raises(ValidationFailed):
            broken.validate()

    def test_static_prompt_required_for_b(self, workflow):
        with pytest.raises(ValidationFailed):
            replace(workflow, static_prompt=None).validate(ConditionKind.B_STATIC)

    def test_missing_steps_list(self, tmp_path):
        """A workflow without a steps list is malformed."""
        path = tmp_path / "workflow.yaml"
        path.write_text("name: empty\n")
        with pytest.raises(MalformedDocument):
            WorkflowSpec.from_yaml(path)


class TestConditions:
    """Test what each condition sends to the provider."""

    def test_unguided_has_no_system_prompt(self, workflow, mock_dir, trial_context):
        """Condition A never sends a system prompt."""
        transcript = _run(workflow, ConditionKind.A_UNGUIDED, mock_dir, trial_context).transcript
        assert len(transcript.steps) == 5
        assert all(s.system_prompt is None for s in transcript.steps)

    def test_static_prompt_every_step(self, workflow, mock_dir, trial_context):
        """Condition B sends the same ~4,000-token prompt at every step."""
        transcript = _run(workflow, ConditionKind.B_STATIC, mock_dir, trial_context).transcript
        prompts = {s.system_prompt for s in transcript.steps}
        assert len(prompts) == 1
        assert 3000 <= estimate_tokens(prompts.pop()) <= 5000

    def test_dynamic_step_four_prompt(self, workflow, mock_dir, trial_context):
        """Condition C assembles the golden step-4 prompt from the discoveries of steps 1-3."""
        result = _run(workflow, ConditionKind.C_DYNAMIC, mock_dir, trial_context)
        step4 = result.transcript.steps[3]
        golden = (FIXTURES_DIR / "step4_prompt.txt").read_text(encoding="utf-8")
        assert step4.system_prompt == golden
        assert all(estimate_tokens(s.system_prompt) <= 1680 for s in result.transcript.steps)
        assert len(result.state.entries) == 17

    def test_user_messages_identical(self, workflow, mock_dir, trial_context):
        """Conditions differ only in the system prompt; the user turns match."""
        messages = {
            condition: _run(workflow, condition, mock_dir, trial_context).transcript.user_messages()
            for condition in ConditionKind
        }
        assert len(messages[ConditionKind.A_UNGUIDED]) == 5
        assert messages[ConditionKind.A_UNGUIDED] == messages[ConditionKind.B_STATIC]
        assert messages[ConditionKind.A_UNGUIDED] == messages[ConditionKind.C_DYNAMIC]
        assert messages[ConditionKind.A_UNGUIDED][0] == workflow.steps[0].user_message()

    def test_history_grows(self, workflow, trial_context):
        """Step k sees 2k-1 messages, the earlier ones unchanged."""
        provider = RecordingProvider()
        run_workflow(workflow, ConditionKind.A_UNGUIDED, provider, trial_context.graphs, trial_context.seed_state)
        lengths = [len(messages) for _, messages in provider.calls]
        assert lengths == [1, 3, 5, 7, 9]
        assert provider.calls[4][1][:7] == provider.calls[3][1]
        assert provider.calls[1][1][1] == {"role": "assistant", "content": "output 1"}

    def test_seed_state_untouched(self, workflow, mock_dir, trial_context):
        """A run works on its own copy of the seed state."""
        _run(workflow, ConditionKind.C_DYNAMIC, mock_dir, trial_context)
        assert len(trial_context.seed_state.entries) == 4


class TestTrials:
    """Test repeated trials."""

    def test_mock_trials_reproducible(self, workflow, mock_dir, trial_context):
        """Mock trials of the same condition produce identical transcripts and scores."""
        records = run_trials(workflow, ConditionKind.C_DYNAMIC, MockProvider(mock_dir, ConditionKind.C_DYNAMIC), 3, trial_context)
        assert [r.trial for r in records] == [1, 2, 3]
        outputs = {tuple(s.assistant_output for s in r.transcript.steps) for r in records}
        assert len(outputs) == 1
        assert {r.rubric.cumulative for r in records} == {10.0}
        assert all(r.rubric.deterministic_only for r in records)

    def test_reviewed_learning(self, workflow, mock_dir, trial_context):
        """Reviewed trials keep only what the approver accepts."""
        seen = []

        def refuse(entry, node):
            seen.append(entry.key)
            return False

        provider = MockProvider(mock_dir, ConditionKind.C_DYNAMIC)
        refused = replace(trial_context, learning_mode=LearningMode.REVIEWED, approver=refuse)
        [record] = run_trials(workflow, ConditionKind.C_DYNAMIC, provider, 1, refused)
        assert seen
        assert len(record.state.entries) == 4

        accepted = replace(trial_context, learning_mode=LearningMode.REVIEWED, approver=lambda entry, node: True)
        [record] = run_trials(workflow, ConditionKind.C_DYNAMIC, provider, 1, accepted)
        assert len(record.state.entries) == 17

    def test_reviewed_without_approver(self, workflow, mock_dir, trial_context):
        """Without an approver nothing is learned."""
        context = replace(trial_context, learning_mode=LearningMode.REVIEWED)
        result = run_workflow(
            workflow, ConditionKind.C_DYNAMIC, MockProvider(mock_dir, ConditionKind.C_DYNAMIC),
            context.graphs, context.seed_state, context.budget, context.graph_base,
            mode=LearningMode.REVIEWED,
        )
        assert len(result.state.entries) == 4
        assert result.discoveries == 0

    def test_zero_trials(self, workflow, mock_dir, trial_context):
        assert run_trials(workflow, ConditionKind.A_UNGUIDED, MockProvider(mock_dir), 0, trial_context) == []

    def test_negative_trials(self, workflow, mock_dir, trial_context):
        with pytest.raises(ValueError):
            run_trials(workflow, ConditionKind.A_UNGUIDED, MockProvider(mock_dir), -1, trial_context)

    def test_parallel_matches_sequential(self, workflow, mock_dir, trial_context):
        """Parallel trials are ordered by index and score like sequential ones."""
        provider = MockProvider(mock_dir, ConditionKind.A_UNGUIDED)
        sequential = run_trials(workflow, ConditionKind.A_UNGUIDED, provider, 4, trial_context)
        parallel = run_trials(workflow, ConditionKind.A_UNGUIDED, provider, 4, trial_context, jobs=3)
        assert [r.trial for r in parallel] == [1, 2, 3, 4]
        assert [r.rubric.cumulative for r in parallel] == [r.rubric.cumulative for r in sequential]
        assert parallel[0].rubric.cumulative == pytest.approx(9.4643, abs=1e-4)

    def test_provider_failure_marks_trial(self, workflow, mock_dir, trial_context):
        """A provider error fails that trial, keeps its partial transcript, and does not score it."""
        provider = FailingProvider(MockProvider(mock_dir), fail_at=3)
        [record] = run_trials(workflow, ConditionKind.A_UNGUIDED, provider, 1, trial_context)
        assert record.failed
        assert record.error.startswith("ProviderError")
        assert record.rubric is None
        assert [s.step for s in record.transcript.steps] == [1, 2]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
