"""
Workflow Orchestrator

Runs the five-step workflow under one prompting condition:
- A (unguided): no system prompt
- B (static): the same static prompt asset at every step
- C (dynamic): a governed prompt assembled per step, with discoveries fed
  through the learning cycle before the next step

Conversation history grows monotonically within a trial. Trials share no
mutable state and may run in parallel.
"""

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import yaml

from .access import AuditLog
from .assembler import TokenBudget, assemble_prompt, estimate_tokens
from .checks import CheckSpec
from .errors import HarnessError, MalformedDocument, ProviderError, ValidationFailed
from .evaluator import dimension_steps, score_transcript
from .governance import GovernanceEngine, load_skill
from .memory import Approver, LearningMode, replay_discoveries
from .models import (
    ConditionKind, Dimension, GraphDocument, OperationClass, RoleMode, SessionState,
    StepRecord, Transcript, TrialRecord,
)
from .providers import Completion, CompletionProvider, Message

logger = logging.getLogger(__name__)


# -----------------------------------------------------------------------------
# Workflow Spec
# -----------------------------------------------------------------------------

@dataclass
class WorkflowStep:
    index: int
    instruction: str
    attachment: Optional[str] = None       # path as written in the workflow file
    attachment_text: Optional[str] = None
    applicable_dimensions: List[Dimension] = field(default_factory=list)
    skill: Optional[str] = None

    def user_message(self) -> str:
        if self.attachment_text is None:
            return self.instruction
        name = Path(self.attachment).name if self.attachment else "attachment"
        return (
            f"{self.instruction}\n\n"
            f"Attachment: {name}\n"
            f"```javascript\n{self.attachment_text.rstrip()}\n```"
        )


@dataclass
class WorkflowSpec:
    steps: List[WorkflowStep]
    name: str = "workflow"
    static_prompt: Optional[Path] = None

    @classmethod
    def from_yaml(cls, path) -> "WorkflowSpec":
        """Load a workflow; attachment and static prompt paths resolve against the file."""
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, UnicodeDecodeError, yaml.YAMLError) as e:
            raise MalformedDocument(path, str(e))
        if not isinstance(data.get("steps"), list):
            raise MalformedDocument(path, "workflow needs a list of steps")

        base = path.parent
        steps = []
        for item in data["steps"]:
            try:
                attachment = item.get("attachment")
                steps.append(WorkflowStep(
                    index=int(item["index"]),
                    instruction=str(item["instruction"]).strip(),
                    attachment=attachment,
                    attachment_text=(base / attachment).read_text(encoding="utf-8") if attachment else None,
                    applicable_dimensions=[Dimension(d) for d in item.get("applicable_dimensions", [])],
                    skill=item.get("skill"),
                ))
            except (KeyError, TypeError, ValueError, OSError) as e:
                raise MalformedDocument(path, f"bad step entry: {e}")

        static = data.get("static_prompt")
        return cls(
            steps=sorted(steps, key=lambda s: s.index),
            name=data.get("name", path.stem),
            static_prompt=base / static if static else None,
        )

    def validate(self, condition: Optional[ConditionKind] = None):
        """
        Raises:
            ValidationFailed: indices are not 1..n, a C step has no skill,
                or B has no readable static prompt
        """
        problems = []
        indices = [s.index for s in self.steps]
        if indices != list(range(1, len(self.steps) + 1)):
            problems.append(f"step indices must be 1..{len(self.steps)}, got {indices}")
        if condition is ConditionKind.C_DYNAMIC:
            problems.extend(f"step {s.index} names no skill" for s in self.steps if not s.skill)
        if condition is ConditionKind.B_STATIC:
            if self.static_prompt is None or not Path(self.static_prompt).is_file():
                problems.append(f"static prompt {self.static_prompt} is not readable")
        if problems:
            raise ValidationFailed(problems)

    def static_text(self) -> str:
        return Path(self.static_prompt).read_text(encoding="utf-8")


# -----------------------------------------------------------------------------
# Single Workflow Run
# -----------------------------------------------------------------------------

@dataclass
class WorkflowResult:
    transcript: Transcript
    state: SessionState
    graphs: List[GraphDocument]
    discoveries: int = 0


def run_workflow(
    spec: WorkflowSpec,
    condition: ConditionKind,
    provider: CompletionProvider,
    graphs: Sequence[GraphDocument],
    seed_state: SessionState,
    budget: Optional[TokenBudget] = None,
    graph_base: Optional[Path] = None,
    engine: Optional[GovernanceEngine] = None,
    categories: Optional[Dict[str, str]] = None,
    mode: LearningMode = LearningMode.AUTO,
    approver: Optional[Approver] = None,
) -> WorkflowResult:
    """
    Run every step of the workflow once.

    Under condition C each step's discoveries go through the learning
    cycle in `mode`; reviewed mode asks `approver` for every entry.

    Raises:
        ProviderError: the provider failed; `transcript` holds the steps so far
        AssemblyError: a C prompt could not be assembled
        ValidationFailed: the spec does not suit the condition
    """
    spec.validate(condition)
    engine = engine or GovernanceEngine()
    state = seed_state.copy()
    graphs = list(graphs)
    static = spec.static_text() if condition is ConditionKind.B_STATIC else None

    transcript = Transcript(condition=condition.value)
    history: List[Message] = []
    discovered = 0

    for step in spec.steps:
        engine.require(OperationClass.TASK_EXECUTION, f"{spec.name}:step-{step.index}")

        system, sources = None, []
        if condition is ConditionKind.B_STATIC:
            system = static
        elif condition is ConditionKind.C_DYNAMIC:
            skill = load_skill(graphs, step.skill)
            prompt = assemble_prompt(step.index, skill, graphs, state, budget, graph_base)
            system, sources = prompt.text, prompt.sources
        if system is not None:
            logger.info(f"Step {step.index} ({condition.label}) system prompt: {estimate_tokens(system)} tokens")

        message = step.user_message()
        history.append({"role": "user", "content": message})
        started = time.perf_counter()
        try:
            completion: Completion = provider.complete(system, list(history))
        except ProviderError as e:
            e.transcript = transcript
            logger.error(f"Provider failed at step {step.index} ({condition.label}): {e}")
            raise
        wall_time = time.perf_counter() - started
        history.append({"role": "assistant", "content": completion.text})

        transcript.steps.append(StepRecord(
            step=step.index,
            user_message=message,
            assistant_output=completion.text,
            system_prompt=system,
            wall_time=wall_time,
            prompt_sources=sources,
        ))

        if condition is ConditionKind.C_DYNAMIC and completion.discoveries:
            replay = replay_discoveries(
                completion.discoveries, state, graphs, mode, approver,
                engine=engine, categories=categories,
            )
            state, graphs = replay.state, replay.graphs
            discovered += len(completion.discoveries) - len(replay.rejected)

    logger.debug(f"Workflow {spec.name} ({condition.label}) finished with {len(state.entries)} state entries")
    return WorkflowResult(transcript, state, graphs, discovered)


# -----------------------------------------------------------------------------
# Trials
# -----------------------------------------------------------------------------

@dataclass
class TrialContext:
    """Everything a trial reads. Nothing here is mutated by a trial."""

    graphs: Sequence[GraphDocument]
    seed_state: SessionState
    manifest: Sequence[CheckSpec]
    graph_base: Optional[Path] = None
    budget: Optional[TokenBudget] = None
    weights: Optional[Mapping[Dimension, float]] = None
    judge: Optional[CompletionProvider] = None
    judge_dimensions: Sequence[Dimension] = (Dimension.E4, Dimension.E6)
    audit: Optional[AuditLog] = None
    categories: Optional[Dict[str, str]] = None
    role: RoleMode = RoleMode.EXPERT
    learning_mode: LearningMode = LearningMode.AUTO
    approver: Optional[Approver] = None


class _SerializedProvider:
    """Wraps a provider that cannot take overlapping calls."""

    serialize = False

    def __init__(self, provider: CompletionProvider):
        self._provider = provider
        self._lock = threading.Lock()

    def complete(self, system, messages):
        with self._lock:
            return self._provider.complete(system, messages)


def _serialized(provider: CompletionProvider) -> CompletionProvider:
    return _SerializedProvider(provider) if getattr(provider, "serialize", False) else provider


def _check_coverage(spec: WorkflowSpec, manifest: Sequence[CheckSpec]):
    """Warn where workflow and manifest disagree on a dimension's steps."""
    by_manifest = dimension_steps(manifest)
    for dimension in Dimension:
        declared = sorted(s.index for s in spec.steps if dimension in s.applicable_dimensions)
        if declared != by_manifest[dimension]:
            logger.warning(
                f"Dimension {dimension.value}: workflow lists steps {declared}, "
                f"manifest checks steps {by_manifest[dimension]}"
            )


def _run_trial(
    trial: int,
    spec: WorkflowSpec,
    condition: ConditionKind,
    provider: CompletionProvider,
    context: TrialContext,
) -> TrialRecord:
    logger.info(f"Trial {trial} ({condition.label}) started")
    engine = GovernanceEngine(role=context.role, audit=context.audit)
    try:
        result = run_workflow(
            spec, condition, provider, context.graphs, context.seed_state,
            budget=context.budget, graph_base=context.graph_base,
            engine=engine, categories=context.categories,
            mode=context.learning_mode, approver=context.approver,
        )
        rubric = score_transcript(
            result.transcript, context.manifest, context.weights,
            context.judge, context.judge_dimensions,
        )
    except HarnessError as e:
        logger.warning(f"Trial {trial} ({condition.label}) failed: {e}")
        transcript = getattr(e, "transcript", None) or Transcript(condition=condition.value)
        return TrialRecord(trial, condition, transcript, failed=True, error=f"{type(e).__name__}: {e}")

    logger.info(f"Trial {trial} ({condition.label}) finished: cumulative {rubric.cumulative:.4f}")
    return TrialRecord(trial, condition, result.transcript, result.state, rubric)


def run_trials(
    spec: WorkflowSpec,
    condition: ConditionKind,
    provider: CompletionProvider,
    n: int,
    context: TrialContext,
    jobs: int = 1,
) -> List[TrialRecord]:
    """
    Run n independent trials, each from a fresh copy of the seed state.

    A failed trial is recorded as failed and the others still run. Results
    are ordered by trial index.
    """
    if n < 0:
        raise ValueError("trial count must be >= 0")
    if n == 0:
        return []
    _check_coverage(spec, context.manifest)

    if jobs <= 1:
        return [_run_trial(i, spec, condition, provider, context) for i in range(1, n + 1)]

    shared = _serialized(provider)
    if context.judge is not None:
        context = replace(context, judge=_serialized(context.judge))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_trial, i, spec, condition, shared, context) for i in range(1, n + 1)]
        records = [f.result() for f in futures]
    return sorted(records, key=lambda r: r.trial)
