"""
Data models for the governance harness.

Defines structures for:
- Knowledge graph nodes and track documents
- Roles and operation classes
- Session state ("phase memory") and discovery candidates
- Workflow transcripts, rubric scores and trial records
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

from .errors import SchemaViolation


class Track(Enum):
    """The three graph partitions."""
    KNOWLEDGE = "knowledge"
    BEHAVIORS = "behaviors"
    SKILLS = "skills"

    @property
    def namespace(self) -> str:
        """Id prefix every node of this track carries."""
        return {"knowledge": "knowledge", "behaviors": "behavior", "skills": "skill"}[self.value]

    @property
    def allowed_kinds(self) -> frozenset:
        if self is Track.KNOWLEDGE:
            return frozenset({NodeKind.CATEGORY, NodeKind.CONCEPT, NodeKind.DOCUMENT})
        if self is Track.BEHAVIORS:
            return frozenset({NodeKind.CATEGORY, NodeKind.BEHAVIOR})
        return frozenset({NodeKind.CATEGORY, NodeKind.SKILL})

    @classmethod
    def for_node_id(cls, node_id: str) -> Optional["Track"]:
        namespace = node_id.split(":", 1)[0]
        for track in cls:
            if track.namespace == namespace:
                return track
        return None


class NodeKind(Enum):
    CATEGORY = "category"
    CONCEPT = "concept"
    DOCUMENT = "document"
    BEHAVIOR = "behavior"
    SKILL = "skill"


class Priority(Enum):
    """Behavior priority. Lower rank sorts first."""
    CRITICAL = "Critical"
    HIGH = "High"
    MEDIUM = "Medium"

    @property
    def rank(self) -> int:
        return {"Critical": 0, "High": 1, "Medium": 2}[self.value]


class RoleMode(Enum):
    """Mutually exclusive engine roles."""
    BUILDER = "builder"  # mutates structure, never executes tasks
    EXPERT = "expert"    # executes tasks, never mutates structure


class OperationClass(Enum):
    STRUCTURE_MUTATION = "structure-mutation"
    TASK_EXECUTION = "task-execution"
    READ = "read"


class EntryKind(Enum):
    """Kinds of session-state discoveries."""
    CONFIG_KEY = "config-key"
    CLASS_SIGNATURE = "class-signature"
    EVENT_CONTRACT = "event-contract"
    DOM_ID = "dom-id"
    PATTERN = "pattern"


class ConditionKind(Enum):
    """Experiment arms."""
    A_UNGUIDED = "A-unguided"
    B_STATIC = "B-static"
    C_DYNAMIC = "C-dynamic"

    @property
    def label(self) -> str:
        return self.value[0]

    @classmethod
    def from_label(cls, label: str) -> "ConditionKind":
        for kind in cls:
            if label in (kind.label, kind.value):
                return kind
        raise ValueError(f"Unknown condition: {label}")


class Dimension(Enum):
    """Rubric dimensions."""
    E1 = "E1"
    E2 = "E2"
    E3 = "E3"
    E4 = "E4"
    E5 = "E5"
    E6 = "E6"

    @property
    def title(self) -> str:
        return {
            "E1": "Domain Accuracy",
            "E2": "Accessibility",
            "E3": "Pattern Consistency",
            "E4": "Cross-Step Coherence",
            "E5": "Rule Compliance",
            "E6": "Documentation Accuracy",
        }[self.value]


# -----------------------------------------------------------------------------
# Knowledge Graph
# -----------------------------------------------------------------------------

LINK_FIELDS = ("governs", "enforces", "references")


def _require(data: dict, key: str, kind, node_id: Optional[str] = None):
    """Fetch a required field of the given type or raise SchemaViolation."""
    if key not in data or not isinstance(data[key], kind):
        raise SchemaViolation(key, node_id)
    return data[key]


def _optional(data: dict, key: str, kind, node_id: Optional[str] = None):
    value = data.get(key)
    if value is not None and not isinstance(value, kind):
        raise SchemaViolation(key, node_id)
    return value


def _string_list(data: dict, key: str, node_id: Optional[str]) -> List[str]:
    value = data.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaViolation(key, node_id)
    return list(value)


@dataclass
class LinkSet:
    """Cross-track links of a node."""

    governs: List[str] = field(default_factory=list)
    enforces: List[str] = field(default_factory=list)
    references: List[str] = field(default_factory=list)

    def items(self):
        """Yield (field, target) pairs."""
        for name in LINK_FIELDS:
            for target in getattr(self, name):
                yield name, target

    def to_dict(self) -> dict:
        return {
            "governs": list(self.governs),
            "enforces": list(self.enforces),
            "references": list(self.references),
        }

    @classmethod
    def from_dict(cls, data: dict, node_id: Optional[str] = None) -> "LinkSet":
        if not isinstance(data, dict):
            raise SchemaViolation("links", node_id)
        return cls(
            governs=_string_list(data, "governs", node_id),
            enforces=_string_list(data, "enforces", node_id),
            references=_string_list(data, "references", node_id),
        )


@dataclass
class NodeMetadata:
    created: str
    updated: str
    version: int = 1

    def to_dict(self) -> dict:
        return {"created": self.created, "updated": self.updated, "version": self.version}

    @classmethod
    def from_dict(cls, data: dict, node_id: Optional[str] = None) -> "NodeMetadata":
        if not isinstance(data, dict):
            raise SchemaViolation("metadata", node_id)
        version = _require(data, "version", int, node_id)
        if isinstance(version, bool):
            raise SchemaViolation("version", node_id)
        return cls(
            created=_require(data, "created", str, node_id),
            updated=_require(data, "updated", str, node_id),
            version=version,
        )


@dataclass
class KnowledgeNode:
    """
    A typed node of one track graph.

    Behavior nodes may carry machine-checkable `checks`; skill nodes carry
    their `inputs` and `outputs` as lists of {"name", "type"} pairs.
    """

    id: str
    kind: NodeKind
    title: str
    metadata: NodeMetadata
    parent: Optional[str] = None
    links: LinkSet = field(default_factory=LinkSet)
    priority: Optional[Priority] = None
    content: Optional[str] = None
    content_ref: Optional[str] = None
    checks: List[dict] = field(default_factory=list)
    inputs: List[dict] = field(default_factory=list)
    outputs: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        data = {
            "id": self.id,
            "kind": self.kind.value,
            "title": self.title,
            "parent": self.parent,
            "links": self.links.to_dict(),
            "priority": self.priority.value if self.priority else None,
            "content": self.content,
            "content_ref": self.content_ref,
            "metadata": self.metadata.to_dict(),
        }
        # Extension fields are written only when used
        if self.checks:
            data["checks"] = [dict(c) for c in self.checks]
        if self.inputs:
            data["inputs"] = [dict(p) for p in self.inputs]
        if self.outputs:
            data["outputs"] = [dict(p) for p in self.outputs]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeNode":
        """Create from dictionary, checking field presence and types."""
        if not isinstance(data, dict):
            raise SchemaViolation("node")
        node_id = _require(data, "id", str)
        try:
            kind = NodeKind(_require(data, "kind", str, node_id))
        except ValueError:
            raise SchemaViolation("kind", node_id)

        priority_raw = _optional(data, "priority", str, node_id)
        try:
            priority = Priority(priority_raw) if priority_raw is not None else None
        except ValueError:
            raise SchemaViolation("priority", node_id)

        for key in ("checks", "inputs", "outputs"):
            value = data.get(key, [])
            if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
                raise SchemaViolation(key, node_id)

        return cls(
            id=node_id,
            kind=kind,
            title=_require(data, "title", str, node_id),
            metadata=NodeMetadata.from_dict(data.get("metadata"), node_id),
            parent=_optional(data, "parent", str, node_id),
            links=LinkSet.from_dict(data.get("links", {}), node_id),
            priority=priority,
            content=_optional(data, "content", str, node_id),
            content_ref=_optional(data, "content_ref", str, node_id),
            checks=[dict(c) for c in data.get("checks", [])],
            inputs=[dict(p) for p in data.get("inputs", [])],
            outputs=[dict(p) for p in data.get("outputs", [])],
        )


@dataclass
class GraphDocument:
    """One track graph: a single-rooted tree of nodes keyed by id."""

    track: Track
    root: str
    nodes: Dict[str, KnowledgeNode] = field(default_factory=dict)
    version: int = 1

    def get(self, node_id: str) -> Optional[KnowledgeNode]:
        return self.nodes.get(node_id)

    def to_dict(self) -> dict:
        return {
            "track": self.track.value,
            "root": self.root,
            "version": self.version,
            "nodes": {key: self.nodes[key].to_dict() for key in sorted(self.nodes)},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GraphDocument":
        if not isinstance(data, dict):
            raise SchemaViolation("document")
        try:
            track = Track(_require(data, "track", str))
        except ValueError:
            raise SchemaViolation("track")
        raw_nodes = _require(data, "nodes", dict)
        version = data.get("version", 1)
        if not isinstance(version, int) or isinstance(version, bool):
            raise SchemaViolation("version")
        return cls(
            track=track,
            root=_require(data, "root", str),
            nodes={key: KnowledgeNode.from_dict(value) for key, value in raw_nodes.items()},
            version=version,
        )


# -----------------------------------------------------------------------------
# Session State
# -----------------------------------------------------------------------------

@dataclass
class StateEntry:
    """A typed discovery carried forward between workflow steps."""

    kind: EntryKind
    key: str
    value: str
    origin_step: int = 0  # 0 = seed
    validated: bool = False

    def render(self) -> str:
        """One prompt line for the accumulated-state section."""
        origin = "seed" if self.origin_step == 0 else f"S{self.origin_step}"
        return f"- [{self.kind.value}] {self.key}: {self.value} ({origin})"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "key": self.key,
            "value": self.value,
            "origin_step": self.origin_step,
            "validated": self.validated,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StateEntry":
        try:
            kind = EntryKind(data["kind"])
        except (KeyError, ValueError, TypeError):
            raise SchemaViolation("kind", data.get("key") if isinstance(data, dict) else None)
        return cls(
            kind=kind,
            key=str(data.get("key", "")),
            value=str(data.get("value", "")),
            origin_step=int(data.get("origin_step", 0)),
            validated=bool(data.get("validated", False)),
        )


@dataclass
class SessionState:
    """Per-session phase memory."""

    entries: List[StateEntry] = field(default_factory=list)
    phase: str = ""
    version: int = 1

    def has(self, kind: EntryKind, key: str) -> bool:
        return any(e.kind == kind and e.key == key for e in self.entries)

    def copy(self) -> "SessionState":
        return SessionState.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "version": self.version,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionState":
        if not isinstance(data, dict) or not isinstance(data.get("entries", []), list):
            raise SchemaViolation("entries")
        return cls(
            entries=[StateEntry.from_dict(e) for e in data.get("entries", [])],
            phase=str(data.get("phase", "")),
            version=int(data.get("version", 1)),
        )


@dataclass
class DiscoveryCandidate:
    """A discovery proposed by a provider adapter for the learning cycle."""

    raw: str
    proposed_kind: Optional[EntryKind]
    proposed_key: str
    proposed_value: str
    origin_step: int
    durable: bool = False          # promote into a knowledge node as well
    category: Optional[str] = None  # parent category for the node draft

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "proposed_kind": self.proposed_kind.value if self.proposed_kind else None,
            "proposed_key": self.proposed_key,
            "proposed_value": self.proposed_value,
            "origin_step": self.origin_step,
            "durable": self.durable,
            "category": self.category,
        }


# -----------------------------------------------------------------------------
# Transcripts & Results
# -----------------------------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    user_message: str
    assistant_output: str
    system_prompt: Optional[str] = None
    wall_time: float = 0.0
    prompt_sources: List[str] = field(default_factory=list)

    def to_dict(self, include_wall_time: bool = True) -> dict:
        data = {
            "step": self.step,
            "system_prompt": self.system_prompt,
            "user_message": self.user_message,
            "assistant_output": self.assistant_output,
            "prompt_sources": list(self.prompt_sources),
        }
        if include_wall_time:
            data["wall_time"] = self.wall_time
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "StepRecord":
        return cls(
            step=int(data["step"]),
            user_message=data.get("user_message", ""),
            assistant_output=data.get("assistant_output", ""),
            system_prompt=data.get("system_prompt"),
            wall_time=float(data.get("wall_time", 0.0)),
            prompt_sources=list(data.get("prompt_sources", [])),
        )


@dataclass
class Transcript:
    """Recorded run of one workflow under one condition."""

    condition: str
    steps: List[StepRecord] = field(default_factory=list)

    def output_for(self, step: int) -> str:
        for record in self.steps:
            if record.step == step:
                return record.assistant_output
        return ""

    def user_messages(self) -> List[str]:
        return [record.user_message for record in self.steps]

    def to_dict(self, include_wall_time: bool = True) -> dict:
        return {
            "condition": self.condition,
            "steps": [s.to_dict(include_wall_time) for s in self.steps],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transcript":
        return cls(
            condition=data.get("condition", ""),
            steps=[StepRecord.from_dict(s) for s in data.get("steps", [])],
        )


@dataclass
class DimensionScore:
    dimension: Dimension
    per_step_raw: Dict[int, int] = field(default_factory=dict)
    aggregated: float = 0.0

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension.value,
            "per_step_raw": {str(k): v for k, v in sorted(self.per_step_raw.items())},
            "aggregated": self.aggregated,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DimensionScore":
        return cls(
            dimension=Dimension(data["dimension"]),
            per_step_raw={int(k): int(v) for k, v in data.get("per_step_raw", {}).items()},
            aggregated=float(data.get("aggregated", 0.0)),
        )


@dataclass
class RubricResult:
    scores: List[DimensionScore]
    cumulative: float
    deterministic_only: bool = False
    unchecked: List[str] = field(default_factory=list)  # dimensions with no checks
    judge_fallbacks: List[str] = field(default_factory=list)  # judged dimensions scored by checks alone

    def score_for(self, dimension: Dimension) -> Optional[DimensionScore]:
        for score in self.scores:
            if score.dimension == dimension:
                return score
        return None

    def to_dict(self) -> dict:
        return {
            "scores": [s.to_dict() for s in self.scores],
            "cumulative": self.cumulative,
            "deterministic_only": self.deterministic_only,
            "unchecked": list(self.unchecked),
            "judge_fallbacks": list(self.judge_fallbacks),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RubricResult":
        return cls(
            scores=[DimensionScore.from_dict(s) for s in data.get("scores", [])],
            cumulative=float(data.get("cumulative", 0.0)),
            deterministic_only=bool(data.get("deterministic_only", False)),
            unchecked=list(data.get("unchecked", [])),
            judge_fallbacks=list(data.get("judge_fallbacks", [])),
        )


@dataclass
class TrialRecord:
    trial: int
    condition: ConditionKind
    transcript: Transcript
    final_state: Optional[SessionState] = None
    rubric: Optional[RubricResult] = None
    failed: bool = False
    error: str = ""

    def to_dict(self, include_wall_time: bool = True) -> dict:
        return {
            "trial": self.trial,
            "condition": self.condition.value,
            "failed": self.failed,
            "error": self.error,
            "transcript": self.transcript.to_dict(include_wall_time),
            "final_state": self.final_state.to_dict() if self.final_state else None,
            "rubric": self.rubric.to_dict() if self.rubric else None,
        }
