"""
Session Memory

Manages:
- The five-stage learning cycle (discover, structure, link, validate, persist)
- Injection of accumulated entries into later workflow steps
- State persistence with stale-write protection
- Parsing of STATE blocks emitted alongside assistant output
"""

import json
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from .errors import ApprovalWithheld, LinkTargetMissing, MalformedDocument, SchemaViolation, StaleWrite, ValidationFailed
from .governance import GovernanceEngine
from .graph import NODE_ID_PATTERN, add_node, graph_for_track, replace_graph, utc_now
from .models import (
    DiscoveryCandidate, EntryKind, GraphDocument, KnowledgeNode, NodeKind,
    NodeMetadata, OperationClass, SessionState, StateEntry, Track,
)

logger = logging.getLogger(__name__)


class LearningMode(Enum):
    AUTO = "auto"          # schema validation only
    REVIEWED = "reviewed"  # schema validation plus builder approval


Approver = Callable[[StateEntry, Optional[KnowledgeNode]], bool]

DEFAULT_CATEGORIES = {
    "config-key": "knowledge:rbnerr-viz-builder:architecture",
    "class-signature": "knowledge:rbnerr-viz-builder:architecture",
    "event-contract": "knowledge:rbnerr-viz-builder:architecture",
    "dom-id": "knowledge:rbnerr-viz-builder:accessibility",
    "pattern": "knowledge:rbnerr-viz-builder:architecture",
}


# -----------------------------------------------------------------------------
# STATE block parsing
# -----------------------------------------------------------------------------

STATE_BLOCK = re.compile(r"```STATE:?(?:[ \t]+step=(\d+))?[ \t]*\n(.*?)```", re.DOTALL)


def parse_state_lines(text: str, origin_step: int) -> List[DiscoveryCandidate]:
    """
    Parse discovery lines of the form

        kind | key | value [| node[:category-id]]

    Blank lines, `#` comments and a leading `STATE:` marker are skipped.
    Unknown kinds yield candidates with no proposed kind; the learning
    cycle rejects them.
    """
    candidates = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.rstrip(":") == "STATE":
            continue
        parts = [p.strip() for p in line.split("|")]
        try:
            kind = EntryKind(parts[0])
        except ValueError:
            kind = None
        durable, category = False, None
        if len(parts) > 3 and parts[3].startswith("node"):
            durable = True
            if ":" in parts[3]:
                category = parts[3].split(":", 1)[1].strip() or None
        candidates.append(DiscoveryCandidate(
            raw=line,
            proposed_kind=kind,
            proposed_key=parts[1] if len(parts) > 1 else "",
            proposed_value=parts[2] if len(parts) > 2 else "",
            origin_step=origin_step,
            durable=durable,
            category=category,
        ))
    return candidates


def extract_state_blocks(text: str, origin_step: int = 0) -> List[DiscoveryCandidate]:
    """
    Candidates from every fenced ```STATE block in a text.

    A block opened as ```STATE step=3 carries its own origin step; untagged
    blocks use origin_step. Discovery logs are sequences of tagged blocks.
    """
    candidates = []
    for tag, block in STATE_BLOCK.findall(text or ""):
        candidates.extend(parse_state_lines(block, int(tag) if tag else origin_step))
    return candidates


# -----------------------------------------------------------------------------
# Learning cycle
# -----------------------------------------------------------------------------

@dataclass
class CycleResult:
    state: SessionState
    node: Optional[KnowledgeNode]
    graphs: List[GraphDocument]


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


_BELONGS_TO = re.compile(r"(\w+)\(\)\s+(?:method\s+)?(?:should\s+)?belongs?\s+to\s+(?:an?\s+|the\s+)?(\w+)")


def _infer_key(candidate: DiscoveryCandidate) -> str:
    if candidate.proposed_kind is EntryKind.CLASS_SIGNATURE:
        match = _BELONGS_TO.search(candidate.raw)
        if match:
            return f"{match.group(2)}.{match.group(1)}"
    return ""


def learning_cycle(
    candidate: DiscoveryCandidate,
    graphs: Sequence[GraphDocument],
    state: SessionState,
    mode=LearningMode.AUTO,
    approver: Optional[Approver] = None,
    engine: Optional[GovernanceEngine] = None,
    categories: Optional[Dict[str, str]] = None,
) -> CycleResult:
    """
    Run one discovery through the five stages.

    Nothing is persisted when any stage fails; state and graphs are returned
    as new values, the inputs are never modified.

    Raises:
        ValidationFailed: malformed candidate or schema violation
        ApprovalWithheld: reviewed mode without approval
        LinkTargetMissing: the node draft has no valid category to link under
    """
    mode = LearningMode(mode)
    categories = categories or DEFAULT_CATEGORIES

    # 1. Discovery
    if not candidate.raw.strip() or candidate.origin_step < 1:
        raise ValidationFailed(["candidate must carry raw text and an origin step >= 1"])

    # 2. Structuring
    if candidate.proposed_kind is None:
        raise ValidationFailed(["candidate has no proposed kind"])
    key = candidate.proposed_key.strip() or _infer_key(candidate)
    value = candidate.proposed_value.strip() or candidate.raw.strip()
    entry = StateEntry(candidate.proposed_kind, key, value, candidate.origin_step, validated=False)

    draft = None
    if candidate.durable:
        now = utc_now()
        draft = KnowledgeNode(
            id=f"knowledge:{_slug(key)}",
            kind=NodeKind.CONCEPT,
            title=key,
            content=value,
            metadata=NodeMetadata(created=now, updated=now, version=1),
        )

    # 3. Linking
    knowledge = None
    if draft is not None:
        category = candidate.category or categories.get(entry.kind.value)
        knowledge = graph_for_track(graphs, Track.KNOWLEDGE)
        parent = knowledge.get(category) if category else None
        if parent is None or parent.kind is not NodeKind.CATEGORY:
            raise LinkTargetMissing(category)
        draft = replace(draft, parent=category)

    # 4. Validation
    problems = []
    if not key or "\n" in key:
        problems.append("entry key is empty or spans lines")
    if state.has(entry.kind, key):
        problems.append(f"entry ({entry.kind.value}, {key}) already recorded")
    if draft is not None:
        if not NODE_ID_PATTERN.match(draft.id):
            problems.append(f"node id {draft.id} is not a valid id")
        elif any(draft.id in g.nodes for g in graphs):
            problems.append(f"node {draft.id} already exists")
    if problems:
        raise ValidationFailed(problems)
    if mode is LearningMode.REVIEWED and (approver is None or not approver(entry, draft)):
        raise ApprovalWithheld(key)

    # 5. Persistence
    persisted = replace(entry, validated=True)
    new_state = SessionState(
        entries=[replace(e) for e in state.entries] + [persisted],
        phase=state.phase,
        version=state.version,
    )
    new_graphs = list(graphs)
    node = None
    if draft is not None:
        engine = engine or GovernanceEngine()
        peers = [g for g in graphs if g.track is not Track.KNOWLEDGE]
        with engine.as_builder():
            engine.require(OperationClass.STRUCTURE_MUTATION, draft.id)
            updated = add_node(knowledge, draft, engine.role, peers)
        new_graphs = replace_graph(graphs, updated)
        node = updated.nodes[draft.id]
    logger.info(
        f"Learned {persisted.kind.value} '{persisted.key}' from step {persisted.origin_step}"
        + (f", node {node.id}" if node else "")
    )
    return CycleResult(new_state, node, new_graphs)


@dataclass
class ReplayResult:
    state: SessionState
    graphs: List[GraphDocument]
    added_nodes: List[str] = field(default_factory=list)
    rejected: List[str] = field(default_factory=list)


def replay_discoveries(
    candidates: Sequence[DiscoveryCandidate],
    state: SessionState,
    graphs: Sequence[GraphDocument],
    mode=LearningMode.AUTO,
    approver: Optional[Approver] = None,
    engine: Optional[GovernanceEngine] = None,
    categories: Optional[Dict[str, str]] = None,
) -> ReplayResult:
    """Feed a discovery log through the learning cycle, skipping rejected candidates."""
    result = ReplayResult(state=state, graphs=list(graphs))
    for candidate in candidates:
        try:
            cycle = learning_cycle(candidate, result.graphs, result.state, mode, approver, engine, categories)
        except (ValidationFailed, ApprovalWithheld, LinkTargetMissing) as e:
            logger.warning(f"Discovery rejected ({candidate.raw}): {e}")
            result.rejected.append(candidate.raw)
            continue
        result.state, result.graphs = cycle.state, cycle.graphs
        if cycle.node is not None:
            result.added_nodes.append(cycle.node.id)
    return result


# -----------------------------------------------------------------------------
# Injection & Persistence
# -----------------------------------------------------------------------------

def inject_state(state: SessionState, step: int) -> List[StateEntry]:
    """Validated entries discovered before the given step, in append order."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return [e for e in state.entries if e.validated and e.origin_step < step]


def load_state(path) -> SessionState:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise MalformedDocument(path, str(e))
    try:
        return SessionState.from_dict(data)
    except (SchemaViolation, TypeError, ValueError) as e:
        raise MalformedDocument(path, str(e))


def persist_state(state: SessionState, path) -> SessionState:
    """
    Write state to disk, bumping its version in place.

    Raises:
        StaleWrite: the file on disk carries a newer version than state
    """
    path = Path(path)
    if path.exists():
        try:
            on_disk = int(json.loads(path.read_text(encoding="utf-8")).get("version", 1))
        except (ValueError, AttributeError, TypeError):
            on_disk = None
        if on_disk is not None and on_disk > state.version:
            raise StaleWrite(path, on_disk, state.version)

    state.version += 1
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(state.to_dict(), f, indent=2, ensure_ascii=False)
        f.write("\n")
    logger.info(f"Persisted session state to {path} (v{state.version}, {len(state.entries)} entries)")
    return state
