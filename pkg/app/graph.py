"""
Knowledge Graph Substrate

Manages:
- Loading and saving the three track documents (knowledge, behaviors, skills)
- Structural validation (single root, acyclic parents, resolvable links)
- Builder-only mutation (add_node, update_node)
- Deterministic selector queries
"""

import hashlib
import json
import logging
import re
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .access import Decision, authorize
from .errors import (
    DanglingParent, DuplicateId, MalformedDocument, PermissionDenied,
    SchemaViolation, StaleWrite, UnknownNode, ValidationFailed,
)
from .models import (
    GraphDocument, KnowledgeNode, LINK_FIELDS, LinkSet, NodeKind,
    NodeMetadata, OperationClass, Priority, RoleMode, Track,
)

logger = logging.getLogger(__name__)

# namespace(:scope)*:name, lowercase kebab-case segments
NODE_ID_PATTERN = re.compile(r"^[a-z][a-z0-9]*(?:-[a-z0-9]+)*(?::[a-z0-9]+(?:-[a-z0-9]+)*)+$")

TRACK_FILES = {
    Track.KNOWLEDGE: "knowledge.json",
    Track.BEHAVIORS: "behaviors.json",
    Track.SKILLS: "skills.json",
}


def utc_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


# -----------------------------------------------------------------------------
# Persistence
# -----------------------------------------------------------------------------

def _reject_duplicate_keys(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise ValueError(f"duplicate key '{key}'")
        seen[key] = value
    return seen


def _read_document(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise MalformedDocument(path, str(e))
    if not text.strip():
        raise MalformedDocument(path, "empty document")
    try:
        data = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except ValueError as e:
        raise MalformedDocument(path, str(e))
    if not isinstance(data, dict):
        raise MalformedDocument(path, "top level is not an object")
    return data


def load_graph(path) -> GraphDocument:
    """
    Load one track document.

    Only per-node field presence and types are checked here; structural
    checks belong to validate_graph.

    Raises:
        MalformedDocument: unparseable or empty file
        SchemaViolation: missing or mistyped field
    """
    path = Path(path)
    graph = GraphDocument.from_dict(_read_document(path))
    logger.info(f"Loaded {graph.track.value} graph from {path} ({len(graph.nodes)} nodes, v{graph.version})")
    return graph


def _on_disk_version(path: Path) -> Optional[int]:
    if not path.exists():
        return None
    try:
        version = json.loads(path.read_text(encoding="utf-8")).get("version", 1)
    except (ValueError, AttributeError, OSError):
        return None
    return version if isinstance(version, int) else None


def save_graph(g: GraphDocument, path) -> GraphDocument:
    """
    Persist a graph, bumping its document version.

    Returns:
        The saved graph carrying the new version

    Raises:
        StaleWrite: the file on disk is newer than g.version
    """
    path = Path(path)
    on_disk = _on_disk_version(path)
    if on_disk is not None and on_disk > g.version:
        raise StaleWrite(path, on_disk, g.version)

    saved = replace(g, version=g.version + 1)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(saved.to_dict(), f, indent=2, ensure_ascii=False)
        f.write("\n")
    logger.info(f"Saved {g.track.value} graph to {path} (v{saved.version})")
    return saved


def load_graphs(graph_dir) -> List[GraphDocument]:
    """Load the three track documents from a directory, in track order."""
    graph_dir = Path(graph_dir)
    return [load_graph(graph_dir / TRACK_FILES[track]) for track in Track]


def graph_digest(g: GraphDocument) -> str:
    """SHA-256 over the canonical JSON of a graph."""
    canonical = json.dumps(g.to_dict(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def resolve_content(node: KnowledgeNode, base_dir=None) -> str:
    """Inline content, or the text of the referenced markdown file."""
    if node.content is not None:
        return node.content
    if node.content_ref and base_dir is not None:
        path = Path(base_dir) / node.content_ref
        if path.exists():
            try:
                return path.read_text(encoding="utf-8")
            except UnicodeDecodeError as e:
                raise MalformedDocument(path, str(e))
        logger.warning(f"Content file {path} for {node.id} not found")
    return ""


# -----------------------------------------------------------------------------
# Validation
# -----------------------------------------------------------------------------

@dataclass
class Violation:
    code: str
    node_id: Optional[str]
    detail: str = ""
    ids: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"code": self.code, "node_id": self.node_id, "detail": self.detail, "ids": list(self.ids)}

    def __str__(self) -> str:
        return f"{self.code}({self.node_id}){': ' + self.detail if self.detail else ''}"


@dataclass
class ValidationReport:
    """Violations found by validate_graph. Empty means valid."""

    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def for_code(self, code: str) -> List[Violation]:
        return [v for v in self.violations if v.code == code]

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def _node_violations(g: GraphDocument, key: str, node: KnowledgeNode, known_ids: set) -> List[Violation]:
    found = []
    if key != node.id:
        found.append(Violation("IdKeyMismatch", node.id, f"stored under key {key}"))
    if not NODE_ID_PATTERN.match(node.id):
        found.append(Violation("InvalidId", node.id))
    elif node.id.split(":", 1)[0] != g.track.namespace:
        found.append(Violation("NamespaceMismatch", node.id, f"expected {g.track.namespace}:"))
    if node.kind not in g.track.allowed_kinds:
        found.append(Violation("KindMismatch", node.id, f"{node.kind.value} not allowed in {g.track.value}"))
    if node.kind is NodeKind.BEHAVIOR and node.priority is None:
        found.append(Violation("MissingPriority", node.id))
    if node.kind is not NodeKind.BEHAVIOR and node.priority is not None:
        found.append(Violation("UnexpectedPriority", node.id))
    if node.content is not None and node.content_ref is not None:
        found.append(Violation("ContentConflict", node.id))
    if node.metadata.version < 1:
        found.append(Violation("InvalidVersion", node.id, str(node.metadata.version)))

    for link_field in LINK_FIELDS:
        targets = getattr(node.links, link_field)
        for target, count in sorted(Counter(targets).items()):
            if count > 1:
                found.append(Violation("DuplicateLink", node.id, f"{link_field} -> {target}"))
        for target in sorted(set(targets)):
            if target == node.id:
                found.append(Violation("SelfLink", node.id, link_field))
            elif target not in known_ids:
                found.append(Violation("BrokenLink", node.id, f"{link_field} -> {target}"))
    return found


def _structural_violations(g: GraphDocument) -> List[Violation]:
    found = []
    nodes = g.nodes

    parentless = sorted(n.id for n in nodes.values() if n.parent is None)
    if not parentless:
        found.append(Violation("MissingRoot", g.root))
    elif len(parentless) > 1:
        found.append(Violation("MultipleRoots", g.root, ids=parentless))
    if g.root not in nodes or nodes[g.root].parent is not None:
        found.append(Violation("RootMismatch", g.root, "declared root is not a parentless node"))

    dangling = set()
    for key in sorted(nodes):
        parent = nodes[key].parent
        if parent is not None and parent not in nodes:
            dangling.add(key)
            found.append(Violation("DanglingParent", key, f"parent {parent} not found"))

    # Parent-chain cycles
    in_cycle = set()
    settled = set()
    for start in sorted(nodes):
        path, on_path = [], {}
        current = start
        while current is not None and current in nodes and current not in settled:
            if current in on_path:
                cycle = path[on_path[current]:]
                if not in_cycle.intersection(cycle):
                    found.append(Violation("CycleDetected", min(cycle), ids=sorted(cycle)))
                in_cycle.update(cycle)
                break
            on_path[current] = len(path)
            path.append(current)
            current = nodes[current].parent
        settled.update(path)

    # Reachability from the declared root via reversed parent edges
    children: Dict[str, List[str]] = {}
    for node in nodes.values():
        if node.parent is not None:
            children.setdefault(node.parent, []).append(node.id)
    reached = set()
    if g.root in nodes:
        queue = deque([g.root])
        while queue:
            current = queue.popleft()
            if current in reached:
                continue
            reached.add(current)
            queue.extend(children.get(current, []))
    for key in sorted(nodes):
        if key not in reached and key not in in_cycle and key not in dangling and nodes[key].parent is not None:
            found.append(Violation("Unreachable", key, "parent chain does not reach the root"))
    return found


def validate_graph(g: GraphDocument, peers: Sequence[GraphDocument] = ()) -> ValidationReport:
    """
    Enumerate every structural and link violation of a track graph.

    Link targets are resolved against g plus peers; parents only within g.
    """
    violations: List[Violation] = []

    own_ids = Counter(node.id for node in g.nodes.values())
    peer_ids = Counter(node.id for peer in peers for node in peer.nodes.values())
    known_ids = set(own_ids) | set(peer_ids)

    for node_id in sorted(own_ids):
        if own_ids[node_id] > 1 or node_id in peer_ids:
            violations.append(Violation("DuplicateId", node_id))

    for key in sorted(g.nodes):
        violations.extend(_node_violations(g, key, g.nodes[key], known_ids))

    violations.extend(_structural_violations(g))
    return ValidationReport(violations)


def validate_all(graphs: Sequence[GraphDocument]) -> ValidationReport:
    """Validate every graph against the others as peers."""
    combined = ValidationReport()
    for i, g in enumerate(graphs):
        peers = [p for j, p in enumerate(graphs) if j != i]
        combined.violations.extend(validate_graph(g, peers).violations)
    return combined


# -----------------------------------------------------------------------------
# Mutation (builder only)
# -----------------------------------------------------------------------------

def _check_node_schema(g: GraphDocument, node: KnowledgeNode):
    if not NODE_ID_PATTERN.match(node.id) or node.id.split(":", 1)[0] != g.track.namespace:
        raise SchemaViolation("id", node.id)
    if node.kind not in g.track.allowed_kinds:
        raise SchemaViolation("kind", node.id)
    if (node.kind is NodeKind.BEHAVIOR) != (node.priority is not None):
        raise SchemaViolation("priority", node.id)
    if node.content is not None and node.content_ref is not None:
        raise SchemaViolation("content_ref", node.id)


def _check_links(node: KnowledgeNode, known_ids: set):
    problems = []
    for link_field in LINK_FIELDS:
        targets = getattr(node.links, link_field)
        if len(set(targets)) != len(targets):
            problems.append(f"duplicate {link_field} target")
        for target in targets:
            if target == node.id:
                problems.append(f"self-link in {link_field}")
            elif target not in known_ids:
                problems.append(f"broken {link_field} link to {target}")
    if problems:
        raise ValidationFailed(problems)


def _require_builder(role: RoleMode):
    if authorize(OperationClass.STRUCTURE_MUTATION, role) is Decision.DENY:
        raise PermissionDenied(OperationClass.STRUCTURE_MUTATION.value, role.value)


def add_node(
    g: GraphDocument,
    node: KnowledgeNode,
    role: RoleMode,
    peers: Sequence[GraphDocument] = (),
) -> GraphDocument:
    """
    Add a node under an existing parent.

    The input graph is left untouched; a new graph value is returned with
    the node at version 1.

    Raises:
        PermissionDenied: role is not builder
        SchemaViolation: node fails the per-node schema
        DuplicateId: id already present in g or a peer
        DanglingParent: parent missing from g
    """
    _require_builder(role)
    _check_node_schema(g, node)
    if node.parent is None:
        raise SchemaViolation("parent", node.id)
    if node.id in g.nodes or any(node.id in peer.nodes for peer in peers):
        raise DuplicateId(node.id)
    if node.parent not in g.nodes:
        raise DanglingParent(node.id, node.parent)

    known = set(g.nodes) | {n for peer in peers for n in peer.nodes}
    _check_links(node, known)

    now = utc_now()
    added = replace(
        node,
        links=LinkSet(**node.links.to_dict()),
        metadata=NodeMetadata(created=now, updated=now, version=1),
    )
    nodes = dict(g.nodes)
    nodes[added.id] = added
    logger.info(f"Added node {added.id} under {added.parent}")
    return replace(g, nodes=nodes)


UPDATABLE_FIELDS = {"title", "content", "content_ref", "links", "priority", "checks", "inputs", "outputs"}


def update_node(
    g: GraphDocument,
    node_id: str,
    role: RoleMode,
    peers: Sequence[GraphDocument] = (),
    **changes,
) -> GraphDocument:
    """Change fields of an existing node, bumping its version."""
    _require_builder(role)
    if node_id not in g.nodes:
        raise UnknownNode(node_id)
    unknown = sorted(set(changes) - UPDATABLE_FIELDS)
    if unknown:
        raise ValidationFailed([f"field '{name}' cannot be updated" for name in unknown])

    current = g.nodes[node_id]
    metadata = NodeMetadata(
        created=current.metadata.created,
        updated=utc_now(),
        version=current.metadata.version + 1,
    )
    updated = replace(current, metadata=metadata, **changes)
    _check_node_schema(g, updated)
    known = set(g.nodes) | {n for peer in peers for n in peer.nodes}
    _check_links(updated, known)

    nodes = dict(g.nodes)
    nodes[node_id] = updated
    logger.info(f"Updated node {node_id} to v{metadata.version}")
    return replace(g, nodes=nodes)


# -----------------------------------------------------------------------------
# Queries
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class ChildrenOf:
    node_id: str


@dataclass(frozen=True)
class ByKind:
    kind: NodeKind


@dataclass(frozen=True)
class ByPriority:
    priority: Priority


@dataclass(frozen=True)
class LinkClosure:
    """
    Transitive closure from node_id over link fields.

    `fields` are followed forward; `inverse` fields are followed backward
    (nodes that link *to* the current node).
    """

    node_id: str
    fields: Tuple[str, ...] = ()
    inverse: Tuple[str, ...] = ()


def all_nodes(graphs: Iterable[GraphDocument]) -> Dict[str, KnowledgeNode]:
    merged: Dict[str, KnowledgeNode] = {}
    for g in graphs:
        for node_id, node in g.nodes.items():
            merged.setdefault(node_id, node)
    return merged


def find_node(graphs: Iterable[GraphDocument], node_id: str) -> KnowledgeNode:
    for g in graphs:
        if node_id in g.nodes:
            return g.nodes[node_id]
    raise UnknownNode(node_id)


def graph_for_track(graphs: Iterable[GraphDocument], track: Track) -> GraphDocument:
    for g in graphs:
        if g.track is track:
            return g
    raise UnknownNode(track.value)


def replace_graph(graphs: Sequence[GraphDocument], updated: GraphDocument) -> List[GraphDocument]:
    """Return a new graph list with the document of updated's track swapped."""
    return [updated if g.track is updated.track else g for g in graphs]


def _link_closure(nodes: Dict[str, KnowledgeNode], selector: LinkClosure) -> set:
    reverse: Dict[str, set] = {}
    for node in nodes.values():
        for link_field in selector.inverse:
            for target in getattr(node.links, link_field):
                reverse.setdefault(target, set()).add(node.id)

    seen = {selector.node_id}
    queue = deque([selector.node_id])
    while queue:
        current = nodes.get(queue.popleft())
        if current is None:
            continue
        neighbours = set()
        for link_field in selector.fields:
            neighbours.update(getattr(current.links, link_field))
        neighbours.update(reverse.get(current.id, ()))
        for neighbour in sorted(neighbours):
            if neighbour not in seen and neighbour in nodes:
                seen.add(neighbour)
                queue.append(neighbour)
    seen.discard(selector.node_id)
    return seen


def _matches(nodes: Dict[str, KnowledgeNode], selector) -> set:
    if isinstance(selector, ChildrenOf):
        if selector.node_id not in nodes:
            raise UnknownNode(selector.node_id)
        return {n.id for n in nodes.values() if n.parent == selector.node_id}
    if isinstance(selector, ByKind):
        return {n.id for n in nodes.values() if n.kind is selector.kind}
    if isinstance(selector, ByPriority):
        return {n.id for n in nodes.values() if n.priority is selector.priority}
    if isinstance(selector, LinkClosure):
        if selector.node_id not in nodes:
            raise UnknownNode(selector.node_id)
        return _link_closure(nodes, selector)
    raise TypeError(f"Unsupported selector: {selector!r}")


def query(graphs: Sequence[GraphDocument], *selectors) -> List[KnowledgeNode]:
    """
    Select nodes across the graphs.

    Several selectors intersect. Results are ordered lexicographically by id.
    """
    nodes = all_nodes(graphs)
    if not selectors:
        return [nodes[k] for k in sorted(nodes)]
    matched = None
    for selector in selectors:
        ids = _matches(nodes, selector)
        matched = ids if matched is None else matched & ids
    return [nodes[k] for k in sorted(matched)]
