"""
Governance Engine

Handles:
- Deriving behavior rules and skill specs from graph nodes
- Resolving the behaviors that govern a skill, in priority order
- Pre-checking candidate actions against machine-checkable rules
- Holding the active role and gating operations through the permission table
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .access import (
    AuditLog, DEFAULT_PERMISSIONS, Decision, PermissionTable, authorize, switch_role,
)
from .checks import CheckSpec, evaluate_check
from .errors import PermissionDenied, SchemaViolation, UnknownNode
from .graph import LinkClosure, find_node, query, resolve_content
from .models import (
    Dimension, GraphDocument, KnowledgeNode, NodeKind, OperationClass, Priority, RoleMode,
)

logger = logging.getLogger(__name__)

ALL_STEPS = [1, 2, 3, 4, 5]


def _statements(text: str) -> List[str]:
    """Rule statements: the non-blank, non-heading lines of a behavior body."""
    return [line.strip() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]


@dataclass
class BehaviorRule:
    """A priority-ranked constraint derived from one behavior node."""

    id: str
    title: str
    priority: Priority
    statements: List[str]
    checks: List[CheckSpec] = field(default_factory=list)
    governed_skills: List[str] = field(default_factory=list)

    @property
    def sort_key(self) -> Tuple[int, str]:
        return (self.priority.rank, self.id)

    @classmethod
    def from_node(cls, node: KnowledgeNode, base_dir=None) -> "BehaviorRule":
        if node.kind is not NodeKind.BEHAVIOR or node.priority is None:
            raise SchemaViolation("priority", node.id)
        statements = _statements(resolve_content(node, base_dir))
        if not statements:
            raise SchemaViolation("content", node.id)
        checks = []
        for raw in node.checks:
            data = {"dimension": Dimension.E5.value, "steps": ALL_STEPS, "id": node.id}
            data.update(raw)
            checks.append(CheckSpec.from_dict(data))
        return cls(
            id=node.id,
            title=node.title,
            priority=node.priority,
            statements=statements,
            checks=checks,
            governed_skills=list(node.links.governs),
        )


@dataclass
class SkillSpec:
    """A workflow definition and the behaviors that govern it."""

    id: str
    title: str
    required_inputs: List[Tuple[str, str]]
    expected_outputs: List[Tuple[str, str]]
    governing_behaviors: List[str]
    instruction_ref: Optional[str] = None
    references: List[str] = field(default_factory=list)

    @classmethod
    def from_node(cls, node: KnowledgeNode, graphs: Sequence[GraphDocument]) -> "SkillSpec":
        if node.kind is not NodeKind.SKILL:
            raise SchemaViolation("kind", node.id)
        inputs = [(p.get("name", ""), p.get("type", "")) for p in node.inputs]
        outputs = [(p.get("name", ""), p.get("type", "")) for p in node.outputs]
        if not inputs:
            raise SchemaViolation("inputs", node.id)
        if not outputs:
            raise SchemaViolation("outputs", node.id)

        behaviors = [
            n.id for n in query(graphs, LinkClosure(node.id, inverse=("governs",)))
            if n.kind is NodeKind.BEHAVIOR
        ]
        references = [
            n.id for n in query(graphs, LinkClosure(node.id, fields=("references",)))
            if n.kind in (NodeKind.CONCEPT, NodeKind.DOCUMENT)
        ]
        return cls(
            id=node.id,
            title=node.title,
            required_inputs=inputs,
            expected_outputs=outputs,
            governing_behaviors=behaviors,
            instruction_ref=node.content_ref,
            references=references,
        )


def load_skill(graphs: Sequence[GraphDocument], skill_id: str) -> SkillSpec:
    return SkillSpec.from_node(find_node(graphs, skill_id), graphs)


def resolve_governing_behaviors(
    skill: SkillSpec,
    graphs: Sequence[GraphDocument],
    base_dir=None,
) -> List[BehaviorRule]:
    """
    Governing behaviors of a skill, Critical > High > Medium, ties by id.

    Raises:
        UnknownNode: a governing behavior does not resolve
    """
    rules = []
    for behavior_id in skill.governing_behaviors:
        node = find_node(graphs, behavior_id)
        if node.kind is not NodeKind.BEHAVIOR:
            raise UnknownNode(behavior_id)
        rules.append(BehaviorRule.from_node(node, base_dir))
    return sorted(rules, key=lambda r: r.sort_key)


# -----------------------------------------------------------------------------
# Compliance Pre-check
# -----------------------------------------------------------------------------

@dataclass
class ComplianceViolation:
    rule_id: str
    check_kind: str
    evidence: List[str]

    def to_dict(self) -> dict:
        return {"rule_id": self.rule_id, "check_kind": self.check_kind, "evidence": list(self.evidence)}


@dataclass
class ComplianceReport:
    violations: List[ComplianceViolation] = field(default_factory=list)

    @property
    def compliant(self) -> bool:
        return not self.violations

    def rule_ids(self) -> List[str]:
        return [v.rule_id for v in self.violations]

    def to_dict(self) -> dict:
        return {"compliant": self.compliant, "violations": [v.to_dict() for v in self.violations]}


def precheck_compliance(
    candidate: str,
    rules: Sequence[BehaviorRule],
    step: Optional[int] = None,
) -> ComplianceReport:
    """
    Check an intended action against the rules' machine-checkable forms.

    Rules without checks are advisory and contribute nothing. Only checks
    that forbid something can fail here: must-not-contain, and event
    contracts on dispatches the candidate makes. With a step, only checks
    that apply to that step run.
    """
    report = ComplianceReport()
    for rule in rules:
        for check in rule.checks:
            if step is not None and not check.applies_to(step):
                continue
            outcome = evaluate_check(check, candidate, precheck=True)
            if not outcome.passed:
                report.violations.append(ComplianceViolation(rule.id, check.kind, outcome.evidence))
    return report


# -----------------------------------------------------------------------------
# Engine
# -----------------------------------------------------------------------------

class GovernanceEngine:
    """
    Holds exactly one active role and gates operations by it.

    Features:
    - Explicit, audited role switches
    - Permission checks that audit every structure-mutation attempt
    - A builder context for short structure changes during task execution
    """

    def __init__(
        self,
        role: RoleMode = RoleMode.EXPERT,
        permissions: PermissionTable = DEFAULT_PERMISSIONS,
        audit: Optional[AuditLog] = None,
    ):
        self._role = role
        self.permissions = permissions
        self.audit = audit if audit is not None else AuditLog()

    @property
    def role(self) -> RoleMode:
        return self._role

    def switch_role(self, target: RoleMode) -> RoleMode:
        self._role = switch_role(self._role, target, self.audit)
        return self._role

    def authorize(self, op_class: OperationClass) -> Decision:
        return authorize(op_class, self._role, self.permissions)

    def require(self, op_class: OperationClass, target: str = "") -> None:
        """Raise PermissionDenied unless the active role may perform op_class."""
        decision = self.authorize(op_class)
        if op_class is OperationClass.STRUCTURE_MUTATION:
            self.audit.append(self._role, f"{op_class.value}:{decision.value}", target)
        if decision is Decision.DENY:
            logger.warning(f"Denied {op_class.value} on '{target}' in {self._role.value} mode")
            raise PermissionDenied(op_class.value, self._role.value)

    @contextmanager
    def as_builder(self):
        """Temporarily switch to builder, returning to the previous role."""
        previous = self._role
        self.switch_role(RoleMode.BUILDER)
        try:
            yield self
        finally:
            self.switch_role(previous)
