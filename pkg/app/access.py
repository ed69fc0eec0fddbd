"""
Role Access Control

Handles:
- The permission table mapping operation classes to roles
- authorize() decisions
- Role switching
- The append-only audit log (one JSON object per line)
"""

import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional

from .models import OperationClass, RoleMode

logger = logging.getLogger(__name__)


class Decision(Enum):
    ALLOW = "allow"
    DENY = "deny"


@dataclass(frozen=True)
class PermissionTable:
    """Operation class -> roles allowed to perform it."""

    allowed: Dict[OperationClass, FrozenSet[RoleMode]] = field(default_factory=lambda: {
        OperationClass.STRUCTURE_MUTATION: frozenset({RoleMode.BUILDER}),
        OperationClass.TASK_EXECUTION: frozenset({RoleMode.EXPERT}),
        OperationClass.READ: frozenset({RoleMode.BUILDER, RoleMode.EXPERT}),
    })

    def __post_init__(self):
        mutation = self.allowed.get(OperationClass.STRUCTURE_MUTATION, frozenset())
        execution = self.allowed.get(OperationClass.TASK_EXECUTION, frozenset())
        read = self.allowed.get(OperationClass.READ, frozenset())
        if not mutation <= {RoleMode.BUILDER}:
            raise ValueError("structure-mutation may only be granted to builder")
        if not execution <= {RoleMode.EXPERT}:
            raise ValueError("task-execution may only be granted to expert")
        if not read >= {RoleMode.BUILDER, RoleMode.EXPERT}:
            raise ValueError("read must be granted to both roles")


DEFAULT_PERMISSIONS = PermissionTable()


def authorize(
    op_class: OperationClass,
    role: RoleMode,
    table: PermissionTable = DEFAULT_PERMISSIONS,
) -> Decision:
    """Pure lookup in the permission table."""
    if role in table.allowed.get(op_class, frozenset()):
        return Decision.ALLOW
    return Decision.DENY


# -----------------------------------------------------------------------------
# Audit Log
# -----------------------------------------------------------------------------

@dataclass
class AuditRecord:
    """One audited action."""

    timestamp: str
    actor_role: str
    op: str
    target: str

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "actor_role": self.actor_role,
            "op": self.op,
            "target": self.target,
        }


class AuditLog:
    """
    Append-only audit channel.

    With a path, records go only to a JSON Lines file and `records` reads
    them back from it; without one they are kept in memory. A lock
    serializes writers.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = Path(path) if path else None
        self._memory: List[AuditRecord] = []
        self._appended = 0
        self._lock = threading.Lock()

    def append(self, actor_role: RoleMode, op: str, target: str) -> AuditRecord:
        record = AuditRecord(
            timestamp=datetime.now(timezone.utc).isoformat(),
            actor_role=actor_role.value,
            op=op,
            target=target,
        )
        with self._lock:
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(record.to_dict()) + "\n")
            else:
                self._memory.append(record)
            self._appended += 1
        return record

    @property
    def records(self) -> List[AuditRecord]:
        if self.path:
            return self.read(str(self.path))
        return list(self._memory)

    def __len__(self) -> int:
        """Records appended through this log."""
        return self._appended

    @staticmethod
    def read(path: str) -> List[AuditRecord]:
        """Load every record from a JSON Lines audit file."""
        records = []
        p = Path(path)
        if not p.exists():
            return records
        with open(p, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(AuditRecord(**json.loads(line)))
        return records


def switch_role(
    current: RoleMode,
    target: RoleMode,
    audit: Optional[AuditLog] = None,
) -> RoleMode:
    """
    Switch the active role.

    A self-transition is a no-op and is not audited.
    """
    if current == target:
        return current
    if audit is not None:
        audit.append(current, "switch-role", f"{current.value}->{target.value}")
    logger.info(f"Role switch: {current.value} -> {target.value}")
    return target
