"""
Harness Errors

Every failure the engine raises derives from HarnessError and carries the
exit code the CLI returns for it:
- 1 for validation, schema and check failures
- 3 for provider and transport failures

Validation *violations* found by validate_graph are data, not exceptions.
"""

from typing import List, Optional


class HarnessError(Exception):
    """Base class for all harness errors."""

    exit_code = 1


# -----------------------------------------------------------------------------
# Documents & Graphs
# -----------------------------------------------------------------------------

class MalformedDocument(HarnessError):
    """A JSON document could not be parsed."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Malformed document {self.path}: {reason}")


class SchemaViolation(HarnessError):
    """A node is missing a field or has a field of the wrong type."""

    def __init__(self, field: str, node_id: Optional[str] = None):
        self.field = field
        self.node_id = node_id
        where = f" on node {node_id}" if node_id else ""
        super().__init__(f"Schema violation: field '{field}'{where}")


class UnknownNode(HarnessError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"Unknown node: {node_id}")


class DuplicateId(HarnessError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"Duplicate node id: {node_id}")


class DanglingParent(HarnessError):
    def __init__(self, node_id: str, parent: Optional[str]):
        self.node_id = node_id
        self.parent = parent
        super().__init__(f"Node {node_id} names missing parent {parent}")


class StaleWrite(HarnessError):
    """The file on disk is newer than the version the caller loaded."""

    def __init__(self, path, on_disk: int, base: int):
        self.path = str(path)
        self.on_disk = on_disk
        self.base = base
        super().__init__(
            f"Stale write to {self.path}: on-disk version {on_disk} > base version {base}"
        )


class ValidationFailed(HarnessError):
    def __init__(self, reasons: List[str]):
        self.reasons = list(reasons)
        super().__init__("Validation failed: " + "; ".join(self.reasons))


# -----------------------------------------------------------------------------
# Governance
# -----------------------------------------------------------------------------

class PermissionDenied(HarnessError):
    def __init__(self, op_class: str, role: str):
        self.op_class = op_class
        self.role = role
        super().__init__(f"Permission denied: {op_class} is not allowed in {role} mode")


class ApprovalWithheld(HarnessError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"Builder approval withheld for discovery '{key}'")


class LinkTargetMissing(HarnessError):
    def __init__(self, target: Optional[str]):
        self.target = target
        super().__init__(f"Link target missing: {target}")


# -----------------------------------------------------------------------------
# Prompt Assembly
# -----------------------------------------------------------------------------

class AssemblyError(HarnessError):
    """A governed prompt could not be assembled."""


class BudgetInfeasible(AssemblyError):
    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"Token budget {budget} cannot hold the non-truncatable content ({required} tokens)"
        )


# -----------------------------------------------------------------------------
# Providers & Evaluation
# -----------------------------------------------------------------------------

class ProviderError(HarnessError):
    """Transport or credential failure talking to a completion provider."""

    exit_code = 3

    def __init__(self, message: str, transcript=None):
        self.transcript = transcript
        super().__init__(message)


class JudgeUnavailable(HarnessError):
    pass


class MissingDimension(HarnessError):
    def __init__(self, dimension: str):
        self.dimension = dimension
        super().__init__(f"Missing rubric dimension: {dimension}")


class DegenerateSample(HarnessError):
    pass


# -----------------------------------------------------------------------------
# Source Metrics
# -----------------------------------------------------------------------------

class UnterminatedLiteral(HarnessError):
    def __init__(self, line: int, what: str = "literal"):
        self.line = line
        self.what = what
        super().__init__(f"Unterminated {what} starting on line {line}")
