"""
Deterministic Checks

Keyword, pattern and field-presence tests applied to model output. Used by
governance pre-checks and by rubric scoring.

Check kinds:
- must-contain: every literal in payload appears
- must-not-contain: the literal token in payload is absent
- pattern-match: the regex in payload matches somewhere
- all-of-values: every numeric literal appears as a whole value
- payload-fields: every dispatch of an event names all required detail fields
- cross-reference: every name captured by a pattern appears in referenced step outputs

A pre-check judges an intended action, not a finished step: presence
requirements are left to scoring, and an event contract only binds the
dispatches the action actually makes.
"""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional

from .errors import MalformedDocument, SchemaViolation
from .models import Dimension


CHECK_KINDS = (
    "must-contain",
    "must-not-contain",
    "pattern-match",
    "all-of-values",
    "payload-fields",
    "cross-reference",
)

# Kinds that demand something be present; enforced at scoring time only
PRESENCE_KINDS = ("must-contain", "pattern-match", "all-of-values", "cross-reference")


@dataclass
class CheckSpec:
    """One machine-checkable rule."""

    dimension: Dimension
    steps: List[int]
    kind: str
    payload: object
    id: str = ""

    def __post_init__(self):
        if self.kind not in CHECK_KINDS:
            raise SchemaViolation("kind", self.id or None)
        if not self.steps:
            raise SchemaViolation("steps", self.id or None)
        if not self.payload:
            raise SchemaViolation("payload", self.id or None)
        if self.kind == "must-not-contain" and not isinstance(self.payload, str):
            raise SchemaViolation("payload", self.id or None)

    def applies_to(self, step: int) -> bool:
        return step in self.steps

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dimension": self.dimension.value,
            "steps": list(self.steps),
            "kind": self.kind,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CheckSpec":
        try:
            dimension = Dimension(data["dimension"])
        except (KeyError, ValueError):
            raise SchemaViolation("dimension", data.get("id"))
        return cls(
            dimension=dimension,
            steps=[int(s) for s in data.get("steps", [])],
            kind=data.get("kind", ""),
            payload=data.get("payload"),
            id=data.get("id", ""),
        )


@dataclass
class CheckOutcome:
    passed: bool
    evidence: List[str] = field(default_factory=list)


def load_manifest(path) -> List[CheckSpec]:
    """Load a JSON list of CheckSpecs."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise MalformedDocument(path, str(e))
    if not isinstance(data, list):
        raise MalformedDocument(path, "manifest must be a list of checks")
    return [CheckSpec.from_dict(item) for item in data]


# -----------------------------------------------------------------------------
# Evaluation
# -----------------------------------------------------------------------------

def _as_list(payload) -> List[str]:
    return [payload] if isinstance(payload, str) else [str(p) for p in payload]


def _value_pattern(value: str) -> re.Pattern:
    # whole value only: 0.54 must not match inside 10.545
    return re.compile(r"(?<![\d.])" + re.escape(value) + r"(?![\d])")


def _balanced(text: str, start: int, opening: str, closing: str) -> Optional[str]:
    """Text from the opening bracket at start to its matching close."""
    depth = 0
    for i in range(start, len(text)):
        if text[i] == opening:
            depth += 1
        elif text[i] == closing:
            depth -= 1
            if depth == 0:
                return text[start:i + 1]
    return None


def event_dispatches(text: str, event: str) -> List[str]:
    """Init objects of every `new CustomEvent('<event>', {...})` in text."""
    pattern = re.compile(r"new\s+CustomEvent\(\s*(['\"`])" + re.escape(event) + r"\1\s*,\s*")
    found = []
    for match in pattern.finditer(text):
        brace = text.find("{", match.end())
        if brace != match.end():
            found.append("")
            continue
        found.append(_balanced(text, brace, "{", "}") or "")
    return found


def _check_payload_fields(spec: CheckSpec, text: str, precheck: bool = False) -> CheckOutcome:
    event = spec.payload.get("event", "")
    fields = spec.payload.get("fields", [])
    dispatches = event_dispatches(text, event)
    if not dispatches:
        if precheck:
            return CheckOutcome(True)
        return CheckOutcome(False, [f"no dispatch of '{event}'"])
    evidence = []
    for init in dispatches:
        missing = [f for f in fields if not re.search(r"\b" + re.escape(f) + r"\b", init)]
        if missing:
            evidence.append(f"'{event}' detail missing {', '.join(missing)}")
    return CheckOutcome(not evidence, evidence)


def _check_cross_reference(spec: CheckSpec, text: str, outputs: Mapping[int, str]) -> CheckOutcome:
    pattern = re.compile(spec.payload["pattern"])
    referenced = "\n".join(outputs.get(step, "") for step in spec.payload.get("against", []))
    names = []
    for match in pattern.finditer(text):
        name = match.group(1) if match.groups() else match.group(0)
        if name not in names:
            names.append(name)
    if not names:
        return CheckOutcome(False, ["nothing to cross-reference"])
    missing = [n for n in names if not re.search(r"(?<![\w$])" + re.escape(n) + r"(?![\w$])", referenced)]
    return CheckOutcome(not missing, [f"'{n}' not found in referenced steps" for n in missing])


def evaluate_check(
    spec: CheckSpec,
    text: str,
    outputs: Optional[Mapping[int, str]] = None,
    precheck: bool = False,
) -> CheckOutcome:
    """
    Apply one check to a text.

    Args:
        spec: the check
        text: the output under test
        outputs: step -> output map, needed by cross-reference checks
        precheck: judge an intended action; presence kinds pass and an
            event contract with no dispatch passes

    Returns:
        CheckOutcome with pass flag and evidence
    """
    if precheck and spec.kind in PRESENCE_KINDS:
        return CheckOutcome(True)

    if spec.kind == "must-contain":
        missing = [lit for lit in _as_list(spec.payload) if lit not in text]
        return CheckOutcome(not missing, [f"missing '{lit}'" for lit in missing])

    if spec.kind == "must-not-contain":
        if spec.payload in text:
            return CheckOutcome(False, [spec.payload])
        return CheckOutcome(True)

    if spec.kind == "pattern-match":
        match = re.search(spec.payload, text)
        return CheckOutcome(bool(match), [match.group(0)] if match else [f"no match for {spec.payload}"])

    if spec.kind == "all-of-values":
        missing = [v for v in _as_list(spec.payload) if not _value_pattern(v).search(text)]
        return CheckOutcome(not missing, [f"value {v} not found" for v in missing])

    if spec.kind == "payload-fields":
        return _check_payload_fields(spec, text, precheck)

    return _check_cross_reference(spec, text, outputs or {})
