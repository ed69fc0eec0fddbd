"""
Context Assembler

Builds the per-step governed system prompt from resolved behaviors, linked
knowledge and injected session state, under a token budget.

Layout:
    ## Role & Context
    ## Mandatory Constraints (Critical Priority)
    ## Required Constraints (High Priority)
    ## Advisory Notes (Medium Priority)
    ## Accumulated State

Constraint bodies are delimited by `--- id: <node-id> ---` lines so every
line stays traceable to its node.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .errors import BudgetInfeasible
from .governance import BehaviorRule, SkillSpec, resolve_governing_behaviors
from .graph import find_node, resolve_content
from .memory import inject_state
from .models import GraphDocument, Priority, SessionState

logger = logging.getLogger(__name__)

SECTION_HEADINGS = {
    "role-and-context": "Role & Context",
    "mandatory-constraints": "Mandatory Constraints (Critical Priority)",
    "required-constraints": "Required Constraints (High Priority)",
    "advisory-notes": "Advisory Notes (Medium Priority)",
    "accumulated-state": "Accumulated State",
}
SECTION_ORDER = list(SECTION_HEADINGS)

PRIORITY_SECTIONS = {
    Priority.CRITICAL: "mandatory-constraints",
    Priority.HIGH: "required-constraints",
    Priority.MEDIUM: "advisory-notes",
}


def estimate_tokens(text: str) -> int:
    """Approximate token count: characters / 4, rounded up."""
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class TokenBudget:
    max_tokens: int

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass
class PromptSection:
    name: str
    body: str
    sources: List[str] = field(default_factory=list)

    def render(self) -> str:
        return f"## {SECTION_HEADINGS[self.name]}\n{self.body}"


@dataclass
class AssembledPrompt:
    sections: List[PromptSection]
    estimated_tokens: int = 0
    truncated: List[str] = field(default_factory=list)   # Medium rules dropped
    compressed: List[str] = field(default_factory=list)  # High rules cut to their first statement

    @property
    def text(self) -> str:
        return "\n\n".join(section.render() for section in self.sections) + "\n"

    @property
    def sources(self) -> List[str]:
        seen = []
        for section in self.sections:
            for source in section.sources:
                if source not in seen:
                    seen.append(source)
        return seen

    def section(self, name: str) -> Optional[PromptSection]:
        for section in self.sections:
            if section.name == name:
                return section
        return None

    def to_dict(self) -> dict:
        return {
            "sections": [{"name": s.name, "sources": list(s.sources)} for s in self.sections],
            "estimated_tokens": self.estimated_tokens,
            "truncated": list(self.truncated),
            "compressed": list(self.compressed),
        }


# -----------------------------------------------------------------------------
# Rendering
# -----------------------------------------------------------------------------

def _parameters(params) -> str:
    return ", ".join(f"{name} ({kind})" for name, kind in params)


def _role_section(step: int, skill: SkillSpec, graphs: Sequence[GraphDocument], base_dir) -> PromptSection:
    lines = [
        f"You are performing step {step}: {skill.title}.",
        f"Required inputs: {_parameters(skill.required_inputs)}",
        f"Expected outputs: {_parameters(skill.expected_outputs)}",
    ]
    body = "\n".join(lines)
    sources = [skill.id]
    for node_id in skill.references:
        node = find_node(graphs, node_id)
        content = resolve_content(node, base_dir).strip()
        body += f"\n\n--- id: {node.id} ---\n# Knowledge: {node.title}\n{content}"
        sources.append(node.id)
    return PromptSection("role-and-context", body, sources)


def _rule_block(rule: BehaviorRule, compressed: bool = False) -> str:
    statements = rule.statements[:1] if compressed else rule.statements
    return "\n".join([f"--- id: {rule.id} ---", f"# Behavior: {rule.title}", *statements])


def _build(
    role: PromptSection,
    rules: List[BehaviorRule],
    compressed: set,
    state_lines: List[str],
) -> List[PromptSection]:
    sections = [role]
    for priority, name in PRIORITY_SECTIONS.items():
        group = [r for r in rules if r.priority is priority]
        if group:
            body = "\n\n".join(_rule_block(r, r.id in compressed) for r in group)
            sections.append(PromptSection(name, body, [r.id for r in group]))
    if state_lines:
        sections.append(PromptSection("accumulated-state", "\n".join(state_lines)))
    return sections


def assemble_prompt(
    step: int,
    skill: SkillSpec,
    graphs: Sequence[GraphDocument],
    state: SessionState,
    budget: Optional[TokenBudget] = None,
    base_dir=None,
) -> AssembledPrompt:
    """
    Assemble the governed system prompt for one workflow step.

    Over budget, Medium rules are dropped from the end first, then High rules
    are cut to their first statement from the end. Critical rules, the role
    section and accumulated state are never shortened.

    Raises:
        BudgetInfeasible: the prompt still exceeds the budget after truncation
        UnknownNode: a governing behavior or referenced node does not resolve
    """
    rules = resolve_governing_behaviors(skill, graphs, base_dir)
    role = _role_section(step, skill, graphs, base_dir)
    state_lines = [entry.render() for entry in inject_state(state, step)]

    kept = list(rules)
    truncated: List[str] = []
    compressed: List[str] = []

    def render() -> AssembledPrompt:
        sections = _build(role, kept, set(compressed), state_lines)
        prompt = AssembledPrompt(sections, truncated=list(truncated), compressed=list(compressed))
        prompt.estimated_tokens = estimate_tokens(prompt.text)
        return prompt

    prompt = render()
    if budget is not None:
        limit = budget.max_tokens
        for rule in reversed([r for r in rules if r.priority is Priority.MEDIUM]):
            if prompt.estimated_tokens <= limit:
                break
            kept.remove(rule)
            truncated.append(rule.id)
            prompt = render()
        for rule in reversed([r for r in rules if r.priority is Priority.HIGH]):
            if prompt.estimated_tokens <= limit:
                break
            if len(rule.statements) > 1:
                compressed.append(rule.id)
                prompt = render()
        if prompt.estimated_tokens > limit:
            raise BudgetInfeasible(prompt.estimated_tokens, limit)

    logger.info(
        f"Assembled step {step} prompt for {skill.id}: {prompt.estimated_tokens} tokens"
        + (f", truncated {prompt.truncated}" if prompt.truncated else "")
        + (f", compressed {prompt.compressed}" if prompt.compressed else "")
    )
    return prompt
