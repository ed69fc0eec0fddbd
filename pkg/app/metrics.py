"""
Source Metrics

Handles:
- Logical lines of code: statements plus control and declaration headers
- Cyclomatic complexity, summed over functions
- Halstead volume and the maintainability index
- Lint warnings W001-W004

All metrics come from one pass over the significant tokens of a file, so
inserting comments never changes a result.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .lexer import SourceToken, TokenKind, significant, tokenize

logger = logging.getLogger(__name__)

LINT_RULES = {
    "W001": "Use === or !== instead of == or !=",
    "W002": "Use let or const instead of var",
    "W003": "Assignment inside a condition",
    "W004": "Empty block",
}

CONTROL_HEADERS = frozenset({"if", "for", "while", "switch", "catch", "with"})
CONDITION_HEADERS = frozenset({"if", "while", "do-while"})
DECISION_KEYWORDS = frozenset({"if", "for", "while", "do", "case", "catch"})
DECISION_PUNCTUATORS = frozenset({"?", "&&", "||", "??"})

_OPERAND_KINDS = frozenset({
    TokenKind.IDENTIFIER, TokenKind.STRING, TokenKind.TEMPLATE, TokenKind.PATTERN, TokenKind.NUMBER,
})
_ENDING_KEYWORDS = frozenset({"this", "super", "return", "break", "continue", "debugger"})
_INFIX_KEYWORDS = frozenset({"in", "instanceof"})


@dataclass(frozen=True, order=True)
class LintWarning:
    line: int
    rule: str
    message: str = field(default="", compare=False)

    def to_dict(self) -> dict:
        return {"rule": self.rule, "line": self.line, "message": self.message}


def _warning(rule: str, line: int) -> LintWarning:
    return LintWarning(line, rule, LINT_RULES[rule])


# -----------------------------------------------------------------------------
# Scanner
# -----------------------------------------------------------------------------

@dataclass
class _Unit:
    """A function, or the implicit top-level function."""

    decisions: int = 0
    active: bool = True


@dataclass
class _Frame:
    kind: str                        # block | class | paren | bracket | object | template
    unit: _Unit
    line: int = 0
    header: Optional[str] = None     # paren frames: the keyword that opened the header
    lint: bool = False               # block frames subject to W004
    opener: Optional[str] = None     # block frames: "do" for a do-while body
    pending: bool = False            # an unterminated statement is open
    tokens: int = 0                  # tokens in the pending statement
    label: bool = False              # inside a case/default label
    swallow: bool = False            # next ';' ends a do-while tail
    do_body: bool = False            # a brace-less do body is pending
    expect_do_while: bool = False
    member_assign: bool = False      # class frames: current member has an initializer
    empty: bool = True

    @property
    def statement_level(self) -> bool:
        return self.kind in ("block", "class")


def _ends_expression(token: Optional[SourceToken]) -> bool:
    if token is None:
        return False
    if token.kind in (TokenKind.IDENTIFIER, TokenKind.NUMBER, TokenKind.STRING, TokenKind.PATTERN):
        return True
    if token.kind is TokenKind.TEMPLATE:
        return token.lexeme.endswith("`")
    if token.kind is TokenKind.KEYWORD:
        return token.lexeme in _ENDING_KEYWORDS
    return token.is_punct(")", "]", "}", "++", "--")


def _starts_statement(token: SourceToken) -> bool:
    if token.kind in (TokenKind.IDENTIFIER, TokenKind.NUMBER, TokenKind.STRING, TokenKind.PATTERN):
        return True
    if token.kind is TokenKind.TEMPLATE:
        return token.lexeme.startswith("`")
    if token.kind is TokenKind.KEYWORD:
        return token.lexeme not in _INFIX_KEYWORDS
    return token.is_punct("++", "--")


class _Scanner:
    def __init__(self, tokens: List[SourceToken]):
        self.tokens = significant(tokens)
        self.top_unit = _Unit(active=False)
        self.units = [self.top_unit]
        self.stack = [_Frame("block", self.top_unit)]
        self.lloc = 0
        self.warnings: List[LintWarning] = []
        self.next_paren: Optional[str] = None
        self.next_brace: Optional[str] = None
        self.block_opener: Optional[str] = None
        self.prev: Optional[SourceToken] = None

    # -- bookkeeping ----------------------------------------------------------

    def count(self, frame: _Frame, activates: bool = True):
        self.lloc += 1
        if activates:
            frame.unit.active = True

    def decide(self, frame: _Frame):
        frame.unit.decisions += 1
        frame.unit.active = True

    def end_statement(self, frame: _Frame):
        if frame.pending:
            self.count(frame, activates=frame.kind == "block")
            if frame.do_body:
                frame.do_body = False
                frame.expect_do_while = True
        frame.pending = False
        frame.tokens = 0
        frame.member_assign = False

    def push(self, kind: str, unit: _Unit, token: SourceToken, **kwargs) -> _Frame:
        frame = _Frame(kind, unit, line=token.line, **kwargs)
        self.stack.append(frame)
        return frame

    # -- main loop ------------------------------------------------------------

    def run(self) -> "_Scanner":
        for token in self.tokens:
            self.step(token)
            self.prev = token
        for frame in reversed(self.stack):
            if frame.statement_level:
                self.end_statement(frame)
        return self

    def step(self, token: SourceToken):
        top = self.stack[-1]

        if not (token.is_punct("}") and len(self.stack) > 1):
            top.empty = False

        if top.statement_level:
            if top.swallow:
                top.swallow = False
                if token.is_punct(";"):
                    return
            if top.expect_do_while and not token.is_keyword("while"):
                top.expect_do_while = False
            newline = self.prev is not None and token.line > self.prev.end_line
            if (top.pending and newline and not top.label
                    and _ends_expression(self.prev) and _starts_statement(token)):
                self.end_statement(top)

        if self.next_paren and not token.is_punct("("):
            in_header = (
                (self.next_paren == "function" and (token.kind is TokenKind.IDENTIFIER or token.is_punct("*")))
                or (self.next_paren == "for" and token.is_keyword("await"))
            )
            if not in_header:
                self.next_paren = None
        if self.next_brace and self.next_brace != "class" and not token.is_punct("{"):
            self.next_brace = None
            self.block_opener = None
        in_declaration_header = self.next_brace == "class" or self.next_paren == "function"

        self.lint(token, top)

        if token.kind is TokenKind.PUNCTUATOR:
            if self.punctuator(token, top):
                return
        elif token.kind is TokenKind.KEYWORD:
            if self.keyword(token, top):
                return
        elif token.kind is TokenKind.TEMPLATE:
            self.template(token, top)

        if top.statement_level and not in_declaration_header and not top.label:
            top.pending = True
            top.tokens += 1

    def lint(self, token: SourceToken, top: _Frame):
        if token.is_punct("==", "!="):
            self.warnings.append(_warning("W001", token.line))
        elif token.is_keyword("var"):
            self.warnings.append(_warning("W002", token.line))
        elif token.is_punct("=") and top.kind == "paren" and top.header in CONDITION_HEADERS:
            self.warnings.append(_warning("W003", token.line))

    # -- token handlers; True means the token is fully consumed ----------------

    def template(self, token: SourceToken, top: _Frame):
        if token.lexeme.startswith("}") and top.kind == "template":
            self.stack.pop()
            top = self.stack[-1]
        if token.lexeme.endswith("${"):
            self.push("template", top.unit, token)

    def punctuator(self, token: SourceToken, top: _Frame) -> bool:
        p = token.lexeme
        if p in DECISION_PUNCTUATORS:
            self.decide(top)

        if p == "(":
            header, self.next_paren = self.next_paren, None
            if header is None and top.kind == "class" and not top.member_assign:
                header = "method"
                self.count(top, activates=False)
                top.pending = False
                top.tokens = 0
                self.push("paren", top.unit, token, header=header)
                return True
            self.push("paren", top.unit, token, header=header)
            return header is not None

        if p == ")":
            if top.kind != "paren":
                return False
            self.stack.pop()
            outer = self.stack[-1]
            if top.header in CONTROL_HEADERS:
                self.next_brace = "block"
            elif top.header in ("function", "method"):
                self.next_brace = "body"
            elif top.header == "do-while":
                outer.swallow = True
            return top.header is not None

        if p == "[":
            self.push("bracket", top.unit, token)
            return False
        if p == "]":
            if top.kind == "bracket":
                self.stack.pop()
            return False

        if p == "{":
            return self.open_brace(token, top)
        if p == "}":
            self.close_brace(top)
            return True

        if p == ";":
            if top.statement_level:
                self.end_statement(top)
                return True
            return False

        if p == ":" and top.kind == "block":
            if top.label:
                top.label = False
                return True
            if top.pending and top.tokens == 1 and self.prev.kind is TokenKind.IDENTIFIER:
                top.pending = False
                top.tokens = 0
                return True
            return False

        if p == "=>":
            self.next_brace = "body"
        elif p == "=" and top.kind == "class":
            top.member_assign = True
        return False

    def open_brace(self, token: SourceToken, top: _Frame) -> bool:
        kind, self.next_brace = self.next_brace, None
        opener, self.block_opener = self.block_opener, None
        object_method = kind is None and top.kind == "object" and self.prev is not None and self.prev.is_punct(")")

        if kind == "class":
            self.push("class", top.unit, token)
        elif kind == "body" or object_method:
            if object_method:
                self.count(top, activates=False)
            unit = _Unit()
            self.units.append(unit)
            self.push("block", unit, token)
        elif kind == "block":
            if opener == "do":
                top.do_body = False
            self.push("block", top.unit, token, lint=True, opener=opener)
        elif top.kind == "block" and not top.pending and not top.label:
            self.push("block", top.unit, token, lint=True)
            return True
        elif top.kind == "class" and not top.member_assign:
            self.push("block", top.unit, token, lint=True)
            return True
        else:
            self.push("object", top.unit, token)
            return False
        return True

    def close_brace(self, top: _Frame):
        if len(self.stack) == 1 or top.kind not in ("block", "class", "object"):
            return
        self.stack.pop()
        if top.statement_level:
            self.end_statement(top)
        if top.lint and top.empty:
            self.warnings.append(_warning("W004", top.line))
        if top.opener == "do":
            self.stack[-1].expect_do_while = True

    def keyword(self, token: SourceToken, top: _Frame) -> bool:
        kw = token.lexeme
        at_start = top.kind == "block" and not top.pending and not top.label

        # async function f() {} is a declaration
        if (kw == "function" and top.kind == "block" and top.pending and top.tokens == 1
                and self.prev is not None and self.prev.lexeme == "async"):
            top.pending = False
            top.tokens = 0
            at_start = True

        if kw == "function":
            self.count(top, activates=False)
            self.next_paren = "function"
            return at_start
        if kw == "class":
            self.count(top, activates=False)
            self.next_brace = "class"
            return at_start
        if not at_start:
            return False

        if kw == "export" or (kw == "default" and self.prev is not None and self.prev.is_keyword("export")):
            return True
        if kw == "while" and top.expect_do_while:
            top.expect_do_while = False
            self.next_paren = "do-while"
            return True
        if kw in CONTROL_HEADERS:
            self.count(top)
            if kw in DECISION_KEYWORDS:
                self.decide(top)
            self.next_paren = kw
            if kw == "catch":
                self.next_brace = "block"
            return True
        if kw in ("try", "finally", "do"):
            self.count(top)
            if kw == "do":
                self.decide(top)
                top.do_body = True
            self.next_brace = "block"
            self.block_opener = kw
            return True
        if kw == "else":
            self.next_brace = "block"
            return True
        if kw in ("case", "default"):
            if kw == "case":
                self.count(top)
                self.decide(top)
            top.label = True
            return True
        return False

    # -- results --------------------------------------------------------------

    @property
    def cyclomatic(self) -> int:
        total = sum(1 + unit.decisions for unit in self.units if unit.active)
        return max(total, 1) if self.tokens else 0


def _scan(tokens: List[SourceToken]) -> _Scanner:
    return _Scanner(tokens).run()


# -----------------------------------------------------------------------------
# Metrics
# -----------------------------------------------------------------------------

def logical_sloc(tokens: List[SourceToken]) -> int:
    """Statements terminated at statement level plus control and declaration headers."""
    return _scan(tokens).lloc


def cyclomatic(tokens: List[SourceToken]) -> int:
    """
    Sum over functions of 1 + decision points.

    Decision points: if, for, while (not the tail of a do-while), do, case,
    catch, the conditional `?`, `&&`, `||` and `??`. Top-level code counts
    as one implicit function only when it has statements or decisions of
    its own.
    """
    return _scan(tokens).cyclomatic


def lint(tokens: List[SourceToken]) -> List[LintWarning]:
    """Lint warnings ordered by (line, rule)."""
    return sorted(_scan(tokens).warnings)


def halstead_volume(tokens: List[SourceToken]) -> float:
    """N * log2(n), with keywords and punctuators as operators and literals and identifiers as operands."""
    operators, operands = [], []
    for token in significant(tokens):
        if token.kind in _OPERAND_KINDS:
            operands.append(token.lexeme)
        else:
            operators.append(token.lexeme)
    length = len(operators) + len(operands)
    vocabulary = len(set(operators)) + len(set(operands))
    if vocabulary == 0:
        return 0.0
    return length * math.log2(vocabulary)


def maintainability_index(lloc: int, cyclomatic: int, volume: float) -> float:
    """
    Maintainability index on a 0-100 scale.

    Inputs below 1 are clamped to 1 before the logarithms are taken.
    """
    lloc = max(lloc, 1)
    cyclomatic = max(cyclomatic, 1)
    volume = max(volume, 1.0)
    raw = 171 - 5.2 * math.log(volume) - 0.23 * cyclomatic - 16.2 * math.log(lloc)
    return min(100.0, max(0.0, raw * 100 / 171))


@dataclass
class MetricsReport:
    lloc: int
    cyclomatic: int
    halstead_volume: float
    maintainability_index: float
    warnings: List[LintWarning] = field(default_factory=list)
    path: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "lloc": self.lloc,
            "cyclomatic": self.cyclomatic,
            "halstead_volume": round(self.halstead_volume, 2),
            "maintainability_index": round(self.maintainability_index, 2),
            "lint_warnings": len(self.warnings),
            "warnings": [w.to_dict() for w in self.warnings],
        }


def analyze_source(source: str, path: Optional[str] = None) -> MetricsReport:
    """
    Compute every metric for one source text.

    Raises:
        UnterminatedLiteral: the source does not tokenize
    """
    tokens = tokenize(source)
    scanner = _scan(tokens)
    volume = halstead_volume(tokens)
    report = MetricsReport(
        lloc=scanner.lloc,
        cyclomatic=scanner.cyclomatic,
        halstead_volume=volume,
        maintainability_index=maintainability_index(scanner.lloc, scanner.cyclomatic, volume),
        warnings=sorted(scanner.warnings),
        path=path,
    )
    logger.debug(f"Metrics for {path or '<source>'}: lloc={report.lloc} cc={report.cyclomatic}")
    return report


def analyze_files(paths) -> MetricsReport:
    """Metrics for a set of files read as one concatenated source."""
    paths = [Path(p) for p in paths]
    source = "\n".join(p.read_text(encoding="utf-8") for p in paths)
    label = ", ".join(p.name for p in paths)
    return analyze_source(source, label)
