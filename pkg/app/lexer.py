"""
ECMAScript Lexer

Splits source text into keyword, identifier, punctuator, string, template,
pattern-literal (regular expression), number and comment tokens.

Template literals are emitted in chunks: `` `n=${ `` opens a substitution,
the tokens of the embedded expression follow, and `` }` `` closes it.
A `/` starts a pattern literal when the previous significant token cannot
end an expression, and is division otherwise.
"""

import re
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

from .errors import UnterminatedLiteral


class TokenKind(Enum):
    KEYWORD = "keyword"
    IDENTIFIER = "identifier"
    PUNCTUATOR = "punctuator"
    STRING = "string"
    TEMPLATE = "template"
    PATTERN = "pattern-literal"
    NUMBER = "number"
    COMMENT = "comment"


KEYWORDS = frozenset({
    "await", "break", "case", "catch", "class", "const", "continue", "debugger",
    "default", "delete", "do", "else", "export", "extends", "finally", "for",
    "function", "if", "import", "in", "instanceof", "let", "new", "return",
    "static", "super", "switch", "this", "throw", "try", "typeof", "var",
    "void", "while", "with", "yield",
})

# Longest first
PUNCTUATORS = sorted([
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=",
    "=>", "==", "!=", "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=",
    "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "**",
    "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-", "*", "/", "%",
    "&", "|", "^", "!", "~", "?", ":", "=", ".", "@",
], key=len, reverse=True)

WHITESPACE = re.compile(r"[ \t\f\v\r\n\u00a0\ufeff\u2028\u2029]+")
LINE_COMMENT = re.compile(r"//[^\n\r\u2028\u2029]*")
IDENTIFIER = re.compile(r"#?(?:[^\W\d]|\$)[\w$]*")
NUMBER = re.compile(
    r"(?:0[xX][0-9a-fA-F_]+|0[oO][0-7_]+|0[bB][01_]+"
    r"|(?:\d[\d_]*(?:\.[\d_]*)?|\.\d[\d_]*)(?:[eE][+-]?\d+)?)n?"
)
LINE_BREAK = re.compile(r"\r\n|[\n\r\u2028\u2029]")
PATTERN_FLAGS = re.compile(r"[a-z]*")

# After these a `/` is division
_EXPRESSION_END_KEYWORDS = frozenset({"this", "super"})
_EXPRESSION_END_PUNCTUATORS = frozenset({")", "]", "}", "++", "--"})


def count_line_breaks(text: str) -> int:
    return len(LINE_BREAK.findall(text))


@dataclass(frozen=True)
class SourceToken:
    kind: TokenKind
    lexeme: str
    line: int
    offset: int = 0

    @property
    def end_line(self) -> int:
        return self.line + count_line_breaks(self.lexeme)

    def is_punct(self, *lexemes: str) -> bool:
        return self.kind is TokenKind.PUNCTUATOR and self.lexeme in lexemes

    def is_keyword(self, *lexemes: str) -> bool:
        return self.kind is TokenKind.KEYWORD and self.lexeme in lexemes


def _pattern_allowed(prev: Optional[SourceToken]) -> bool:
    if prev is None:
        return True
    if prev.kind is TokenKind.PUNCTUATOR:
        return prev.lexeme not in _EXPRESSION_END_PUNCTUATORS
    if prev.kind is TokenKind.KEYWORD:
        return prev.lexeme not in _EXPRESSION_END_KEYWORDS
    if prev.kind is TokenKind.TEMPLATE:
        return prev.lexeme.endswith("${")
    return False


class _Lexer:
    def __init__(self, source: str):
        self.src = source
        self.pos = 0
        self.line = 1
        self.tokens: List[SourceToken] = []
        self.prev: Optional[SourceToken] = None
        self.substitutions: List[int] = []  # brace depth per open ${ ... }

    def emit(self, kind: TokenKind, end: int):
        token = SourceToken(kind, self.src[self.pos:end], self.line, self.pos)
        self.tokens.append(token)
        if kind is not TokenKind.COMMENT:
            self.prev = token
        self.line = token.end_line
        self.pos = end

    def scan_string(self, quote: str) -> int:
        i = self.pos + 1
        while i < len(self.src):
            c = self.src[i]
            if c == "\\":
                i += 2
                continue
            if c == quote:
                return i + 1
            if c in "\n\r":
                break
            i += 1
        raise UnterminatedLiteral(self.line, "string")

    def scan_template(self, start: int) -> int:
        """End offset of a template chunk starting at ` or at a closing }."""
        i = start + 1
        while i < len(self.src):
            c = self.src[i]
            if c == "\\":
                i += 2
                continue
            if c == "`":
                return i + 1
            if c == "$" and self.src.startswith("{", i + 1):
                self.substitutions.append(0)
                return i + 2
            i += 1
        raise UnterminatedLiteral(self.line, "template")

    def scan_pattern(self) -> int:
        i = self.pos + 1
        in_class = False
        while i < len(self.src):
            c = self.src[i]
            if c == "\\":
                i += 2
                continue
            if c in "\n\r\u2028\u2029":
                break
            if c == "[":
                in_class = True
            elif c == "]":
                in_class = False
            elif c == "/" and not in_class:
                return PATTERN_FLAGS.match(self.src, i + 1).end()
            i += 1
        raise UnterminatedLiteral(self.line, "regular expression")

    def scan_punctuator(self) -> str:
        for p in PUNCTUATORS:
            if self.src.startswith(p, self.pos):
                # a?.5:1 is a conditional, not optional chaining
                if p == "?." and self.src[self.pos + 2:self.pos + 3].isdigit():
                    continue
                return p
        raise UnterminatedLiteral(self.line, f"token {self.src[self.pos]!r}")

    def run(self) -> List[SourceToken]:
        src = self.src
        while self.pos < len(src):
            ws = WHITESPACE.match(src, self.pos)
            if ws:
                self.line += count_line_breaks(ws.group(0))
                self.pos = ws.end()
                continue

            c = src[self.pos]
            if src.startswith("//", self.pos):
                self.emit(TokenKind.COMMENT, LINE_COMMENT.match(src, self.pos).end())
            elif src.startswith("/*", self.pos):
                end = src.find("*/", self.pos + 2)
                if end == -1:
                    raise UnterminatedLiteral(self.line, "comment")
                self.emit(TokenKind.COMMENT, end + 2)
            elif c in "'\"":
                self.emit(TokenKind.STRING, self.scan_string(c))
            elif c == "`":
                self.emit(TokenKind.TEMPLATE, self.scan_template(self.pos))
            elif c == "}" and self.substitutions and self.substitutions[-1] == 0:
                self.substitutions.pop()
                self.emit(TokenKind.TEMPLATE, self.scan_template(self.pos))
            elif c.isdigit() or (c == "." and src[self.pos + 1:self.pos + 2].isdigit()):
                self.emit(TokenKind.NUMBER, NUMBER.match(src, self.pos).end())
            elif c == "/" and _pattern_allowed(self.prev):
                self.emit(TokenKind.PATTERN, self.scan_pattern())
            else:
                ident = IDENTIFIER.match(src, self.pos)
                if ident:
                    word = ident.group(0)
                    kind = TokenKind.KEYWORD if word in KEYWORDS else TokenKind.IDENTIFIER
                    # obj.if / obj.class are property names
                    if kind is TokenKind.KEYWORD and self.prev is not None and self.prev.is_punct(".", "?."):
                        kind = TokenKind.IDENTIFIER
                    self.emit(kind, ident.end())
                    continue
                punct = self.scan_punctuator()
                if self.substitutions:
                    if punct == "{":
                        self.substitutions[-1] += 1
                    elif punct == "}":
                        self.substitutions[-1] -= 1
                self.emit(TokenKind.PUNCTUATOR, self.pos + len(punct))
        return self.tokens


def tokenize(source: str) -> List[SourceToken]:
    """
    Tokenize ECMAScript source.

    Raises:
        UnterminatedLiteral: a string, template, comment or pattern literal
            runs to the end of its line or of the input
    """
    return _Lexer(source).run()


def significant(tokens: List[SourceToken]) -> List[SourceToken]:
    """Tokens without comments."""
    return [t for t in tokens if t.kind is not TokenKind.COMMENT]
