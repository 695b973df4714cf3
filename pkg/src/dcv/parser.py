"""Lexer and parser for DeCon source text.

Grammar (parenthesized column lists, Datalog-style rules):

    program  := (decl | annot | rule)*
    decl     := ".decl" "*"? IDENT "(" col ("," col)* ")" keys?
    col      := IDENT ":" ("address" | "uint" | "int" | "bool")
    keys     := "[" INT ("," INT)* "]"
    annot    := (".init" | ".violation" | ".public") IDENT
    rule     := rellit ":-" bodylit ("," bodylit)* "."
    bodylit  := rellit | cond | func | agg
    cond     := arg (">" | "<" | ">=" | "<=" | "!=" | "==") arg
    func     := IDENT "=" arg ("+" | "-" | "*" | "/") arg
    agg      := IDENT "=" ("sum" | "max" | "min") IDENT ":" rellit
              | IDENT "=" "count" ":" rellit
    arg      := IDENT | INT | "true" | "false" | "_"

Comments are `/* ... */` and `// ...`; whitespace is insignificant.
Wildcards are desugared to fresh variables named `_w<n>` in source order,
so re-parsing printed source reproduces identical names.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import (
    AGGREGATORS,
    COLUMN_TYPES,
    CONDITION_OPS,
    AggLit,
    Annotation,
    Arg,
    BodyLit,
    Column,
    CondLit,
    Const,
    Contract,
    FuncLit,
    Pos,
    RelationDecl,
    RelLit,
    Rule,
    Var,
)
from .diagnostics import DconSyntaxError, Diagnostic

_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_INT_RE = re.compile(r"[0-9]+")

_TWO_CHAR = (":-", ">=", "<=", "!=", "==")
_ONE_CHAR = "()[],:.*=+-/<>_"

_DIRECTIVES = ("decl", "init", "violation", "public")


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, INT, a literal symbol, DIRECTIVE, or EOF
    text: str
    pos: Pos


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def err(message: str) -> DconSyntaxError:
        return DconSyntaxError([Diagnostic(message, Pos(line, col))])

    while i < n:
        c = source[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t\r":
            i, col = i + 1, col + 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise err("unterminated block comment")
            skipped = source[i : j + 2]
            nl = skipped.count("\n")
            if nl:
                line += nl
                col = len(skipped) - skipped.rfind("\n")
            else:
                col += len(skipped)
            i = j + 2
            continue
        pos = Pos(line, col)
        if c == "." and i + 1 < n and source[i + 1].isalpha():
            m = _IDENT_RE.match(source, i + 1)
            word = m.group(0) if m else ""
            if word in _DIRECTIVES:
                tokens.append(Token("DIRECTIVE", word, pos))
                i += 1 + len(word)
                col += 1 + len(word)
                continue
            # fall through: a rule-terminating dot followed by an identifier
        m = _IDENT_RE.match(source, i)
        if m:
            tokens.append(Token("IDENT", m.group(0), pos))
            i += len(m.group(0))
            col += len(m.group(0))
            continue
        m = _INT_RE.match(source, i)
        if m:
            tokens.append(Token("INT", m.group(0), pos))
            i += len(m.group(0))
            col += len(m.group(0))
            continue
        two = source[i : i + 2]
        if two in _TWO_CHAR:
            tokens.append(Token(two, two, pos))
            i, col = i + 2, col + 2
            continue
        if c in _ONE_CHAR:
            tokens.append(Token(c, c, pos))
            i, col = i + 1, col + 1
            continue
        raise err(f"unexpected character {c!r}")
    tokens.append(Token("EOF", "", Pos(line, col)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0
        self.diagnostics: list[Diagnostic] = []
        self.wildcards = 0

    # -- token helpers ------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            shown = what or f"'{kind}'"
            raise DconSyntaxError(
                [Diagnostic(f"expected {shown}, found {tok.text or 'end of input'!r}", tok.pos)]
            )
        return self.next()

    def fail(self, message: str) -> DconSyntaxError:
        return DconSyntaxError([Diagnostic(message, self.peek().pos)])

    # -- productions --------------------------------------------------

    def program(self, name: str) -> Contract:
        decls: list[RelationDecl] = []
        annots: list[Annotation] = []
        rules: list[Rule] = []
        while self.peek().kind != "EOF":
            try:
                tok = self.peek()
                if tok.kind == "DIRECTIVE":
                    if tok.text == "decl":
                        decls.append(self.declaration())
                    else:
                        annots.append(self.annotation())
                else:
                    rules.append(self.rule())
            except DconSyntaxError as e:
                self.diagnostics.extend(e.diagnostics)
                self.recover()
        if self.diagnostics:
            raise DconSyntaxError(self.diagnostics)
        return Contract(name, tuple(decls), tuple(annots), tuple(rules))

    def recover(self) -> None:
        """Skip to the next rule terminator or directive."""
        while self.peek().kind not in ("EOF", "DIRECTIVE"):
            if self.next().kind == ".":
                return

    def declaration(self) -> RelationDecl:
        start = self.expect("DIRECTIVE")
        singleton = False
        if self.peek().kind == "*":
            self.next()
            singleton = True
        name = self.expect("IDENT", "relation name").text
        self.expect("(")
        columns = []
        if self.peek().kind != ")":
            columns.append(self.column())
            while self.peek().kind == ",":
                self.next()
                columns.append(self.column())
        self.expect(")")
        keys: list[int] = []
        if self.peek().kind == "[":
            self.next()
            keys.append(int(self.expect("INT", "key index").text))
            while self.peek().kind == ",":
                self.next()
                keys.append(int(self.expect("INT", "key index").text))
            self.expect("]")
        return RelationDecl(name, tuple(columns), tuple(keys), singleton, pos=start.pos)

    def column(self) -> Column:
        name = self.expect("IDENT", "column name")
        self.expect(":")
        ty = self.expect("IDENT", "column type")
        if ty.text not in COLUMN_TYPES:
            raise DconSyntaxError(
                [Diagnostic(f"unknown type {ty.text!r} (expected one of {', '.join(COLUMN_TYPES)})", ty.pos)]
            )
        return Column(name.text, ty.text)

    def annotation(self) -> Annotation:
        tok = self.expect("DIRECTIVE")
        rel = self.expect("IDENT", "relation name").text
        return Annotation(tok.text, rel, pos=tok.pos)

    def rule(self) -> Rule:
        head = self.rel_literal()
        self.expect(":-")
        body = [self.body_literal()]
        while self.peek().kind == ",":
            self.next()
            body.append(self.body_literal())
        self.expect(".", "'.' at end of rule")
        return Rule(head, tuple(body), pos=head.pos)

    def rel_literal(self) -> RelLit:
        name = self.expect("IDENT", "relation name")
        self.expect("(")
        args: list[Arg] = []
        if self.peek().kind != ")":
            args.append(self.arg())
            while self.peek().kind == ",":
                self.next()
                args.append(self.arg())
        self.expect(")")
        return RelLit(name.text, tuple(args), pos=name.pos)

    def arg(self) -> Arg:
        tok = self.peek()
        if tok.kind == "_":
            self.next()
            self.wildcards += 1
            return Var(f"_w{self.wildcards - 1}")
        if tok.kind == "INT":
            self.next()
            return Const(int(tok.text))
        if tok.kind == "IDENT":
            self.next()
            if tok.text == "true":
                return Const(True)
            if tok.text == "false":
                return Const(False)
            return Var(tok.text)
        raise self.fail(f"expected variable or constant, found {tok.text!r}")

    def body_literal(self) -> BodyLit:
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text not in ("true", "false"):
            nxt = self.peek(1)
            if nxt.kind == "(":
                return self.rel_literal()
            if nxt.kind == "=":
                return self.binding(tok)
        # anything else must be a condition between two args
        lhs = self.arg()
        op = self.peek()
        if op.kind not in CONDITION_OPS:
            raise self.fail(f"expected comparison operator, found {op.text!r}")
        self.next()
        rhs = self.arg()
        return CondLit(op.kind, lhs, rhs, pos=tok.pos)

    def binding(self, name: Token) -> BodyLit:
        """`y = ...`: an aggregator or a function literal."""
        out = Var(name.text)
        self.next()  # IDENT
        self.next()  # '='
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text in AGGREGATORS:
            nxt = self.peek(1)
            if tok.text == "count" and nxt.kind == ":":
                self.next()
                self.next()
                rel = self.rel_literal()
                return AggLit(out, "count", None, rel.rel, rel.args, pos=name.pos)
            if tok.text != "count" and nxt.kind == "IDENT" and self.peek(2).kind == ":":
                agg = self.next().text
                var_tok = self.next()
                self.next()  # ':'
                rel = self.rel_literal()
                return AggLit(out, agg, Var(var_tok.text), rel.rel, rel.args, pos=name.pos)
        lhs = self.arg()
        op = self.peek()
        if op.kind not in ("+", "-", "*", "/"):
            raise self.fail(f"expected arithmetic operator, found {op.text!r}")
        self.next()
        rhs = self.arg()
        return FuncLit(out, op.kind, lhs, rhs, pos=name.pos)


def parse(source: str, name: str = "contract") -> Contract:
    """Parse DeCon source into a Contract.

    Raises DconSyntaxError carrying one Diagnostic per lexical or syntax
    error found. Semantic checks live in the validator.
    """
    return _Parser(tokenize(source)).program(name)
