"""AST for DeCon contracts.

Positions are carried on declarations, annotations, rules, and literals for
diagnostics, but are excluded from structural equality so that a parsed
contract compares equal to the re-parse of its printed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

COLUMN_TYPES = ("address", "uint", "int", "bool")
CONDITION_OPS = (">", "<", ">=", "<=", "!=", "==")
FUNCTION_OPS = ("+", "-", "*", "/")
AGGREGATORS = ("sum", "max", "min", "count")

HANDLER_PREFIX = "recv_"
WILDCARD_PREFIX = "_"

# Environment literals usable in transaction rule bodies without declaration.
ENV_RELATIONS = {"msgSender": "address", "msgValue": "uint"}


@dataclass(frozen=True)
class Pos:
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def is_wildcard(self) -> bool:
        return self.name.startswith(WILDCARD_PREFIX)

    def __str__(self) -> str:
        return "_" if self.is_wildcard else self.name


@dataclass(frozen=True)
class Const:
    value: object  # int or bool

    def __str__(self) -> str:
        if self.value is True:
            return "true"
        if self.value is False:
            return "false"
        return str(self.value)


Arg = Var | Const


@dataclass(frozen=True)
class Column:
    name: str
    type: str

    def __str__(self) -> str:
        return f"{self.name}: {self.type}"


@dataclass(frozen=True)
class RelationDecl:
    name: str
    columns: tuple[Column, ...]
    primary_keys: tuple[int, ...]
    is_singleton: bool = False
    pos: Pos = field(default=Pos(), compare=False)

    @property
    def is_handler(self) -> bool:
        return self.name.startswith(HANDLER_PREFIX)

    @property
    def arity(self) -> int:
        return len(self.columns)

    def key_indices(self) -> tuple[int, ...]:
        """Resolved key columns: the annotation, or all columns when absent."""
        if self.is_singleton:
            return ()
        if self.primary_keys:
            return self.primary_keys
        return tuple(range(len(self.columns)))

    def value_indices(self) -> tuple[int, ...]:
        keys = set(self.key_indices())
        return tuple(i for i in range(len(self.columns)) if i not in keys)

    def __str__(self) -> str:
        star = "*" if self.is_singleton else ""
        cols = ", ".join(str(c) for c in self.columns)
        keys = ""
        if self.primary_keys:
            keys = "[" + ",".join(str(i) for i in self.primary_keys) + "]"
        return f".decl {star}{self.name}({cols}){keys}"


@dataclass(frozen=True)
class Annotation:
    kind: str  # init | violation | public
    relation: str
    pos: Pos = field(default=Pos(), compare=False)

    def __str__(self) -> str:
        return f".{self.kind} {self.relation}"


@dataclass(frozen=True)
class RelLit:
    rel: str
    args: tuple[Arg, ...]
    pos: Pos = field(default=Pos(), compare=False)

    def __str__(self) -> str:
        return f"{self.rel}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class CondLit:
    op: str
    lhs: Arg
    rhs: Arg
    pos: Pos = field(default=Pos(), compare=False)

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class FuncLit:
    out: Var
    op: str
    lhs: Arg
    rhs: Arg
    pos: Pos = field(default=Pos(), compare=False)

    def __str__(self) -> str:
        return f"{self.out} = {self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class AggLit:
    out: Var
    agg: str
    agg_var: Var | None  # None exactly for count
    rel: str
    args: tuple[Arg, ...]
    pos: Pos = field(default=Pos(), compare=False)

    def __str__(self) -> str:
        inner = f"{self.rel}({', '.join(str(a) for a in self.args)})"
        if self.agg == "count":
            return f"{self.out} = count: {inner}"
        return f"{self.out} = {self.agg} {self.agg_var}: {inner}"


BodyLit = RelLit | CondLit | FuncLit | AggLit


@dataclass(frozen=True)
class Rule:
    head: RelLit
    body: tuple[BodyLit, ...]
    pos: Pos = field(default=Pos(), compare=False)

    def rel_lits(self) -> tuple[RelLit, ...]:
        return tuple(l for l in self.body if isinstance(l, RelLit))

    def variables(self) -> tuple[Var, ...]:
        """All variables of the rule, in order of first occurrence."""
        seen: dict[str, Var] = {}

        def visit(arg: Arg) -> None:
            if isinstance(arg, Var) and arg.name not in seen:
                seen[arg.name] = arg

        for lit in self.body + (self.head,):
            if isinstance(lit, RelLit):
                for a in lit.args:
                    visit(a)
            elif isinstance(lit, CondLit):
                visit(lit.lhs)
                visit(lit.rhs)
            elif isinstance(lit, FuncLit):
                visit(lit.out)
                visit(lit.lhs)
                visit(lit.rhs)
            elif isinstance(lit, AggLit):
                visit(lit.out)
                if lit.agg_var is not None:
                    visit(lit.agg_var)
                for a in lit.args:
                    visit(a)
        return tuple(seen.values())

    def __str__(self) -> str:
        body = ", ".join(str(l) for l in self.body)
        return f"{self.head} :- {body}."


@dataclass(frozen=True)
class Contract:
    name: str
    decls: tuple[RelationDecl, ...]
    annotations: tuple[Annotation, ...]
    rules: tuple[Rule, ...]

    def decl(self, relation: str) -> RelationDecl | None:
        for d in self.decls:
            if d.name == relation:
                return d
        return None

    def annotated(self, kind: str) -> tuple[str, ...]:
        return tuple(a.relation for a in self.annotations if a.kind == kind)


def to_source(contract: Contract) -> str:
    """Print a contract back to DeCon source.

    The output re-parses to a structurally identical AST (round-trip).
    """
    lines = [str(d) for d in contract.decls]
    lines.append("")
    lines.extend(str(a) for a in contract.annotations)
    lines.append("")
    lines.extend(str(r) for r in contract.rules)
    return "\n".join(lines) + "\n"
