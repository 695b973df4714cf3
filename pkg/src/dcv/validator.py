"""Semantic validation of parsed contracts.

Beyond the declaredness/arity/type checks, validation pins down the fragment
the symbolic encoder supports:

  * transaction rules are triggered only by their handler literal, so a
    transaction rule may read (and update) its own head relation;
  * derived (join/aggregation) rules are re-evaluated when a relation in
    their body is written by another rule; recursion among derived rules is
    rejected, and within one transaction's update tree every derived rule
    must be reachable through exactly one triggering literal and every
    relation may be written by at most one rule;
  * violation-annotated relations are pure queries: they are never state,
    never read by other rules, and their defining rules become safety
    properties rather than update propagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .ast import (
    AggLit,
    Arg,
    BodyLit,
    CondLit,
    Const,
    Contract,
    ENV_RELATIONS,
    FuncLit,
    RelationDecl,
    RelLit,
    Rule,
    Var,
)
from .diagnostics import DconValidationError, Diagnostic


class RuleKind(Enum):
    TRANSACTION = "transaction"
    JOIN = "join"
    AGGREGATION = "aggregation"
    VIOLATION = "violationQuery"


NUMERIC_TYPES = ("uint", "int")


@dataclass(frozen=True)
class RuleInfo:
    kind: RuleKind
    trigger_index: int | None  # handler literal index for transaction rules
    var_types: dict[str, str] = field(compare=False, default_factory=dict)
    tx_name: str | None = None  # transaction rules only


@dataclass(frozen=True)
class Dependent:
    """A derived rule together with the body literal that triggers it."""

    rule_index: int
    trigger_literal: int


@dataclass
class ValidatedContract:
    contract: Contract
    relations: dict[str, RelationDecl]
    rule_info: list[RuleInfo]
    # rel name -> derived rules triggered by insertions into it
    dependents: dict[str, list[Dependent]]

    @property
    def name(self) -> str:
        return self.contract.name

    @property
    def rules(self) -> tuple[Rule, ...]:
        return self.contract.rules

    def rules_of_kind(self, kind: RuleKind) -> list[int]:
        return [i for i, info in enumerate(self.rule_info) if info.kind == kind]

    @property
    def transaction_rules(self) -> list[int]:
        return self.rules_of_kind(RuleKind.TRANSACTION)

    @property
    def violation_rules(self) -> list[int]:
        return self.rules_of_kind(RuleKind.VIOLATION)

    def violation_relations(self) -> tuple[str, ...]:
        return self.contract.annotated("violation")

    def init_relations(self) -> tuple[str, ...]:
        return self.contract.annotated("init")

    def written_relations(self) -> set[str]:
        """Relations written by some non-violation rule."""
        return {
            self.contract.rules[i].head.rel
            for i, info in enumerate(self.rule_info)
            if info.kind != RuleKind.VIOLATION
        }


class _Validator:
    def __init__(self, contract: Contract):
        self.c = contract
        self.diagnostics: list[Diagnostic] = []
        self.relations: dict[str, RelationDecl] = {}

    def error(self, message: str, pos) -> None:
        self.diagnostics.append(Diagnostic(message, pos))

    def warn(self, message: str, pos) -> None:
        self.diagnostics.append(Diagnostic(message, pos, severity="warning"))

    def run(self) -> ValidatedContract:
        self.check_decls()
        self.check_annotations()
        kinds = [self.classify(r) for r in self.c.rules]
        infos: list[RuleInfo] = []
        for rule, (kind, trigger) in zip(self.c.rules, kinds):
            var_types = self.check_rule(rule, kind, trigger)
            infos.append(RuleInfo(kind, trigger, var_types))
        self.check_violations(kinds)
        dependents = self.check_dependencies(kinds)
        infos = self.assign_tx_names(infos)
        if not any(i.kind == RuleKind.TRANSACTION for i in infos):
            self.error("contract has no transaction rule", _origin(self.c))
        errors = [d for d in self.diagnostics if d.severity == "error"]
        if errors:
            raise DconValidationError(self.diagnostics)
        return ValidatedContract(self.c, self.relations, infos, dependents)

    # -- declarations ---------------------------------------------------

    def check_decls(self) -> None:
        for d in self.c.decls:
            if d.name in self.relations:
                self.error(f"relation {d.name!r} declared twice", d.pos)
                continue
            if d.name in ENV_RELATIONS:
                self.error(f"{d.name!r} is a built-in environment relation", d.pos)
                continue
            self.relations[d.name] = d
            if d.is_singleton and d.primary_keys:
                self.error(f"singleton relation {d.name!r} cannot have primary keys", d.pos)
            if d.is_singleton and d.is_handler:
                self.error(f"transaction handler {d.name!r} cannot be a singleton", d.pos)
            if not d.columns and not d.is_handler:
                self.error(f"relation {d.name!r} needs at least one column", d.pos)
            if d.primary_keys:
                if list(d.primary_keys) != sorted(set(d.primary_keys)):
                    self.error(f"primary keys of {d.name!r} must be strictly increasing", d.pos)
                for k in d.primary_keys:
                    if not 0 <= k < len(d.columns):
                        self.error(f"primary key index {k} of {d.name!r} out of range", d.pos)

    def check_annotations(self) -> None:
        seen = set()
        for a in self.c.annotations:
            decl = self.relations.get(a.relation)
            if decl is None:
                self.error(f"annotation .{a.kind} on undeclared relation {a.relation!r}", a.pos)
                continue
            if decl.is_handler:
                self.error(f"transaction handler {a.relation!r} cannot be annotated .{a.kind}", a.pos)
            if (a.kind, a.relation) in seen:
                self.error(f"duplicate .{a.kind} annotation on {a.relation!r}", a.pos)
            seen.add((a.kind, a.relation))
        inits = set(self.c.annotated("init"))
        for rel in self.c.annotated("violation"):
            if rel in inits:
                self.error(f"violation relation {rel!r} cannot be init-annotated", _annot_pos(self.c, rel))
        if not self.c.annotated("violation"):
            self.error("contract declares no .violation relation", _origin(self.c))

    # -- rule classification ---------------------------------------------

    def classify(self, rule: Rule) -> tuple[RuleKind, int | None]:
        handlers = [
            i
            for i, lit in enumerate(rule.body)
            if isinstance(lit, RelLit) and _is_handler(lit.rel)
        ]
        if rule.head.rel in self.c.annotated("violation"):
            if handlers:
                self.error("violation query cannot contain a transaction handler", rule.pos)
            return RuleKind.VIOLATION, None
        if handlers:
            if len(handlers) > 1:
                self.error("transaction rule has more than one handler literal", rule.pos)
            return RuleKind.TRANSACTION, handlers[0]
        rel_lits = [l for l in rule.body if isinstance(l, RelLit)]
        agg_lits = [l for l in rule.body if isinstance(l, AggLit)]
        if agg_lits:
            if len(agg_lits) == 1 and len(rel_lits) == 1 and len(rule.body) == 2:
                return RuleKind.AGGREGATION, None
            self.error(
                "aggregation rule body must be exactly one relational literal "
                "plus one aggregator over the same relation",
                rule.pos,
            )
            return RuleKind.AGGREGATION, None
        return RuleKind.JOIN, None

    # -- per-rule checks ---------------------------------------------------

    def check_rule(self, rule: Rule, kind: RuleKind, trigger: int | None) -> dict[str, str]:
        types: dict[str, str] = {}

        def unify(var: Var, ty: str, pos) -> None:
            old = types.get(var.name)
            if old is None or old == ty:
                types[var.name] = ty
            elif {old, ty} <= set(NUMERIC_TYPES):
                types[var.name] = "int"
            else:
                self.error(f"variable {var} used with both {old!r} and {ty!r}", pos)

        def check_const(const: Const, ty: str, pos) -> None:
            if ty == "bool" and not isinstance(const.value, bool):
                self.error(f"constant {const} is not a bool", pos)
            if ty in ("uint", "int", "address") and isinstance(const.value, bool):
                self.error(f"constant {const} is not numeric", pos)

        def check_rel_args(lit: RelLit, decl: RelationDecl) -> None:
            if len(lit.args) != decl.arity:
                self.error(
                    f"{lit.rel!r} expects {decl.arity} argument(s), got {len(lit.args)}",
                    lit.pos,
                )
                return
            for arg, col in zip(lit.args, decl.columns):
                if isinstance(arg, Var):
                    unify(arg, col.type, lit.pos)
                else:
                    check_const(arg, col.type, lit.pos)

        # relational and aggregator literals fix variable types
        for lit in rule.body + (rule.head,):
            if isinstance(lit, RelLit):
                if lit.rel in ENV_RELATIONS:
                    if lit is rule.head:
                        self.error(f"cannot derive environment relation {lit.rel!r}", lit.pos)
                    elif kind != RuleKind.TRANSACTION:
                        self.error(
                            f"{lit.rel!r} is only available in transaction rules", lit.pos
                        )
                    if len(lit.args) != 1:
                        self.error(f"{lit.rel!r} takes exactly one argument", lit.pos)
                    elif isinstance(lit.args[0], Var):
                        unify(lit.args[0], ENV_RELATIONS[lit.rel], lit.pos)
                    continue
                decl = self.relations.get(lit.rel)
                if decl is None:
                    self.error(f"undeclared relation {lit.rel!r}", lit.pos)
                    continue
                if lit is rule.head and decl.is_handler:
                    self.error(f"cannot derive transaction handler {lit.rel!r}", lit.pos)
                if lit is not rule.head and decl.is_handler and kind == RuleKind.VIOLATION:
                    continue  # already reported by classify
                if lit.rel in self.c.annotated("violation") and lit is not rule.head:
                    self.error(f"violation relation {lit.rel!r} cannot be read in a rule body", lit.pos)
                check_rel_args(lit, decl)
            elif isinstance(lit, AggLit):
                decl = self.relations.get(lit.rel)
                if decl is None:
                    self.error(f"undeclared relation {lit.rel!r}", lit.pos)
                    continue
                check_rel_args(RelLit(lit.rel, lit.args, lit.pos), decl)
                unify(lit.out, "uint" if lit.agg == "count" else "int", lit.pos)

        # function and condition literals
        for lit in rule.body:
            if isinstance(lit, FuncLit):
                for side in (lit.lhs, lit.rhs):
                    if isinstance(side, Var):
                        ty = types.get(side.name)
                        if ty in ("bool", "address"):
                            self.error(f"arithmetic on non-numeric variable {side}", lit.pos)
                        types.setdefault(side.name, "int")
                    elif isinstance(side.value, bool):
                        self.error("arithmetic on boolean constant", lit.pos)
                if isinstance(lit.rhs, Const) and lit.op == "/" and lit.rhs.value == 0:
                    self.error("division by zero", lit.pos)
                types.setdefault(lit.out.name, "int")
            elif isinstance(lit, CondLit):
                tys = []
                for side in (lit.lhs, lit.rhs):
                    if isinstance(side, Var):
                        tys.append(types.setdefault(side.name, "int"))
                    else:
                        tys.append("bool" if isinstance(side.value, bool) else "int")
                kinds = {"bool" if t == "bool" else "addr" if t == "address" else "num" for t in tys}
                if len(kinds) > 1 and kinds != {"addr", "num"}:
                    self.error(f"comparison operands {lit.lhs} and {lit.rhs} have incompatible sorts", lit.pos)
                if lit.op not in ("==", "!=") and ("bool" in kinds or "addr" in kinds):
                    self.error(f"ordered comparison {lit.op!r} needs numeric operands", lit.pos)

        self.check_aggregation_shape(rule, kind, types)
        self.check_range_restriction(rule, types)
        return types

    def check_aggregation_shape(self, rule: Rule, kind: RuleKind, types: dict[str, str]) -> None:
        aggs = [l for l in rule.body if isinstance(l, AggLit)]
        if not aggs:
            return
        if kind != RuleKind.AGGREGATION:
            self.error("aggregators are only allowed in aggregation rules", aggs[0].pos)
            return
        agg = aggs[0]
        src = next(l for l in rule.body if isinstance(l, RelLit))
        if src.rel != agg.rel:
            self.error(
                f"aggregator ranges over {agg.rel!r} but the rule joins {src.rel!r}", agg.pos
            )
            return
        decl = self.relations.get(agg.rel)
        if decl is None or len(agg.args) != decl.arity or len(src.args) != decl.arity:
            return
        for i, (x, y) in enumerate(zip(src.args, agg.args)):
            same_var = isinstance(x, Var) and isinstance(y, Var) and x.name == y.name
            same_const = isinstance(x, Const) and isinstance(y, Const) and x == y
            y_wild = isinstance(y, Var) and y.is_wildcard
            if not (same_var or same_const or y_wild):
                self.error(
                    f"aggregator argument {i} must repeat the joined literal's "
                    "argument or be a wildcard",
                    agg.pos,
                )
        if agg.agg != "count":
            assert agg.agg_var is not None
            positions = [
                i
                for i, y in enumerate(agg.args)
                if isinstance(y, Var) and y.name == agg.agg_var.name
            ]
            if len(positions) != 1:
                self.error(
                    f"aggregated variable {agg.agg_var} must appear exactly once "
                    f"in {agg.rel!r}",
                    agg.pos,
                )
            else:
                col = decl.columns[positions[0]]
                if col.type not in NUMERIC_TYPES:
                    self.error(f"cannot aggregate non-numeric column {col.name!r}", agg.pos)
                if positions[0] in decl.key_indices() and decl.value_indices():
                    self.error(
                        f"aggregated variable {agg.agg_var} must sit in a value column",
                        agg.pos,
                    )
        if agg.agg == "count" and decl.value_indices():
            self.error("count aggregation requires a set relation (all columns keys)", agg.pos)
        # the head must store the aggregate in a value column
        head_decl = self.relations.get(rule.head.rel)
        if head_decl is not None and not head_decl.is_handler:
            value_args = [rule.head.args[i] for i in head_decl.value_indices()] if not head_decl.is_singleton else list(rule.head.args)
            hits = [
                a for a in value_args if isinstance(a, Var) and a.name == agg.out.name
            ]
            if len(hits) != 1:
                self.error(
                    f"aggregate output {agg.out} must fill exactly one value column "
                    f"of {rule.head.rel!r}",
                    rule.head.pos,
                )

    def check_range_restriction(self, rule: Rule, types: dict[str, str]) -> None:
        body_vars: set[str] = set()
        for lit in rule.body:
            if isinstance(lit, RelLit):
                body_vars.update(a.name for a in lit.args if isinstance(a, Var))
            elif isinstance(lit, AggLit):
                body_vars.add(lit.out.name)
                body_vars.update(a.name for a in lit.args if isinstance(a, Var))
            elif isinstance(lit, FuncLit):
                body_vars.add(lit.out.name)
        for arg in rule.head.args:
            if isinstance(arg, Var) and arg.name not in body_vars:
                self.error(f"unbound head variable {arg}", rule.head.pos)

    # -- contract-level checks -------------------------------------------

    def check_violations(self, kinds: list[tuple[RuleKind, int | None]]) -> None:
        defined = {
            self.c.rules[i].head.rel
            for i, (kind, _) in enumerate(kinds)
            if kind == RuleKind.VIOLATION
        }
        for rel in self.c.annotated("violation"):
            if rel not in defined and rel in self.relations:
                self.error(f"violation relation {rel!r} has no defining rule", _annot_pos(self.c, rel))

    def check_dependencies(
        self, kinds: list[tuple[RuleKind, int | None]]
    ) -> dict[str, list[Dependent]]:
        """Build the triggered-update map and reject unsupported shapes.

        Derived rules form the propagation graph; a cycle means recursion.
        Transaction rules are excluded: they respond only to their handler.
        """
        derived = [i for i, (k, _) in enumerate(kinds) if k in (RuleKind.JOIN, RuleKind.AGGREGATION)]
        dependents: dict[str, list[Dependent]] = {}
        written_rels = {
            self.c.rules[j].head.rel
            for j, (k, _) in enumerate(kinds)
            if k != RuleKind.VIOLATION
        }
        for i in derived:
            rule = self.c.rules[i]
            triggers: list[tuple[str, int]] = []
            for li, lit in enumerate(rule.body):
                rel = lit.rel if isinstance(lit, (RelLit, AggLit)) else None
                if rel in written_rels and not isinstance(lit, AggLit):
                    triggers.append((rel, li))
            if not triggers:
                self.error(
                    f"derived rule for {rule.head.rel!r} is never triggered "
                    "(no body relation is written by any rule)",
                    rule.pos,
                )
                continue
            if len(triggers) > 1:
                self.error(
                    f"derived rule for {rule.head.rel!r} has multiple triggering "
                    f"literals ({', '.join(sorted({t[0] for t in triggers}))}); "
                    "at most one body relation may be written by other rules",
                    rule.pos,
                )
                continue
            rel, li = triggers[0]
            if rel == rule.head.rel:
                self.error(f"rule for {rule.head.rel!r} depends on itself", rule.pos)
                continue
            dependents.setdefault(rel, []).append(Dependent(i, li))

        # recursion check over derived rules
        graph: dict[int, list[int]] = {i: [] for i in derived}
        head_of = {i: self.c.rules[i].head.rel for i in derived}
        for rel, deps in dependents.items():
            for writer in derived:
                if head_of[writer] == rel:
                    graph[writer].extend(d.rule_index for d in deps)
        cycle = _find_cycle(graph)
        if cycle:
            rels = " -> ".join(self.c.rules[i].head.rel for i in cycle)
            self.error(f"recursion between rules: {rels}", self.c.rules[cycle[0]].pos)
            return dependents

        # within one transaction tree: every relation written at most once
        for t, (kind, _) in enumerate(kinds):
            if kind != RuleKind.TRANSACTION:
                continue
            written: dict[str, int] = {}
            queue = [t]
            while queue:
                r = queue.pop()
                rel = self.c.rules[r].head.rel
                if rel in written and written[rel] != r:
                    self.error(
                        f"relation {rel!r} is written more than once per "
                        f"{self.c.rules[t].head.rel!r} transaction",
                        self.c.rules[r].pos,
                    )
                    break
                if rel in written:
                    self.error(
                        f"rule for {rel!r} is triggered twice per "
                        f"{self.c.rules[t].head.rel!r} transaction",
                        self.c.rules[r].pos,
                    )
                    break
                written[rel] = r
                queue.extend(d.rule_index for d in dependents.get(rel, []))
        return dependents

    def assign_tx_names(self, infos: list[RuleInfo]) -> list[RuleInfo]:
        taken: set[str] = set()
        out: list[RuleInfo] = []
        for rule, info in zip(self.c.rules, infos):
            if info.kind != RuleKind.TRANSACTION or info.trigger_index is None:
                out.append(info)
                continue
            lit = rule.body[info.trigger_index]
            assert isinstance(lit, RelLit)
            base = lit.rel.removeprefix("recv_") or lit.rel
            name, n = base, 1
            while name in taken:
                n += 1
                name = f"{base}_{n}"
            taken.add(name)
            out.append(RuleInfo(info.kind, info.trigger_index, info.var_types, name))
        return out


def _is_handler(rel: str) -> bool:
    return rel.startswith("recv_")


def _find_cycle(graph: dict[int, list[int]]) -> list[int] | None:
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {v: WHITE for v in graph}
    stack: list[int] = []

    def dfs(v: int) -> list[int] | None:
        color[v] = GRAY
        stack.append(v)
        for w in graph[v]:
            if color[w] == GRAY:
                return stack[stack.index(w):]
            if color[w] == WHITE:
                found = dfs(w)
                if found:
                    return found
        stack.pop()
        color[v] = BLACK
        return None

    for v in graph:
        if color[v] == WHITE:
            found = dfs(v)
            if found:
                return found
    return None


def _annot_pos(contract: Contract, rel: str):
    for a in contract.annotations:
        if a.relation == rel:
            return a.pos
    return _origin(contract)


def _origin(contract: Contract):
    if contract.decls:
        return contract.decls[0].pos
    from .ast import Pos

    return Pos(1, 1)


def validate(contract: Contract) -> ValidatedContract:
    """Check a parsed contract and classify its rules.

    Raises DconValidationError carrying all diagnostics when any check
    fails; warnings alone do not fail validation.
    """
    return _Validator(contract).run()
