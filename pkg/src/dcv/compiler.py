"""Translation of a validated contract into a symbolic transition system.

One transition per transaction rule. A rule is encoded as an exclusive-or
of two branches: the body holds, the head is inserted, and every direct
dependent rule is encoded recursively under the inserted head as trigger;
or the body fails and the head together with the whole downstream update
tree is framed. State variables untouched by a transaction are framed at
the transition level.

Rule bodies are encoded by resolving every rule variable to a term:
trigger-literal arguments bind to the trigger's terms, relational reads
bind value columns to map reads over the pre-state, function literals bind
their output, and aggregators bind the freshly computed aggregate. Key
variables that no literal determines become existentially quantified.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ast import AggLit, Arg, CondLit, Const, FuncLit, RelationDecl, RelLit, Rule, Var as AVar
from .logic import (
    ADDR,
    BOOL,
    FALSE,
    INT,
    TRUE,
    UINT,
    And,
    Arith,
    BoolConst,
    Cmp,
    Eq,
    Expr,
    IntConst,
    Ite,
    MapRead,
    MapStore,
    Sort,
    StateSpace,
    StateVar,
    Var,
    and_,
    eq,
    exists,
    forall,
    implies,
    mk_state_vars,
    not_,
    or_,
    prime,
    sort_of_type,
    substitute,
    xor,
)
from .validator import Dependent, RuleKind, ValidatedContract

CHECK_TRIGGER = "check()"

SENDER_PARAM = "sender"
VALUE_PARAM = "value"


@dataclass(frozen=True)
class Trigger:
    rel: str
    args: tuple[Expr, ...]


@dataclass
class Transition:
    name: str
    params: tuple[Var, ...]
    formula: Expr
    rule_index: int


@dataclass
class Property:
    name: str
    formula: Expr
    rule_index: int


@dataclass
class TransitionSystem:
    contract_name: str
    gamma: StateSpace
    init: Expr
    transitions: list[Transition]
    properties: list[Property]

    def state_vars(self) -> tuple[StateVar, ...]:
        return self.gamma.vars()

    def state_names(self) -> set[str]:
        return self.gamma.names()


class EncodingError(Exception):
    """Internal invariant violation; validation should prevent these."""


# ---------------------------------------------------------------------------
# Rule-body encoding


@dataclass
class BodyEncoding:
    guard: Expr
    bindings: dict[str, Expr]
    locals: tuple[Var, ...]  # existentially quantified key variables


class _RuleEncoder:
    def __init__(self, vc: ValidatedContract, gamma: StateSpace, rule_index: int, trigger: Trigger):
        self.vc = vc
        self.gamma = gamma
        self.rule = vc.rules[rule_index]
        self.rule_index = rule_index
        self.trigger = trigger
        self.info = vc.rule_info[rule_index]
        self.bindings: dict[str, Expr] = {}
        self.constraints: list[Expr] = []
        self.locals: list[Var] = []

    def var_sort(self, name: str) -> Sort:
        return sort_of_type(self.info.var_types.get(name, "int"))

    def term(self, arg: Arg) -> Expr:
        if isinstance(arg, Const):
            return BoolConst(arg.value) if isinstance(arg.value, bool) else IntConst(arg.value)
        bound = self.bindings.get(arg.name)
        if bound is None:
            raise EncodingError(f"unbound variable {arg.name} in rule {self.rule}")
        return bound

    def is_bound(self, arg: Arg) -> bool:
        return isinstance(arg, Const) or arg.name in self.bindings

    def bind_or_equate(self, arg: Arg, term: Expr) -> None:
        """Bind a variable to a term, or emit an equality when already fixed."""
        if isinstance(arg, Const):
            c = eq(self.term(arg), term)
            if c != TRUE:
                self.constraints.append(c)
        elif arg.name in self.bindings:
            c = eq(self.bindings[arg.name], term)
            if c != TRUE:
                self.constraints.append(c)
        else:
            self.bindings[arg.name] = term

    # -- literal encodings ------------------------------------------------

    def encode_trigger_literal(self, lit: RelLit | AggLit) -> None:
        if len(lit.args) != len(self.trigger.args):
            raise EncodingError(f"trigger arity mismatch on {lit}")
        for arg, term in zip(lit.args, self.trigger.args):
            self.bind_or_equate(arg, term)

    def encode_env_literal(self, lit: RelLit, params: "_TxParams") -> None:
        term = params.sender() if lit.rel == "msgSender" else params.value()
        self.bind_or_equate(lit.args[0], term)

    def encode_read(self, lit: RelLit) -> None:
        """Lit2: a relational literal reads the pre-state."""
        decl = self.vc.relations[lit.rel]
        svs = self.gamma.of(lit.rel)
        if decl.is_singleton:
            for sv, arg in zip(svs, lit.args):
                self.bind_or_equate(arg, sv.var())
            return
        keys = tuple(self.term(lit.args[i]) for i in decl.key_indices())
        values = decl.value_indices()
        if values:
            for sv, i in zip(svs, values):
                self.bind_or_equate(lit.args[i], MapRead(sv.var(), keys))
        else:
            self.constraints.append(MapRead(svs[0].var(), keys))

    def read_ready(self, lit: RelLit) -> bool:
        decl = self.vc.relations.get(lit.rel)
        if decl is None:
            return False
        if decl.is_singleton:
            return True
        if decl.value_indices():
            return all(self.is_bound(lit.args[i]) for i in decl.key_indices())
        return all(self.is_bound(a) for a in lit.args)

    def encode_aggregate(self, agg: AggLit) -> None:
        head_decl = self.vc.relations[self.rule.head.rel]
        old = self._head_aggregate_read(head_decl, agg)
        if agg.agg == "count":
            new: Expr = Arith("+", old, IntConst(1))
        elif agg.agg == "sum":
            n = self.term(agg.agg_var)
            new = Arith("+", old, n)
            replaced = self._replaced_value(agg)
            if replaced is not None:
                new = Arith("-", new, replaced)
        else:
            n = self.term(agg.agg_var)
            cmp_op = ">" if agg.agg == "max" else "<"
            new = Ite(Cmp(cmp_op, n, old), n, old)
        self.bind_or_equate(agg.out, new)

    def _head_aggregate_read(self, head_decl: RelationDecl, agg: AggLit) -> Expr:
        """Current aggregate value stored in the head relation."""
        svs = self.gamma.of(head_decl.name)
        if head_decl.is_singleton:
            col_index = next(
                i
                for i, a in enumerate(self.rule.head.args)
                if isinstance(a, AVar) and a.name == agg.out.name
            )
            return svs[col_index].var()
        values = head_decl.value_indices()
        value_pos = next(
            i
            for i in values
            if isinstance(self.rule.head.args[i], AVar)
            and self.rule.head.args[i].name == agg.out.name
        )
        sv = svs[values.index(value_pos)]
        keys = tuple(self.term(self.rule.head.args[i]) for i in head_decl.key_indices())
        return MapRead(sv.var(), keys)

    def _replaced_value(self, agg: AggLit) -> Expr | None:
        """For sums over a keyed relation, the value the insertion replaces.

        Inserting on an existing key overwrites the row, so the aggregate
        changes by (new - old), not by new alone. The replaced row sits at
        the trigger keys, read via the joined source literal.
        """
        decl = self.vc.relations[agg.rel]
        values = decl.value_indices()
        if not values:
            return None  # set semantics: insertion is fresh (or a no-op)
        assert agg.agg_var is not None
        src = next(l for l in self.rule.body if isinstance(l, RelLit))
        pos = next(
            i
            for i, a in enumerate(agg.args)
            if isinstance(a, AVar) and a.name == agg.agg_var.name
        )
        sv = self.gamma.of(agg.rel)[values.index(pos)]
        keys = tuple(self.term(src.args[i]) for i in decl.key_indices())
        return MapRead(sv.var(), keys)

    # -- driver -------------------------------------------------------------

    def encode(self, trigger_literal: int | None, params: "_TxParams | None") -> BodyEncoding:
        pending: dict[int, object] = {i: lit for i, lit in enumerate(self.rule.body)}

        if trigger_literal is not None:
            lit = self.rule.body[trigger_literal]
            assert isinstance(lit, RelLit)
            self.encode_trigger_literal(lit)
            del pending[trigger_literal]

        progress = True
        while pending:
            if not progress:
                self._introduce_locals(pending)
            progress = False
            for i in list(pending):
                lit = pending[i]
                if isinstance(lit, RelLit):
                    if lit.rel in ("msgSender", "msgValue"):
                        assert params is not None
                        self.encode_env_literal(lit, params)
                    elif self.read_ready(lit):
                        self.encode_read(lit)
                    else:
                        continue
                elif isinstance(lit, FuncLit):
                    if not (self.is_bound(lit.lhs) and self.is_bound(lit.rhs)):
                        continue
                    self.bind_or_equate(lit.out, Arith(lit.op, self.term(lit.lhs), self.term(lit.rhs)))
                elif isinstance(lit, CondLit):
                    if not (self.is_bound(lit.lhs) and self.is_bound(lit.rhs)):
                        continue
                    self.constraints.append(_condition(lit.op, self.term(lit.lhs), self.term(lit.rhs)))
                elif isinstance(lit, AggLit):
                    if lit.agg != "count" and not self.is_bound(lit.agg_var):
                        continue
                    self.encode_aggregate(lit)
                del pending[i]
                progress = True
        return BodyEncoding(and_(*self.constraints), self.bindings, tuple(self.locals))

    def _introduce_locals(self, pending: dict[int, object]) -> None:
        """Unblock the first stuck literal by quantifying its unbound keys."""
        for i in sorted(pending):
            lit = pending[i]
            if not isinstance(lit, RelLit) or lit.rel in ("msgSender", "msgValue"):
                continue
            decl = self.vc.relations.get(lit.rel)
            if decl is None:
                continue
            fresh = False
            for pos in decl.key_indices() if decl.value_indices() else range(len(lit.args)):
                arg = lit.args[pos]
                if isinstance(arg, AVar) and not self.is_bound(arg):
                    v = Var(arg.name, self.var_sort(arg.name))
                    self.bindings[arg.name] = v
                    self.locals.append(v)
                    fresh = True
            if fresh:
                return
        raise EncodingError(f"cannot resolve variables of rule {self.rule}")


def _condition(op: str, lhs: Expr, rhs: Expr) -> Expr:
    if op == "==":
        return eq(lhs, rhs)
    if op == "!=":
        return not_(eq(lhs, rhs))
    return Cmp(op, lhs, rhs)


# ---------------------------------------------------------------------------
# Transaction parameters


class _TxParams:
    """Parameters of one transition: handler arguments plus environment."""

    def __init__(self, vc: ValidatedContract, gamma: StateSpace, rule_index: int):
        self.vc = vc
        self.gamma = gamma
        self.rule = vc.rules[rule_index]
        info = vc.rule_info[rule_index]
        assert info.trigger_index is not None
        self.handler = self.rule.body[info.trigger_index]
        assert isinstance(self.handler, RelLit)
        self.params: list[Var] = []
        self._sender: Var | None = None
        self._value: Var | None = None
        self.trigger_args: list[Expr] = []
        decl = vc.relations[self.handler.rel]
        taken = gamma.names()
        for i, (arg, col) in enumerate(zip(self.handler.args, decl.columns)):
            if isinstance(arg, AVar):
                name = arg.name
            else:
                name = f"{col.name}!arg"
            while name in taken:
                name += "!p"
            taken.add(name)
            p = Var(name, sort_of_type(col.type))
            self.params.append(p)
            self.trigger_args.append(p)

    def _env(self, base: str, sort: Sort) -> Var:
        taken = {p.name for p in self.params} | self.gamma.names()
        name = base
        while name in taken:
            name += "!p"
        return Var(name, sort)

    def sender(self) -> Var:
        if self._sender is None:
            self._sender = self._env(SENDER_PARAM, ADDR)
            self.params.append(self._sender)
        return self._sender

    def value(self) -> Var:
        if self._value is None:
            self._value = self._env(VALUE_PARAM, UINT)
            self.params.append(self._value)
        return self._value


# ---------------------------------------------------------------------------
# Rule trees (Algorithm: encode rule, recurse over dependents)


def _frame(gamma: StateSpace, rel: str) -> Expr:
    return and_(*(eq(sv.primed(), sv.var()) for sv in gamma.of(rel)))


def _closure_heads(vc: ValidatedContract, rule_index: int) -> list[str]:
    """Head relations written in the rule's dependent tree (preorder)."""
    out: list[str] = []
    stack = [rule_index]
    while stack:
        r = stack.pop(0)
        rel = vc.rules[r].head.rel
        out.append(rel)
        stack.extend(d.rule_index for d in vc.dependents.get(rel, ()))
    return out


def encode_rule_body(
    vc: ValidatedContract,
    gamma: StateSpace,
    rule_index: int,
    trigger: Trigger,
    params: _TxParams | None = None,
) -> BodyEncoding:
    """Encode a rule body as a guard formula plus variable bindings."""
    enc = _RuleEncoder(vc, gamma, rule_index, trigger)
    trigger_literal = _trigger_literal(vc, rule_index, trigger)
    return enc.encode(trigger_literal, params)


def _trigger_literal(vc: ValidatedContract, rule_index: int, trigger: Trigger) -> int | None:
    info = vc.rule_info[rule_index]
    if info.kind == RuleKind.TRANSACTION:
        return info.trigger_index
    if trigger.rel == CHECK_TRIGGER:
        return None
    for d in vc.dependents.get(trigger.rel, ()):
        if d.rule_index == rule_index:
            return d.trigger_literal
    raise EncodingError(
        f"rule {vc.rules[rule_index]} is not triggered by {trigger.rel}"
    )


def encode_decon_rule(
    vc: ValidatedContract,
    gamma: StateSpace,
    rule_index: int,
    trigger: Trigger,
    params: _TxParams | None = None,
) -> Expr:
    """Body plus head update plus recursive dependent updates, xor'd with
    the stuttering branch that frames the whole downstream tree."""
    rule = vc.rules[rule_index]
    enc = encode_rule_body(vc, gamma, rule_index, trigger, params)
    head_terms = _head_terms(vc, gamma, rule, enc)
    update = _head_update(vc, gamma, rule, head_terms)

    dependents = vc.dependents.get(rule.head.rel, ())
    dep_formulas = [
        encode_decon_rule(vc, gamma, d.rule_index, Trigger(rule.head.rel, head_terms))
        for d in dependents
    ]

    true_branch = exists(enc.locals, and_(enc.guard, update, *dep_formulas))
    body_closed = exists(enc.locals, enc.guard)
    frames = and_(*(_frame(gamma, rel) for rel in _closure_heads(vc, rule_index)))
    false_branch = and_(not_(body_closed), frames)
    return xor(true_branch, false_branch)


def _head_terms(
    vc: ValidatedContract, gamma: StateSpace, rule: Rule, enc: BodyEncoding
) -> tuple[Expr, ...]:
    terms = []
    for arg in rule.head.args:
        if isinstance(arg, Const):
            terms.append(BoolConst(arg.value) if isinstance(arg.value, bool) else IntConst(arg.value))
        else:
            t = enc.bindings.get(arg.name)
            if t is None:
                raise EncodingError(f"unbound head variable {arg.name} in {rule}")
            terms.append(t)
    return tuple(terms)


def _head_update(
    vc: ValidatedContract, gamma: StateSpace, rule: Rule, head_terms: tuple[Expr, ...]
) -> Expr:
    decl = vc.relations[rule.head.rel]
    svs = gamma.of(rule.head.rel)
    parts: list[Expr] = []
    if decl.is_singleton:
        for sv, term in zip(svs, head_terms):
            parts.append(eq(sv.primed(), term))
    else:
        keys = tuple(head_terms[i] for i in decl.key_indices())
        values = decl.value_indices()
        if values:
            for sv, i in zip(svs, values):
                parts.append(eq(sv.primed(), MapStore(sv.var(), keys, head_terms[i])))
        else:
            parts.append(eq(svs[0].primed(), MapStore(svs[0].var(), keys, BoolConst(True))))
    return and_(*parts)


# ---------------------------------------------------------------------------
# Transition system


def build_transitions(vc: ValidatedContract, gamma: StateSpace) -> list[Transition]:
    out: list[Transition] = []
    for r in vc.transaction_rules:
        info = vc.rule_info[r]
        params = _TxParams(vc, gamma, r)
        trigger = Trigger(params.handler.rel, tuple(params.trigger_args))
        formula = encode_decon_rule(vc, gamma, r, trigger, params)
        written = set(_closure_heads(vc, r))
        frames = [
            eq(sv.primed(), sv.var())
            for sv in gamma.vars()
            if sv.relation not in written
        ]
        nonneg = [
            Cmp(">=", p, IntConst(0))
            for p in params.params
            if p.var_sort == UINT
        ]
        assert info.tx_name is not None
        out.append(
            Transition(info.tx_name, tuple(params.params), and_(*nonneg, formula, *frames), r)
        )
    return out


def build_init(vc: ValidatedContract, gamma: StateSpace) -> Expr:
    """Zero-initialize every relation not supplied by the constructor.

    Init-annotated relations are unconstrained, as is any relation that is
    read but never written (an implicit constructor parameter). uint state
    is additionally constrained nonnegative.
    """
    unconstrained = set(vc.init_relations())
    written = vc.written_relations()
    read = {
        lit.rel
        for rule in vc.rules
        for lit in rule.body
        if isinstance(lit, (RelLit, AggLit))
    }
    unconstrained |= {rel for rel in read - written if rel in gamma.by_relation}

    parts: list[Expr] = []
    for rel, svs in gamma.by_relation.items():
        for sv in svs:
            if rel not in unconstrained:
                parts.extend(_zero_of(sv))
            parts.extend(_nonneg_of(sv))
    return and_(*parts)


def _bound_keys(sort: Sort) -> tuple[Var, ...]:
    return tuple(Var(f"k{i}", ks) for i, ks in enumerate(sort.keys))


def _zero_of(sv: StateVar) -> list[Expr]:
    v = sv.var()
    if not sv.sort.is_map:
        if sv.sort == BOOL:
            return [not_(v)]
        return [eq(v, IntConst(0))]
    keys = _bound_keys(sv.sort)
    read = MapRead(v, keys)
    body = not_(read) if sv.sort.value == BOOL else eq(read, IntConst(0))
    return [forall(keys, body)]


def _nonneg_of(sv: StateVar) -> list[Expr]:
    if sv.sort == UINT:
        return [Cmp(">=", sv.var(), IntConst(0))]
    if sv.sort.is_map and sv.sort.value == UINT:
        keys = _bound_keys(sv.sort)
        return [forall(keys, Cmp(">=", MapRead(sv.var(), keys), IntConst(0)))]
    return []


def build_properties(vc: ValidatedContract, gamma: StateSpace) -> list[Property]:
    """Each violation query becomes: no valuation of its variables makes
    the encoded body true."""
    out: list[Property] = []
    by_rel: dict[str, int] = {}
    for r in vc.violation_rules:
        rule = vc.rules[r]
        enc = encode_rule_body(vc, gamma, r, Trigger(CHECK_TRIGGER, ()))
        phi = enc.guard
        name = rule.head.rel
        by_rel[name] = by_rel.get(name, 0) + 1
        if by_rel[name] > 1:
            name = f"{name}#{by_rel[name]}"
        out.append(Property(name, not_(exists(enc.locals, phi)), r))
    return out


def compile_contract(vc: ValidatedContract) -> TransitionSystem:
    gamma = mk_state_vars(vc)
    return TransitionSystem(
        contract_name=vc.name,
        gamma=gamma,
        init=build_init(vc, gamma),
        transitions=build_transitions(vc, gamma),
        properties=build_properties(vc, gamma),
    )


def dump(ts: TransitionSystem) -> str:
    """Stable text dump used by `dcv compile` and golden tests."""
    lines = [f"contract {ts.contract_name}", "", "state:"]
    for sv in ts.state_vars():
        lines.append(f"  {sv.name}: {sv.sort}")
    lines.append("")
    lines.append("init:")
    lines.append(f"  {ts.init}")
    for tr in ts.transitions:
        lines.append("")
        params = ", ".join(f"{p.name}: {p.var_sort}" for p in tr.params)
        lines.append(f"transition {tr.name}({params}):")
        lines.append(f"  {tr.formula}")
    for prop in ts.properties:
        lines.append("")
        lines.append(f"property {prop.name}:")
        lines.append(f"  {prop.formula}")
    return "\n".join(lines) + "\n"
