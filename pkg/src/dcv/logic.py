"""Sorted first-order expression IR and the relation-to-state-variable map.

Sorts: bool, int, uint (an integer whose nonnegativity is asserted at init
and re-established as an auto-generated invariant candidate), address (an
integer compared only for equality), and maps from key tuples to a scalar
sort. Expressions are immutable; structural equality is used throughout.

Priming appends ``!next`` to a state variable's name; ``!`` cannot occur in
DeCon identifiers, so primed names never collide with source names.
"""

from __future__ import annotations

from dataclasses import dataclass

PRIME_SUFFIX = "!next"


# ---------------------------------------------------------------------------
# Sorts


@dataclass(frozen=True)
class Sort:
    kind: str  # bool | int | uint | addr
    keys: tuple["Sort", ...] = ()
    value: "Sort | None" = None

    @property
    def is_map(self) -> bool:
        return self.kind == "map"

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("int", "uint")

    def __str__(self) -> str:
        if self.is_map:
            keys = " * ".join(str(k) for k in self.keys)
            return f"({keys} -> {self.value})"
        return self.kind


BOOL = Sort("bool")
INT = Sort("int")
UINT = Sort("uint")
ADDR = Sort("addr")


def map_sort(keys: tuple[Sort, ...], value: Sort) -> Sort:
    if not keys:
        raise ValueError("map sort needs at least one key")
    if value.is_map:
        raise ValueError("map values cannot be maps")
    return Sort("map", keys, value)


def sort_of_type(decon_type: str) -> Sort:
    return {"address": ADDR, "uint": UINT, "int": INT, "bool": BOOL}[decon_type]


def _cls(sort: Sort) -> str:
    """Compatibility class: uint and int mix freely, address is separate."""
    if sort.is_numeric:
        return "num"
    return sort.kind


def compatible(a: Sort, b: Sort) -> bool:
    if a.is_map or b.is_map:
        return a == b
    return _cls(a) == _cls(b)


# ---------------------------------------------------------------------------
# Expressions


class SortError(TypeError):
    pass


@dataclass(frozen=True)
class Expr:
    def accept_sort(self) -> Sort:
        raise NotImplementedError

    @property
    def sort(self) -> Sort:
        return _sort_of(self)

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Var(Expr):
    name: str
    var_sort: Sort

    @property
    def is_primed(self) -> bool:
        return self.name.endswith(PRIME_SUFFIX)


@dataclass(frozen=True)
class IntConst(Expr):
    value: int


@dataclass(frozen=True)
class BoolConst(Expr):
    value: bool


TRUE = BoolConst(True)
FALSE = BoolConst(False)


@dataclass(frozen=True)
class Arith(Expr):
    op: str  # + - * /
    lhs: Expr
    rhs: Expr

    def __post_init__(self) -> None:
        for side in (self.lhs, self.rhs):
            s = _sort_of(side)
            if not (s.is_numeric or (isinstance(side, IntConst))):
                raise SortError(f"arithmetic on non-numeric operand {side}")


@dataclass(frozen=True)
class Cmp(Expr):
    op: str  # < <= > >=
    lhs: Expr
    rhs: Expr

    def __post_init__(self) -> None:
        for side in (self.lhs, self.rhs):
            s = _sort_of(side)
            if not s.is_numeric:
                raise SortError(f"ordered comparison on non-numeric operand {side}")


@dataclass(frozen=True)
class Eq(Expr):
    lhs: Expr
    rhs: Expr

    def __post_init__(self) -> None:
        a, b = _sort_of(self.lhs), _sort_of(self.rhs)
        ok = compatible(a, b) or {_cls(a), _cls(b)} == {"addr", "num"} and (
            isinstance(self.lhs, IntConst) or isinstance(self.rhs, IntConst)
        )
        if not ok:
            raise SortError(f"cannot equate {a} with {b}")


@dataclass(frozen=True)
class Not(Expr):
    arg: Expr

    def __post_init__(self) -> None:
        _require_bool(self.arg)


@dataclass(frozen=True)
class And(Expr):
    args: tuple[Expr, ...]

    def __post_init__(self) -> None:
        for a in self.args:
            _require_bool(a)


@dataclass(frozen=True)
class Or(Expr):
    args: tuple[Expr, ...]

    def __post_init__(self) -> None:
        for a in self.args:
            _require_bool(a)


@dataclass(frozen=True)
class Implies(Expr):
    lhs: Expr
    rhs: Expr

    def __post_init__(self) -> None:
        _require_bool(self.lhs)
        _require_bool(self.rhs)


@dataclass(frozen=True)
class Xor(Expr):
    lhs: Expr
    rhs: Expr

    def __post_init__(self) -> None:
        _require_bool(self.lhs)
        _require_bool(self.rhs)


@dataclass(frozen=True)
class Ite(Expr):
    cond: Expr
    then: Expr
    els: Expr

    def __post_init__(self) -> None:
        _require_bool(self.cond)
        if not compatible(_sort_of(self.then), _sort_of(self.els)):
            raise SortError("ite branches have different sorts")


@dataclass(frozen=True)
class MapRead(Expr):
    map: Expr
    keys: tuple[Expr, ...]

    def __post_init__(self) -> None:
        s = _sort_of(self.map)
        if not s.is_map or len(self.keys) != len(s.keys):
            raise SortError(f"bad map read on {self.map}")
        for k, ks in zip(self.keys, s.keys):
            if not compatible(_sort_of(k), ks) and not isinstance(k, IntConst):
                raise SortError(f"map key {k} has sort {_sort_of(k)}, expected {ks}")


@dataclass(frozen=True)
class MapStore(Expr):
    map: Expr
    keys: tuple[Expr, ...]
    value: Expr

    def __post_init__(self) -> None:
        s = _sort_of(self.map)
        if not s.is_map or len(self.keys) != len(s.keys):
            raise SortError(f"bad map store on {self.map}")
        for k, ks in zip(self.keys, s.keys):
            if not compatible(_sort_of(k), ks) and not isinstance(k, IntConst):
                raise SortError(f"map key {k} has sort {_sort_of(k)}, expected {ks}")
        assert s.value is not None
        if not compatible(_sort_of(self.value), s.value):
            raise SortError("stored value has wrong sort")


@dataclass(frozen=True)
class Forall(Expr):
    bound: tuple[Var, ...]
    body: Expr

    def __post_init__(self) -> None:
        _require_bool(self.body)


@dataclass(frozen=True)
class Exists(Expr):
    bound: tuple[Var, ...]
    body: Expr

    def __post_init__(self) -> None:
        _require_bool(self.body)


def _sort_of(e: Expr) -> Sort:
    if isinstance(e, Var):
        return e.var_sort
    if isinstance(e, IntConst):
        return INT
    if isinstance(e, (BoolConst, Cmp, Eq, Not, And, Or, Implies, Xor, Forall, Exists)):
        return BOOL
    if isinstance(e, Arith):
        return INT
    if isinstance(e, Ite):
        return _sort_of(e.then)
    if isinstance(e, MapRead):
        s = _sort_of(e.map)
        assert s.value is not None
        return s.value
    if isinstance(e, MapStore):
        return _sort_of(e.map)
    raise TypeError(f"not an expression: {e!r}")


def _require_bool(e: Expr) -> None:
    if _sort_of(e) != BOOL:
        raise SortError(f"expected a formula, got {e} of sort {_sort_of(e)}")


# ---------------------------------------------------------------------------
# Smart constructors


def and_(*args: Expr) -> Expr:
    flat: list[Expr] = []
    for a in args:
        if isinstance(a, And):
            flat.extend(a.args)
        elif a == FALSE:
            return FALSE
        elif a != TRUE:
            flat.append(a)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def or_(*args: Expr) -> Expr:
    flat: list[Expr] = []
    for a in args:
        if isinstance(a, Or):
            flat.extend(a.args)
        elif a == TRUE:
            return TRUE
        elif a != FALSE:
            flat.append(a)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def not_(a: Expr) -> Expr:
    if isinstance(a, Not):
        return a.arg
    if isinstance(a, BoolConst):
        return BoolConst(not a.value)
    return Not(a)


def implies(a: Expr, b: Expr) -> Expr:
    if a == TRUE:
        return b
    if a == FALSE or b == TRUE:
        return TRUE
    if b == FALSE:
        return not_(a)
    return Implies(a, b)


def xor(a: Expr, b: Expr) -> Expr:
    if a == FALSE:
        return b
    if b == FALSE:
        return a
    if a == TRUE:
        return not_(b)
    if b == TRUE:
        return not_(a)
    return Xor(a, b)


def eq(a: Expr, b: Expr) -> Expr:
    if a == b:
        return TRUE
    if isinstance(a, IntConst) and isinstance(b, IntConst):
        return BoolConst(a.value == b.value)
    if isinstance(a, BoolConst) and isinstance(b, BoolConst):
        return BoolConst(a.value == b.value)
    if isinstance(b, BoolConst) and _sort_of(a) == BOOL:
        return a if b.value else not_(a)
    if isinstance(a, BoolConst) and _sort_of(b) == BOOL:
        return b if a.value else not_(b)
    return Eq(a, b)


def forall(bound: tuple[Var, ...], body: Expr) -> Expr:
    if not bound or isinstance(body, BoolConst):
        return body
    if isinstance(body, Forall):
        return Forall(bound + body.bound, body.body)
    return Forall(bound, body)


def exists(bound: tuple[Var, ...], body: Expr) -> Expr:
    if not bound or isinstance(body, BoolConst):
        return body
    if isinstance(body, Exists):
        return Exists(bound + body.bound, body.body)
    return Exists(bound, body)


# ---------------------------------------------------------------------------
# Traversals


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Var, IntConst, BoolConst)):
        return ()
    if isinstance(e, (Arith, Cmp, Eq, Implies, Xor)):
        return (e.lhs, e.rhs)
    if isinstance(e, Not):
        return (e.arg,)
    if isinstance(e, (And, Or)):
        return e.args
    if isinstance(e, Ite):
        return (e.cond, e.then, e.els)
    if isinstance(e, MapRead):
        return (e.map, *e.keys)
    if isinstance(e, MapStore):
        return (e.map, *e.keys, e.value)
    if isinstance(e, (Forall, Exists)):
        return (e.body,)
    raise TypeError(f"not an expression: {e!r}")


def free_vars(e: Expr) -> set[Var]:
    out: set[Var] = set()

    def walk(x: Expr, bound: frozenset[str]) -> None:
        if isinstance(x, Var):
            if x.name not in bound:
                out.add(x)
            return
        if isinstance(x, (Forall, Exists)):
            walk(x.body, bound | {v.name for v in x.bound})
            return
        for c in children(x):
            walk(c, bound)

    walk(e, frozenset())
    return out


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    """Capture-avoiding substitution of variables by expressions."""
    if not mapping:
        return e

    def walk(x: Expr, mp: dict[str, Expr]) -> Expr:
        if isinstance(x, Var):
            return mp.get(x.name, x)
        if isinstance(x, (IntConst, BoolConst)):
            return x
        if isinstance(x, (Forall, Exists)):
            mp2 = {k: v for k, v in mp.items() if k not in {b.name for b in x.bound}}
            if not mp2:
                return x
            # rename binders that would capture a free variable of the image
            incoming = set()
            for v in mp2.values():
                incoming |= {fv.name for fv in free_vars(v)}
            bound = list(x.bound)
            body = x.body
            for i, b in enumerate(bound):
                if b.name in incoming:
                    fresh = _fresh(b.name, incoming | set(mp2) | {v.name for v in free_vars(body)})
                    nb = Var(fresh, b.var_sort)
                    body = walk(body, {b.name: nb})
                    bound[i] = nb
            body = walk(body, mp2)
            cls = Forall if isinstance(x, Forall) else Exists
            return cls(tuple(bound), body)
        rebuilt = _rebuild(x, tuple(walk(c, mp) for c in children(x)))
        return rebuilt

    return walk(e, dict(mapping))


def _fresh(base: str, taken: set[str]) -> str:
    n = 1
    while f"{base}!r{n}" in taken:
        n += 1
    return f"{base}!r{n}"


def _rebuild(e: Expr, kids: tuple[Expr, ...]) -> Expr:
    if isinstance(e, Arith):
        return Arith(e.op, kids[0], kids[1])
    if isinstance(e, Cmp):
        return Cmp(e.op, kids[0], kids[1])
    if isinstance(e, Eq):
        return Eq(kids[0], kids[1])
    if isinstance(e, Implies):
        return Implies(kids[0], kids[1])
    if isinstance(e, Xor):
        return Xor(kids[0], kids[1])
    if isinstance(e, Not):
        return Not(kids[0])
    if isinstance(e, And):
        return And(kids)
    if isinstance(e, Or):
        return Or(kids)
    if isinstance(e, Ite):
        return Ite(kids[0], kids[1], kids[2])
    if isinstance(e, MapRead):
        return MapRead(kids[0], kids[1:])
    if isinstance(e, MapStore):
        return MapStore(kids[0], kids[1:-1], kids[-1])
    raise TypeError(f"cannot rebuild {e!r}")


def prime(e: Expr, state_names: set[str]) -> Expr:
    """Replace every state variable with its primed twin."""
    mapping: dict[str, Expr] = {}
    for v in free_vars(e):
        if v.name in state_names:
            if v.is_primed:
                raise ValueError(f"variable {v.name} is already primed")
            mapping[v.name] = Var(v.name + PRIME_SUFFIX, v.var_sort)
    return substitute(e, mapping)


def primed(v: Var) -> Var:
    if v.is_primed:
        raise ValueError(f"variable {v.name} is already primed")
    return Var(v.name + PRIME_SUFFIX, v.var_sort)


# ---------------------------------------------------------------------------
# Rendering

_PREC = {
    "or": 1,
    "implies": 2,
    "xor": 2,
    "and": 3,
    "not": 4,
    "cmp": 5,
    "add": 6,
    "mul": 7,
    "atom": 9,
}


def render(e: Expr) -> str:
    return _render(e, 0)


def _paren(s: str, prec: int, ctx: int) -> str:
    return f"({s})" if prec < ctx else s


def _render(e: Expr, ctx: int) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, IntConst):
        return str(e.value)
    if isinstance(e, BoolConst):
        return "true" if e.value else "false"
    if isinstance(e, Arith):
        prec = _PREC["mul"] if e.op in ("*", "/") else _PREC["add"]
        s = f"{_render(e.lhs, prec)} {e.op} {_render(e.rhs, prec + 1)}"
        return _paren(s, prec, ctx)
    if isinstance(e, Cmp):
        s = f"{_render(e.lhs, _PREC['cmp'] + 1)} {e.op} {_render(e.rhs, _PREC['cmp'] + 1)}"
        return _paren(s, _PREC["cmp"], ctx)
    if isinstance(e, Eq):
        s = f"{_render(e.lhs, _PREC['cmp'] + 1)} = {_render(e.rhs, _PREC['cmp'] + 1)}"
        return _paren(s, _PREC["cmp"], ctx)
    if isinstance(e, Not):
        return _paren(f"!{_render(e.arg, _PREC['atom'])}", _PREC["not"], ctx)
    if isinstance(e, And):
        s = " && ".join(_render(a, _PREC["and"] + 1) for a in e.args)
        return _paren(s, _PREC["and"], ctx)
    if isinstance(e, Or):
        s = " || ".join(_render(a, _PREC["or"] + 1) for a in e.args)
        return _paren(s, _PREC["or"], ctx)
    if isinstance(e, Implies):
        s = f"{_render(e.lhs, _PREC['implies'] + 1)} -> {_render(e.rhs, _PREC['implies'])}"
        return _paren(s, _PREC["implies"], ctx)
    if isinstance(e, Xor):
        s = f"{_render(e.lhs, _PREC['xor'] + 1)} xor {_render(e.rhs, _PREC['xor'] + 1)}"
        return _paren(s, _PREC["xor"], ctx)
    if isinstance(e, Ite):
        return f"ite({_render(e.cond, 0)}, {_render(e.then, 0)}, {_render(e.els, 0)})"
    if isinstance(e, MapRead):
        keys = ", ".join(_render(k, 0) for k in e.keys)
        return f"{_render(e.map, _PREC['atom'])}[{keys}]"
    if isinstance(e, MapStore):
        keys = ", ".join(_render(k, 0) for k in e.keys)
        return f"store({_render(e.map, 0)}, {keys}, {_render(e.value, 0)})"
    if isinstance(e, (Forall, Exists)):
        word = "forall" if isinstance(e, Forall) else "exists"
        binders = ", ".join(f"{v.name}: {v.var_sort}" for v in e.bound)
        return _paren(f"{word} {binders}. {_render(e.body, 1)}", 1, ctx)
    raise TypeError(f"cannot render {e!r}")


def canonical_key(e: Expr) -> str:
    """Stable key identifying formulas up to bound-variable naming and
    argument order of conjunctions/disjunctions; used for deduplication."""

    def walk(x: Expr, ren: dict[str, str]) -> str:
        if isinstance(x, Var):
            return ren.get(x.name, x.name)
        if isinstance(x, (IntConst, BoolConst)):
            return str(x.value)
        if isinstance(x, (Forall, Exists)):
            ren2 = dict(ren)
            for v in x.bound:
                ren2[v.name] = f"!b{len(ren2)}"
            word = "forall" if isinstance(x, Forall) else "exists"
            sorts = ",".join(str(v.var_sort) for v in x.bound)
            return f"({word} [{sorts}] {walk(x.body, ren2)})"
        if isinstance(x, (And, Or)):
            word = "and" if isinstance(x, And) else "or"
            parts = sorted(walk(a, ren) for a in x.args)
            return f"({word} {' '.join(parts)})"
        if isinstance(x, Eq):
            parts = sorted((walk(x.lhs, ren), walk(x.rhs, ren)))
            return f"(= {' '.join(parts)})"
        tag = type(x).__name__
        op = getattr(x, "op", "")
        parts = " ".join(walk(c, ren) for c in children(x))
        return f"({tag}{op} {parts})"

    return walk(e, {})


# ---------------------------------------------------------------------------
# State space


@dataclass(frozen=True)
class StateVar:
    name: str
    sort: Sort
    relation: str
    column: str

    def var(self) -> Var:
        return Var(self.name, self.sort)

    def primed(self) -> Var:
        return Var(self.name + PRIME_SUFFIX, self.sort)


@dataclass
class StateSpace:
    by_relation: dict[str, tuple[StateVar, ...]]

    def vars(self) -> tuple[StateVar, ...]:
        return tuple(v for vs in self.by_relation.values() for v in vs)

    def names(self) -> set[str]:
        return {v.name for v in self.vars()}

    def of(self, relation: str) -> tuple[StateVar, ...]:
        return self.by_relation[relation]


def mk_state_vars(validated) -> StateSpace:
    """Map every relation to its modeling variables.

    Singletons become one scalar per column; keyed relations with value
    columns become one map per value column; all-key relations become one
    boolean membership map. Handlers and violation queries model no state.
    """
    contract = validated.contract
    violation = set(contract.annotated("violation"))
    taken: set[str] = set()
    by_relation: dict[str, tuple[StateVar, ...]] = {}

    def fresh(name: str) -> str:
        while name in taken:
            name += "_"
        taken.add(name)
        return name

    for decl in contract.decls:
        if decl.is_handler or decl.name in violation:
            continue
        svs: list[StateVar] = []
        if decl.is_singleton:
            for col in decl.columns:
                name = decl.name if len(decl.columns) == 1 else f"{decl.name}_{col.name}"
                svs.append(StateVar(fresh(name), sort_of_type(col.type), decl.name, col.name))
        else:
            keys = tuple(sort_of_type(decl.columns[i].type) for i in decl.key_indices())
            values = decl.value_indices()
            if values:
                for i in values:
                    col = decl.columns[i]
                    name = decl.name if len(values) == 1 else f"{decl.name}_{col.name}"
                    svs.append(
                        StateVar(fresh(name), map_sort(keys, sort_of_type(col.type)), decl.name, col.name)
                    )
            else:
                svs.append(StateVar(fresh(decl.name), map_sort(keys, BOOL), decl.name, "member"))
        by_relation[decl.name] = tuple(svs)
    return StateSpace(by_relation)
