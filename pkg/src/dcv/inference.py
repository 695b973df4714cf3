"""Induction proof with Houdini-style inductive invariant inference.

A property is proven by (1) the base check init => prop, (2) plain
induction, and if that fails (3) candidate invariants refuted to a
fixpoint: predicates are extracted from transaction-rule and violation-
query bodies, combined into two candidate patterns (with both polarities),
and checked for inductiveness relative to the surviving set; survivors
strengthen the property. Verified is returned only when the solver
confirms both induction conjuncts of the final check in the same run.

Refutation queries within one round are independent; they run on a thread
pool against separate solver processes, and removals apply at the round
barrier, so parallel and sequential runs produce the same survivor set.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .ast import AggLit, CondLit, Const, FuncLit, RelLit, Var as AVar
from .compiler import CHECK_TRIGGER, Property, Transition, TransitionSystem
from .logic import (
    BOOL,
    Cmp,
    Expr,
    IntConst,
    MapRead,
    TRUE,
    UINT,
    Var,
    and_,
    canonical_key,
    eq,
    forall,
    free_vars,
    implies,
    not_,
    prime,
    sort_of_type,
    substitute,
)
from .solver import Obligation, SolverConfig, SolverResult, check, resolve_solver
from .validator import RuleKind, ValidatedContract

log = logging.getLogger("dcv")


@dataclass(frozen=True)
class Predicate:
    formula: Expr
    locals: tuple[Var, ...]
    origin: tuple[int, int]  # (rule index, literal index)

    def key(self) -> str:
        return canonical_key(forall(self.locals, self.formula) if self.locals else self.formula)

    def negated(self) -> "Predicate":
        return Predicate(not_(self.formula), self.locals, self.origin)


@dataclass(frozen=True)
class Candidate:
    pattern: str  # "nonneg" | "p1" | "p2"
    p: Predicate
    q: Predicate | None
    closed: Expr
    has_init_premise: bool

    def key(self) -> str:
        return canonical_key(self.closed)


@dataclass
class VerifierConfig:
    solver: str | None = None
    qtimeout: float = 10.0
    budget: float = 3600.0
    pattern1: bool = True
    pattern2: bool = True
    polarity: bool = True
    drop_constant_free: bool = False
    dump_dir: str | None = None
    workers: int = 0  # 0: pick from cpu count

    def effective_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        return min(8, os.cpu_count() or 1)


@dataclass
class Stats:
    solver_queries: int = 0
    candidates: int = 0
    survivors: int = 0
    refuted: int = 0
    rounds: int = 0


@dataclass
class Verdict:
    status: str  # verified | unknown | input-error
    reason: str | None = None  # failed-base | no-inductive-strengthening | solver-unknown
    invariant: Expr | None = None
    conjuncts: tuple[Expr, ...] = ()
    stats: Stats = field(default_factory=Stats)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return self.status == "verified"


class BudgetExhausted(Exception):
    pass


# ---------------------------------------------------------------------------
# Predicate extraction


def extract_predicates(vc: ValidatedContract, gamma, rule_index: int) -> list[Predicate]:
    """Literal-wise encodings of a transaction or violation rule body.

    All rule variables become sorted local variables; literals that touch
    no state variable are kept only as conjunction partners (P1), matching
    the paper's augmentation of each predicate with one matching predicate.
    """
    rule = vc.rules[rule_index]
    info = vc.rule_info[rule_index]
    names = gamma.names()

    def local(v: AVar) -> Var:
        name = v.name
        if name in names:
            name += "!l"
        return Var(name, sort_of_type(info.var_types.get(v.name, "int")))

    def term(arg) -> Expr:
        if isinstance(arg, Const):
            from .logic import BoolConst

            return BoolConst(arg.value) if isinstance(arg.value, bool) else IntConst(arg.value)
        return local(arg)

    encoded: list[tuple[int, Expr, tuple[Var, ...]]] = []
    for li, lit in enumerate(rule.body):
        if li == info.trigger_index:
            continue
        if isinstance(lit, RelLit):
            if lit.rel in ("msgSender", "msgValue") or lit.rel not in gamma.by_relation:
                continue
            decl = vc.relations[lit.rel]
            svs = gamma.of(lit.rel)
            parts = []
            if decl.is_singleton:
                for sv, arg in zip(svs, lit.args):
                    parts.append(eq(sv.var(), term(arg)))
            else:
                keys = tuple(term(lit.args[i]) for i in decl.key_indices())
                values = decl.value_indices()
                if values:
                    for sv, i in zip(svs, values):
                        parts.append(eq(MapRead(sv.var(), keys), term(lit.args[i])))
                else:
                    parts.append(MapRead(svs[0].var(), keys))
            f = and_(*parts)
        elif isinstance(lit, CondLit):
            from .compiler import _condition

            f = _condition(lit.op, term(lit.lhs), term(lit.rhs))
        elif isinstance(lit, FuncLit):
            from .logic import Arith

            f = eq(local(lit.out), Arith(lit.op, term(lit.lhs), term(lit.rhs)))
        elif isinstance(lit, AggLit):
            continue
        else:
            continue
        if f == TRUE:
            continue
        lvs = tuple(v for v in _ordered_locals(f) if v.name not in names)
        encoded.append((li, f, lvs))

    state_named = names
    p0 = [
        Predicate(f, lvs, (rule_index, li))
        for li, f, lvs in encoded
        if any(v.name in state_named for v in free_vars(f))
    ]
    p1: list[Predicate] = []
    for p in p0:
        p_vars = {v.name for v in p.locals}
        for li, f, lvs in encoded:
            if (rule_index, li) == p.origin:
                continue
            if p_vars & {v.name for v in lvs}:
                merged = tuple(dict.fromkeys(p.locals + lvs).keys())
                p1.append(Predicate(and_(p.formula, f), merged, p.origin))
    out: list[Predicate] = []
    seen: set[str] = set()
    for p in p0 + p1:
        k = p.key()
        if k not in seen:
            seen.add(k)
            out.append(p)
    return out


def _ordered_locals(f: Expr) -> tuple[Var, ...]:
    ordered: dict[str, Var] = {}

    def walk(e: Expr) -> None:
        from .logic import children

        if isinstance(e, Var):
            ordered.setdefault(e.name, e)
            return
        for c in children(e):
            walk(c)

    walk(f)
    return tuple(ordered.values())


def auto_nonneg_candidates(ts: TransitionSystem) -> list[Candidate]:
    """uint state stays nonnegative: asserted at init, re-proved as
    candidates so primed nonnegativity is available to every check."""
    out = []
    for sv in ts.state_vars():
        f: Expr | None = None
        lvs: tuple[Var, ...] = ()
        if sv.sort == UINT:
            f = Cmp(">=", sv.var(), IntConst(0))
        elif sv.sort.is_map and sv.sort.value == UINT:
            lvs = tuple(Var(f"k{i}", ks) for i, ks in enumerate(sv.sort.keys))
            f = Cmp(">=", MapRead(sv.var(), lvs), IntConst(0))
        if f is None:
            continue
        pred = Predicate(not_(f), lvs, (-1, -1))
        out.append(Candidate("nonneg", pred, None, forall(lvs, f), has_init_premise=False))
    return out


def generate_candidates(
    predicates: list[Predicate], init: Expr, cfg: VerifierConfig
) -> list[Candidate]:
    """Two closed-form patterns over the polarity-doubled predicate pool."""
    pool: list[Predicate] = []
    seen: set[str] = set()
    for p in predicates:
        variants = [p, p.negated()] if cfg.polarity else [p]
        for v in variants:
            k = v.key()
            if k not in seen:
                seen.add(k)
                pool.append(v)

    not_init = not_(init)
    out: list[Candidate] = []
    keys: set[str] = set()

    def emit(cand: Candidate) -> None:
        if cand.closed == TRUE:
            return
        k = cand.key()
        if k not in keys:
            keys.add(k)
            out.append(cand)

    if cfg.pattern1:
        for p in pool:
            body = implies(not_init, not_(p.formula))
            if not_(p.formula) == TRUE:
                continue
            emit(Candidate("p1", p, None, forall(p.locals, body), True))
    if cfg.pattern2:
        for qi, q in enumerate(pool):
            for pi, p in enumerate(pool):
                if qi == pi or q.origin == p.origin:
                    continue
                q_f, q_locals = q.formula, q.locals
                p_f, p_locals = p.formula, p.locals
                taken = {v.name for v in q_locals}
                ren: dict[str, Expr] = {}
                renamed: list[Var] = []
                for v in p_locals:
                    if v.name in taken:
                        v2 = Var(v.name + "!2", v.var_sort)
                        ren[v.name] = v2
                        renamed.append(v2)
                    else:
                        renamed.append(v)
                        taken.add(v.name)
                if ren:
                    p_f = substitute(p_f, ren)
                body = implies(and_(not_init, q_f), not_(p_f))
                if not_(p_f) == TRUE:
                    continue
                emit(Candidate("p2", p, q, forall(q_locals + tuple(renamed), body), True))
    return out


# ---------------------------------------------------------------------------
# Obligations


class ProofContext:
    def __init__(self, ts: TransitionSystem, cfg: VerifierConfig):
        self.ts = ts
        self.cfg = cfg
        self.solver = resolve_solver(cfg.solver, cfg.dump_dir)
        self.state_names = ts.state_names()
        self.deadline = time.monotonic() + cfg.budget
        self.stats = Stats()

    def remaining(self) -> float:
        return self.deadline - time.monotonic()

    def declarations(self, extra: tuple[Var, ...], primed: bool) -> tuple[Var, ...]:
        decls = [sv.var() for sv in self.ts.state_vars()]
        if primed:
            decls += [sv.primed() for sv in self.ts.state_vars()]
        decls += list(extra)
        return tuple(decls)

    def check_valid(self, name: str, assumptions: tuple[Expr, ...], goal: Expr,
                    params: tuple[Var, ...] = (), primed: bool = False) -> SolverResult:
        remaining = self.remaining()
        if remaining <= 0:
            raise BudgetExhausted()
        decls = self.declarations(params, primed)
        known = {v.name for v in decls}
        loose = tuple(
            sorted(
                {v for f in assumptions + (goal,) for v in free_vars(f) if v.name not in known},
                key=lambda v: v.name,
            )
        )
        obligation = Obligation(name, decls + loose, assumptions, goal)
        self.stats.solver_queries += 1
        return check(obligation, min(self.cfg.qtimeout, remaining), self.solver)

    def prime(self, f: Expr) -> Expr:
        return prime(f, self.state_names)


def refute_invariant(
    ctx: ProofContext,
    cand: Candidate,
    premise: Expr,
    prop: Property,
    tag: str,
) -> bool:
    """True iff the candidate fails its base or consecution check; solver
    `unknown` counts as refuted so only solver-confirmed facts survive."""
    if not cand.has_init_premise:
        res = ctx.check_valid(f"{tag}-base", (ctx.ts.init,), cand.closed)
        if not res.is_valid:
            return True
    for tr in ctx.ts.transitions:
        res = ctx.check_valid(
            f"{tag}-{tr.name}",
            (premise, prop.formula, tr.formula),
            ctx.prime(cand.closed),
            params=tr.params,
            primed=True,
        )
        if not res.is_valid:
            return True
    return False


def find_inductive_invariant(
    ctx: ProofContext, candidates: list[Candidate], prop: Property
) -> list[Candidate]:
    """Houdini: drop refuted candidates until a fixpoint; the survivors'
    conjunction is the strongest inductive one over the candidate set."""
    current = list(candidates)
    round_no = 0
    while True:
        round_no += 1
        ctx.stats.rounds = round_no
        premise = and_(*(c.closed for c in current))
        workers = ctx.cfg.effective_workers()
        flags: list[bool]
        tags = [f"houdini-{prop.name}-r{round_no}-c{i}" for i in range(len(current))]
        if workers > 1 and len(current) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                flags = list(
                    pool.map(
                        lambda ic: refute_invariant(ctx, ic[1], premise, prop, tags[ic[0]]),
                        enumerate(current),
                    )
                )
        else:
            flags = [refute_invariant(ctx, c, premise, prop, tags[i]) for i, c in enumerate(current)]
        refuted = [c for c, f in zip(current, flags) if f]
        survivors = [c for c, f in zip(current, flags) if not f]
        ctx.stats.refuted += len(refuted)
        log.info(
            "houdini round %d: %d candidates, %d refuted, %d survive",
            round_no,
            len(current),
            len(refuted),
            len(survivors),
        )
        if not refuted:
            return survivors
        current = survivors
        if not current:
            return []


def verify_property(
    vc: ValidatedContract, ts: TransitionSystem, prop: Property, cfg: VerifierConfig
) -> Verdict:
    ctx = ProofContext(ts, cfg)
    try:
        return _verify(vc, ts, prop, ctx)
    except BudgetExhausted:
        return Verdict("unknown", reason="solver-unknown", stats=ctx.stats,
                       diagnostics=["verification budget exhausted"])


def _verify(vc: ValidatedContract, ts: TransitionSystem, prop: Property, ctx: ProofContext) -> Verdict:
    stats = ctx.stats
    res = ctx.check_valid(f"{prop.name}-base", (ts.init,), prop.formula)
    if res.status == "unknown":
        return Verdict("unknown", reason="solver-unknown", stats=stats,
                       diagnostics=[f"base check inconclusive: {res.reason}"])
    if not res.is_valid:
        return Verdict("unknown", reason="failed-base", stats=stats,
                       diagnostics=_model_diag(res, "base"))

    log.info("property %s: base check passed", prop.name)
    plain = _consecution(ctx, prop, (), f"{prop.name}-plain")
    if plain is None:
        log.info("property %s: inductive without strengthening", prop.name)
        stats.survivors = 0
        return Verdict("verified", invariant=prop.formula, conjuncts=(), stats=stats)

    log.info("property %s: not plainly inductive, inferring invariants", prop.name)
    gamma = ts.gamma
    predicates: list[Predicate] = []
    for r in vc.transaction_rules + vc.violation_rules:
        predicates.extend(extract_predicates(vc, gamma, r))
    if ctx.cfg.drop_constant_free:
        predicates = [p for p in predicates if _has_constant(p.formula)]
    candidates = auto_nonneg_candidates(ts) + generate_candidates(predicates, ts.init, ctx.cfg)
    stats.candidates = len(candidates)
    log.info("property %s: %d predicates, %d candidates", prop.name, len(predicates), len(candidates))

    survivors = find_inductive_invariant(ctx, candidates, prop)
    stats.survivors = len(survivors)
    inv = and_(*(c.closed for c in survivors))

    res = ctx.check_valid(f"{prop.name}-final-base", (ts.init,), and_(inv, prop.formula))
    if not res.is_valid:
        return Verdict("unknown", reason="no-inductive-strengthening", stats=stats,
                       diagnostics=_model_diag(res, "final base"))
    failing = _consecution(ctx, prop, tuple(c.closed for c in survivors), f"{prop.name}-final")
    if failing is not None:
        return Verdict(
            "unknown",
            reason="no-inductive-strengthening",
            stats=stats,
            diagnostics=[f"induction fails on transition {failing[0]}"] + _model_diag(failing[1], "consecution"),
        )
    conjuncts = tuple(c.closed for c in survivors)
    return Verdict("verified", invariant=and_(inv, prop.formula), conjuncts=conjuncts, stats=stats)


def _consecution(
    ctx: ProofContext, prop: Property, invariants: tuple[Expr, ...], tag: str
) -> tuple[str, SolverResult] | None:
    """Check inv & prop & tr => inv' & prop' per transition; None if all hold."""
    inv = and_(*invariants)
    goal_core = and_(inv, prop.formula)
    for tr in ctx.ts.transitions:
        res = ctx.check_valid(
            f"{tag}-{tr.name}",
            (inv, prop.formula, tr.formula),
            ctx.prime(goal_core),
            params=tr.params,
            primed=True,
        )
        if res.status == "unknown":
            return (tr.name, res)
        if not res.is_valid:
            return (tr.name, res)
    return None


def _model_diag(res: SolverResult, what: str) -> list[str]:
    if res.model:
        parts = ", ".join(f"{k}={v}" for k, v in sorted(res.model.items()) if not k.startswith("!"))
        return [f"{what} countermodel (may be spurious): {parts[:400]}"]
    return []


def _has_constant(f: Expr) -> bool:
    from .logic import BoolConst, children

    def walk(e: Expr) -> bool:
        if isinstance(e, (IntConst, BoolConst)):
            return True
        return any(walk(c) for c in children(e))

    return walk(f)
