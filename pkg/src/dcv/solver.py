"""SMT-LIB 2.6 emission and the external solver process driver.

`emit` is a pure function: identical obligations yield byte-identical
scripts. `check` spawns one solver process per query on a temp file,
parses the first status token, and reads a model on `sat`. No solver
outcome other than a clean `unsat` ever maps to Valid.

Any conforming SMT-LIB solver works as a backend; z3 and cvc5 are
auto-detected on PATH, and the bundled `dcv-smt` executable is the
fallback (and the default in solver-less environments).
"""

from __future__ import annotations

import os
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .logic import (
    BOOL,
    Arith,
    And,
    BoolConst,
    Cmp,
    Eq,
    Exists,
    Expr,
    Forall,
    Implies,
    IntConst,
    Ite,
    MapRead,
    MapStore,
    Not,
    Or,
    Sort,
    Var,
    Xor,
    free_vars,
)


# ---------------------------------------------------------------------------
# Obligations


@dataclass(frozen=True)
class Obligation:
    name: str
    declarations: tuple[Var, ...]
    assumptions: tuple[Expr, ...]
    goal: Expr

    def __post_init__(self) -> None:
        declared = {v.name for v in self.declarations}
        for f in self.assumptions + (self.goal,):
            loose = {v.name for v in free_vars(f)} - declared
            if loose:
                raise ValueError(f"obligation {self.name}: undeclared symbols {sorted(loose)}")


@dataclass(frozen=True)
class MapModel:
    default: object
    entries: tuple[tuple[tuple, object], ...] = ()

    def get(self, key: tuple):
        for k, v in self.entries:
            if k == key:
                return v
        return self.default


@dataclass(frozen=True)
class SolverResult:
    status: str  # valid | invalid | unknown
    model: dict | None = None
    reason: str | None = None  # for unknown: timeout | solver-reported

    @property
    def is_valid(self) -> bool:
        return self.status == "valid"


VALID = SolverResult("valid")


class SolverError(Exception):
    pass


class SolverSpawnError(SolverError):
    pass


class SolverOutputError(SolverError):
    pass


# ---------------------------------------------------------------------------
# Emission


def smt_sort(sort: Sort) -> str:
    if sort == BOOL:
        return "Bool"
    if sort.is_map:
        assert sort.value is not None
        inner = smt_sort(sort.value)
        for _ in sort.keys:
            inner = f"(Array Int {inner})"
        return inner
    return "Int"


def smt_expr(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, IntConst):
        return str(e.value) if e.value >= 0 else f"(- {-e.value})"
    if isinstance(e, BoolConst):
        return "true" if e.value else "false"
    if isinstance(e, Arith):
        op = {"+": "+", "-": "-", "*": "*", "/": "div"}[e.op]
        return f"({op} {smt_expr(e.lhs)} {smt_expr(e.rhs)})"
    if isinstance(e, Cmp):
        return f"({e.op} {smt_expr(e.lhs)} {smt_expr(e.rhs)})"
    if isinstance(e, Eq):
        return f"(= {smt_expr(e.lhs)} {smt_expr(e.rhs)})"
    if isinstance(e, Not):
        return f"(not {smt_expr(e.arg)})"
    if isinstance(e, And):
        return f"(and {' '.join(smt_expr(a) for a in e.args)})"
    if isinstance(e, Or):
        return f"(or {' '.join(smt_expr(a) for a in e.args)})"
    if isinstance(e, Implies):
        return f"(=> {smt_expr(e.lhs)} {smt_expr(e.rhs)})"
    if isinstance(e, Xor):
        return f"(xor {smt_expr(e.lhs)} {smt_expr(e.rhs)})"
    if isinstance(e, Ite):
        return f"(ite {smt_expr(e.cond)} {smt_expr(e.then)} {smt_expr(e.els)})"
    if isinstance(e, MapRead):
        s = smt_expr(e.map)
        for k in e.keys:
            s = f"(select {s} {smt_expr(k)})"
        return s
    if isinstance(e, MapStore):
        return _store(smt_expr(e.map), e.keys, e.value)
    if isinstance(e, (Forall, Exists)):
        word = "forall" if isinstance(e, Forall) else "exists"
        binders = " ".join(f"({v.name} {smt_sort(v.var_sort)})" for v in e.bound)
        return f"({word} ({binders}) {smt_expr(e.body)})"
    raise TypeError(f"cannot emit {e!r}")


def _store(base: str, keys: tuple[Expr, ...], value: Expr) -> str:
    k = smt_expr(keys[0])
    if len(keys) == 1:
        return f"(store {base} {k} {smt_expr(value)})"
    inner = _store(f"(select {base} {k})", keys[1:], value)
    return f"(store {base} {k} {inner})"


def emit(o: Obligation) -> str:
    lines = [f"; obligation: {o.name}", "(set-logic ALL)"]
    for v in o.declarations:
        lines.append(f"(declare-const {v.name} {smt_sort(v.var_sort)})")
    for a in o.assumptions:
        lines.append(f"(assert {smt_expr(a)})")
    lines.append(f"(assert (not {smt_expr(o.goal)}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Driver


@dataclass(frozen=True)
class SolverConfig:
    command: tuple[str, ...]
    dump_dir: str | None = None

    @property
    def description(self) -> str:
        return " ".join(self.command)


def bundled_solver_command() -> tuple[str, ...]:
    return (sys.executable, "-m", "dcv.minismt")


def resolve_solver(path: str | None = None, dump_dir: str | None = None) -> SolverConfig:
    """Pick a solver: explicit path, $DCV_SOLVER, z3, cvc5, then bundled."""
    choice = path or os.environ.get("DCV_SOLVER")
    if choice:
        if choice == "bundled":
            return SolverConfig(bundled_solver_command(), dump_dir)
        parts = tuple(choice.split())
        if Path(parts[0]).name.startswith("cvc"):
            parts = parts + ("--produce-models",)
        return SolverConfig(parts, dump_dir)
    for name in ("z3", "cvc5"):
        found = shutil.which(name)
        if found:
            flags: tuple[str, ...] = ("--produce-models",) if name == "cvc5" else ()
            return SolverConfig((found,) + flags, dump_dir)
    return SolverConfig(bundled_solver_command(), dump_dir)


def check(o: Obligation, timeout: float, config: SolverConfig) -> SolverResult:
    """Emit, run, and interpret one obligation.

    unsat -> Valid; sat -> Invalid with the parsed model; unknown or
    timeout -> Unknown. Spawn failures and unparseable output raise.
    """
    script = emit(o)
    if config.dump_dir:
        Path(config.dump_dir).mkdir(parents=True, exist_ok=True)
        (Path(config.dump_dir) / f"{o.name}.smt2").write_text(script)
    if timeout <= 0:
        return SolverResult("unknown", reason="timeout")
    with tempfile.NamedTemporaryFile(
        "w", suffix=".smt2", prefix="dcv-", delete=False
    ) as tmp:
        tmp.write(script)
        tmp_path = tmp.name
    try:
        try:
            proc = subprocess.run(
                list(config.command) + [tmp_path],
                capture_output=True,
                text=True,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired:
            return SolverResult("unknown", reason="timeout")
        except OSError as exc:
            raise SolverSpawnError(f"cannot run solver {config.description}: {exc}") from exc
        return _interpret_output(proc.stdout, proc.stderr, config)
    finally:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass


def _interpret_output(stdout: str, stderr: str, config: SolverConfig) -> SolverResult:
    tokens = stdout.split()
    status = tokens[0] if tokens else ""
    if status == "unsat":
        return VALID
    if status == "unknown":
        return SolverResult("unknown", reason="solver-reported")
    if status == "sat":
        rest = stdout.split("sat", 1)[1]
        return SolverResult("invalid", model=_parse_model(rest))
    raise SolverOutputError(
        f"solver {config.description} produced no verdict "
        f"(stdout: {stdout[:200]!r}, stderr: {stderr[:200]!r})"
    )


# ---------------------------------------------------------------------------
# Model parsing (tolerant: unparseable pieces are kept as raw strings)


def _tokenize_sexp(text: str) -> list[str]:
    out: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in "()":
            out.append(c)
            i += 1
        elif c.isspace():
            i += 1
        elif c == ";":
            j = text.find("\n", i)
            i = n if j < 0 else j
        elif c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                break
            out.append(text[i : j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def _read_sexp(tokens: list[str], pos: int):
    if pos >= len(tokens):
        return None, pos
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            item, pos = _read_sexp(tokens, pos)
            if item is None:
                break
            items.append(item)
        return items, pos + 1
    if tok == ")":
        return None, pos + 1
    return tok, pos + 1


def _parse_model(text: str) -> dict:
    tokens = _tokenize_sexp(text)
    sexp, _ = _read_sexp(tokens, 0)
    model: dict = {}
    if not isinstance(sexp, list):
        return model
    entries = sexp
    if entries and entries[0] == "model":
        entries = entries[1:]
    for entry in entries:
        if isinstance(entry, list) and len(entry) >= 5 and entry[0] == "define-fun":
            name = entry[1]
            model[str(name)] = _value_of(entry[4])
    return model


def _value_of(sexp):
    if isinstance(sexp, str):
        if sexp == "true":
            return True
        if sexp == "false":
            return False
        try:
            return int(sexp)
        except ValueError:
            return sexp
    if isinstance(sexp, list):
        if len(sexp) == 2 and sexp[0] == "-":
            inner = _value_of(sexp[1])
            return -inner if isinstance(inner, int) else sexp
        if len(sexp) == 2 and isinstance(sexp[0], list) and sexp[0][:2] == ["as", "const"]:
            return MapModel(_value_of(sexp[1]))
        if sexp and sexp[0] == "store":
            base = _value_of(sexp[1])
            if isinstance(base, MapModel):
                keys = tuple(_value_of(k) for k in sexp[2:-1])
                val = _value_of(sexp[-1])
                return MapModel(base.default, base.entries + ((keys, val),))
    return _raw(sexp)


def _raw(sexp) -> str:
    if isinstance(sexp, str):
        return sexp
    return "(" + " ".join(_raw(x) for x in sexp) + ")"
