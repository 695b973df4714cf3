"""Ground solving: array elimination, atom translation, CNF, theory loop.

After preprocessing, assertions are a hash-consed NNF DAG over ground
terms. This layer removes arrays (select-over-store expansion, pointwise
array-equality axioms with extensionality witnesses, Ackermann congruence
for reads), linearizes arithmetic atoms, builds a Plaisted-Greenbaum CNF,
and runs CDCL with a lazy exact-LIA theory check.
"""

from __future__ import annotations

from itertools import product

from . import lia
from .lia import Constraint, FEASIBLE, INFEASIBLE, MAYBE
from .prep import Preprocessor, Unsupported, canon_arr, sort_of
from .sat import SAT, UNSAT, SatSolver

_ARRAY_AXIOM_CAP = 100_000
_NEQ_SPLIT_DEPTH = 24


class GroundSolver:
    def __init__(self, prep: Preprocessor):
        self.prep = prep
        self.sat = SatSolver()
        self.clauses_ok = True
        # interning tables
        self.bool_atom_vars: dict[tuple, int] = {}
        self.int_syms: dict[tuple, int] = {}
        self.theory_atoms: dict[tuple, int] = {}  # payload -> sat var
        self.theory_of_var: dict[int, tuple] = {}
        self.node_lit: dict[tuple[int, bool], int] = {}
        self.term_norm: dict[tuple, tuple] = {}
        self.ite_aux: dict[tuple, tuple] = {}
        self.divmod_aux: dict[tuple, tuple] = {}
        self.array_eq_vars: dict[tuple, int] = {}
        self.reads: dict[tuple, int] = {}  # ('rd', base, keys) -> int sym id
        self.taint = False

    # -- small helpers ---------------------------------------------------

    def _new_sat_var(self) -> int:
        return self.sat.new_var()

    def _add_clause(self, lits: list[int]) -> None:
        if not self.sat.add_clause(lits):
            self.clauses_ok = False

    def _int_sym(self, term: tuple) -> int:
        got = self.int_syms.get(term)
        if got is None:
            got = len(self.int_syms)
            self.int_syms[term] = got
        return got

    def _sort(self, term: tuple):
        return sort_of(term, self.prep.symbols, {})

    # -- array removal -----------------------------------------------------

    def norm(self, term: tuple) -> tuple:
        """Normalize a scalar term: expand selects, keep reads atomic."""
        got = self.term_norm.get(term)
        if got is not None:
            return got
        out = self._norm(term)
        self.term_norm[term] = out
        return out

    def _norm(self, term: tuple) -> tuple:
        tag = term[0]
        if tag in ("n", "b", "v", "rd"):
            return term
        op, args = term[1], term[2]
        if op == "select":
            return self._norm_select(args[0], [self.norm(args[1])])
        nargs = tuple(self.norm(a) for a in args)
        return ("app", op, nargs)

    def _norm_select(self, arr: tuple, keys: list[tuple]) -> tuple:
        """Select an array expression at normalized keys (outermost first)."""
        tag = arr[0]
        if tag == "app" and arr[1] == "select":
            return self._norm_select(arr[2][0], [self.norm(arr[2][1])] + keys)
        if tag == "app" and arr[1] == "store":
            base, key, val = arr[2]
            k = self.norm(key)
            hit = self._norm_scalar_or_select(val, keys[1:])
            miss = self._norm_select(base, keys)
            cond = ("app", "=", (keys[0], k))
            if keys[0] == k:
                return hit
            return ("app", "ite", (cond, hit, miss))
        if tag == "app" and arr[1] == "ite":
            c, x, y = arr[2]
            return ("app", "ite", (self.norm(c), self._norm_select(x, keys), self._norm_select(y, keys)))
        if tag == "v":
            return self._read(arr[1], tuple(keys))
        if tag == "rd":
            return self._read(arr[1], arr[2] + tuple(keys))
        raise Unsupported(f"array expression {arr}")

    def _norm_scalar_or_select(self, val: tuple, rest: list[tuple]) -> tuple:
        if not rest:
            return self.norm(val)
        return self._norm_select(val, rest)

    def _read(self, base: str, keys: tuple) -> tuple:
        sort = self.prep.symbols.get(base)
        if not isinstance(sort, tuple) or len(keys) > sort[1]:
            raise Unsupported(f"read arity on {base}")
        rd = ("rd", base, keys)
        if len(keys) == sort[1] and rd not in self.reads:
            self.reads[rd] = -1  # placeholder; ids assigned on use
        return rd

    def _index_sets(self, base_a, off_a, base_b, off_b, count: int) -> list[list[tuple]]:
        sets: list[list[tuple]] = []
        for i in range(count):
            merged: dict[tuple, None] = {}
            for base, off in ((base_a, off_a), (base_b, off_b)):
                for t in self.prep.indices_at((base, off + i)):
                    merged[t] = None
            if not merged:
                merged[("n", 0)] = None
            sets.append(sorted(merged, key=repr))
        return sets

    def array_eq_var(self, a: tuple, b: tuple) -> int:
        """Boolean variable constrained to array equality over known indices."""
        key = tuple(sorted(repr(canon_arr(t)) for t in (a, b)))
        got = self.array_eq_vars.get(key)
        if got is not None:
            return got
        e = self._new_sat_var()
        self.array_eq_vars[key] = e
        sort = self._sort(a)
        assert isinstance(sort, tuple)
        info_a = self.prep._array_base(a) or ("", 0)
        info_b = self.prep._array_base(b) or ("", 0)
        sets = self._index_sets(info_a[0], info_a[1], info_b[0], info_b[1], sort[1])
        total = 1
        for s in sets:
            total *= len(s)
        if total > _ARRAY_AXIOM_CAP:
            raise Unsupported("array equality instance blowup")
        witnesses = self.prep.array_eq_witnesses.get(key)
        for keys in product(*sets):
            lit = self._scalar_eq_lit(self._select_chain(a, keys), self._select_chain(b, keys))
            self._add_clause([-e, lit])
        if witnesses is not None:
            wkeys = tuple(witnesses)
            lit = self._scalar_eq_lit(self._select_chain(a, wkeys), self._select_chain(b, wkeys))
            self._add_clause([e, -lit])
        return e

    def _select_chain(self, arr: tuple, keys: tuple) -> tuple:
        return self._norm_select(arr, [self.norm(k) for k in keys])

    def _scalar_eq_lit(self, a: tuple, b: tuple) -> int:
        sort_v = self._sort_of_norm(a)
        if sort_v == "Bool":
            la = self.formula_lit_term(a, False)
            lb = self.formula_lit_term(b, False)
            return self._iff_aux(la, lb)
        return self.atom_lit(("app", "=", (a, b)), False)

    def _iff_aux(self, la: int, lb: int) -> int:
        x = self._new_sat_var()
        self._add_clause([-x, -la, lb])
        self._add_clause([-x, la, -lb])
        self._add_clause([x, la, lb])
        self._add_clause([x, -la, -lb])
        return x

    def _sort_of_norm(self, term: tuple):
        if term[0] == "rd":
            sort = self.prep.symbols[term[1]]
            left = sort[1] - len(term[2])
            return sort[2] if left == 0 else ("A", left, sort[2])
        if term[0] == "app" and term[1] == "ite":
            return self._sort_of_norm(term[2][1])
        return self._sort(term) if term[0] != "n" else "Int"

    # -- formulas and atoms --------------------------------------------------

    def node_to_lit(self, node_id: int) -> int:
        node = self.prep.dag.nodes[node_id]
        kind = node[0]
        if kind == "true" or kind == "false":
            raise AssertionError("constants handled by caller")
        if kind == "lit":
            return self.formula_lit_term(self.norm(node[1]), node[2])
        key = (node_id, True)
        got = self.node_lit.get(key)
        if got is not None:
            return got
        aux = self._new_sat_var()
        self.node_lit[key] = aux
        kids = []
        for child in node[1]:
            cnode = self.prep.dag.nodes[child]
            if cnode[0] == "true":
                kids.append(None if kind == "and" else True)
            elif cnode[0] == "false":
                kids.append(False if kind == "and" else None)
            else:
                kids.append(self.node_to_lit(child))
        if kind == "and":
            for k in kids:
                if k is False:
                    self._add_clause([-aux])
                elif isinstance(k, int):
                    self._add_clause([-aux, k])
        else:
            clause = [-aux]
            sat_true = False
            for k in kids:
                if k is True:
                    sat_true = True
                elif isinstance(k, int):
                    clause.append(k)
            if not sat_true:
                self._add_clause(clause)
        return aux

    def formula_lit_term(self, term: tuple, neg: bool) -> int:
        """Literal for a normalized boolean term."""
        lit = self._formula_lit(term)
        return -lit if neg else lit

    def _formula_lit(self, term: tuple) -> int:
        tag = term[0]
        if tag == "b":
            # encode constants as a frozen fresh var
            v = self._new_sat_var()
            self._add_clause([v if term[1] else -v])
            return v
        if tag == "v" or tag == "rd":
            got = self.bool_atom_vars.get(term)
            if got is None:
                got = self._new_sat_var()
                self.bool_atom_vars[term] = got
            return got
        op, args = term[1], term[2]
        if op in ("<", "<=", ">", ">="):
            return self.atom_lit(term, False)
        if op == "=":
            sa = self._sort_of_norm(args[0])
            if isinstance(sa, tuple):
                return self.array_eq_var(args[0], args[1])
            if sa == "Bool":
                return self._iff_aux(self._formula_lit(args[0]), self._formula_lit(args[1]))
            return self.atom_lit(term, False)
        if op == "ite":
            c = self._formula_lit(args[0])
            t = self._formula_lit(args[1])
            e = self._formula_lit(args[2])
            x = self._new_sat_var()
            self._add_clause([-x, -c, t])
            self._add_clause([-x, c, e])
            self._add_clause([x, -c, -t])
            self._add_clause([x, c, -e])
            return x
        if op in ("and", "or", "not", "=>", "xor"):
            # can arise inside lifted ite conditions
            if op == "not":
                return -self._formula_lit(args[0])
            lits = [self._formula_lit(a) for a in args]
            x = self._new_sat_var()
            if op == "and":
                for l in lits:
                    self._add_clause([-x, l])
                self._add_clause([x] + [-l for l in lits])
            elif op == "or":
                self._add_clause([-x] + lits)
                for l in lits:
                    self._add_clause([x, -l])
            elif op == "=>":
                return self._formula_lit(("app", "or", (("app", "not", (args[0],)), args[1])))
            else:
                return self._iff_aux(lits[0], -lits[1])
            return x
        raise Unsupported(f"boolean term {term}")

    # -- linear arithmetic ---------------------------------------------------

    def linear(self, term: tuple) -> tuple[dict[int, int], int]:
        tag = term[0]
        if tag == "n":
            return {}, term[1]
        if tag == "v":
            if self._sort(term) != "Int":
                raise Unsupported(f"non-integer term {term}")
            return {self._int_sym(term): 1}, 0
        if tag == "rd":
            return {self._int_sym(term): 1}, 0
        op, args = term[1], term[2]
        if op == "+":
            coeffs: dict[int, int] = {}
            const = 0
            for a in args:
                c2, k2 = self.linear(a)
                const += k2
                for v, c in c2.items():
                    coeffs[v] = coeffs.get(v, 0) + c
            return coeffs, const
        if op == "-":
            c1, k1 = self.linear(args[0])
            c2, k2 = self.linear(args[1])
            for v, c in c2.items():
                c1[v] = c1.get(v, 0) - c
            return c1, k1 - k2
        if op == "*":
            c1, k1 = self.linear(args[0])
            c2, k2 = self.linear(args[1])
            if c1 and c2:
                raise Unsupported("nonlinear multiplication")
            if c1:
                return {v: c * k2 for v, c in c1.items()}, k1 * k2
            return {v: c * k1 for v, c in c2.items()}, k1 * k2
        if op in ("div", "mod"):
            q, r = self._divmod_aux(term)
            target = q if op == "div" else r
            return {self._int_sym(target): 1}, 0
        if op == "ite":
            aux = self._ite_aux(term)
            return {self._int_sym(aux): 1}, 0
        raise Unsupported(f"integer term {term}")

    def _divmod_aux(self, term: tuple) -> tuple[tuple, tuple]:
        op, args = term[1], term[2]
        base = ("app", "divmod", (args[0], args[1]))
        got = self.divmod_aux.get(base)
        if got is not None:
            return got
        dc, dk = self.linear(args[1])
        if dc or dk <= 0:
            raise Unsupported("division by non-constant or non-positive divisor")
        q = ("v", f"!q{len(self.divmod_aux)}")
        r = ("v", f"!r{len(self.divmod_aux)}")
        self.prep.symbols[q[1]] = "Int"
        self.prep.symbols[r[1]] = "Int"
        self.divmod_aux[base] = (q, r)
        tc, tk = self.linear(args[0])
        # t = d*q + r, 0 <= r < d
        eqc = dict(tc)
        eqc[self._int_sym(q)] = eqc.get(self._int_sym(q), 0) - dk
        eqc[self._int_sym(r)] = eqc.get(self._int_sym(r), 0) - 1
        self._assert_atom(("eq", _freeze(eqc), -tk))
        self._assert_atom(("ineq", _freeze({self._int_sym(r): -1}), 0))
        self._assert_atom(("ineq", _freeze({self._int_sym(r): 1}), dk - 1))
        return q, r

    def _ite_aux(self, term: tuple) -> tuple:
        got = self.ite_aux.get(term)
        if got is not None:
            return got
        aux = ("v", f"!ite{len(self.ite_aux)}")
        self.prep.symbols[aux[1]] = "Int"
        self.ite_aux[term] = aux
        c, t, e = term[2]
        cl = self._formula_lit(c)
        then_eq = self.atom_lit(("app", "=", (aux, t)), False)
        else_eq = self.atom_lit(("app", "=", (aux, e)), False)
        self._add_clause([-cl, then_eq])
        self._add_clause([cl, else_eq])
        return aux

    def _theory_var(self, payload: tuple) -> int:
        got = self.theory_atoms.get(payload)
        if got is None:
            got = self._new_sat_var()
            self.theory_atoms[payload] = got
            self.theory_of_var[got] = payload
        return got

    def _assert_atom(self, payload: tuple) -> None:
        self._add_clause([self._theory_var(payload)])

    def atom_lit(self, term: tuple, neg: bool) -> int:
        """Literal for an arithmetic comparison atom."""
        op, args = term[1], term[2]
        lc, lk = self.linear(args[0])
        rc, rk = self.linear(args[1])
        coeffs = dict(lc)
        for v, c in rc.items():
            coeffs[v] = coeffs.get(v, 0) - c
        coeffs = {v: c for v, c in coeffs.items() if c}
        rhs = rk - lk
        if op == ">":
            coeffs, rhs, op = _negate(coeffs, rhs, strict=True)
        elif op == ">=":
            coeffs, rhs, op = _negate(coeffs, rhs, strict=False)
        elif op == "<":
            rhs -= 1
            op = "<="
        if op == "=":
            if not coeffs:
                lit = self._const_lit(rhs == 0)
                return -lit if neg else lit
            payload = _canon_eq(coeffs, rhs)
        else:
            if not coeffs:
                lit = self._const_lit(0 <= rhs)
                return -lit if neg else lit
            payload = ("ineq", _freeze(coeffs), rhs)
        lit = self._theory_var(payload)
        return -lit if neg else lit

    def _const_lit(self, value: bool) -> int:
        v = self._new_sat_var()
        self._add_clause([v if value else -v])
        return v

    # -- Ackermann congruence ----------------------------------------------

    def add_congruence(self) -> None:
        by_base: dict[str, list[tuple]] = {}
        for rd in list(self.reads):
            by_base.setdefault(rd[1], []).append(rd)
        for base, rds in sorted(by_base.items()):
            rds.sort(key=repr)
            for i in range(len(rds)):
                for j in range(i + 1, len(rds)):
                    k1, k2 = rds[i][2], rds[j][2]
                    key_eqs = []
                    trivially_equal = True
                    for a, b in zip(k1, k2):
                        if a == b:
                            continue
                        trivially_equal = False
                        key_eqs.append(self.atom_lit(("app", "=", (a, b)), False))
                    if trivially_equal:
                        continue
                    val_eq = self._scalar_eq_lit(rds[i], rds[j])
                    self._add_clause([-l for l in key_eqs] + [val_eq])

    # -- theory integration ---------------------------------------------------

    def run(self) -> tuple[str, dict | None]:
        """Returns (sat|unsat|unknown, model?)."""
        if not self.clauses_ok:
            return "unsat", None
        while True:
            res = self.sat.solve()
            if res == UNSAT:
                return "unsat", None
            assert res == SAT
            model = self.sat.model()
            items = self._theory_items(model)
            status, point, core_items = _check_items(items)
            if status == FEASIBLE:
                if self.taint or self.prep.truncated:
                    return "unknown", None
                return "sat", self._build_model(model, point or {})
            if status == MAYBE:
                self.taint = True
                return "unknown", None
            core = core_items if core_items is not None else items
            core = _shrink(core)
            if not self.sat.block_model([it[0] for it in core]):
                return "unsat", None

    def _theory_items(self, model: dict[int, bool]) -> list[tuple]:
        """(sat literal, kind, payload) for every assigned theory atom."""
        items = []
        for var, payload in self.theory_of_var.items():
            value = model[var]
            lit = var if value else -var
            kind, coeffs, rhs = payload
            if kind == "ineq":
                if value:
                    items.append((lit, "c", Constraint(dict(coeffs), "<=", rhs)))
                else:
                    neg = {v: -c for v, c in coeffs}
                    items.append((lit, "c", Constraint(neg, "<=", -rhs - 1)))
            else:
                if value:
                    items.append((lit, "c", Constraint(dict(coeffs), "=", rhs)))
                else:
                    items.append((lit, "n", (dict(coeffs), rhs)))
        return items

    def _build_model(self, bmodel: dict[int, bool], point: dict[int, int]) -> dict:
        sym_val: dict[tuple, int] = {}
        for term, sym in self.int_syms.items():
            sym_val[term] = point.get(sym, 0)
        out: dict[str, object] = {}
        for name, sort in sorted(self.prep.symbols.items()):
            if sort == "Int":
                out[name] = sym_val.get(("v", name), 0)
            elif sort == "Bool":
                var = self.bool_atom_vars.get(("v", name))
                out[name] = bmodel.get(var, False) if var else False
        arrays: dict[str, dict] = {}
        for rd in self.reads:
            base, keys = rd[1], rd[2]
            key_vals = tuple(self._eval_int(k, sym_val, bmodel) for k in keys)
            sort = self.prep.symbols[base]
            if sort[2] == "Bool":
                var = self.bool_atom_vars.get(rd)
                val: object = bmodel.get(var, False) if var else False
            else:
                val = sym_val.get(rd, 0)
            arrays.setdefault(base, {})[key_vals] = val
        for name, sort in sorted(self.prep.symbols.items()):
            if isinstance(sort, tuple):
                default: object = False if sort[2] == "Bool" else 0
                out[name] = ("array", sort, default, arrays.get(name, {}))
        return out

    def _eval_int(self, term: tuple, sym_val: dict, bmodel: dict) -> int:
        tag = term[0]
        if tag == "n":
            return term[1]
        if tag in ("v", "rd"):
            return sym_val.get(term, 0)
        op, args = term[1], term[2]
        vals = [self._eval_int(a, sym_val, bmodel) for a in args] if op != "ite" else None
        if op == "+":
            return sum(vals)
        if op == "-":
            return vals[0] - vals[1]
        if op == "*":
            return vals[0] * vals[1]
        if op == "div":
            return vals[0] // vals[1]
        if op == "mod":
            return vals[0] % vals[1]
        if op == "ite":
            aux = self.ite_aux.get(term)
            if aux is not None:
                return sym_val.get(aux, 0)
            return 0
        return 0


def _freeze(coeffs: dict[int, int]) -> tuple:
    return tuple(sorted(coeffs.items()))


def _negate(coeffs: dict[int, int], rhs: int, strict: bool) -> tuple[dict[int, int], int, str]:
    neg = {v: -c for v, c in coeffs.items()}
    new_rhs = -rhs - 1 if strict else -rhs
    return neg, new_rhs, "<="


def _canon_eq(coeffs: dict[int, int], rhs: int) -> tuple:
    first = min(coeffs)
    if coeffs[first] < 0:
        coeffs = {v: -c for v, c in coeffs.items()}
        rhs = -rhs
    return ("eq", _freeze(coeffs), rhs)


def _check_items(items: list[tuple]) -> tuple[str, dict | None, list | None]:
    cons = [(i, it[2]) for i, it in enumerate(items) if it[1] == "c"]
    neqs = [(i, it[2]) for i, it in enumerate(items) if it[1] == "n"]
    status, point, core_idx = _check_split([c for _, c in cons], [(i, n) for i, n in neqs],
                                           [i for i, _ in cons], _NEQ_SPLIT_DEPTH)
    if status == INFEASIBLE and core_idx is not None:
        return INFEASIBLE, None, [items[i] for i in core_idx]
    return status, point, None


def _check_split(
    cons: list[Constraint],
    neqs: list[tuple[int, tuple]],
    origins: list[int],
    depth: int,
) -> tuple[str, dict | None, list | None]:
    status, point, core = lia.feasible(cons)
    if status == INFEASIBLE:
        if core is not None:
            return INFEASIBLE, None, sorted({origins[i] for i in core if origins[i] >= 0})
        return INFEASIBLE, None, None
    if status == MAYBE:
        return MAYBE, None, None
    assert point is not None
    for idx, (item_i, (coeffs, rhs)) in enumerate(neqs):
        total = sum(c * point.get(v, 0) for v, c in coeffs.items())
        if total == rhs:
            if depth <= 0:
                return MAYBE, None, None
            rest = neqs[:idx] + neqs[idx + 1 :]
            less = Constraint(dict(coeffs), "<=", rhs - 1)
            more = Constraint({v: -c for v, c in coeffs.items()}, "<=", -rhs - 1)
            cores = []
            saw_maybe = False
            for branch in (less, more):
                st, pt, co = _check_split(cons + [branch], rest, origins + [item_i], depth - 1)
                if st == FEASIBLE:
                    return st, pt, None
                if st == MAYBE:
                    saw_maybe = True
                elif co is not None:
                    cores.append(co)
            if saw_maybe:
                return MAYBE, None, None
            if len(cores) == 2:
                merged = sorted(set(cores[0]) | set(cores[1]) | {item_i})
                return INFEASIBLE, None, merged
            return INFEASIBLE, None, None
    return FEASIBLE, point, None


def _shrink(core: list[tuple]) -> list[tuple]:
    """Greedy minimization of an infeasible item set (small cores only)."""
    if len(core) > 40:
        return core
    i = 0
    current = list(core)
    while i < len(current) and len(current) > 1:
        trial = current[:i] + current[i + 1 :]
        status, _, _ = _check_items(trial)
        if status == INFEASIBLE:
            current = trial
        else:
            i += 1
    return current
