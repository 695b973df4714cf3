"""Preprocessing: script evaluation, NNF, Skolemization, instantiation.

The solver targets the fragment produced by induction obligations over
array-modeled state: assertions are boolean combinations of ground
literals, universal quantifiers over map keys (any polarity), and
existentials not nested under universals. Universals are finitely
instantiated over candidate terms (array indices they flow into, ground
comparison partners, integer constants); since every instance is a
logical consequence, `unsat` answers are sound regardless of how many
instances are taken. Existentials are Skolemized exactly.

Terms are hashable tuples:
    ('n', int) | ('b', bool) | ('v', name) | ('app', op, args)
    | ('q', 'forall'|'exists', ((name, sort), ...), body)
Sorts: 'Int' | 'Bool' | ('A', key_count, value_sort) flattened arrays.
"""

from __future__ import annotations

from itertools import product

from .sexp import SexpError, parse_all


class Unsupported(Exception):
    """Input outside the supported fragment; the solver answers unknown."""


INSTANCE_CAP = 20000  # per quantifier cluster
NODE_CAP = 4_000_000


# ---------------------------------------------------------------------------
# Script reading


class Script:
    def __init__(self) -> None:
        self.symbols: dict[str, object] = {}  # name -> sort
        self.assertions: list[tuple] = []
        self.check_sat = False
        self.get_model = False


def parse_sort(s) -> object:
    if s == "Int":
        return "Int"
    if s == "Bool":
        return "Bool"
    if isinstance(s, list) and len(s) == 3 and s[0] == "Array":
        if s[1] != "Int":
            raise Unsupported(f"array key sort {s[1]}")
        inner = parse_sort(s[2])
        if inner in ("Int", "Bool"):
            return ("A", 1, inner)
        if isinstance(inner, tuple):
            return ("A", inner[1] + 1, inner[2])
    raise Unsupported(f"sort {s}")


_BOOL_OPS = {"and", "or", "not", "=>", "xor", "ite"}
_INT_OPS = {"+", "-", "*", "div", "mod"}
_CMP_OPS = {"<", "<=", ">", ">="}


def read_script(text: str) -> Script:
    script = Script()
    try:
        forms = parse_all(text)
    except SexpError as exc:
        raise Unsupported(str(exc))
    for form in forms:
        if not isinstance(form, list) or not form:
            raise Unsupported(f"stray token {form}")
        head = form[0]
        if head in ("set-logic", "set-option", "set-info", "exit", "push", "pop", "echo"):
            continue
        if head == "declare-const" and len(form) == 3:
            script.symbols[form[1]] = parse_sort(form[2])
        elif head == "declare-fun" and len(form) == 4 and form[2] == []:
            script.symbols[form[1]] = parse_sort(form[3])
        elif head == "assert" and len(form) == 2:
            script.assertions.append(form[1])
        elif head == "check-sat":
            script.check_sat = True
        elif head == "get-model":
            script.get_model = True
        else:
            raise Unsupported(f"command {head}")
    return script


class TermBuilder:
    def __init__(self, symbols: dict[str, object]):
        self.symbols = symbols

    def convert(self, sexp, binders: dict[str, object]) -> tuple:
        if isinstance(sexp, str):
            if sexp == "true":
                return ("b", True)
            if sexp == "false":
                return ("b", False)
            if sexp.lstrip("-").isdigit():
                return ("n", int(sexp))
            if sexp in binders or sexp in self.symbols:
                return ("v", sexp)
            raise Unsupported(f"symbol {sexp}")
        if not isinstance(sexp, list) or not sexp:
            raise Unsupported(f"term {sexp}")
        head = sexp[0]
        if head in ("forall", "exists"):
            if len(sexp) != 3:
                raise Unsupported("bad quantifier")
            bound = tuple((b[0], parse_sort(b[1])) for b in sexp[1])
            inner = dict(binders)
            inner.update(bound)
            body = self.convert(sexp[2], inner)
            return ("q", head, bound, body)
        if head == "-" and len(sexp) == 2:
            arg = self.convert(sexp[1], binders)
            if arg[0] == "n":
                return ("n", -arg[1])
            return ("app", "-", (("n", 0), arg))
        args = tuple(self.convert(a, binders) for a in sexp[1:])
        if head in ("+", "*", "and", "or"):
            return ("app", head, args)
        if head == "-":
            out = args[0]
            for a in args[1:]:
                out = ("app", "-", (out, a))
            return out
        if head == "=>":
            out = args[-1]
            for a in reversed(args[:-1]):
                out = ("app", "=>", (a, out))
            return out
        if head in ("=", "distinct"):
            if len(args) == 2:
                return ("app", head, args)
            pairs = []
            for i in range(len(args)):
                for j in range(i + 1, len(args)):
                    pairs.append(("app", head, (args[i], args[j])))
            op = "and"
            return ("app", op, tuple(pairs))
        if head in ("not", "xor", "ite", "div", "mod", "select", "store") or head in _CMP_OPS:
            return ("app", head, args)
        raise Unsupported(f"operator {head}")


def sort_of(term: tuple, symbols: dict[str, object], binders: dict[str, object]) -> object:
    tag = term[0]
    if tag == "n":
        return "Int"
    if tag == "b":
        return "Bool"
    if tag == "v":
        if term[1] in binders:
            return binders[term[1]]
        return symbols[term[1]]
    if tag == "q":
        return "Bool"
    op, args = term[1], term[2]
    if op in _INT_OPS:
        return "Int"
    if op in _CMP_OPS or op in ("=", "distinct", "and", "or", "not", "=>", "xor"):
        return "Bool"
    if op == "ite":
        return sort_of(args[1], symbols, binders)
    if op == "select":
        base = sort_of(args[0], symbols, binders)
        if not isinstance(base, tuple):
            raise Unsupported("select on non-array")
        return base[2] if base[1] == 1 else ("A", base[1] - 1, base[2])
    if op == "store":
        return sort_of(args[0], symbols, binders)
    raise Unsupported(f"sort of {op}")


# ---------------------------------------------------------------------------
# Ground NNF DAG


class Dag:
    """Hash-consed ground NNF nodes: ('lit', term, neg) / ('and'|'or', ids)."""

    def __init__(self) -> None:
        self.nodes: list[tuple] = []
        self.ids: dict[tuple, int] = {}
        self.TRUE = self.intern(("true",))
        self.FALSE = self.intern(("false",))

    def intern(self, node: tuple) -> int:
        got = self.ids.get(node)
        if got is not None:
            return got
        i = len(self.nodes)
        if i > NODE_CAP:
            raise Unsupported("formula too large")
        self.nodes.append(node)
        self.ids[node] = i
        return i

    def lit(self, term: tuple, neg: bool) -> int:
        if term[0] == "b":
            val = term[1] != neg
            return self.TRUE if val else self.FALSE
        return self.intern(("lit", term, neg))

    def conj(self, ids) -> int:
        flat: list[int] = []
        seen = set()
        for i in ids:
            node = self.nodes[i]
            if node[0] == "true":
                continue
            if node[0] == "false":
                return self.FALSE
            for j in node[1] if node[0] == "and" else (i,):
                if j not in seen:
                    seen.add(j)
                    flat.append(j)
        if not flat:
            return self.TRUE
        if len(flat) == 1:
            return flat[0]
        return self.intern(("and", tuple(sorted(flat))))

    def disj(self, ids) -> int:
        flat: list[int] = []
        seen = set()
        for i in ids:
            node = self.nodes[i]
            if node[0] == "false":
                continue
            if node[0] == "true":
                return self.TRUE
            for j in node[1] if node[0] == "or" else (i,):
                if j not in seen:
                    seen.add(j)
                    flat.append(j)
        if not flat:
            return self.FALSE
        if len(flat) == 1:
            return flat[0]
        return self.intern(("or", tuple(sorted(flat))))


_FREES: dict[tuple, frozenset] = {}


def frees(term: tuple) -> frozenset:
    got = _FREES.get(term)
    if got is not None:
        return got
    tag = term[0]
    if tag == "v":
        out = frozenset((term[1],))
    elif tag in ("n", "b"):
        out = frozenset()
    elif tag == "q":
        out = frees(term[3]) - {b[0] for b in term[2]}
    else:
        out = frozenset().union(*(frees(a) for a in term[2])) if term[2] else frozenset()
    _FREES[term] = out
    return out


def subst(term: tuple, env: dict[str, tuple]) -> tuple:
    if not env or not (frees(term) & env.keys()):
        return term
    tag = term[0]
    if tag == "v":
        return env.get(term[1], term)
    if tag == "q":
        inner = {k: v for k, v in env.items() if k not in {b[0] for b in term[2]}}
        return ("q", term[1], term[2], subst(term[3], inner))
    return ("app", term[1], tuple(subst(a, env) for a in term[2]))


def is_ground(term: tuple, bound) -> bool:
    return not (frees(term) & bound)


class Preprocessor:
    def __init__(self, script: Script):
        self.script = script
        self.symbols = dict(script.symbols)
        self.builder = TermBuilder(self.symbols)
        self.dag = Dag()
        self.fresh_n = 0
        # (array base name, position) -> ordered ground index terms, with a
        # union-find over positions merged by array equalities
        self.index_terms: dict[tuple[str, int], dict[tuple, None]] = {}
        self._uf: dict[tuple[str, int], tuple[str, int]] = {}
        self.int_consts: dict[tuple, None] = {("n", 0): None, ("n", 1): None}
        self.array_eq_witnesses: dict[tuple, tuple] = {}
        self.fresh_w = 0
        self.truncated = False
        self._nnf_memo: dict[tuple, int] = {}

    def _find(self, key: tuple[str, int]) -> tuple[str, int]:
        root = key
        while root in self._uf:
            root = self._uf[root]
        while key in self._uf and self._uf[key] != root:
            self._uf[key], key = root, self._uf[key]
        return root

    def _union(self, a: tuple[str, int], b: tuple[str, int]) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return
        self._uf[rb] = ra
        merged = self.index_terms.pop(rb, None)
        if merged:
            self.index_terms.setdefault(ra, {}).update(merged)

    def add_index_term(self, key: tuple[str, int], term: tuple) -> None:
        self.index_terms.setdefault(self._find(key), {})[term] = None

    def indices_at(self, key: tuple[str, int]) -> dict[tuple, None]:
        return self.index_terms.get(self._find(key), {})

    def fresh(self, base: str, sort) -> tuple:
        while True:
            self.fresh_n += 1
            name = f"{base}!{self.fresh_n}"
            if name not in self.symbols:
                break
        self.symbols[name] = sort
        return ("v", name)

    # -- scanning --------------------------------------------------------

    def _array_base(self, term: tuple) -> tuple[str, int] | None:
        """Root constant and key offset of a select/store chain."""
        depth = 0
        while term[0] == "app" and term[1] in ("select", "store"):
            if term[1] == "select":
                depth += 1
            term = term[2][0]
        if term[0] == "v":
            return term[1], depth
        return None

    def scan(self, term: tuple, bound: frozenset[str]) -> None:
        """Collect ground index terms, integer constants, and witnesses."""
        tag = term[0]
        if tag == "n":
            self.int_consts[term] = None
            return
        if tag in ("v", "b"):
            return
        if tag == "q":
            self.scan(term[3], bound | {b[0] for b in term[2]})
            return
        op, args = term[1], term[2]
        if op in ("select", "store"):
            info = self._array_base(args[0])
            if info is not None:
                base, offset = info
                if is_ground(args[1], bound):
                    self.add_index_term((base, offset), args[1])
        if op == "=":
            try:
                s = sort_of(args[0], self.symbols, {b: "Int" for b in bound})
            except (Unsupported, KeyError):
                s = None
            if isinstance(s, tuple):
                if not (is_ground(args[0], bound) and is_ground(args[1], bound)):
                    raise Unsupported("array equality under quantifier")
                self._witness_for(args, s)
        for a in args:
            self.scan(a, bound)

    def _witness_for(self, pair: tuple, sort: tuple) -> tuple:
        key = tuple(sorted(repr(canon_arr(t)) for t in pair))
        bases = [self._array_base(p) for p in pair]
        if all(b is not None for b in bases):
            for i in range(sort[1]):
                self._union((bases[0][0], bases[0][1] + i), (bases[1][0], bases[1][1] + i))
        if key not in self.array_eq_witnesses:
            self.fresh_w += 1
            ws = tuple(("v", f"w!{self.fresh_w}.{i}") for i in range(sort[1]))
            self.array_eq_witnesses[key] = ws
            for i, w in enumerate(ws):
                for info in bases:
                    if info is not None:
                        self.add_index_term((info[0], info[1] + i), w)
        return self.array_eq_witnesses[key]

    # -- NNF + Skolemization + instantiation -----------------------------

    def run(self) -> list[int]:
        """Scan everything, instantiate, and iterate until the ground
        index-term registry stops growing (Skolem constants and array
        witnesses minted during one pass feed the next)."""
        converted = [self.builder.convert(a, {}) for a in self.script.assertions]
        prev = -1
        while True:
            self.fresh_n = 0
            self.symbols.clear()
            self.symbols.update(self.script.symbols)
            for ws in self.array_eq_witnesses.values():
                for w in ws:
                    self.symbols[w[1]] = "Int"
            self.dag = Dag()
            self._nnf_memo = {}
            self.truncated = False
            for t in converted:
                self.scan(t, frozenset())
            roots = [self.nnf(t, False, under_forall=False) for t in converted]
            size = sum(len(v) for v in self.index_terms.values()) + len(self.int_consts)
            if size == prev:
                return roots
            prev = size

    def nnf(self, term: tuple, neg: bool, under_forall: bool) -> int:
        key = (term, neg, under_forall)
        got = self._nnf_memo.get(key)
        if got is not None:
            return got
        out = self._nnf(term, neg, under_forall)
        self._nnf_memo[key] = out
        return out

    def _nnf(self, term: tuple, neg: bool, under_forall: bool) -> int:
        tag = term[0]
        if tag in ("v", "b"):
            return self.dag.lit(term, neg)
        if tag == "q":
            kind, bound, body = term[1], term[2], term[3]
            is_universal = (kind == "forall") != neg
            if is_universal:
                return self._instantiate(bound, body, neg)
            if under_forall:
                raise Unsupported("existential under universal quantifier")
            env2: dict[str, tuple] = {}
            for name, sort in bound:
                env2[name] = self.fresh("sk", sort)
            body_s = subst(body, env2)
            self.scan(body_s, frozenset())
            return self.nnf(body_s, neg, under_forall)
        op, args = term[1], term[2]
        if op == "not":
            return self.nnf(args[0], not neg, under_forall)
        if op in ("and", "or"):
            kids = [self.nnf(a, neg, under_forall) for a in args]
            make = self.dag.conj if (op == "and") != neg else self.dag.disj
            return make(kids)
        if op == "=>":
            a = self.nnf(args[0], not neg, under_forall)
            b = self.nnf(args[1], neg, under_forall)
            return self.dag.disj([a, b]) if not neg else self.dag.conj([a, b])
        if op == "xor":
            x1 = self.dag.conj([self.nnf(args[0], False, under_forall), self.nnf(args[1], True, under_forall)])
            x2 = self.dag.conj([self.nnf(args[0], True, under_forall), self.nnf(args[1], False, under_forall)])
            e1 = self.dag.conj([self.nnf(args[0], False, under_forall), self.nnf(args[1], False, under_forall)])
            e2 = self.dag.conj([self.nnf(args[0], True, under_forall), self.nnf(args[1], True, under_forall)])
            return self.dag.disj([x1, x2]) if not neg else self.dag.disj([e1, e2])
        if op == "=" and self._is_bool(args[0]):
            e1 = self.dag.conj([self.nnf(args[0], False, under_forall), self.nnf(args[1], False, under_forall)])
            e2 = self.dag.conj([self.nnf(args[0], True, under_forall), self.nnf(args[1], True, under_forall)])
            x1 = self.dag.conj([self.nnf(args[0], False, under_forall), self.nnf(args[1], True, under_forall)])
            x2 = self.dag.conj([self.nnf(args[0], True, under_forall), self.nnf(args[1], False, under_forall)])
            return self.dag.disj([e1, e2]) if not neg else self.dag.disj([x1, x2])
        if op == "ite" and self._is_bool(args[1]):
            c_t = self.dag.disj([self.nnf(args[0], True, under_forall), self.nnf(args[1], neg, under_forall)])
            c_e = self.dag.disj([self.nnf(args[0], False, under_forall), self.nnf(args[2], neg, under_forall)])
            return self.dag.conj([c_t, c_e])
        if op == "distinct":
            return self.nnf(("app", "=", args), not neg, under_forall)
        return self.dag.lit(term, neg)

    def _is_bool(self, term: tuple) -> bool:
        try:
            s = sort_of(term, self.symbols, {})
            return s == "Bool"
        except (Unsupported, KeyError):
            return False

    def _instantiate(self, bound, body, neg: bool) -> int:
        """Sequential per-variable instantiation with target recomputation."""
        assignments: list[dict[str, tuple]] = [{}]
        for name, sort in bound:
            if sort != "Int":
                raise Unsupported("non-integer quantified variable")
            new_assignments = []
            for asg in assignments:
                cur = subst(body, asg)
                targets = self._targets(name, cur, {b for b, _ in bound if b != name and b not in asg})
                for t in targets:
                    a2 = dict(asg)
                    a2[name] = t
                    new_assignments.append(a2)
                if len(new_assignments) > INSTANCE_CAP:
                    self.truncated = True
                    break
            assignments = new_assignments
            if self.truncated:
                assignments = assignments[:INSTANCE_CAP]
        instances = []
        for asg in assignments:
            inst = subst(body, asg)
            instances.append(self.nnf(inst, neg, under_forall=True))
        return self.dag.conj(instances)

    def _targets(self, name: str, body: tuple, other_bound: set[str]) -> list[tuple]:
        found: dict[tuple, None] = {}
        bound = frozenset(other_bound | {name})

        def walk(t: tuple) -> None:
            if t[0] == "app":
                op, args = t[1], t[2]
                if op in ("select", "store"):
                    idx = args[1]
                    if idx == ("v", name) or _occurs(idx, name):
                        info = self._array_base(args[0])
                        if info is not None:
                            for term in self.indices_at(info):
                                found[term] = None
                if op in ("=",) or op in _CMP_OPS:
                    for a, b in ((args[0], args[1]), (args[1], args[0])):
                        if _occurs(a, name) and is_ground(b, bound):
                            found[b] = None
                for a in args:
                    walk(a)
            elif t[0] == "q":
                walk(t[3])

        walk(body)
        for c in self.int_consts:
            found[c] = None
        if not found:
            found[("n", 0)] = None
        return sorted(found, key=repr)


def _occurs(term: tuple, name: str) -> bool:
    return name in frees(term)


def canon_arr(term: tuple) -> tuple:
    """Canonical form for array-equality witness keys: select chains are
    collapsed to ('rd', base, keys) so raw and normalized operands agree."""
    if term[0] == "app":
        op, args = term[1], term[2]
        if op == "select":
            base = canon_arr(args[0])
            k = canon_arr(args[1])
            if base[0] == "rd":
                return ("rd", base[1], base[2] + (k,))
            if base[0] == "v":
                return ("rd", base[1], (k,))
            return ("app", "select", (base, k))
        return ("app", op, tuple(canon_arr(a) for a in args))
    return term
