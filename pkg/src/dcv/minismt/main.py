"""Entry point for dcv-smt, a small SMT-LIB 2 solver for induction
obligations over integers, booleans, arrays, and quantifiers over map
keys.

Reads a script from the file argument (or stdin), prints sat / unsat /
unknown for the first (check-sat), and a model after sat when the script
requests (get-model). Anything outside the supported fragment yields
`unknown` rather than an error, so callers can treat this binary as a
drop-in (incomplete but unsat-sound) solver.
"""

from __future__ import annotations

import sys

from .prep import Preprocessor, Unsupported, read_script
from .solve import GroundSolver


def render_value(sort, default, entries) -> str:
    if not isinstance(sort, tuple):
        raise AssertionError
    key_count, vsort = sort[1], sort[2]
    vtext = _scalar_text

    def arr_sort_text(depth: int) -> str:
        inner = vsort if vsort == "Int" else "Bool"
        out = str(inner)
        for _ in range(depth):
            out = f"(Array Int {out})"
        return out

    def build(depth: int, items: dict) -> str:
        if depth == 0:
            # items is a scalar at this point
            return vtext(items)
        base_default = vtext(default) if depth == 1 else None
        if depth == 1:
            out = f"((as const {arr_sort_text(1)}) {base_default})"
            for k, v in sorted(items.items()):
                out = f"(store {out} {_scalar_text(k[0])} {vtext(v)})"
            return out
        groups: dict[int, dict] = {}
        for k, v in items.items():
            groups.setdefault(k[0], {})[k[1:]] = v
        inner_default = build(depth - 1, {})
        out = f"((as const {arr_sort_text(depth)}) {inner_default})"
        for k0, sub in sorted(groups.items()):
            out = f"(store {out} {_scalar_text(k0)} {build(depth - 1, sub)})"
        return out

    return build(key_count, dict(entries))


def _scalar_text(v) -> str:
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, int) and v < 0:
        return f"(- {-v})"
    return str(v)


def print_model(model: dict, symbols: dict, out) -> None:
    lines = ["("]
    for name in sorted(model):
        sort = symbols.get(name)
        if sort is None or name.startswith("!"):
            continue
        val = model[name]
        if isinstance(val, tuple) and val and val[0] == "array":
            _, s, default, entries = val
            text = render_value(s, default, entries)
            depth = s[1]
            sort_text = "Int" if s[2] == "Int" else "Bool"
            for _ in range(depth):
                sort_text = f"(Array Int {sort_text})"
            lines.append(f"  (define-fun {name} () {sort_text} {text})")
        elif sort == "Int":
            lines.append(f"  (define-fun {name} () Int {_scalar_text(val)})")
        elif sort == "Bool":
            lines.append(f"  (define-fun {name} () Bool {_scalar_text(val)})")
    lines.append(")")
    print("\n".join(lines), file=out)


def solve_text(text: str) -> tuple[str, str]:
    """Returns (status line, model text or '')."""
    try:
        script = read_script(text)
        if not script.check_sat:
            return "", ""
        prep = Preprocessor(script)
        roots = prep.run()
        gs = GroundSolver(prep)
        root = prep.dag.conj(roots)
        node = prep.dag.nodes[root]
        if node[0] == "false":
            return "unsat", ""
        if node[0] == "true":
            status, model = "sat", {}
        else:
            gs._add_clause([gs.node_to_lit(root)])
            gs.add_congruence()
            status, model = gs.run()
        if status == "sat" and script.get_model:
            import io

            buf = io.StringIO()
            print_model(model or {}, prep.symbols, buf)
            return "sat", buf.getvalue()
        return status, ""
    except Unsupported:
        return "unknown", ""
    except RecursionError:
        return "unknown", ""


def main(argv: list[str] | None = None) -> int:
    args = argv if argv is not None else sys.argv[1:]
    paths = [a for a in args if not a.startswith("-")]
    if paths:
        text = open(paths[0], "r", encoding="utf-8").read()
    else:
        text = sys.stdin.read()
    sys.setrecursionlimit(100000)
    status, model = solve_text(text)
    if status:
        print(status)
    if model:
        print(model, end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
