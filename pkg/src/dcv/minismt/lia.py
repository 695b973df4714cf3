"""Exact integer linear arithmetic feasibility.

A conjunction of constraints sum(c_i * x_i) (<= | =) rhs over integer
variables is checked by a Fraction-exact general simplex (Dutertre-de
Moura style, Bland's rule) with GCD presolve, followed by depth-limited
branch and bound for integrality. Answers:

    INFEASIBLE  -- definitely no integer solution (with a conflict core
                   of input constraint indices when one is available)
    FEASIBLE    -- integer point found (returned)
    MAYBE       -- branch limit hit; caller must treat as inconclusive

INFEASIBLE and FEASIBLE are exact; only MAYBE is approximate, and the
solver surfaces it as an `unknown` verdict rather than trusting it.
"""

from __future__ import annotations

from fractions import Fraction
from math import ceil, floor, gcd

INFEASIBLE = "infeasible"
FEASIBLE = "feasible"
MAYBE = "maybe"

_BRANCH_DEPTH = 80
_BRANCH_ORIGIN = -1


class Constraint:
    """sum(coeffs[v] * v) op rhs with op in {'<=', '='}."""

    __slots__ = ("coeffs", "op", "rhs")

    def __init__(self, coeffs: dict[int, int], op: str, rhs: int):
        self.coeffs = coeffs
        self.op = op
        self.rhs = rhs

    def normalized(self) -> "Constraint | bool":
        """GCD-reduce with integer tightening; True/False when decided."""
        coeffs = {v: c for v, c in self.coeffs.items() if c}
        if not coeffs:
            return self.rhs >= 0 if self.op == "<=" else self.rhs == 0
        g = 0
        for c in coeffs.values():
            g = gcd(g, abs(c))
        if self.op == "=":
            if self.rhs % g != 0:
                return False
            if g > 1:
                return Constraint({v: c // g for v, c in coeffs.items()}, "=", self.rhs // g)
            return Constraint(coeffs, "=", self.rhs)
        if g > 1:
            return Constraint({v: c // g for v, c in coeffs.items()}, "<=", floor(Fraction(self.rhs, g)))
        return Constraint(coeffs, "<=", self.rhs)

    def holds(self, point: dict[int, int]) -> bool:
        total = sum(c * point.get(v, 0) for v, c in self.coeffs.items())
        return total <= self.rhs if self.op == "<=" else total == self.rhs

    def __repr__(self) -> str:
        terms = " + ".join(f"{c}*x{v}" for v, c in sorted(self.coeffs.items()))
        return f"{terms} {self.op} {self.rhs}"


class _Simplex:
    def __init__(self) -> None:
        self.lower: list[Fraction | None] = []
        self.upper: list[Fraction | None] = []
        self.lower_origin: list[int] = []
        self.upper_origin: list[int] = []
        self.beta: list[Fraction] = []
        self.rows: dict[int, dict[int, Fraction]] = {}  # basic -> linear form
        self.conflict: list[int] | None = None

    def new_var(self) -> int:
        self.lower.append(None)
        self.upper.append(None)
        self.lower_origin.append(_BRANCH_ORIGIN)
        self.upper_origin.append(_BRANCH_ORIGIN)
        self.beta.append(Fraction(0))
        return len(self.beta) - 1

    def add_row(self, coeffs: dict[int, Fraction]) -> int:
        s = self.new_var()
        self.rows[s] = dict(coeffs)
        self.beta[s] = sum((c * self.beta[v] for v, c in coeffs.items()), Fraction(0))
        return s

    def set_bounds(self, x: int, lo: Fraction | None, hi: Fraction | None, origin: int) -> bool:
        if lo is not None:
            cur = self.lower[x]
            if cur is None or lo > cur:
                self.lower[x] = lo
                self.lower_origin[x] = origin
        if hi is not None:
            cur = self.upper[x]
            if cur is None or hi < cur:
                self.upper[x] = hi
                self.upper_origin[x] = origin
        lo2, hi2 = self.lower[x], self.upper[x]
        if lo2 is not None and hi2 is not None and lo2 > hi2:
            self.conflict = [self.lower_origin[x], self.upper_origin[x]]
            return False
        if x not in self.rows:  # nonbasic: snap into bounds
            if lo2 is not None and self.beta[x] < lo2:
                self._update(x, lo2)
            elif hi2 is not None and self.beta[x] > hi2:
                self._update(x, hi2)
        return True

    def _update(self, x: int, v: Fraction) -> None:
        dx = v - self.beta[x]
        if not dx:
            return
        for b, row in self.rows.items():
            c = row.get(x)
            if c:
                self.beta[b] += c * dx
        self.beta[x] = v

    def _pivot(self, b: int, n: int) -> None:
        row = self.rows.pop(b)
        a = row.pop(n)
        new_row = {b: Fraction(1) / a}
        for j, c in row.items():
            new_row[j] = -c / a
        for row2 in self.rows.values():
            c2 = row2.pop(n, None)
            if c2:
                for j, c in new_row.items():
                    val = row2.get(j, Fraction(0)) + c2 * c
                    if val:
                        row2[j] = val
                    else:
                        row2.pop(j, None)
        self.rows[n] = new_row

    def _pivot_and_update(self, b: int, n: int, v: Fraction) -> None:
        a = self.rows[b][n]
        theta = (v - self.beta[b]) / a
        self.beta[b] = v
        self.beta[n] += theta
        for b2, row2 in self.rows.items():
            if b2 != b:
                c = row2.get(n)
                if c:
                    self.beta[b2] += c * theta
        self._pivot(b, n)

    def check(self) -> bool:
        while True:
            bad = None
            for b in sorted(self.rows):
                lo, hi = self.lower[b], self.upper[b]
                if lo is not None and self.beta[b] < lo:
                    bad, target, need_up = b, lo, True
                    break
                if hi is not None and self.beta[b] > hi:
                    bad, target, need_up = b, hi, False
                    break
            if bad is None:
                return True
            row = self.rows[bad]
            pick = None
            for n in sorted(row):
                c = row[n]
                if need_up:
                    ok = (c > 0 and (self.upper[n] is None or self.beta[n] < self.upper[n])) or (
                        c < 0 and (self.lower[n] is None or self.beta[n] > self.lower[n])
                    )
                else:
                    ok = (c < 0 and (self.upper[n] is None or self.beta[n] < self.upper[n])) or (
                        c > 0 and (self.lower[n] is None or self.beta[n] > self.lower[n])
                    )
                if ok:
                    pick = n
                    break
            if pick is None:
                core = []
                if need_up:
                    core.append(self.lower_origin[bad])
                    for n, c in row.items():
                        core.append(self.upper_origin[n] if c > 0 else self.lower_origin[n])
                else:
                    core.append(self.upper_origin[bad])
                    for n, c in row.items():
                        core.append(self.lower_origin[n] if c > 0 else self.upper_origin[n])
                self.conflict = core
                return False
            self._pivot_and_update(bad, pick, target)


def _lp_feasible(
    constraints: list[Constraint], bounds: dict[int, tuple[int | None, int | None]]
) -> tuple[dict[int, Fraction] | None, list[int] | None]:
    """Rational relaxation; returns (point, None) or (None, conflict core).

    The core lists input constraint indices; it is None when the conflict
    involves branch-and-bound bounds.
    """
    varset: set[int] = set()
    for c in constraints:
        varset.update(c.coeffs)
    varset.update(bounds)
    sx = _Simplex()
    index = {}
    for v in sorted(varset):
        index[v] = sx.new_var()
    for v, (lo, hi) in bounds.items():
        if not sx.set_bounds(
            index[v],
            None if lo is None else Fraction(lo),
            None if hi is None else Fraction(hi),
            _BRANCH_ORIGIN,
        ):
            return None, _export_core(sx)
    for i, c in enumerate(constraints):
        s = sx.add_row({index[v]: Fraction(k) for v, k in c.coeffs.items()})
        lo = Fraction(c.rhs) if c.op == "=" else None
        if not sx.set_bounds(s, lo, Fraction(c.rhs), i):
            return None, _export_core(sx)
    if not sx.check():
        return None, _export_core(sx)
    return {v: sx.beta[i] for v, i in index.items()}, None


def _export_core(sx: _Simplex) -> list[int] | None:
    assert sx.conflict is not None
    if any(o == _BRANCH_ORIGIN for o in sx.conflict):
        return None
    return sorted(set(sx.conflict))


def feasible(
    constraints: list[Constraint],
) -> tuple[str, dict[int, int] | None, list[int] | None]:
    """Integer feasibility; returns (status, point, core)."""
    normalized: list[tuple[int, Constraint]] = []
    for i, c in enumerate(constraints):
        n = c.normalized()
        if n is False:
            return INFEASIBLE, None, [i]
        if n is not True:
            normalized.append((i, n))
    index_map = [i for i, _ in normalized]
    status, point, core = _branch([c for _, c in normalized], {}, _BRANCH_DEPTH)
    if core is not None:
        core = sorted({index_map[i] for i in core})
    return status, point, core


def _branch(
    constraints: list[Constraint],
    bounds: dict[int, tuple[int | None, int | None]],
    depth: int,
) -> tuple[str, dict[int, int] | None, list[int] | None]:
    point, core = _lp_feasible(constraints, bounds)
    if point is None:
        return INFEASIBLE, None, core
    frac = None
    for v in sorted(point):
        if point[v].denominator != 1:
            frac = v
            break
    if frac is None:
        return FEASIBLE, {v: int(val) for v, val in point.items()}, None
    if depth <= 0:
        return MAYBE, None, None
    val = point[frac]
    lo, hi = bounds.get(frac, (None, None))
    down = dict(bounds)
    down[frac] = (lo, floor(val))
    up = dict(bounds)
    up[frac] = (ceil(val), hi)
    saw_maybe = False
    for b in (down, up):
        status, pt, _ = _branch(constraints, b, depth - 1)
        if status == FEASIBLE:
            return status, pt, None
        if status == MAYBE:
            saw_maybe = True
    return (MAYBE, None, None) if saw_maybe else (INFEASIBLE, None, None)
