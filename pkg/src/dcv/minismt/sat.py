"""Small CDCL SAT solver: watched literals, 1UIP learning, VSIDS-lite.

Literals are nonzero ints (+v / -v, vars 1-based). The solver is used
lazily by the theory layer: it produces full propositional models, and
the theory layer feeds back blocking clauses for arithmetic conflicts.
"""

from __future__ import annotations

UNSAT = "unsat"
SAT = "sat"


class SatSolver:
    def __init__(self) -> None:
        self.nvars = 0
        self.clauses: list[list[int]] = []
        self.watches: dict[int, list[int]] = {}
        self.assign: list[int] = [0]  # 1-based; 0 unassigned, +1 true, -1 false
        self.level: list[int] = [0]
        self.reason: list[int] = [-1]  # clause index or -1
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.activity: list[float] = [0.0]
        self.phase: list[bool] = [False]
        self.var_inc = 1.0
        self.qhead = 0

    # -- setup ---------------------------------------------------------

    def new_var(self) -> int:
        self.nvars += 1
        self.assign.append(0)
        self.level.append(0)
        self.reason.append(-1)
        self.activity.append(0.0)
        self.phase.append(False)
        return self.nvars

    def _watch(self, lit: int, ci: int) -> None:
        self.watches.setdefault(lit, []).append(ci)

    def value(self, lit: int) -> int:
        v = self.assign[abs(lit)]
        return v if lit > 0 else -v

    def add_clause(self, lits: list[int]) -> bool:
        """Add a clause; returns False if the instance is now trivially unsat.

        Must be called either before solving or at decision level 0.
        """
        assert not self.trail_lim, "add_clause only at level 0"
        seen = set()
        out = []
        for l in lits:
            if -l in seen:
                return True  # tautology
            if l in seen:
                continue
            if self.value(l) == 1:
                return True
            if self.value(l) == -1:
                continue
            seen.add(l)
            out.append(l)
        if not out:
            return False
        if len(out) == 1:
            return self._enqueue(out[0], -1)
        ci = len(self.clauses)
        self.clauses.append(out)
        self._watch(out[0], ci)
        self._watch(out[1], ci)
        return True

    # -- search ----------------------------------------------------------

    def _enqueue(self, lit: int, reason: int) -> bool:
        if self.value(lit) == -1:
            return False
        if self.value(lit) == 1:
            return True
        v = abs(lit)
        self.assign[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.phase[v] = lit > 0
        self.trail.append(lit)
        return True

    def _propagate(self) -> int:
        """Unit propagation; returns a conflicting clause index or -1."""
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            falsified = -lit
            watchlist = self.watches.get(falsified, [])
            i = 0
            while i < len(watchlist):
                ci = watchlist[i]
                clause = self.clauses[ci]
                if clause[0] == falsified:
                    clause[0], clause[1] = clause[1], clause[0]
                if self.value(clause[0]) == 1:
                    i += 1
                    continue
                moved = False
                for j in range(2, len(clause)):
                    if self.value(clause[j]) != -1:
                        clause[1], clause[j] = clause[j], clause[1]
                        self._watch(clause[1], ci)
                        watchlist[i] = watchlist[-1]
                        watchlist.pop()
                        moved = True
                        break
                if moved:
                    continue
                # unit or conflict on clause[0]
                if not self._enqueue(clause[0], ci):
                    return ci
                i += 1
        return -1

    def _bump(self, v: int) -> None:
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for i in range(1, self.nvars + 1):
                self.activity[i] *= 1e-100
            self.var_inc *= 1e-100

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        learnt = [0]
        seen = [False] * (self.nvars + 1)
        counter = 0
        p = 0  # literal being resolved; 0 for the initial conflict clause
        index = len(self.trail)
        cur_level = len(self.trail_lim)
        while True:
            clause = self.clauses[confl]
            for q in clause:
                if q == p:
                    continue
                v = abs(q)
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self._bump(v)
                    if self.level[v] >= cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while True:
                index -= 1
                p = self.trail[index]
                if seen[abs(p)]:
                    break
            seen[abs(p)] = False
            counter -= 1
            if counter == 0:
                break
            confl = self.reason[abs(p)]
        learnt[0] = -p
        if len(learnt) == 1:
            return learnt, 0
        blevel = max(self.level[abs(l)] for l in learnt[1:])
        # put a literal of blevel second for watching
        for i, l in enumerate(learnt[1:], start=1):
            if self.level[abs(l)] == blevel:
                learnt[1], learnt[i] = learnt[i], learnt[1]
                break
        return learnt, blevel

    def _backjump(self, blevel: int) -> None:
        while len(self.trail_lim) > blevel:
            lim = self.trail_lim.pop()
            while len(self.trail) > lim:
                lit = self.trail.pop()
                self.assign[abs(lit)] = 0
        self.qhead = min(self.qhead, len(self.trail))

    def _decide(self) -> bool:
        best, best_a = 0, -1.0
        for v in range(1, self.nvars + 1):
            if self.assign[v] == 0 and self.activity[v] > best_a:
                best, best_a = v, self.activity[v]
        if best == 0:
            return False
        self.trail_lim.append(len(self.trail))
        lit = best if self.phase[best] else -best
        self._enqueue(lit, -1)
        return True

    def solve(self, max_conflicts: int | None = None) -> str | None:
        """Search for a full model; None means conflict budget exhausted."""
        conflicts = 0
        while True:
            confl = self._propagate()
            if confl >= 0:
                conflicts += 1
                if max_conflicts is not None and conflicts > max_conflicts:
                    return None
                if not self.trail_lim:
                    return UNSAT
                learnt, blevel = self._analyze(confl)
                self._backjump(blevel)
                self.var_inc *= 1.05
                if len(learnt) == 1:
                    if not self._enqueue(learnt[0], -1):
                        return UNSAT
                else:
                    ci = len(self.clauses)
                    self.clauses.append(learnt)
                    self._watch(learnt[0], ci)
                    self._watch(learnt[1], ci)
                    self._enqueue(learnt[0], ci)
                continue
            if not self._decide():
                return SAT

    def model(self) -> dict[int, bool]:
        return {v: self.assign[v] == 1 for v in range(1, self.nvars + 1)}

    def block_model(self, lits: list[int]) -> bool:
        """Learn the negation of a set of literals and restart the search."""
        self._backjump(0)
        return self.add_clause([-l for l in lits])
