"""Exact linear-arithmetic feasibility for the bundled SMT-LIB server.

General simplex in the Dutertre/de Moura style: every variable carries
optional lower/upper bounds, multi-variable linear forms get slack variables
defined by tableau rows, and strict rational bounds are handled with
delta-rationals (pairs r + d*delta for a positive infinitesimal delta).
Bound assertions are undoable so the SAT search can retract them in trail
order; integer feasibility is layered on top with branch-and-bound over the
same tableau.

All arithmetic is exact (fractions.Fraction); no floats anywhere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional


@dataclass(frozen=True)
class DRat:
    """r + d*delta with delta an infinitesimal positive constant."""

    r: Fraction
    d: Fraction = Fraction(0)

    def __add__(self, other: "DRat") -> "DRat":
        return DRat(self.r + other.r, self.d + other.d)

    def __sub__(self, other: "DRat") -> "DRat":
        return DRat(self.r - other.r, self.d - other.d)

    def scale(self, k: Fraction) -> "DRat":
        return DRat(self.r * k, self.d * k)

    def __lt__(self, other: "DRat") -> bool:
        return (self.r, self.d) < (other.r, other.d)

    def __le__(self, other: "DRat") -> bool:
        return (self.r, self.d) <= (other.r, other.d)


ZERO = DRat(Fraction(0))


def drat(r, d=0) -> DRat:
    return DRat(Fraction(r), Fraction(d))


class Timeout(Exception):
    pass


class Unknown(Exception):
    pass


# An undo token: (which, var, old_bound, old_tag); None when nothing changed.
UndoToken = Optional[tuple]


class Simplex:
    """Bound feasibility under tableau row definitions, with undoable asserts."""

    def __init__(self, nvars: int):
        self.nvars = nvars
        self.lower: list[Optional[DRat]] = [None] * nvars
        self.upper: list[Optional[DRat]] = [None] * nvars
        self.lo_tag: list[Optional[int]] = [None] * nvars
        self.hi_tag: list[Optional[int]] = [None] * nvars
        self.beta: list[DRat] = [ZERO] * nvars
        self.rows: dict[int, dict[int, Fraction]] = {}

    def add_row(self, var: int, combo: dict[int, Fraction]) -> None:
        # var becomes basic: var = sum(combo); beta is made consistent.
        self.rows[var] = dict(combo)
        self.beta[var] = self._row_value(combo)

    def _row_value(self, combo: dict[int, Fraction]) -> DRat:
        v = ZERO
        for x, a in combo.items():
            if a == 1:
                v = v + self.beta[x]
            else:
                v = v + self.beta[x].scale(a)
        return v

    # -- undoable bound assertion ---------------------------------------------

    def assert_bound(self, x: int, kind: str, c: DRat, tag: Optional[int]
                     ) -> tuple[Optional[set], UndoToken]:
        """Returns (conflict core, undo token); exactly one of them is useful."""
        if kind == "hi":
            lo = self.lower[x]
            if lo is not None and c < lo:
                return {tag, self.lo_tag[x]}, None
            up = self.upper[x]
            if up is not None and not (c < up):
                return None, None
            token = ("hi", x, up, self.hi_tag[x])
            self.upper[x] = c
            self.hi_tag[x] = tag
            if x not in self.rows and c < self.beta[x]:
                self._update(x, c)
            return None, token
        up = self.upper[x]
        if up is not None and up < c:
            return {tag, self.hi_tag[x]}, None
        lo = self.lower[x]
        if lo is not None and not (lo < c):
            return None, None
        token = ("lo", x, lo, self.lo_tag[x])
        self.lower[x] = c
        self.lo_tag[x] = tag
        if x not in self.rows and self.beta[x] < c:
            self._update(x, c)
        return None, token

    def undo(self, token: UndoToken) -> None:
        if token is None:
            return
        which, x, old, old_tag = token
        if which == "hi":
            self.upper[x] = old
            self.hi_tag[x] = old_tag
        else:
            self.lower[x] = old
            self.lo_tag[x] = old_tag
        # beta stays; it satisfies the relaxed bounds a fortiori for nonbasic
        # variables, and check() repairs basic ones.

    def _update(self, x: int, v: DRat) -> None:
        delta = v - self.beta[x]
        for b, row in self.rows.items():
            a = row.get(x)
            if a:
                self.beta[b] = self.beta[b] + delta.scale(a)
        self.beta[x] = v

    # -- feasibility ------------------------------------------------------------

    def check(self, deadline: Optional[float] = None) -> Optional[set]:
        """None when feasible (beta is a model); else a conflicting tag set."""
        iters = 0
        while True:
            iters += 1
            if deadline is not None and iters % 32 == 0 \
                    and time.monotonic() > deadline:
                raise Timeout()
            broken = None
            for x in self.rows:  # Bland's rule needs the smallest index
                lo, up = self.lower[x], self.upper[x]
                if lo is not None and self.beta[x] < lo:
                    if broken is None or x < broken:
                        broken, need_inc = x, True
                elif up is not None and up < self.beta[x]:
                    if broken is None or x < broken:
                        broken, need_inc = x, False
            if broken is None:
                return None
            target = self.lower[broken] if need_inc else self.upper[broken]
            row = self.rows[broken]
            pivot = None
            for y in sorted(row):
                a = row[y]
                if need_inc:
                    ok = (a > 0 and self._can_increase(y)) or \
                         (a < 0 and self._can_decrease(y))
                else:
                    ok = (a > 0 and self._can_decrease(y)) or \
                         (a < 0 and self._can_increase(y))
                if ok:
                    pivot = y
                    break
            if pivot is None:
                core = {self.lo_tag[broken] if need_inc else self.hi_tag[broken]}
                for y, a in row.items():
                    if need_inc:
                        core.add(self.hi_tag[y] if a > 0 else self.lo_tag[y])
                    else:
                        core.add(self.lo_tag[y] if a > 0 else self.hi_tag[y])
                return core
            self._pivot_update(broken, pivot, target)

    def _can_increase(self, y: int) -> bool:
        up = self.upper[y]
        return up is None or self.beta[y] < up

    def _can_decrease(self, y: int) -> bool:
        lo = self.lower[y]
        return lo is None or lo < self.beta[y]

    def _pivot_update(self, x: int, y: int, v: DRat) -> None:
        row = self.rows.pop(x)
        a_y = row[y]
        theta = (v - self.beta[x]).scale(Fraction(1) / a_y)
        self.beta[x] = v
        self.beta[y] = self.beta[y] + theta
        for b, r in self.rows.items():
            c = r.get(y)
            if c:
                self.beta[b] = self.beta[b] + theta.scale(c)
        # y = (x - sum_{z != y} a_z z) / a_y
        new_row: dict[int, Fraction] = {x: Fraction(1) / a_y}
        for z, a_z in row.items():
            if z != y:
                new_row[z] = -a_z / a_y
        for b, r in list(self.rows.items()):
            c = r.pop(y, None)
            if c:
                for z, a_z in new_row.items():
                    nv = r.get(z, Fraction(0)) + c * a_z
                    if nv == 0:
                        r.pop(z, None)
                    else:
                        r[z] = nv
        self.rows[y] = new_row

    # -- integer layer ------------------------------------------------------------

    def bb_check(self, int_vars: list[int], deadline: Optional[float],
                 budget: list[int]) -> Optional[set]:
        """Feasibility with the given variables integral.

        None when feasible (beta integral on int_vars up to delta choice);
        else a conflicting tag set (internal branch tags already stripped).
        Raises Unknown when the budget runs out.
        """
        core = self.check(deadline)
        if core is not None:
            return core
        for x in int_vars:
            v = self.beta[x]
            val = v.r
            if v.d == 0 and val.denominator == 1:
                continue
            if budget[0] <= 0:
                raise Unknown("branch-and-bound budget exhausted")
            budget[0] -= 1
            if val.denominator == 1:
                floor_v = val if v.d > 0 else val - 1
            else:
                floor_v = Fraction(val.numerator // val.denominator)
            cores = []
            for kind, bound in (("hi", DRat(floor_v)), ("lo", DRat(floor_v + 1))):
                conflict, token = self.assert_bound(x, kind, bound, None)
                if conflict is not None:
                    cores.append(conflict)
                    continue
                sub = self.bb_check(int_vars, deadline, budget)
                self.undo(token)
                if sub is None:
                    return None
                cores.append(sub)
            # branch cuts carry tag None; callers widen cores that relied on
            # them to the full asserted-literal set, which is always sound
            return cores[0] | cores[1]
        return None

    def concretize(self) -> list[Fraction]:
        """Replace delta by a positive rational small enough for every bound."""
        eps = Fraction(1)
        for x in range(self.nvars):
            v = self.beta[x]
            for bound, is_lower in ((self.lower[x], True), (self.upper[x], False)):
                if bound is None:
                    continue
                lo, hi = (bound, v) if is_lower else (v, bound)
                dd = lo.d - hi.d  # need lo.r + lo.d*eps <= hi.r + hi.d*eps
                if dd > 0:
                    cand = Fraction(hi.r - lo.r, dd)
                    if cand < eps:
                        eps = cand
        eps = eps / 2
        return [self.beta[x].r + self.beta[x].d * eps for x in range(self.nvars)]
