"""Formula compilation and the DPLL(T) loop of the bundled SMT-LIB server.

Assertions arrive as parsed s-expressions over declared constants.  They are
desugared (numeric equality split into two inequalities, xor/ite elimination,
div/mod by positive constants via fresh integer variables), linear atoms are
normalized and mapped to propositions, the boolean structure is Tseitin
encoded, and a DPLL loop with theory-conflict clause learning decides
satisfiability against the exact simplex in ``linarith``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from . import linarith
from .linarith import DRat, Problem, Timeout, Unknown

SExp = Union[str, list]


class CompileError(Exception):
    pass


# ---------------------------------------------------------------------------
# Linear forms

@dataclass
class LinForm:
    coeffs: dict[str, Fraction]
    const: Fraction
    is_int: bool

    def key(self) -> tuple:
        return tuple(sorted(self.coeffs.items()))


def _lf_const(c: Fraction, is_int: bool) -> LinForm:
    return LinForm({}, c, is_int)


def _lf_add(a: LinForm, b: LinForm, sign: int = 1) -> LinForm:
    coeffs = dict(a.coeffs)
    for v, c in b.coeffs.items():
        nc = coeffs.get(v, Fraction(0)) + sign * c
        if nc == 0:
            coeffs.pop(v, None)
        else:
            coeffs[v] = nc
    return LinForm(coeffs, a.const + sign * b.const, a.is_int and b.is_int)


def _lf_scale(a: LinForm, k: Fraction) -> LinForm:
    if k == 0:
        return _lf_const(Fraction(0), a.is_int)
    return LinForm({v: c * k for v, c in a.coeffs.items()}, a.const * k, a.is_int)


# ---------------------------------------------------------------------------
# Boolean formula nodes:
#   ("const", bool) | ("var", name) | ("atom", atom_id)
#   | ("not", f) | ("and", (fs...)) | ("or", (fs...)) | ("iff", f, g)
BForm = tuple


@dataclass
class Atom:
    """Normalized linear atom: form <= bound, strict when ``strict``."""

    form: LinForm
    bound: Fraction
    strict: bool


@dataclass
class Compiler:
    sorts: dict[str, str]                    # declared name -> Bool|Int|Real
    atoms: list[Atom] = field(default_factory=list)
    atom_ids: dict[tuple, int] = field(default_factory=dict)
    side: list[BForm] = field(default_factory=list)  # definitional constraints
    aux_sorts: dict[str, str] = field(default_factory=dict)
    _aux_cache: dict[str, str] = field(default_factory=dict)
    _aux_n: int = 0

    def sort_of_name(self, name: str) -> Optional[str]:
        return self.sorts.get(name) or self.aux_sorts.get(name)

    def _fresh(self, sort: str, key: str) -> str:
        got = self._aux_cache.get(key)
        if got is not None:
            return got
        name = f".aux{self._aux_n}"
        self._aux_n += 1
        self.aux_sorts[name] = sort
        self._aux_cache[key] = name
        return name

    # -- boolean layer --------------------------------------------------------

    def formula(self, e: SExp) -> BForm:
        if isinstance(e, str):
            if e == "true":
                return ("const", True)
            if e == "false":
                return ("const", False)
            if self.sort_of_name(e) == "Bool":
                return ("var", e)
            raise CompileError(f"expected a boolean term: {e}")
        if not e:
            raise CompileError("empty application")
        head, args = e[0], e[1:]
        if head == "not":
            return ("not", self.formula(args[0]))
        if head == "and":
            return ("and", tuple(self.formula(a) for a in args)) if args else ("const", True)
        if head == "or":
            return ("or", tuple(self.formula(a) for a in args)) if args else ("const", False)
        if head == "=>":
            f = self.formula(args[-1])
            for a in reversed(args[:-1]):
                f = ("or", (("not", self.formula(a)), f))
            return f
        if head == "xor":
            return ("not", ("iff", self.formula(args[0]), self.formula(args[1])))
        if head == "ite":
            c = self.formula(args[0])
            t, el = self.formula(args[1]), self.formula(args[2])
            return ("or", (("and", (c, t)), ("and", (("not", c), el))))
        if head in ("=", "distinct"):
            if self._is_bool_term(args[0]):
                f: BForm = ("iff", self.formula(args[0]), self.formula(args[1]))
            else:
                a, b = self._linear(args[0]), self._linear(args[1])
                f = ("and", (self._atom_le(a, b, False), self._atom_le(b, a, False)))
            return ("not", f) if head == "distinct" else f
        if head == "<=":
            return self._atom_le(self._linear(args[0]), self._linear(args[1]), False)
        if head == "<":
            return self._atom_le(self._linear(args[0]), self._linear(args[1]), True)
        if head == ">=":
            return self._atom_le(self._linear(args[1]), self._linear(args[0]), False)
        if head == ">":
            return self._atom_le(self._linear(args[1]), self._linear(args[0]), True)
        raise CompileError(f"unsupported operator: {head}")

    def _is_bool_term(self, e: SExp) -> bool:
        if isinstance(e, str):
            return e in ("true", "false") or self.sort_of_name(e) == "Bool"
        head = e[0]
        if head in ("not", "and", "or", "=>", "xor", "=", "distinct", "<", "<=", ">", ">="):
            return True
        if head == "ite":
            return self._is_bool_term(e[2])
        return False

    # -- numeric layer ----------------------------------------------------------

    def _linear(self, e: SExp) -> LinForm:
        if isinstance(e, str):
            num = _parse_numeral(e)
            if num is not None:
                val, is_dec = num
                return _lf_const(val, not is_dec)
            sort = self.sort_of_name(e)
            if sort in ("Int", "Real"):
                return LinForm({e: Fraction(1)}, Fraction(0), sort == "Int")
            raise CompileError(f"expected a numeric term: {e}")
        head, args = e[0], e[1:]
        if head == "-" and len(args) == 1:
            return _lf_scale(self._linear(args[0]), Fraction(-1))
        if head in ("-", "+"):
            f = self._linear(args[0])
            for a in args[1:]:
                f = _lf_add(f, self._linear(a), -1 if head == "-" else 1)
            return f
        if head == "*":
            forms = [self._linear(a) for a in args]
            k = Fraction(1)
            varf: Optional[LinForm] = None
            for f in forms:
                if f.coeffs:
                    if varf is not None:
                        raise CompileError("nonlinear multiplication")
                    varf = f
                else:
                    k *= f.const
            if varf is None:
                return _lf_const(k, all(f.is_int for f in forms))
            return _lf_scale(varf, k)
        if head == "/":
            f = self._linear(args[0])
            for d in args[1:]:
                df = self._linear(d)
                if df.coeffs or df.const == 0:
                    raise CompileError("division by a non-constant or zero")
                f = _lf_scale(f, Fraction(1) / df.const)
            return LinForm(f.coeffs, f.const, False)
        if head in ("div", "mod"):
            return self._divmod(head, args[0], args[1])
        if head == "ite":
            return self._numeric_ite(e)
        raise CompileError(f"unsupported numeric operator: {head}")

    def _divmod(self, op: str, a: SExp, b: SExp) -> LinForm:
        bf = self._linear(b)
        if bf.coeffs or bf.const.denominator != 1 or bf.const <= 0:
            raise CompileError("div/mod need a positive integer constant divisor")
        c = bf.const
        af = self._linear(a)
        key = f"divmod|{af.key()}|{af.const}|{c}"
        qname = self._fresh("Int", "q|" + key)
        rname = self._fresh("Int", "r|" + key)
        if key not in self._aux_cache:
            self._aux_cache[key] = qname
            q = LinForm({qname: Fraction(1)}, Fraction(0), True)
            r = LinForm({rname: Fraction(1)}, Fraction(0), True)
            lhs = _lf_add(_lf_scale(q, c), r)  # a = c*q + r, 0 <= r < c
            self.side.append(("and", (
                self._atom_le(af, lhs, False),
                self._atom_le(lhs, af, False),
                self._atom_le(_lf_const(Fraction(0), True), r, False),
                self._atom_le(r, _lf_const(c - 1, True), False),
            )))
        return LinForm({qname if op == "div" else rname: Fraction(1)}, Fraction(0), True)

    def _numeric_ite(self, e: SExp) -> LinForm:
        t, el = self._linear(e[2]), self._linear(e[3])
        sort = "Int" if (t.is_int and el.is_int) else "Real"
        key = "ite|" + _skey(e)
        vname = self._fresh(sort, key)
        if key + "|side" not in self._aux_cache:
            self._aux_cache[key + "|side"] = vname
            v = LinForm({vname: Fraction(1)}, Fraction(0), sort == "Int")
            c = self.formula(e[1])
            self.side.append(("or", (("not", c), ("and", (
                self._atom_le(v, t, False), self._atom_le(t, v, False))))))
            self.side.append(("or", (c, ("and", (
                self._atom_le(v, el, False), self._atom_le(el, v, False))))))
        return LinForm({vname: Fraction(1)}, Fraction(0), sort == "Int")

    # -- atoms -------------------------------------------------------------------

    def _atom_le(self, a: LinForm, b: LinForm, strict: bool) -> BForm:
        """Atom for a <= b (a < b when strict), normalized to form <= const."""
        diff = _lf_add(a, b, -1)
        coeffs, c = diff.coeffs, -diff.const
        if not coeffs:
            return ("const", (Fraction(0) < c) if strict else (Fraction(0) <= c))
        denom_lcm = 1
        for q in coeffs.values():
            denom_lcm = _lcm(denom_lcm, q.denominator)
        num_gcd = 0
        for q in coeffs.values():
            num_gcd = _gcd(num_gcd, abs(q.numerator * (denom_lcm // q.denominator)))
        scale = Fraction(denom_lcm, num_gcd)
        coeffs = {v: q * scale for v, q in coeffs.items()}
        c = c * scale
        if diff.is_int:
            # integer tightening removes strictness entirely
            if strict:
                c = c - 1 if c.denominator == 1 else Fraction(c.numerator // c.denominator)
                strict = False
            elif c.denominator != 1:
                c = Fraction(c.numerator // c.denominator)
        form = LinForm(coeffs, Fraction(0), diff.is_int)
        akey = (form.key(), c, strict)
        aid = self.atom_ids.get(akey)
        if aid is None:
            aid = len(self.atoms)
            self.atoms.append(Atom(form, c, strict))
            self.atom_ids[akey] = aid
        return ("atom", aid)


def _skey(e: SExp) -> str:
    return e if isinstance(e, str) else "(" + " ".join(_skey(x) for x in e) + ")"


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _lcm(a: int, b: int) -> int:
    return a * b // _gcd(a, b) if a and b else (a or b)


def _parse_numeral(tok: str) -> Optional[tuple[Fraction, bool]]:
    if tok.startswith("-") and len(tok) > 1:
        inner = _parse_numeral(tok[1:])
        return (-inner[0], inner[1]) if inner else None
    if tok.isdigit():
        return Fraction(int(tok)), False
    if "." in tok:
        a, _, b = tok.partition(".")
        if a.isdigit() and b.isdigit():
            return Fraction(tok), True
    return None


# ---------------------------------------------------------------------------
# Tseitin CNF

class CNF:
    def __init__(self):
        self.nvars = 0
        self.clauses: list[list[int]] = []
        self.prop_of_bvar: dict[str, int] = {}
        self.prop_of_atom: dict[int, int] = {}
        self._cache: dict[BForm, int] = {}

    def fresh(self) -> int:
        self.nvars += 1
        return self.nvars

    def bvar(self, name: str) -> int:
        p = self.prop_of_bvar.get(name)
        if p is None:
            p = self.prop_of_bvar[name] = self.fresh()
        return p

    def atom(self, aid: int) -> int:
        p = self.prop_of_atom.get(aid)
        if p is None:
            p = self.prop_of_atom[aid] = self.fresh()
        return p

    def add_assertion(self, f: BForm) -> None:
        self.clauses.append([self._lit(f)])

    def _lit(self, f: BForm) -> int:
        kind = f[0]
        if kind == "const":
            p = self._cache.get(f)
            if p is None:
                p = self._cache[f] = self.fresh()
                self.clauses.append([p if f[1] else -p])
            return p
        if kind == "var":
            return self.bvar(f[1])
        if kind == "atom":
            return self.atom(f[1])
        if kind == "not":
            return -self._lit(f[1])
        p = self._cache.get(f)
        if p is not None:
            return p
        if kind in ("and", "or"):
            lits = [self._lit(g) for g in f[1]]
            p = self.fresh()
            if kind == "and":
                for l in lits:
                    self.clauses.append([-p, l])
                self.clauses.append([p] + [-l for l in lits])
            else:
                for l in lits:
                    self.clauses.append([-l, p])
                self.clauses.append([-p] + lits)
        elif kind == "iff":
            a, b = self._lit(f[1]), self._lit(f[2])
            p = self.fresh()
            self.clauses.extend([[-p, -a, b], [-p, a, -b], [p, a, b], [p, -a, -b]])
        else:
            raise CompileError(f"unknown formula node {kind}")
        self._cache[f] = p
        return p


# ---------------------------------------------------------------------------
# Theory interface

class Theory:
    def __init__(self, compiler: Compiler, cnf: CNF):
        self.compiler = compiler
        self.cnf = cnf
        names: set[str] = set()
        for atom in compiler.atoms:
            names.update(atom.form.coeffs)
        ordered = sorted(names)
        self.var_index = {v: i for i, v in enumerate(ordered)}
        self.is_int = [compiler.sort_of_name(v) == "Int" for v in ordered]
        self.nvars = len(ordered)
        self.slack_of_form: dict[tuple, int] = {}
        self.rows: list[tuple[int, dict[int, Fraction]]] = []
        self.total = self.nvars
        self.last_solution: Optional[list[Fraction]] = None

    def _target(self, atom: Atom) -> tuple[int, Fraction]:
        """(variable index, scale) such that form == scale * var."""
        items = atom.form.key()
        if len(items) == 1:
            name, coeff = items[0]
            return self.var_index[name], coeff
        s = self.slack_of_form.get(items)
        if s is None:
            s = self.total
            self.total += 1
            self.rows.append((s, {self.var_index[v]: c for v, c in items}))
            self.slack_of_form[items] = s
        return s, Fraction(1)

    def literal_bound(self, aid: int, positive: bool, tag: int):
        """Translate an atom literal into (var, 'lo'|'hi', DRat, tag)."""
        atom = self.compiler.atoms[aid]
        var, scale = self._target(atom)
        flip = scale < 0
        if positive:
            c = atom.bound / scale
            kind = "lo" if flip else "hi"
            d = Fraction(0) if not atom.strict else (Fraction(1) if flip else Fraction(-1))
            return (var, kind, DRat(c, d), tag)
        if atom.form.is_int:
            # not(form <= c)  ==  form >= c+1
            c = (atom.bound + 1) / scale
            kind = "hi" if flip else "lo"
            return (var, kind, DRat(c), tag)
        c = atom.bound / scale
        kind = "hi" if flip else "lo"
        # not(form <= c) == form > c ; not(form < c) == form >= c
        d = Fraction(0) if atom.strict else (Fraction(-1) if flip else Fraction(1))
        return (var, kind, DRat(c, d), tag)

    def check_assignment(self, assign: dict[int, bool], deadline,
                         bb_budget: int) -> Optional[set]:
        bounds = []
        for aid, prop in self.cnf.prop_of_atom.items():
            val = assign.get(prop)
            if val is None:
                continue
            bounds.append(self.literal_bound(aid, val, prop if val else -prop))
        prob = Problem(self.nvars, self.is_int, self.rows, bounds)
        status, payload = linarith.solve(prob, self.total, deadline, bb_budget)
        if status == "sat":
            self.last_solution = payload
            return None
        return payload

    def model_values(self, assign: dict[int, bool]) -> dict[str, object]:
        vals: dict[str, object] = {}
        for name, p in self.cnf.prop_of_bvar.items():
            vals[name] = bool(assign.get(p, False))
        for name, idx in self.var_index.items():
            q = self.last_solution[idx] if self.last_solution is not None else Fraction(0)
            vals[name] = int(q) if self.is_int[idx] else q
        return vals


# ---------------------------------------------------------------------------
# DPLL with watched literals and theory-conflict learning

class Solver:
    def __init__(self, cnf: CNF, theory: Theory):
        self.cnf = cnf
        self.theory = theory
        self.assign: dict[int, bool] = {}
        self.trail: list[int] = []
        self.decisions: list[tuple[int, int, bool]] = []  # (trail mark, lit, flipped)
        self.watches: dict[int, list[int]] = {}
        self.units: list[int] = []
        self.low = 1
        for ci, cl in enumerate(cnf.clauses):
            self._register(ci, cl)

    def _register(self, ci: int, cl: list[int]) -> None:
        if len(cl) == 1:
            self.units.append(cl[0])
        else:
            # prefer non-false watches so clauses learned mid-search behave
            cl.sort(key=lambda l: self.value(l) is False)
            self.watches.setdefault(cl[0], []).append(ci)
            self.watches.setdefault(cl[1], []).append(ci)

    def value(self, lit: int) -> Optional[bool]:
        v = self.assign.get(abs(lit))
        return None if v is None else (v if lit > 0 else not v)

    def _push(self, lit: int) -> bool:
        v = self.value(lit)
        if v is False:
            return False
        if v is None:
            self.assign[abs(lit)] = lit > 0
            self.trail.append(lit)
        return True

    def _propagate(self, queue_start: int) -> Optional[list[int]]:
        qi = queue_start
        while qi < len(self.trail):
            lit = self.trail[qi]
            qi += 1
            falsified = -lit
            watching = self.watches.get(falsified, [])
            i = 0
            while i < len(watching):
                ci = watching[i]
                cl = self.cnf.clauses[ci]
                # ensure falsified is at position 1
                if cl[0] == falsified:
                    cl[0], cl[1] = cl[1], cl[0]
                if self.value(cl[0]) is True:
                    i += 1
                    continue
                moved = False
                for j in range(2, len(cl)):
                    if self.value(cl[j]) is not False:
                        cl[1], cl[j] = cl[j], cl[1]
                        self.watches.setdefault(cl[1], []).append(ci)
                        watching[i] = watching[-1]
                        watching.pop()
                        moved = True
                        break
                if moved:
                    continue
                if not self._push(cl[0]):
                    return cl
                i += 1
        return None

    def _unassign_to(self, mark: int) -> None:
        while len(self.trail) > mark:
            v = abs(self.trail.pop())
            del self.assign[v]
            if v < self.low:
                self.low = v

    def _backtrack(self) -> bool:
        while self.decisions:
            mark, lit, flipped = self.decisions.pop()
            self._unassign_to(mark)
            if not flipped:
                self.decisions.append((mark, -lit, True))
                self._push(-lit)
                return True
        return False

    def solve(self, deadline: Optional[float], bb_budget: int) -> Union[dict, None, str]:
        for u in self.units:
            if not self._push(u):
                return None
        steps = 0
        qi = 0
        while True:
            steps += 1
            if deadline is not None and steps % 32 == 0 and time.monotonic() > deadline:
                return "unknown"
            conflict = self._propagate(qi)
            if conflict is not None:
                if not self._backtrack():
                    return None
                qi = 0
                continue
            qi = len(self.trail)
            var = self._pick()
            if var is None:
                try:
                    core = self.theory.check_assignment(self.assign, deadline, bb_budget)
                except (Timeout, Unknown):
                    return "unknown"
                if core is None:
                    return dict(self.assign)
                lemma = [-t for t in core if t is not None]
                if not lemma:
                    return None
                ci = len(self.cnf.clauses)
                self.cnf.clauses.append(lemma)
                self._register(ci, lemma)
                # unwind until the lemma is no longer falsified, then let
                # propagation exploit it if it became unit
                while all(self.value(l) is False for l in lemma):
                    if not self._backtrack():
                        return None
                non_false = [l for l in lemma if self.value(l) is not False]
                if len(non_false) == 1 and self.value(non_false[0]) is None:
                    self._push(non_false[0])
                qi = 0
                continue
            self.decisions.append((len(self.trail), -var, False))
            self._push(-var)

    def _pick(self) -> Optional[int]:
        v = self.low
        n = self.cnf.nvars
        while v <= n and v in self.assign:
            v += 1
        self.low = v
        return v if v <= n else None


class Result:
    def __init__(self, status: str, model=None):
        self.status = status
        self.model = model if model is not None else {}


def check(sorts: dict[str, str], assertions: list[SExp], deadline: Optional[float],
          bb_budget: int = 400) -> Result:
    compiler = Compiler(dict(sorts))
    forms = [compiler.formula(a) for a in assertions]
    cnf = CNF()
    for f in forms:
        cnf.add_assertion(f)
    for f in compiler.side:
        cnf.add_assertion(f)
    theory = Theory(compiler, cnf)
    res = Solver(cnf, theory).solve(deadline, bb_budget)
    if res is None:
        return Result("unsat")
    if res == "unknown":
        return Result("unknown")
    return Result("sat", theory.model_values(res))
