"""Sorted terms and formulas over bool / mathematical int / rational real.

Terms are immutable trees built from state variables (optionally primed),
step-indexed variables, exact constants and operator applications.  A state
formula mentions only unprimed variables; a transition formula may mention
one priming level.  Instantiation turns state/transition formulas into
step-indexed formulas; evaluation is exact (arbitrary-precision ints and
``fractions.Fraction``), never floating point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Union


class Sort(enum.Enum):
    BOOL = "bool"
    INT = "int"
    REAL = "real"

    def __str__(self) -> str:
        return self.value


Value = Union[bool, int, Fraction]

# Operator tags.  MUL requires at least one constant factor (linear arithmetic
# only); IDIV/MOD require a nonzero integer constant divisor and have the
# Euclidean semantics of SMT-LIB `div`/`mod`.
NOT = "not"
AND = "and"
OR = "or"
IMPLIES = "=>"
IFF = "<=>"
ITE = "ite"
ADD = "+"
SUB = "-"
NEG = "neg"
MUL = "*"
IDIV = "div"
MOD = "mod"
LT = "<"
LE = "<="
EQ = "="
GE = ">="
GT = ">"

BOOL_CONNECTIVES = {NOT, AND, OR, IMPLIES, IFF}
ARITH_OPS = {ADD, SUB, NEG, MUL, IDIV, MOD}
RELATIONS = {LT, LE, EQ, GE, GT}


class SortError(Exception):
    """Raised when a term constructor is applied to ill-sorted arguments."""


@dataclass(frozen=True)
class Var:
    """State variable; ``primed`` marks the next-state copy in a transition formula."""

    name: str
    sort: Sort
    primed: bool = False


@dataclass(frozen=True)
class IVar:
    """Step-indexed variable: the value of ``name`` at time step ``step``."""

    name: str
    step: int
    sort: Sort


@dataclass(frozen=True)
class Const:
    value: Value
    sort: Sort


@dataclass(frozen=True)
class FuncSymbol:
    """Uninterpreted function symbol (representable but never produced by the frontend)."""

    name: str
    arg_sorts: tuple[Sort, ...]
    sort: Sort


@dataclass(frozen=True)
class App:
    op: Union[str, FuncSymbol]
    args: tuple["Term", ...]
    sort: Sort


Term = Union[Var, IVar, Const, App]

TRUE = Const(True, Sort.BOOL)
FALSE = Const(False, Sort.BOOL)


def mk_bool(b: bool) -> Const:
    return TRUE if b else FALSE


def mk_int(n: int) -> Const:
    return Const(int(n), Sort.INT)


def mk_real(q: Union[int, Fraction]) -> Const:
    return Const(Fraction(q), Sort.REAL)


def mk_const(value: Value, sort: Sort) -> Const:
    if sort is Sort.BOOL:
        if not isinstance(value, bool):
            raise SortError(f"bool constant expected, got {value!r}")
        return mk_bool(value)
    if sort is Sort.INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SortError(f"int constant expected, got {value!r}")
        return Const(value, sort)
    if isinstance(value, bool):
        raise SortError(f"real constant expected, got {value!r}")
    return Const(Fraction(value), Sort.REAL)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SortError(msg)


def _numeric(t: Term) -> None:
    _require(t.sort in (Sort.INT, Sort.REAL), f"numeric term expected, got {t.sort}")


def app(op: Union[str, FuncSymbol], *args: Term) -> Term:
    """Well-sortedness-checked application node."""
    if isinstance(op, FuncSymbol):
        _require(tuple(a.sort for a in args) == op.arg_sorts,
                 f"argument sorts do not match {op.name}")
        return App(op, tuple(args), op.sort)
    if op == NOT:
        _require(len(args) == 1 and args[0].sort is Sort.BOOL, "not: one bool argument")
        return App(op, tuple(args), Sort.BOOL)
    if op in (AND, OR):
        _require(len(args) >= 2, f"{op}: at least two arguments")
        _require(all(a.sort is Sort.BOOL for a in args), f"{op}: bool arguments")
        return App(op, tuple(args), Sort.BOOL)
    if op in (IMPLIES, IFF):
        _require(len(args) == 2 and all(a.sort is Sort.BOOL for a in args),
                 f"{op}: two bool arguments")
        return App(op, tuple(args), Sort.BOOL)
    if op == ITE:
        _require(len(args) == 3, "ite: three arguments")
        c, t, e = args
        _require(c.sort is Sort.BOOL, "ite: bool condition")
        _require(t.sort is e.sort, "ite: branches must share a sort")
        return App(op, tuple(args), t.sort)
    if op == NEG:
        _require(len(args) == 1, "neg: one argument")
        _numeric(args[0])
        return App(op, tuple(args), args[0].sort)
    if op in (ADD, SUB):
        _require(len(args) == 2, f"{op}: two arguments")
        a, b = args
        _numeric(a)
        _require(a.sort is b.sort, f"{op}: mixed sorts")
        return App(op, tuple(args), a.sort)
    if op == MUL:
        _require(len(args) == 2, "*: two arguments")
        a, b = args
        _numeric(a)
        _require(a.sort is b.sort, "*: mixed sorts")
        _require(isinstance(a, Const) or isinstance(b, Const),
                 "*: linear arithmetic needs a constant factor")
        return App(op, tuple(args), a.sort)
    if op in (IDIV, MOD):
        _require(len(args) == 2, f"{op}: two arguments")
        a, b = args
        _require(a.sort is Sort.INT and b.sort is Sort.INT, f"{op}: int arguments")
        _require(isinstance(b, Const) and b.value != 0, f"{op}: nonzero constant divisor")
        return App(op, tuple(args), Sort.INT)
    if op in RELATIONS:
        _require(len(args) == 2, f"{op}: two arguments")
        a, b = args
        _require(a.sort is b.sort, f"{op}: mixed sorts")
        if op != EQ:
            _numeric(a)
        return App(op, tuple(args), Sort.BOOL)
    raise SortError(f"unknown operator {op!r}")


def lnot(t: Term) -> Term:
    return app(NOT, t)


def land(*ts: Term) -> Term:
    return app(AND, *ts)


def lor(*ts: Term) -> Term:
    return app(OR, *ts)


def implies(a: Term, b: Term) -> Term:
    return app(IMPLIES, a, b)


def ite(c: Term, t: Term, e: Term) -> Term:
    return app(ITE, c, t, e)


def eq(a: Term, b: Term) -> Term:
    return app(EQ, a, b)


def le(a: Term, b: Term) -> Term:
    return app(LE, a, b)


def conj(ts) -> Term:
    """Conjunction of a sequence; true when empty."""
    ts = list(ts)
    if not ts:
        return TRUE
    if len(ts) == 1:
        return ts[0]
    return app(AND, *ts)


def disj(ts) -> Term:
    ts = list(ts)
    if not ts:
        return FALSE
    if len(ts) == 1:
        return ts[0]
    return app(OR, *ts)


def prime(v: Var) -> Var:
    return Var(v.name, v.sort, primed=True)


# ---------------------------------------------------------------------------
# Traversal

def subterms(t: Term) -> Iterator[Term]:
    """All subterms of t, preorder, including t itself."""
    stack = [t]
    while stack:
        cur = stack.pop()
        yield cur
        if isinstance(cur, App):
            stack.extend(reversed(cur.args))


def free_state_vars(t: Term) -> set[Var]:
    return {s for s in subterms(t) if isinstance(s, Var)}


def free_indexed_vars(t: Term) -> set[tuple[str, int]]:
    """The (name, step) pairs of indexed variables occurring in t."""
    return {(s.name, s.step) for s in subterms(t) if isinstance(s, IVar)}


def has_primed(t: Term) -> bool:
    return any(isinstance(s, Var) and s.primed for s in subterms(t))


def is_state_formula(t: Term) -> bool:
    return t.sort is Sort.BOOL and not has_primed(t)


# ---------------------------------------------------------------------------
# Instantiation

def _instantiate(t: Term, base: int, cache: dict) -> Term:
    got = cache.get(t)
    if got is not None:
        return got
    if isinstance(t, Var):
        out: Term = IVar(t.name, base + 1 if t.primed else base, t.sort)
    elif isinstance(t, App):
        out = App(t.op, tuple(_instantiate(a, base, cache) for a in t.args), t.sort)
    elif isinstance(t, IVar):
        raise SortError("term is already step-indexed")
    else:
        out = t
    cache[t] = out
    return out


def instantiate_state(f: Term, i: int) -> Term:
    """Replace every state variable v by the indexed variable (v, i)."""
    if i < 0:
        raise ValueError("step index must be nonnegative")
    if has_primed(f):
        raise SortError("state formula must not mention primed variables")
    return _instantiate(f, i, {})


def instantiate_trans(t: Term, i: int) -> Term:
    """Map unprimed variables to step i and primed variables to step i+1."""
    if i < 0:
        raise ValueError("step index must be nonnegative")
    return _instantiate(t, i, {})


def unprime(t: Term) -> Term:
    """State reading of a transition-formula subterm: drop all primes."""
    if isinstance(t, Var):
        return Var(t.name, t.sort, primed=False) if t.primed else t
    if isinstance(t, App):
        return App(t.op, tuple(unprime(a) for a in t.args), t.sort)
    return t


# ---------------------------------------------------------------------------
# Evaluation

Assignment = Mapping[tuple[str, int], Value]


def euclidean_div(a: int, b: int) -> int:
    # remainder always in [0, |b|)
    return a // b if b > 0 else -(a // -b)


def euclidean_mod(a: int, b: int) -> int:
    return a - b * euclidean_div(a, b)


def evaluate(t: Term, a: Assignment) -> Optional[Value]:
    """Exact ground evaluation of a step-indexed term under ``a``.

    Returns None (undefined) iff a needed variable is absent.  ``ite``
    evaluates only the taken branch; ``and``/``or`` use Kleene semantics so
    a defined dominating operand decides the result.
    """
    if isinstance(t, Const):
        return t.value
    if isinstance(t, IVar):
        return a.get((t.name, t.step))
    if isinstance(t, Var):
        raise SortError("cannot evaluate un-instantiated state variable")
    op = t.op
    if isinstance(op, FuncSymbol):
        raise SortError("cannot evaluate uninterpreted function application")
    if op == ITE:
        c = evaluate(t.args[0], a)
        if c is None:
            return None
        return evaluate(t.args[1] if c else t.args[2], a)
    if op in (AND, OR):
        dominator = (op == OR)
        saw_none = False
        for arg in t.args:
            v = evaluate(arg, a)
            if v is None:
                saw_none = True
            elif v == dominator:
                return dominator
        return None if saw_none else not dominator
    vals = []
    for arg in t.args:
        v = evaluate(arg, a)
        if v is None:
            return None
        vals.append(v)
    if op == NOT:
        return not vals[0]
    if op == IMPLIES:
        return (not vals[0]) or vals[1]
    if op == IFF:
        return vals[0] == vals[1]
    if op == ADD:
        return vals[0] + vals[1]
    if op == SUB:
        return vals[0] - vals[1]
    if op == NEG:
        return -vals[0]
    if op == MUL:
        return vals[0] * vals[1]
    if op == IDIV:
        return euclidean_div(vals[0], vals[1])
    if op == MOD:
        return euclidean_mod(vals[0], vals[1])
    if op == LT:
        return vals[0] < vals[1]
    if op == LE:
        return vals[0] <= vals[1]
    if op == EQ:
        return vals[0] == vals[1]
    if op == GE:
        return vals[0] >= vals[1]
    if op == GT:
        return vals[0] > vals[1]
    raise SortError(f"unknown operator {op!r}")


# ---------------------------------------------------------------------------
# Diagnostic printer

_INFIX = {ADD: "+", SUB: "-", MUL: "*", IDIV: "div", MOD: "mod",
          LT: "<", LE: "<=", EQ: "=", GE: ">=", GT: ">",
          AND: "and", OR: "or", IMPLIES: "=>", IFF: "<=>"}

_PREC = {OR: 2, AND: 3, IFF: 1, IMPLIES: 1,
         LT: 4, LE: 4, EQ: 4, GE: 4, GT: 4,
         ADD: 5, SUB: 5, MUL: 6, IDIV: 6, MOD: 6}


def pp_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)
    return str(v)


def pp_term(t: Term, parent_prec: int = 0) -> str:
    """Human-readable infix rendering for diagnostics."""
    if isinstance(t, Const):
        if t.sort is Sort.REAL and isinstance(t.value, Fraction) and t.value.denominator == 1:
            return f"{t.value.numerator}.0"
        return pp_value(t.value)
    if isinstance(t, Var):
        return t.name + ("'" if t.primed else "")
    if isinstance(t, IVar):
        return f"{t.name}@{t.step}"
    op = t.op
    if isinstance(op, FuncSymbol):
        return f"{op.name}({', '.join(pp_term(a) for a in t.args)})"
    if op == ITE:
        s = (f"if {pp_term(t.args[0])} then {pp_term(t.args[1])}"
             f" else {pp_term(t.args[2])}")
        return f"({s})" if parent_prec > 0 else s
    if op == NOT:
        return f"not {pp_term(t.args[0], 7)}"
    if op == NEG:
        return f"-{pp_term(t.args[0], 7)}"
    prec = _PREC[op]
    sep = f" {_INFIX[op]} "
    s = sep.join(pp_term(a, prec + 1) for a in t.args)
    return f"({s})" if prec < parent_prec else s
