"""Translation of an elaborated single-node program into a transition system.

Every stream variable becomes a state variable.  The initial predicate reads
each equation at instant 0 (arrows take their left arm; each reachable ``pre``
becomes a fresh unconstrained state variable).  The step predicate reads each
equation at instant t>0 (arrows take their right arm; ``pre e`` reads ``e``
over current-state variables, plain variables read next-state).  ``pre``
applied to anything containing another ``pre`` or an arrow is first pulled
out into an auxiliary stream equation, bottom-up, so every remaining ``pre``
argument is a plain instantaneous expression.

Node inputs (and the fresh instant-0 variables) are constrained by neither
predicate: they are nondeterministic at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import logic
from .logic import (Const, Sort, Term, Var, conj, eq, ite, prime, subterms,
                    unprime)
from .frontend import ElaboratedProgram, infer_sort, instant_order
from .lustre import (EBinary, EBool, ECall, EId, EInt, EIte, EReal, EUnary,
                     Equation, Expr, Node, VarDecl)


class EncodeError(Exception):
    pass


@dataclass(frozen=True)
class EncodingInfo:
    """Side information tying the transition system back to its streams."""

    node: Node                       # normalized single node
    env: dict                        # all stream vars incl. auxiliaries
    eval_order: tuple[str, ...]
    inputs: tuple[str, ...]
    init_pre_vars: dict              # (equation lhs, pre occurrence idx) -> var name
    int_literals: tuple[int, ...]    # integer constants appearing in the program


@dataclass(frozen=True)
class TransitionSystem:
    state_vars: tuple[tuple[str, Sort], ...]
    init_eqs: tuple[tuple[str, Term], ...]    # v   = rhs  (over unprimed vars)
    trans_eqs: tuple[tuple[str, Term], ...]   # v'  = rhs  (over vars and primes)
    properties: tuple[tuple[str, Term], ...]  # (stream name, state formula)
    info: EncodingInfo = field(compare=False, repr=False, default=None)

    @property
    def sorts(self) -> dict:
        return dict(self.state_vars)

    def init_formula(self) -> Term:
        return conj(eq(Var(v, self.sorts[v]), rhs) for v, rhs in self.init_eqs)

    def trans_formula(self) -> Term:
        return conj(eq(Var(v, self.sorts[v], primed=True), rhs)
                    for v, rhs in self.trans_eqs)

    def property_formula(self) -> Term:
        return conj(f for _, f in self.properties)


# ---------------------------------------------------------------------------
# Normalization: no pre below pre, no arrow below pre

def _contains_pre_or_arrow(e: Expr) -> bool:
    if isinstance(e, EUnary):
        return e.op == "pre" or _contains_pre_or_arrow(e.operand)
    if isinstance(e, EBinary):
        return e.op == "->" or _contains_pre_or_arrow(e.left) \
            or _contains_pre_or_arrow(e.right)
    if isinstance(e, EIte):
        return any(_contains_pre_or_arrow(x) for x in (e.cond, e.then, e.els))
    if isinstance(e, ECall):
        raise EncodeError("residual node call reached the encoder")
    return False


def normalize(prog: ElaboratedProgram) -> tuple[Node, dict]:
    """Pull complex pre arguments into auxiliary equations."""
    env = dict(prog.env)
    used = set(env)
    counter = [0]
    aux_decls: list[VarDecl] = []
    new_eqs: list[Equation] = []

    def fresh(sort: Sort) -> str:
        while True:
            counter[0] += 1
            name = f"pre_aux_{counter[0]}"
            if name not in used:
                used.add(name)
                env[name] = sort
                aux_decls.append(VarDecl(name, sort))
                return name

    def norm(e: Expr) -> Expr:
        if isinstance(e, EUnary):
            arg = norm(e.operand)
            if e.op == "pre" and _contains_pre_or_arrow(arg):
                sort = infer_sort(arg, env, {})
                name = fresh(sort)
                new_eqs.append(Equation(name, arg))
                arg = EId(name)
            return EUnary(e.op, arg)
        if isinstance(e, EBinary):
            return EBinary(e.op, norm(e.left), norm(e.right))
        if isinstance(e, EIte):
            return EIte(norm(e.cond), norm(e.then), norm(e.els))
        if isinstance(e, ECall):
            raise EncodeError("residual node call reached the encoder")
        return e

    equations = [Equation(q.lhs, norm(q.rhs)) for q in prog.node.equations]
    equations.extend(new_eqs)
    node = Node(prog.node.name, prog.node.inputs, prog.node.outputs,
                prog.node.locals + tuple(aux_decls), tuple(equations))
    return node, env


def _count_pres(e: Expr) -> int:
    if isinstance(e, EUnary):
        return (1 if e.op == "pre" else 0) + _count_pres(e.operand)
    if isinstance(e, EBinary):
        return _count_pres(e.left) + _count_pres(e.right)
    if isinstance(e, EIte):
        return _count_pres(e.cond) + _count_pres(e.then) + _count_pres(e.els)
    return 0


_BINOPS = {"+": logic.ADD, "-": logic.SUB, "and": logic.AND, "or": logic.OR,
           "=>": logic.IMPLIES, "=": logic.EQ, "<": logic.LT, "<=": logic.LE,
           ">": logic.GT, ">=": logic.GE, "div": logic.IDIV, "mod": logic.MOD}


def _const_term(e: Expr) -> Term:
    if isinstance(e, EBool):
        return logic.mk_bool(e.value)
    if isinstance(e, EInt):
        return logic.mk_int(e.value)
    return logic.mk_real(e.value)


class _Encoder:
    def __init__(self, prog: ElaboratedProgram):
        self.node, self.env = normalize(prog)
        self.prog = prog
        self.init_pre_vars: dict[tuple[str, int], str] = {}
        self.fresh_decls: list[tuple[str, Sort]] = []
        self._used = set(self.env)
        self._fresh_n = 0

    def _fresh_init_var(self, lhs: str, occ: int, sort: Sort) -> str:
        while True:
            self._fresh_n += 1
            name = f"pre_init_{self._fresh_n}"
            if name not in self._used:
                break
        self._used.add(name)
        self.fresh_decls.append((name, sort))
        self.init_pre_vars[(lhs, occ)] = name
        return name

    def _var(self, name: str, primed: bool = False) -> Var:
        return Var(name, self.env[name], primed)

    # instant-0 reading; ctr tracks pre-occurrence numbering across skipped arms
    def init_read(self, e: Expr, lhs: str, ctr: list[int]) -> Term:
        if isinstance(e, (EBool, EInt, EReal)):
            return _const_term(e)
        if isinstance(e, EId):
            return self._var(e.name)
        if isinstance(e, EUnary):
            if e.op == "pre":
                occ = ctr[0]
                ctr[0] += 1 + _count_pres(e.operand)
                sort = infer_sort(e.operand, self.env, {})
                return Var(self._fresh_init_var(lhs, occ, sort), sort)
            arg = self.init_read(e.operand, lhs, ctr)
            return logic.app(logic.NOT if e.op == "not" else logic.NEG, arg)
        if isinstance(e, EBinary):
            if e.op == "->":
                left = self.init_read(e.left, lhs, ctr)
                ctr[0] += _count_pres(e.right)
                return left
            return self._binary(e.op, self.init_read(e.left, lhs, ctr),
                                self.init_read(e.right, lhs, ctr))
        if isinstance(e, EIte):
            return ite(self.init_read(e.cond, lhs, ctr),
                       self.init_read(e.then, lhs, ctr),
                       self.init_read(e.els, lhs, ctr))
        raise EncodeError("residual node call reached the encoder")

    # step reading: plain variables are next-state, pre e reads e at current state
    def step_read(self, e: Expr) -> Term:
        if isinstance(e, (EBool, EInt, EReal)):
            return _const_term(e)
        if isinstance(e, EId):
            return self._var(e.name, primed=True)
        if isinstance(e, EUnary):
            if e.op == "pre":
                return self.cur_read(e.operand)
            return logic.app(logic.NOT if e.op == "not" else logic.NEG,
                             self.step_read(e.operand))
        if isinstance(e, EBinary):
            if e.op == "->":
                return self.step_read(e.right)
            return self._binary(e.op, self.step_read(e.left), self.step_read(e.right))
        if isinstance(e, EIte):
            return ite(self.step_read(e.cond), self.step_read(e.then),
                       self.step_read(e.els))
        raise EncodeError("residual node call reached the encoder")

    # current-state reading of a pre argument (pre- and arrow-free)
    def cur_read(self, e: Expr) -> Term:
        if isinstance(e, (EBool, EInt, EReal)):
            return _const_term(e)
        if isinstance(e, EId):
            return self._var(e.name)
        if isinstance(e, EUnary):
            return logic.app(logic.NOT if e.op == "not" else logic.NEG,
                             self.cur_read(e.operand))
        if isinstance(e, EBinary):
            return self._binary(e.op, self.cur_read(e.left), self.cur_read(e.right))
        if isinstance(e, EIte):
            return ite(self.cur_read(e.cond), self.cur_read(e.then),
                       self.cur_read(e.els))
        raise EncodeError("residual node call reached the encoder")

    def _binary(self, op: str, left: Term, right: Term) -> Term:
        if op == "<>":
            return logic.lnot(eq(left, right))
        if op == "xor":
            return logic.lnot(logic.app(logic.IFF, left, right))
        if op == "*":
            return logic.app(logic.MUL, left, right)
        if op == "/":
            if not isinstance(right, Const) or right.value == 0:
                raise EncodeError("real division needs a nonzero constant divisor")
            return logic.app(logic.MUL, left,
                             logic.mk_real(Fraction(1) / Fraction(right.value)))
        return logic.app(_BINOPS[op], left, right)


def encode(prog: ElaboratedProgram) -> TransitionSystem:
    """Two-formula (I, T) encoding of an inlined, typechecked, cycle-free node."""
    enc = _Encoder(prog)
    init_eqs = []
    trans_eqs = []
    for eqn in enc.node.equations:
        init_eqs.append((eqn.lhs, enc.init_read(eqn.rhs, eqn.lhs, [0])))
        trans_eqs.append((eqn.lhs, enc.step_read(eqn.rhs)))
    order = instant_order(enc.node)
    state_vars = [(name, enc.env[name]) for name in enc.env] + enc.fresh_decls
    props = tuple((name, Var(name, Sort.BOOL)) for name in prog.properties)
    info = EncodingInfo(
        node=enc.node,
        env={**enc.env, **dict(enc.fresh_decls)},
        eval_order=order,
        inputs=prog.inputs,
        init_pre_vars=dict(enc.init_pre_vars),
        int_literals=tuple(_int_literals(prog.node)),
    )
    return TransitionSystem(
        state_vars=tuple(state_vars),
        init_eqs=tuple(init_eqs),
        trans_eqs=tuple(trans_eqs),
        properties=props,
        info=info,
    )


def _int_literals(node: Node):
    out: set[int] = set()

    def walk(e: Expr):
        if isinstance(e, EInt):
            out.add(e.value)
        elif isinstance(e, EUnary):
            if e.op == "-" and isinstance(e.operand, EInt):
                out.add(-e.operand.value)
            walk(e.operand)
        elif isinstance(e, EBinary):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, EIte):
            walk(e.cond)
            walk(e.then)
            walk(e.els)
        elif isinstance(e, ECall):
            for a in e.args:
                walk(a)

    for eqn in node.equations:
        walk(eqn.rhs)
    return sorted(out)


# ---------------------------------------------------------------------------
# Candidate term harvesting

@dataclass(frozen=True)
class TermPool:
    int_terms: tuple[Term, ...]
    bool_terms: tuple[Term, ...]


def _term_size(t: Term) -> int:
    return sum(1 for _ in subterms(t))


def harvest_terms(ts: TransitionSystem, int_cap: int = 60, bool_cap: int = 60,
                  include_property_terms: bool = False) -> TermPool:
    """Deterministic candidate pool: state variables first, then shallow
    subterms of I/T in their unprimed reading, then distinguished constants."""
    sorts = ts.sorts
    int_vars = [Var(v, s) for v, s in ts.state_vars if s is Sort.INT]
    bool_vars = [Var(v, s) for v, s in ts.state_vars if s is Sort.BOOL]

    int_sub: list[Term] = []
    bool_sub: list[Term] = []
    const_ints: set[int] = set(ts.info.int_literals) | {0, 1} if ts.info else {0, 1}
    seen: set[Term] = set(int_vars) | set(bool_vars)

    def classify(t: Term) -> None:
        if isinstance(t, Const):
            if t.sort is Sort.INT:
                const_ints.add(t.value)
            return
        if isinstance(t, Var) or t in seen:
            return
        seen.add(t)
        if t.sort is Sort.INT:
            int_sub.append(t)
        elif t.sort is Sort.BOOL:
            bool_sub.append(t)

    def collect(conjunct: Term) -> None:
        for sub in subterms(conjunct):
            if sub is not conjunct:  # defining equations are not candidates
                classify(unprime(sub))

    for v, rhs in ts.init_eqs:
        collect(eq(Var(v, sorts[v]), rhs))
    for v, rhs in ts.trans_eqs:
        collect(eq(Var(v, sorts[v], primed=True), rhs))
    if include_property_terms:
        for _, f in ts.properties:
            for sub in subterms(f):
                classify(unprime(sub))
    int_sub.sort(key=_term_size)
    bool_sub.sort(key=_term_size)

    int_terms = int_vars + int_sub + [logic.mk_int(n) for n in sorted(const_ints)]
    bool_terms = bool_vars + bool_sub + [logic.TRUE]
    return TermPool(tuple(int_terms[:int_cap]), tuple(bool_terms[:bool_cap]))
