"""Semantic analysis for the Lustre subset: typechecking, inlining, elaboration.

``elaborate`` runs the whole pipeline: parse -> typecheck -> inline the main
node -> reject instantaneous cycles, and returns a single closed node plus
its variable environment, the resolved property list and an instantaneous
evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .logic import Sort
from .lustre import (EBinary, EBool, ECall, EId, EInt, EIte, EReal, EUnary,
                     Equation, Expr, Node, ParseError, Program, VarDecl, parse)


class FrontendError(Exception):
    pass


class TypeCheckError(FrontendError):
    pass


class MissingDefinitionError(FrontendError):
    pass


class DuplicateDefinitionError(FrontendError):
    pass


class UnknownNodeError(FrontendError):
    pass


class NodeRecursionError(FrontendError):
    def __init__(self, cycle: list[str]):
        super().__init__("recursive node calls: " + " -> ".join(cycle))
        self.cycle = cycle


class InstantCycleError(FrontendError):
    def __init__(self, cycle: list[str]):
        super().__init__("instantaneous dependency cycle: " + " -> ".join(cycle))
        self.cycle = cycle


@dataclass(frozen=True)
class TypedProgram:
    program: Program
    main: str
    envs: dict  # node name -> {var name -> Sort}
    properties: tuple[str, ...]


@dataclass(frozen=True)
class ElaboratedProgram:
    """A closed, typechecked, cycle-free single node ready for encoding."""

    node: Node
    env: dict  # var name -> Sort
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    properties: tuple[str, ...]
    eval_order: tuple[str, ...]  # defined variables in instantaneous order


# ---------------------------------------------------------------------------
# Type checking

def resolve_main(p: Program, override: Optional[str] = None) -> str:
    """CLI override, then --%MAIN pragma, then node 'main', then the last node."""
    names = [n.name for n in p.nodes]
    for cand in (override, p.main_pragma):
        if cand is not None:
            if cand not in names:
                raise UnknownNodeError(f"main node {cand!r} is not defined")
            return cand
    if "main" in names:
        return "main"
    return names[-1]


def typecheck(p: Program, main: Optional[str] = None) -> TypedProgram:
    nodes_by_name: dict[str, Node] = {}
    for node in p.nodes:
        if node.name in nodes_by_name:
            raise DuplicateDefinitionError(f"node {node.name} defined twice")
        nodes_by_name[node.name] = node
    main_name = resolve_main(p, main)

    envs: dict[str, dict[str, Sort]] = {}
    for node in p.nodes:
        env: dict[str, Sort] = {}
        for decl in node.inputs + node.outputs + node.locals:
            if decl.name in env:
                raise DuplicateDefinitionError(
                    f"{node.name}: variable {decl.name} declared twice")
            env[decl.name] = decl.sort
        envs[node.name] = env

    for node in p.nodes:
        env = envs[node.name]
        inputs = {d.name for d in node.inputs}
        defined: set[str] = set()
        for eqn in node.equations:
            if eqn.lhs in inputs:
                raise TypeCheckError(f"{node.name}: input {eqn.lhs} cannot be defined")
            if eqn.lhs not in env:
                raise TypeCheckError(f"{node.name}: equation defines undeclared {eqn.lhs}")
            if eqn.lhs in defined:
                raise DuplicateDefinitionError(
                    f"{node.name}: {eqn.lhs} has more than one equation")
            defined.add(eqn.lhs)
            rhs_sort = infer_sort(eqn.rhs, env, nodes_by_name)
            if rhs_sort is not env[eqn.lhs]:
                raise TypeCheckError(
                    f"{node.name}: {eqn.lhs} is {env[eqn.lhs]} but its equation"
                    f" has sort {rhs_sort}")
        for decl in node.outputs + node.locals:
            if decl.name not in defined:
                raise MissingDefinitionError(
                    f"{node.name}: {decl.name} has no defining equation")

    main_node = nodes_by_name[main_name]
    main_env = envs[main_name]
    if p.property_pragmas:
        props = []
        declared = {d.name for d in main_node.outputs + main_node.locals}
        for name in p.property_pragmas:
            if name not in declared:
                raise TypeCheckError(
                    f"property {name} is not an output or local of {main_name}")
            if main_env[name] is not Sort.BOOL:
                raise TypeCheckError(f"property {name} is not boolean")
            props.append(name)
    else:
        props = [d.name for d in main_node.outputs if main_env[d.name] is Sort.BOOL]
    if not props:
        raise TypeCheckError(
            f"no properties: {main_name} has no boolean outputs and no"
            " --%PROPERTY pragma")
    return TypedProgram(p, main_name, envs, tuple(props))


def infer_sort(e: Expr, env: dict, nodes: dict) -> Sort:
    if isinstance(e, EBool):
        return Sort.BOOL
    if isinstance(e, EInt):
        return Sort.INT
    if isinstance(e, EReal):
        return Sort.REAL
    if isinstance(e, EId):
        if e.name not in env:
            raise TypeCheckError(f"undeclared variable {e.name}")
        return env[e.name]
    if isinstance(e, EUnary):
        s = infer_sort(e.operand, env, nodes)
        if e.op == "not":
            if s is not Sort.BOOL:
                raise TypeCheckError("'not' needs a bool operand")
            return Sort.BOOL
        if e.op == "-":
            if s is Sort.BOOL:
                raise TypeCheckError("unary '-' needs a numeric operand")
            return s
        return s  # pre
    if isinstance(e, EIte):
        if infer_sort(e.cond, env, nodes) is not Sort.BOOL:
            raise TypeCheckError("'if' condition must be bool")
        t = infer_sort(e.then, env, nodes)
        f = infer_sort(e.els, env, nodes)
        if t is not f:
            raise TypeCheckError("'if' branches must share a sort")
        return t
    if isinstance(e, ECall):
        callee = nodes.get(e.callee)
        if callee is None:
            raise UnknownNodeError(f"call to undefined node {e.callee}")
        if len(callee.outputs) != 1:
            raise TypeCheckError(
                f"call to {e.callee}: expression calls need exactly one output")
        if len(e.args) != len(callee.inputs):
            raise TypeCheckError(
                f"call to {e.callee}: expected {len(callee.inputs)} arguments,"
                f" got {len(e.args)}")
        for arg, decl in zip(e.args, callee.inputs):
            if infer_sort(arg, env, nodes) is not decl.sort:
                raise TypeCheckError(
                    f"call to {e.callee}: argument for {decl.name} has the wrong sort")
        return callee.outputs[0].sort
    # binary
    op = e.op
    ls = infer_sort(e.left, env, nodes)
    rs = infer_sort(e.right, env, nodes)
    if op == "->":
        if ls is not rs:
            raise TypeCheckError("'->' operands must share a sort")
        return ls
    if op in ("and", "or", "xor", "=>"):
        if ls is not Sort.BOOL or rs is not Sort.BOOL:
            raise TypeCheckError(f"'{op}' needs bool operands")
        return Sort.BOOL
    if op in ("=", "<>"):
        if ls is not rs:
            raise TypeCheckError(f"'{op}' operands must share a sort")
        return Sort.BOOL
    if op in ("<", "<=", ">", ">="):
        if ls is not rs or ls is Sort.BOOL:
            raise TypeCheckError(f"'{op}' needs numeric operands of one sort")
        return Sort.BOOL
    if op in ("+", "-", "*"):
        if ls is not rs or ls is Sort.BOOL:
            raise TypeCheckError(f"'{op}' needs numeric operands of one sort")
        if op == "*" and not (_const_value(e.left) is not None
                              or _const_value(e.right) is not None):
            raise TypeCheckError("'*' needs a constant factor (linear arithmetic)")
        return ls
    if op == "/":
        if ls is not Sort.REAL or rs is not Sort.REAL:
            raise TypeCheckError("'/' is defined on reals only")
        d = _const_value(e.right)
        if d is None or d == 0:
            raise TypeCheckError("'/' needs a nonzero constant divisor")
        return Sort.REAL
    if op in ("div", "mod"):
        if ls is not Sort.INT or rs is not Sort.INT:
            raise TypeCheckError(f"'{op}' is defined on ints only")
        d = _const_value(e.right)
        if d is None or d <= 0:
            raise TypeCheckError(f"'{op}' needs a positive integer constant divisor")
        return Sort.INT
    raise TypeCheckError(f"unknown operator {op!r}")


def _const_value(e: Expr):
    """Literal constant value of e, looking through unary minus; else None."""
    if isinstance(e, EInt):
        return e.value
    if isinstance(e, EReal):
        return e.value
    if isinstance(e, EUnary) and e.op == "-":
        v = _const_value(e.operand)
        return None if v is None else -v
    return None


# ---------------------------------------------------------------------------
# Inlining

class _FreshNames:
    def __init__(self, used: set[str]):
        self.used = set(used)
        self.counter = 0

    def fresh(self, hint: str) -> str:
        while True:
            self.counter += 1
            name = f"{hint}_{self.counter}"
            if name not in self.used:
                self.used.add(name)
                return name


def _call_graph_cycle(nodes: dict[str, Node], start: str) -> Optional[list[str]]:
    state: dict[str, int] = {}  # 1 = in stack, 2 = done
    stack: list[str] = []

    def visit(name: str) -> Optional[list[str]]:
        state[name] = 1
        stack.append(name)
        node = nodes.get(name)
        if node is None:
            raise UnknownNodeError(f"call to undefined node {name}")
        for callee in _callees(node):
            st = state.get(callee)
            if st == 1:
                return stack[stack.index(callee):] + [callee]
            if st is None:
                cyc = visit(callee)
                if cyc is not None:
                    return cyc
        stack.pop()
        state[name] = 2
        return None

    return visit(start)


def _callees(node: Node):
    seen = []

    def walk(e: Expr):
        if isinstance(e, ECall):
            seen.append(e.callee)
            for a in e.args:
                walk(a)
        elif isinstance(e, EUnary):
            walk(e.operand)
        elif isinstance(e, EBinary):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, EIte):
            walk(e.cond)
            walk(e.then)
            walk(e.els)

    for eqn in node.equations:
        walk(eqn.rhs)
    return seen


def _rename_expr(e: Expr, mapping: dict[str, str]) -> Expr:
    if isinstance(e, EId):
        return EId(mapping.get(e.name, e.name))
    if isinstance(e, EUnary):
        return EUnary(e.op, _rename_expr(e.operand, mapping))
    if isinstance(e, EBinary):
        return EBinary(e.op, _rename_expr(e.left, mapping), _rename_expr(e.right, mapping))
    if isinstance(e, EIte):
        return EIte(_rename_expr(e.cond, mapping), _rename_expr(e.then, mapping),
                    _rename_expr(e.els, mapping))
    if isinstance(e, ECall):
        return ECall(e.callee, tuple(_rename_expr(a, mapping) for a in e.args))
    return e


def inline(tp: TypedProgram, main: Optional[str] = None) -> TypedProgram:
    """Replace every node call below main with freshly renamed equations."""
    main_name = main or tp.main
    nodes = {n.name: n for n in tp.program.nodes}
    if main_name not in nodes:
        raise UnknownNodeError(f"main node {main_name!r} is not defined")
    cycle = _call_graph_cycle(nodes, main_name)
    if cycle is not None:
        raise NodeRecursionError(cycle)

    main_node = nodes[main_name]
    used = set()
    for n in tp.program.nodes:
        for d in n.inputs + n.outputs + n.locals:
            used.add(d.name)
    fresh = _FreshNames(used)

    new_locals: list[VarDecl] = list(main_node.locals)
    new_equations: list[Equation] = []

    def expand(e: Expr) -> Expr:
        if isinstance(e, ECall):
            callee = nodes[e.callee]
            args = [expand(a) for a in e.args]
            mapping: dict[str, str] = {}
            for decl in callee.inputs + callee.outputs + callee.locals:
                nm = fresh.fresh(f"{e.callee}_{decl.name}")
                mapping[decl.name] = nm
                new_locals.append(VarDecl(nm, decl.sort))
            for decl, arg in zip(callee.inputs, args):
                new_equations.append(Equation(mapping[decl.name], arg))
            for eqn in callee.equations:
                new_equations.append(
                    Equation(mapping[eqn.lhs], expand(_rename_expr(eqn.rhs, mapping))))
            return EId(mapping[callee.outputs[0].name])
        if isinstance(e, EUnary):
            return EUnary(e.op, expand(e.operand))
        if isinstance(e, EBinary):
            return EBinary(e.op, expand(e.left), expand(e.right))
        if isinstance(e, EIte):
            return EIte(expand(e.cond), expand(e.then), expand(e.els))
        return e

    for eqn in main_node.equations:
        new_equations.append(Equation(eqn.lhs, expand(eqn.rhs)))

    flat = Node(main_node.name, main_node.inputs, main_node.outputs,
                tuple(new_locals), tuple(new_equations))
    program = Program((flat,), tp.program.property_pragmas, tp.program.main_pragma)
    checked = typecheck(program, flat.name)
    if tp.program.property_pragmas:
        props: tuple[str, ...] = checked.properties
    else:
        props = tp.properties  # defaults resolved against the original main
    return TypedProgram(program, flat.name, checked.envs, props)


# ---------------------------------------------------------------------------
# Instantaneous dependency order

def _instant_deps(e: Expr, acc: set[str]) -> None:
    """Variables e reads at the current instant (stopping below pre)."""
    if isinstance(e, EId):
        acc.add(e.name)
    elif isinstance(e, EUnary):
        if e.op != "pre":
            _instant_deps(e.operand, acc)
    elif isinstance(e, EBinary):
        if e.op == "->":
            # both arms: the left is read at instant 0, the right afterwards
            _instant_deps(e.left, acc)
            _instant_deps(e.right, acc)
        else:
            _instant_deps(e.left, acc)
            _instant_deps(e.right, acc)
    elif isinstance(e, EIte):
        _instant_deps(e.cond, acc)
        _instant_deps(e.then, acc)
        _instant_deps(e.els, acc)
    elif isinstance(e, ECall):
        for a in e.args:
            _instant_deps(a, acc)


def instant_order(node: Node) -> tuple[str, ...]:
    """Topological order of defined variables modulo pre; raises on cycles."""
    defs = {eqn.lhs: eqn for eqn in node.equations}
    order: list[str] = []
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(v: str):
        state[v] = 1
        stack.append(v)
        deps: set[str] = set()
        _instant_deps(defs[v].rhs, deps)
        for w in sorted(deps):
            if w not in defs:
                continue  # inputs have no instantaneous dependencies
            st = state.get(w)
            if st == 1:
                raise InstantCycleError(stack[stack.index(w):] + [w])
            if st is None:
                visit(w)
        stack.pop()
        state[v] = 2
        order.append(v)

    for v in sorted(defs):
        if state.get(v) is None:
            visit(v)
    return tuple(order)


# ---------------------------------------------------------------------------
# Pipeline

def elaborate_program(p: Program, main: Optional[str] = None) -> ElaboratedProgram:
    tp = typecheck(p, main)
    flat = inline(tp)
    node = flat.program.nodes[0]
    order = instant_order(node)
    env = flat.envs[node.name]
    return ElaboratedProgram(
        node=node,
        env=dict(env),
        inputs=tuple(d.name for d in node.inputs),
        outputs=tuple(d.name for d in node.outputs),
        properties=flat.properties,
        eval_order=order,
    )


def elaborate(source: str, main: Optional[str] = None) -> ElaboratedProgram:
    return elaborate_program(parse(source), main)
