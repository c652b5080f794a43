"""Syntax of the idealized Lustre subset: AST, lexer, parser, printer.

Grammar sketch (see README for the full table):

    program  := node+
    node     := 'node' ID '(' params? ')' 'returns' '(' params ')' ';'
                ('var' (group ';')+)? 'let' (ID '=' expr ';')* 'tel' ';'?
    params   := group (';' group)*      group := ID (',' ID)* ':' type
    type     := 'int' | 'bool' | 'real'

Expression precedence, loosest first: ``->`` (right), ``=>`` (right),
``or``/``xor``, ``and``, comparisons (non-associative), ``+ -``,
``* / div mod``, then unary ``not`` / ``-`` / ``pre``, then primaries
(literals, identifiers, calls, parentheses, ``if/then/else``).

Comments run from ``--`` to end of line.  Pragma comments ``--%PROPERTY x;``
and ``--%MAIN x;`` on their own line are collected into the Program.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .logic import Sort


class ParseError(Exception):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class EBool:
    value: bool


@dataclass(frozen=True)
class EInt:
    value: int


@dataclass(frozen=True)
class EReal:
    value: Fraction


@dataclass(frozen=True)
class EId:
    name: str


@dataclass(frozen=True)
class EUnary:
    op: str  # 'not' | '-' | 'pre'
    operand: "Expr"


@dataclass(frozen=True)
class EBinary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class EIte:
    cond: "Expr"
    then: "Expr"
    els: "Expr"


@dataclass(frozen=True)
class ECall:
    callee: str
    args: tuple


Expr = Union[EBool, EInt, EReal, EId, EUnary, EBinary, EIte, ECall]


@dataclass(frozen=True)
class VarDecl:
    name: str
    sort: Sort


@dataclass(frozen=True)
class Equation:
    lhs: str
    rhs: Expr


@dataclass(frozen=True)
class Node:
    name: str
    inputs: tuple[VarDecl, ...]
    outputs: tuple[VarDecl, ...]
    locals: tuple[VarDecl, ...]
    equations: tuple[Equation, ...]


@dataclass(frozen=True)
class Program:
    nodes: tuple[Node, ...]
    property_pragmas: tuple[str, ...] = ()
    main_pragma: Optional[str] = None


# ---------------------------------------------------------------------------
# Lexer

KEYWORDS = {"node", "returns", "var", "let", "tel", "if", "then", "else",
            "pre", "true", "false", "and", "or", "not", "xor",
            "int", "bool", "real", "div", "mod"}

_PUNCT = ["<=", ">=", "<>", "->", "=>", "+", "-", "*", "/", "=", "<", ">",
          "(", ")", ":", ";", ","]


@dataclass(frozen=True)
class Token:
    kind: str  # 'id' | 'int' | 'real' | keyword or punctuation literal | 'eof'
    text: str
    line: int
    col: int


def lex(source: str) -> tuple[list[Token], list[str], Optional[str]]:
    """Tokens plus collected PROPERTY pragmas and the MAIN pragma."""
    toks: list[Token] = []
    props: list[str] = []
    main: Optional[str] = None
    line, col = 1, 1
    i, n = 0, len(source)

    def err(msg: str):
        raise ParseError(line, col, msg)

    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("--", i):
            j = source.find("\n", i)
            if j < 0:
                j = n
            comment = source[i:j]
            if comment.startswith("--%"):
                body = comment[3:].strip()
                if body.startswith("PROPERTY"):
                    ident = body[len("PROPERTY"):].strip().rstrip(";").strip()
                    if not _is_ident(ident):
                        err(f"malformed PROPERTY pragma: {comment!r}")
                    props.append(ident)
                elif body.startswith("MAIN"):
                    ident = body[len("MAIN"):].strip().rstrip(";").strip()
                    if not _is_ident(ident):
                        err(f"malformed MAIN pragma: {comment!r}")
                    main = ident
                else:
                    err(f"unknown pragma: {comment!r}")
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
                toks.append(Token("real", source[i:j], line, col))
            else:
                toks.append(Token("int", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            toks.append(Token(word if word in KEYWORDS else "id", word, line, col))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if source.startswith(p, i):
                toks.append(Token(p, p, line, col))
                col += len(p)
                i += len(p)
                break
        else:
            err(f"unexpected character {c!r}")
    toks.append(Token("eof", "", line, col))
    return toks, props, main


def _is_ident(s: str) -> bool:
    return bool(s) and (s[0].isalpha() or s[0] == "_") \
        and all(ch.isalnum() or ch == "_" for ch in s) and s not in KEYWORDS


# ---------------------------------------------------------------------------
# Parser

_TYPES = {"int": Sort.INT, "bool": Sort.BOOL, "real": Sort.REAL}


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, msg: str):
        t = self.peek()
        raise ParseError(t.line, t.col, msg)

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            self.error(f"expected {kind!r}, found {t.text!r}")
        return self.advance()

    def accept(self, kind: str) -> Optional[Token]:
        if self.peek().kind == kind:
            return self.advance()
        return None

    # -- structure -------------------------------------------------------------

    def program(self) -> tuple[Node, ...]:
        nodes = []
        while self.peek().kind != "eof":
            nodes.append(self.node())
        if not nodes:
            self.error("a program needs at least one node")
        return tuple(nodes)

    def node(self) -> Node:
        self.expect("node")
        name = self.expect("id").text
        self.expect("(")
        inputs = self.params_until(")")
        self.expect(")")
        self.expect("returns")
        self.expect("(")
        outputs = self.params_until(")")
        self.expect(")")
        self.expect(";")
        locals_: tuple[VarDecl, ...] = ()
        if self.accept("var"):
            groups = []
            while self.peek().kind == "id":
                groups.extend(self.param_group())
                self.expect(";")
            locals_ = tuple(groups)
        self.expect("let")
        equations = []
        while self.peek().kind != "tel":
            lhs = self.expect("id").text
            self.expect("=")
            rhs = self.expr()
            self.expect(";")
            equations.append(Equation(lhs, rhs))
        self.expect("tel")
        self.accept(";")
        return Node(name, inputs, outputs, locals_, tuple(equations))

    def params_until(self, closer: str) -> tuple[VarDecl, ...]:
        if self.peek().kind == closer:
            return ()
        decls = list(self.param_group())
        while self.accept(";"):
            decls.extend(self.param_group())
        return tuple(decls)

    def param_group(self) -> list[VarDecl]:
        names = [self.expect("id").text]
        while self.accept(","):
            names.append(self.expect("id").text)
        self.expect(":")
        t = self.peek()
        if t.kind not in _TYPES:
            self.error(f"expected a type, found {t.text!r}")
        self.advance()
        return [VarDecl(nm, _TYPES[t.kind]) for nm in names]

    # -- expressions (precedence climbing) ----------------------------------------

    def expr(self) -> Expr:
        return self.arrow()

    def arrow(self) -> Expr:
        left = self.implication()
        if self.accept("->"):
            return EBinary("->", left, self.arrow())
        return left

    def implication(self) -> Expr:
        left = self.disjunction()
        if self.accept("=>"):
            return EBinary("=>", left, self.implication())
        return left

    def disjunction(self) -> Expr:
        e = self.conjunction()
        while self.peek().kind in ("or", "xor"):
            op = self.advance().kind
            e = EBinary(op, e, self.conjunction())
        return e

    def conjunction(self) -> Expr:
        e = self.comparison()
        while self.accept("and"):
            e = EBinary("and", e, self.comparison())
        return e

    def comparison(self) -> Expr:
        e = self.additive()
        if self.peek().kind in ("=", "<>", "<", "<=", ">", ">="):
            op = self.advance().kind
            return EBinary(op, e, self.additive())
        return e

    def additive(self) -> Expr:
        e = self.multiplicative()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            e = EBinary(op, e, self.multiplicative())
        return e

    def multiplicative(self) -> Expr:
        e = self.unary()
        while self.peek().kind in ("*", "/", "div", "mod"):
            op = self.advance().kind
            e = EBinary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        t = self.peek()
        if t.kind == "not":
            self.advance()
            return EUnary("not", self.unary())
        if t.kind == "-":
            self.advance()
            return EUnary("-", self.unary())
        if t.kind == "pre":
            self.advance()
            return EUnary("pre", self.unary())
        return self.primary()

    def primary(self) -> Expr:
        t = self.peek()
        if t.kind == "int":
            self.advance()
            return EInt(int(t.text))
        if t.kind == "real":
            self.advance()
            return EReal(Fraction(t.text))
        if t.kind == "true":
            self.advance()
            return EBool(True)
        if t.kind == "false":
            self.advance()
            return EBool(False)
        if t.kind == "if":
            self.advance()
            cond = self.expr()
            self.expect("then")
            then = self.expr()
            self.expect("else")
            return EIte(cond, then, self.expr())
        if t.kind == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id":
            self.advance()
            if self.accept("("):
                args = []
                if self.peek().kind != ")":
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                self.expect(")")
                return ECall(t.text, tuple(args))
            return EId(t.text)
        self.error(f"unexpected token {t.text!r}")


def parse(source: str) -> Program:
    """Parse Lustre source text; raises ParseError with position info."""
    toks, props, main = lex(source)
    parser = _Parser(toks)
    nodes = parser.program()
    return Program(nodes, tuple(props), main)


# ---------------------------------------------------------------------------
# Printer (parse . pp == identity on parsed programs)

_BIN_PREC = {"->": 1, "=>": 2, "or": 3, "xor": 3, "and": 4,
             "=": 5, "<>": 5, "<": 5, "<=": 5, ">": 5, ">=": 5,
             "+": 6, "-": 6, "*": 7, "/": 7, "div": 7, "mod": 7}
_RIGHT_ASSOC = {"->", "=>"}
_NON_ASSOC = {"=", "<>", "<", "<=", ">", ">="}
_UNARY_PREC = 8


def real_literal(q: Fraction) -> str:
    """Decimal rendering; exact whenever the denominator divides a power of 10."""
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"({q.numerator}.0 / {q.denominator}.0)"
    k = max(twos, fives, 1)
    scaled = q.numerator * 10 ** k // q.denominator
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(k + 1, "0")
    return f"{sign}{digits[:-k]}.{digits[-k:]}"


def pp_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, EBool):
        return "true" if e.value else "false"
    if isinstance(e, EInt):
        return str(e.value)
    if isinstance(e, EReal):
        return real_literal(e.value)
    if isinstance(e, EId):
        return e.name
    if isinstance(e, ECall):
        return f"{e.callee}({', '.join(pp_expr(a) for a in e.args)})"
    if isinstance(e, EUnary):
        op = e.op if e.op == "-" else e.op + " "
        s = f"{op}{pp_expr(e.operand, _UNARY_PREC)}"
        return f"({s})" if prec > _UNARY_PREC else s
    if isinstance(e, EIte):
        s = (f"if {pp_expr(e.cond)} then {pp_expr(e.then)}"
             f" else {pp_expr(e.els)}")
        return f"({s})" if prec > 0 else s
    p = _BIN_PREC[e.op]
    if e.op in _RIGHT_ASSOC:
        lp, rp = p + 1, p
    elif e.op in _NON_ASSOC:
        lp = rp = p + 1
    else:
        lp, rp = p, p + 1
    s = f"{pp_expr(e.left, lp)} {e.op} {pp_expr(e.right, rp)}"
    return f"({s})" if p < prec else s


def _pp_decls(decls: tuple[VarDecl, ...]) -> str:
    return "; ".join(f"{d.name}: {d.sort}" for d in decls)


def pp_program(p: Program) -> str:
    out = []
    if p.main_pragma:
        out.append(f"--%MAIN {p.main_pragma};")
    for prop in p.property_pragmas:
        out.append(f"--%PROPERTY {prop};")
    for node in p.nodes:
        out.append(f"node {node.name}({_pp_decls(node.inputs)})"
                   f" returns ({_pp_decls(node.outputs)});")
        if node.locals:
            out.append(f"var {_pp_decls(node.locals)};")
        out.append("let")
        for eqn in node.equations:
            out.append(f"  {eqn.lhs} = {pp_expr(eqn.rhs)};")
        out.append("tel;")
        out.append("")
    return "\n".join(out)
