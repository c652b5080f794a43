"""Solver sessions over an external SMT-LIB 2 subprocess.

Each session owns one solver process and keeps a mirror of the asserted
formula set and declared indexed variables.  Entailment checks are scoped
(push / assert negation / check / extract model / pop) so the asserted set is
left untouched.  Indexed variables travel on the wire as ``name$step``.
"""

from __future__ import annotations

import os
import select
import shlex
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

from . import sexp
from .logic import (App, Assignment, Const, FuncSymbol, IVar, Sort, Term, Var,
                    evaluate, free_indexed_vars, subterms,
                    NOT, AND, OR, IMPLIES, IFF, ITE, ADD, SUB, NEG, MUL, IDIV,
                    MOD, LT, LE, EQ, GE, GT)


class SolverError(Exception):
    pass


class SpawnError(SolverError):
    pass


class HandshakeError(SolverError):
    pass


class ProtocolError(SolverError):
    pass


class ModelParseError(SolverError):
    pass


class ModelValidityError(SolverError):
    pass


@dataclass(frozen=True)
class Entailed:
    pass


@dataclass(frozen=True)
class NotEntailed:
    model: dict


@dataclass(frozen=True)
class Unknown:
    reason: str


CheckResult = Union[Entailed, NotEntailed, Unknown]


@dataclass
class SessionStats:
    checks: int = 0
    asserts: int = 0
    time_total: float = 0.0


@dataclass
class SolverConfig:
    cmd: Sequence[str]
    logic: Optional[str] = None
    per_check_timeout: Optional[float] = None  # seconds
    validate_models: bool = False
    dump_path: Optional[str] = None


def default_solver_command() -> list[str]:
    """PK_SOLVER, then a solver on PATH, then the bundled subprocess."""
    env = os.environ.get("PK_SOLVER")
    if env:
        return shlex.split(env)
    for name, extra in (("z3", ["-in"]), ("cvc5", ["--incremental", "--produce-models"]),
                        ("cvc4", ["--incremental", "--produce-models"]),
                        ("yices-smt2", ["--incremental"])):
        path = shutil.which(name)
        if path:
            return [path] + extra
    return [sys.executable, "-m", "pkcheck.solver"]


_SMT_OP = {ADD: "+", SUB: "-", MUL: "*", IDIV: "div", MOD: "mod",
           LT: "<", LE: "<=", EQ: "=", GE: ">=", GT: ">",
           NOT: "not", AND: "and", OR: "or", IMPLIES: "=>", IFF: "=", ITE: "ite"}

_SMT_SORT = {Sort.BOOL: "Bool", Sort.INT: "Int", Sort.REAL: "Real"}


def wire_name(name: str, step: int) -> str:
    return f"{name}${step}"


def term_to_smt(t: Term) -> str:
    """SMT-LIB text for a step-indexed term."""
    if isinstance(t, Const):
        v = t.value
        if t.sort is Sort.BOOL:
            return "true" if v else "false"
        if t.sort is Sort.INT:
            return str(v) if v >= 0 else f"(- {-v})"
        q = Fraction(v)
        num, den = abs(q.numerator), q.denominator
        body = f"{num}.0" if den == 1 else f"(/ {num}.0 {den}.0)"
        return body if q >= 0 else f"(- {body})"
    if isinstance(t, IVar):
        return wire_name(t.name, t.step)
    if isinstance(t, Var):
        raise ProtocolError(f"un-instantiated state variable on the wire: {t.name}")
    op = t.op
    if isinstance(op, FuncSymbol):
        head = op.name
    elif op == NEG:
        head = "-"
    else:
        head = _SMT_OP[op]
    return "(" + head + " " + " ".join(term_to_smt(a) for a in t.args) + ")"


def parse_model_value(e: sexp.SExp, sort: Sort):
    """Exact parse of a model value; raises ModelParseError on unknown forms."""
    v = _parse_value(e)
    if sort is Sort.BOOL:
        if isinstance(v, bool):
            return v
    elif sort is Sort.INT:
        if isinstance(v, Fraction) and v.denominator == 1:
            return int(v)
    else:
        if isinstance(v, Fraction):
            return v
    raise ModelParseError(f"value {sexp.to_string(e)} does not fit sort {sort}")


def _parse_value(e: sexp.SExp):
    if isinstance(e, str):
        if e == "true":
            return True
        if e == "false":
            return False
        try:
            if "." in e:
                return Fraction(e)
            return Fraction(int(e))
        except ValueError:
            raise ModelParseError(f"unparseable model value: {e}")
    if len(e) == 2 and e[0] == "-":
        return -_parse_value(e[1])
    if len(e) == 3 and e[0] == "/":
        num, den = _parse_value(e[1]), _parse_value(e[2])
        if den == 0:
            raise ModelParseError("division by zero in model value")
        return Fraction(num) / Fraction(den)
    raise ModelParseError(f"unparseable model value: {sexp.to_string(e)}")


class SolverSession:
    """Single-owner session; opened via :func:`open_session`."""

    def __init__(self, proc: subprocess.Popen, config: SolverConfig, dump_file):
        self.proc = proc
        self.config = config
        self.stats = SessionStats()
        self.asserted: list[Term] = []
        self.declared: dict[tuple[str, int], Sort] = {}
        self.declared_funcs: dict[str, FuncSymbol] = {}
        self._dump = dump_file
        self._alive = True

    # -- wire -------------------------------------------------------------------

    def _send(self, line: str) -> None:
        if self._dump is not None:
            self._dump.write(line + "\n")
            self._dump.flush()
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            self._alive = False
            raise ProtocolError(f"solver process lost: {e}")

    def _read_response(self, deadline: Optional[float]) -> sexp.SExp:
        buf = ""
        while True:
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self.kill()
                    raise ProtocolError("solver response deadline exceeded")
                ready, _, _ = select.select([self.proc.stdout], [], [], remaining)
                if not ready:
                    continue
            line = self.proc.stdout.readline()
            if line == "":
                self._alive = False
                raise ProtocolError("solver closed its output stream")
            if self._dump is not None:
                self._dump.write("; < " + line)
            buf += line
            if sexp.balanced(buf):
                try:
                    return sexp.parse_one(buf.strip())
                except sexp.SExpError:
                    continue  # more lines belong to this response

    def _command(self, line: str, deadline: Optional[float] = None) -> sexp.SExp:
        self._send(line)
        resp = self._read_response(deadline)
        if isinstance(resp, list) and resp and resp[0] == "error":
            raise ProtocolError(f"solver error for {line!r}: {sexp.to_string(resp)}")
        return resp

    def _expect_success(self, line: str) -> None:
        resp = self._command(line)
        if resp != "success":
            raise ProtocolError(f"expected success for {line!r}, got {sexp.to_string(resp)}")

    # -- declarations -------------------------------------------------------------

    def _declare_new(self, f: Term) -> None:
        for t in subterms(f):
            if isinstance(t, IVar):
                key = (t.name, t.step)
                if key not in self.declared:
                    self.declared[key] = t.sort
                    self._expect_success(
                        f"(declare-fun {wire_name(*key)} () {_SMT_SORT[t.sort]})")
            elif isinstance(t, App) and isinstance(t.op, FuncSymbol):
                fs = t.op
                if fs.name not in self.declared_funcs:
                    self.declared_funcs[fs.name] = fs
                    argstr = " ".join(_SMT_SORT[s] for s in fs.arg_sorts)
                    self._expect_success(
                        f"(declare-fun {fs.name} ({argstr}) {_SMT_SORT[fs.sort]})")

    # -- public operations ----------------------------------------------------------

    def assert_formula(self, f: Term) -> None:
        if f.sort is not Sort.BOOL:
            raise ProtocolError("asserted term must be boolean")
        self._declare_new(f)
        self._expect_success(f"(assert {term_to_smt(f)})")
        self.asserted.append(f)
        self.stats.asserts += 1

    def entailed(self, f: Term) -> CheckResult:
        """Entailed iff asserted |= f; NotEntailed carries a full model."""
        self._declare_new(f)
        start = time.monotonic()
        self.stats.checks += 1
        deadline = None
        if self.config.per_check_timeout is not None:
            deadline = start + max(self.config.per_check_timeout * 10, 10.0)
        self._expect_success("(push 1)")
        try:
            self._expect_success(f"(assert (not {term_to_smt(f)}))")
            answer = self._command("(check-sat)", deadline)
            if answer == "unsat":
                result: CheckResult = Entailed()
            elif answer == "unknown":
                result = Unknown("solver-unknown")
            elif answer == "sat":
                result = NotEntailed(self._get_model(deadline))
            else:
                raise ProtocolError(f"unexpected check-sat answer {sexp.to_string(answer)}")
        finally:
            if self._alive:
                self._expect_success("(pop 1)")
            self.stats.time_total += time.monotonic() - start
        if isinstance(result, NotEntailed) and self.config.validate_models:
            self._validate(result.model, f)
        return result

    def _get_model(self, deadline) -> dict:
        if not self.declared:
            return {}
        keys = sorted(self.declared)
        names = " ".join(wire_name(*k) for k in keys)
        resp = self._command(f"(get-value ({names}))", deadline)
        if not isinstance(resp, list):
            raise ModelParseError(f"malformed get-value response: {resp}")
        by_name = {}
        for pair in resp:
            if not isinstance(pair, list) or len(pair) != 2:
                raise ModelParseError(f"malformed model pair: {sexp.to_string(pair)}")
            by_name[pair[0]] = pair[1]
        model = {}
        for key in keys:
            name = wire_name(*key)
            if name not in by_name:
                raise ModelParseError(f"model lacks a value for {name}")
            model[key] = parse_model_value(by_name[name], self.declared[key])
        return model

    def _validate(self, model: Assignment, f: Term) -> None:
        for a in self.asserted:
            if evaluate(a, model) is not True:
                raise ModelValidityError(f"model does not satisfy assertion {term_to_smt(a)}")
        if evaluate(f, model) is not False:
            raise ModelValidityError("model does not falsify the checked formula")

    def reset(self) -> None:
        """Empty the asserted set; declarations are re-issued."""
        self._expect_success("(pop 1)")
        self._expect_success("(push 1)")
        self.asserted.clear()
        for key, sort in self.declared.items():
            self._expect_success(f"(declare-fun {wire_name(*key)} () {_SMT_SORT[sort]})")
        for fs in self.declared_funcs.values():
            argstr = " ".join(_SMT_SORT[s] for s in fs.arg_sorts)
            self._expect_success(f"(declare-fun {fs.name} ({argstr}) {_SMT_SORT[fs.sort]})")

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self._send("(exit)")
            except ProtocolError:
                pass
            try:
                self.proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self.kill()
        if self._dump is not None:
            self._dump.close()
            self._dump = None

    def kill(self) -> None:
        self._alive = False
        if self.proc.poll() is None:
            self.proc.kill()
            try:
                self.proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                pass

    @property
    def alive(self) -> bool:
        return self._alive and self.proc.poll() is None


_session_counter = 0


def open_session(cmd: Optional[Sequence[str]] = None,
                 config: Optional[SolverConfig] = None) -> SolverSession:
    """Spawn a solver, enable incremental mode and model production."""
    global _session_counter
    if config is None:
        config = SolverConfig(cmd=cmd or default_solver_command())
    elif cmd is not None:
        config = SolverConfig(cmd=cmd, logic=config.logic,
                              per_check_timeout=config.per_check_timeout,
                              validate_models=config.validate_models,
                              dump_path=config.dump_path)
    argv = list(config.cmd) if not isinstance(config.cmd, str) else shlex.split(config.cmd)
    try:
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                stderr=subprocess.DEVNULL, text=True)
    except (FileNotFoundError, PermissionError, OSError) as e:
        raise SpawnError(f"cannot launch solver {argv!r}: {e}")
    dump_file = None
    if config.dump_path:
        os.makedirs(config.dump_path, exist_ok=True)
        _session_counter += 1
        fname = os.path.join(config.dump_path,
                             f"session_{os.getpid()}_{_session_counter}.smt2")
        dump_file = open(fname, "w")
    session = SolverSession(proc, config, dump_file)
    try:
        session._expect_success("(set-option :print-success true)")
        session._expect_success("(set-option :produce-models true)")
        if config.logic:
            session._expect_success(f"(set-logic {config.logic})")
        if config.per_check_timeout is not None:
            ms = max(int(config.per_check_timeout * 1000), 1)
            try:
                session._command(f"(set-option :timeout {ms})")
            except ProtocolError:
                pass  # solver-side timeouts are best-effort
        session._expect_success("(push 1)")
    except ProtocolError as e:
        session.kill()
        raise HandshakeError(f"solver rejected configuration: {e}")
    return session
