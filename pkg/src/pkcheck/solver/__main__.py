"""SMT-LIB 2 command loop for the bundled solver."""

from __future__ import annotations

import sys
import time
from fractions import Fraction
from typing import Optional

from .. import sexp
from . import core


class Frame:
    def __init__(self):
        self.decls: dict[str, str] = {}
        self.assertions: list[sexp.SExp] = []


class Server:
    def __init__(self, out):
        self.out = out
        self.print_success = False
        self.produce_models = False
        self.timeout_ms: Optional[int] = None
        self.frames = [Frame()]
        self.model: Optional[dict] = None
        self.running = True

    # -- plumbing -------------------------------------------------------------

    def reply(self, text: str) -> None:
        self.out.write(text + "\n")
        self.out.flush()

    def ok(self) -> None:
        if self.print_success:
            self.reply("success")

    def error(self, msg: str) -> None:
        msg = msg.replace('"', "'")
        self.reply(f'(error "{msg}")')

    def all_decls(self) -> dict[str, str]:
        decls: dict[str, str] = {}
        for fr in self.frames:
            decls.update(fr.decls)
        return decls

    def all_assertions(self) -> list[sexp.SExp]:
        out = []
        for fr in self.frames:
            out.extend(fr.assertions)
        return out

    # -- commands ---------------------------------------------------------------

    def execute(self, cmd: sexp.SExp) -> None:
        if not isinstance(cmd, list) or not cmd:
            self.error("malformed command")
            return
        head = cmd[0]
        handler = getattr(self, "cmd_" + str(head).replace("-", "_"), None)
        if handler is None:
            self.error(f"unsupported command: {head}")
            return
        try:
            handler(cmd[1:])
        except (core.CompileError, sexp.SExpError) as e:
            self.error(str(e))

    def cmd_set_option(self, args) -> None:
        if len(args) != 2:
            self.error("set-option expects an option and a value")
            return
        opt, val = args
        if opt == ":print-success":
            self.print_success = val == "true"
            self.ok()
        elif opt == ":produce-models":
            self.produce_models = val == "true"
            self.ok()
        elif opt == ":timeout":
            try:
                self.timeout_ms = int(val)
            except ValueError:
                self.error("bad :timeout value")
                return
            self.ok()
        else:
            self.reply("unsupported")

    def cmd_set_logic(self, args) -> None:
        self.ok()

    def cmd_set_info(self, args) -> None:
        self.ok()

    def cmd_get_info(self, args) -> None:
        if args and args[0] == ":name":
            self.reply('(:name "pkcheck-smt")')
        else:
            self.reply("unsupported")

    def cmd_declare_fun(self, args) -> None:
        if len(args) != 3 or not isinstance(args[0], str) or not isinstance(args[1], list):
            self.error("declare-fun expects (declare-fun name (args) sort)")
            return
        name, params, sort = args
        if params:
            self.error("uninterpreted functions are not supported")
            return
        if sort not in ("Bool", "Int", "Real"):
            self.error(f"unsupported sort {sexp.to_string(sort)}")
            return
        if name in self.all_decls():
            self.error(f"symbol {name} already declared")
            return
        self.frames[-1].decls[name] = sort
        self.ok()

    def cmd_declare_const(self, args) -> None:
        if len(args) != 2:
            self.error("declare-const expects a name and a sort")
            return
        self.cmd_declare_fun([args[0], [], args[1]])

    def cmd_assert(self, args) -> None:
        if len(args) != 1:
            self.error("assert expects one term")
            return
        self._check_symbols(args[0])
        self.frames[-1].assertions.append(args[0])
        self.ok()

    def _check_symbols(self, e: sexp.SExp) -> None:
        decls = self.all_decls()
        heads = {"not", "and", "or", "=>", "xor", "ite", "=", "distinct",
                 "<", "<=", ">", ">=", "+", "-", "*", "/", "div", "mod"}

        def walk(t):
            if isinstance(t, str):
                if t in ("true", "false") or t in decls or core._parse_numeral(t):
                    return
                raise core.CompileError(f"undeclared symbol: {t}")
            if not t:
                raise core.CompileError("empty application")
            if t[0] not in heads:
                raise core.CompileError(f"unknown function: {t[0]}")
            for a in t[1:]:
                walk(a)

        walk(e)

    def cmd_push(self, args) -> None:
        n = int(args[0]) if args else 1
        for _ in range(n):
            self.frames.append(Frame())
        self.ok()

    def cmd_pop(self, args) -> None:
        n = int(args[0]) if args else 1
        if n >= len(self.frames):
            self.error("pop below assertion stack level 0")
            return
        del self.frames[len(self.frames) - n:]
        self.model = None
        self.ok()

    def cmd_check_sat(self, args) -> None:
        deadline = None
        if self.timeout_ms is not None:
            deadline = time.monotonic() + self.timeout_ms / 1000.0
        try:
            res = core.check(self.all_decls(), self.all_assertions(), deadline)
        except (core.CompileError, RecursionError) as e:
            self.error(f"check-sat failed: {e}")
            return
        self.model = res.model if res.status == "sat" else None
        self.reply(res.status)

    def cmd_get_value(self, args) -> None:
        if self.model is None:
            self.error("model is only available after a sat check-sat")
            return
        if len(args) != 1 or not isinstance(args[0], list):
            self.error("get-value expects a term list")
            return
        decls = self.all_decls()
        pairs = []
        for t in args[0]:
            if not isinstance(t, str) or t not in decls:
                self.error(f"get-value supports declared constants only: {sexp.to_string(t)}")
                return
            val = self.model.get(t)
            if val is None:
                val = {"Bool": False, "Int": 0, "Real": Fraction(0)}[decls[t]]
            if decls[t] == "Real" and isinstance(val, int):
                val = Fraction(val)
            pairs.append(f"({t} {print_value(val)})")
        self.reply("(" + " ".join(pairs) + ")")

    def cmd_get_model(self, args) -> None:
        self.error("get-model is not supported; use get-value")

    def cmd_echo(self, args) -> None:
        s = args[0] if args else '""'
        self.reply(s.strip('"'))

    def cmd_reset(self, args) -> None:
        self.frames = [Frame()]
        self.model = None
        self.timeout_ms = None
        self.ok()

    def cmd_reset_assertions(self, args) -> None:
        for fr in self.frames:
            fr.assertions.clear()
        self.model = None
        self.ok()

    def cmd_exit(self, args) -> None:
        self.ok()
        self.running = False


def print_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v) if v >= 0 else f"(- {-v})"
    num, den = v.numerator, v.denominator
    if den == 1:
        return f"{num}.0" if num >= 0 else f"(- {-num}.0)"
    s = f"(/ {abs(num)}.0 {den}.0)"
    return s if num >= 0 else f"(- {s})"


def take_complete(buf: str) -> tuple[Optional[str], str]:
    """Split off the first complete top-level s-expression, if any."""
    depth = 0
    in_str = False
    start = None
    for i, ch in enumerate(buf):
        if in_str:
            if ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "(":
            if depth == 0:
                start = i
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0 and start is not None:
                return buf[start:i + 1], buf[i + 1:]
            if depth < 0:
                return buf[:i + 1], buf[i + 1:]  # malformed; let parser complain
    return None, buf


def main() -> int:
    server = Server(sys.stdout)
    buf = ""
    while server.running:
        line = sys.stdin.readline()
        if not line:
            break
        buf += line
        while server.running:
            text, buf = take_complete(buf)
            if text is None:
                break
            try:
                cmd = sexp.parse_one(text)
            except sexp.SExpError as e:
                server.error(str(e))
                continue
            server.execute(cmd)
    return 0


if __name__ == "__main__":
    sys.exit(main())
