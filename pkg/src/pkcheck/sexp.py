"""Minimal s-expression reader/printer for the SMT-LIB 2 wire format."""

from __future__ import annotations

from typing import Union

SExp = Union[str, list]


class SExpError(Exception):
    pass


def tokenize(text: str):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield c
            i += 1
        elif c == '"':
            j = i + 1
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':  # escaped quote
                        j += 2
                        continue
                    break
                j += 1
            if j >= n:
                raise SExpError("unterminated string literal")
            yield text[i:j + 1]
            i = j + 1
        elif c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SExpError("unterminated quoted symbol")
            yield text[i:j + 1]
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();\"|":
                j += 1
            yield text[i:j]
            i = j


def parse_all(text: str) -> list[SExp]:
    """Parse every complete s-expression in ``text``."""
    out: list[SExp] = []
    stack: list[list] = []
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise SExpError("unbalanced ')'")
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                out.append(done)
        else:
            if stack:
                stack[-1].append(tok)
            else:
                out.append(tok)
    if stack:
        raise SExpError("unbalanced '('")
    return out


def parse_one(text: str) -> SExp:
    exprs = parse_all(text)
    if len(exprs) != 1:
        raise SExpError(f"expected one s-expression, got {len(exprs)}")
    return exprs[0]


def to_string(e: SExp) -> str:
    if isinstance(e, str):
        return e
    return "(" + " ".join(to_string(x) for x in e) + ")"


def balanced(text: str) -> bool:
    """True once ``text`` holds at least one complete top-level s-expression."""
    depth = 0
    seen = False
    try:
        for tok in tokenize(text):
            if tok == "(":
                depth += 1
                seen = True
            elif tok == ")":
                depth -= 1
                if depth < 0:
                    return True  # malformed; let the parser report it
            else:
                if depth == 0:
                    return True
            if seen and depth == 0:
                return True
    except SExpError:
        return False
    return False
