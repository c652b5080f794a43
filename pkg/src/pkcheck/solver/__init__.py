"""Bundled SMT-LIB 2 solver subprocess.

Run as ``python -m pkcheck.solver``.  Supports the slice of SMT-LIB 2 this
package emits: incremental push/pop, declarations of Bool/Int/Real constants,
assertions over linear integer/rational arithmetic with ite and div/mod by
positive constants, check-sat with model production, and get-value.

This exists because the target environment ships no SMT solver; any real
solver (z3, cvc5, ...) can be substituted via ``--solver-cmd`` / ``PK_SOLVER``.
"""
