"""Template-based candidate invariants and the two discovery procedures.

Candidates are all ordered, non-reflexive template instances over the
harvested term pool: ``s <= t`` over int terms and ``s => t`` over bool
terms.  Version A filters the whole conjunction against reachable
counterexamples until a fixpoint, proves the survivors k-inductive, and
sends one message.  Version B interleaves the two phases per k and sends
each k's newly proved conjuncts as soon as they are known, so cheaper
invariants arrive first.

Both phase-2 loops re-assert the *current* surviving set as the induction
hypothesis whenever a pass weakened it and re-check until a pass is clean;
this guarantees every emitted conjunct is genuinely invariant even when the
one-shot hypothesis would have leaned on a filtered-out conjunct.
"""

from __future__ import annotations

import queue
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .encoder import TermPool, TransitionSystem
from .logic import (Assignment, Sort, Term, conj, evaluate, free_indexed_vars,
                    implies, instantiate_state, instantiate_trans, le, pp_term)
from .smt import Entailed, NotEntailed, SolverSession, Unknown


@dataclass(frozen=True)
class Template:
    """Binary relation schema over one sort; instances are state formulas."""

    name: str
    sort: Sort
    make: Callable[[Term, Term], Term]


INT_LEQ = Template("int-leq", Sort.INT, le)
BOOL_IMP = Template("bool-imp", Sort.BOOL, implies)
TEMPLATES = {t.name: t for t in (INT_LEQ, BOOL_IMP)}


@dataclass(frozen=True)
class Candidate:
    cid: int
    formula: Term


class CandidateSet:
    """Ordered conjunction with stable ids, alive flags and emission bookkeeping."""

    def __init__(self, candidates: list[Candidate]):
        self.members = list(candidates)
        self.alive: set[int] = {c.cid for c in candidates}
        self.emitted_ids: set[int] = set()

    def __len__(self) -> int:
        return len(self.members)

    def alive_candidates(self) -> list[Candidate]:
        return [c for c in self.members if c.cid in self.alive]

    def conjunction_at(self, step: int) -> Term:
        return conj(instantiate_state(c.formula, step) for c in self.alive_candidates())

    def filter_with(self, a: Assignment, at_step: int) -> int:
        """Kill alive conjuncts falsified by ``a`` at ``at_step``; Undefined keeps."""
        killed = 0
        for c in self.alive_candidates():
            if evaluate(instantiate_state(c.formula, at_step), a) is False:
                self.alive.discard(c.cid)
                killed += 1
        return killed

    def copy(self) -> "CandidateSet":
        dup = CandidateSet(self.members)
        dup.alive = set(self.alive)
        dup.emitted_ids = self.emitted_ids  # shared bookkeeping by design
        return dup


def generate_candidates(pool: TermPool,
                        templates: tuple[str, ...] = ("int-leq", "bool-imp")
                        ) -> CandidateSet:
    """All ordered pairs (s, t) with s != t structurally, in pool order."""
    out: list[Candidate] = []
    cid = 0
    for name in templates:
        template = TEMPLATES[name]
        terms = pool.int_terms if template.sort is Sort.INT else pool.bool_terms
        for s in terms:
            for t in terms:
                if s == t:
                    continue
                out.append(Candidate(cid, template.make(s, t)))
                cid += 1
    return CandidateSet(out)


def project(a: Assignment, f: Term) -> dict:
    """Restriction of ``a`` to the indexed variables of ``f``."""
    keep = free_indexed_vars(f)
    return {k: v for k, v in a.items() if k in keep}


# ---------------------------------------------------------------------------
# Worker procedures

@dataclass
class InvgenStats:
    emissions: list = field(default_factory=list)  # (proved_at_k, ids tuple)
    emitted_total: int = 0
    checks: int = 0
    aborted: bool = False
    note: str = ""


class _Stopped(Exception):
    pass


class _Aborted(Exception):
    pass


class _InvgenRun:
    """Shared machinery for the two procedure versions."""

    def __init__(self, ts: TransitionSystem, cset: CandidateSet, inbox, outbox,
                 opts, open_session: Callable[[], SolverSession],
                 stats: InvgenStats, make_m3, is_stop, dump=None):
        self.ts = ts
        self.cset = cset
        self.inbox = inbox
        self.outbox = outbox
        self.opts = opts
        self.stats = stats
        self.make_m3 = make_m3
        self.is_stop = is_stop
        self.dump = dump
        self.base = open_session()
        self.ind = open_session()
        self.deadline = getattr(opts, "deadline", None)

    def close(self) -> None:
        self.base.close()
        self.ind.close()

    def poll_stop(self) -> None:
        """M4 (or an orchestrator stop) is honored between solver checks only."""
        while True:
            try:
                msg = self.inbox.get_nowait()
            except queue.Empty:
                return
            if self.is_stop(msg):
                raise _Stopped()

    def check(self, session: SolverSession, f: Term):
        self.poll_stop()
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Stopped()
        self.stats.checks += 1
        return session.entailed(f)

    def assert_chain_step(self, session: SolverSession, k: int) -> None:
        if k == 0:
            session.assert_formula(instantiate_state(self.ts.init_formula(), 0))
        else:
            session.assert_formula(instantiate_trans(self.ts.trans_formula(), k - 1))

    def filter_until_entailed(self, session: SolverSession, cset: CandidateSet,
                              step: int, phase: int) -> bool:
        """Weaken ``cset`` until its conjunction at ``step`` is entailed.

        Returns True when any conjunct was killed.  Phase 1 treats Unknown as
        no-counterexample; phase 2 retries once with a longer per-check
        timeout and then aborts the generator.
        """
        bound = len(cset.alive) + 8
        changed = False
        retried = False
        for _ in range(bound):
            if not cset.alive:
                return changed
            f = cset.conjunction_at(step)
            result = self.check(session, f)
            if isinstance(result, Entailed):
                return changed
            if isinstance(result, Unknown):
                if phase == 1:
                    return changed
                if not retried:
                    retried = True
                    old = session.config.per_check_timeout
                    if old is not None:
                        session.config.per_check_timeout = old * 4
                    continue
                raise _Aborted("inductive-side check unknown twice")
            cex = project(result.model, f)
            killed = cset.filter_with(cex, step)
            if killed:
                changed = True
        raise _Aborted(f"filter loop stuck at step {step} (phase {phase})")

    def emit(self, candidates: list[Candidate], proved_at_k: int) -> None:
        ids = tuple(c.cid for c in candidates)
        formulas = tuple(c.formula for c in candidates)
        self.outbox.put(self.make_m3(formulas, proved_at_k, ids))
        self.stats.emissions.append((proved_at_k, ids))
        self.stats.emitted_total += len(ids)
        self.cset.emitted_ids.update(ids)
        if self.dump is not None:
            for c in candidates:
                self.dump.write(f"k={proved_at_k} id={c.cid} {pp_term(c.formula)}\n")
            self.dump.flush()

    def abort_empty(self, note: str) -> None:
        self.stats.aborted = True
        self.stats.note = note
        self.outbox.put(self.make_m3((), 0, ()))


def invgen_version_a(ts, cset, inbox, outbox, opts, open_session, stats,
                     make_m3, is_stop, dump=None) -> None:
    """Non-incremental generator: one conjunctive invariant at the very end."""
    run = _InvgenRun(ts, cset, inbox, outbox, opts, open_session, stats,
                     make_m3, is_stop, dump)
    try:
        k = -1
        while True:  # phase 1: strip candidates with reachable counterexamples
            k += 1
            run.assert_chain_step(run.base, k)
            if not run.filter_until_entailed(run.base, cset, k, phase=1):
                break
        while True:  # phase 2: prove the survivors k-inductive (guarded)
            run.ind.reset()
            for i in range(1, k + 2):
                run.ind.assert_formula(instantiate_trans(ts.trans_formula(), i - 1))
            for i in range(k + 1):
                run.ind.assert_formula(cset.conjunction_at(i))
            if not run.filter_until_entailed(run.ind, cset, k + 1, phase=2):
                break
        run.emit(cset.alive_candidates(), k)
    except _Stopped:
        pass
    except _Aborted as e:
        run.abort_empty(str(e))
    finally:
        run.close()


def invgen_version_b(ts, cset, inbox, outbox, opts, open_session, stats,
                     make_m3, is_stop, dump=None) -> None:
    """Incremental generator: k-inductive conjuncts are sent as soon as proved."""
    run = _InvgenRun(ts, cset, inbox, outbox, opts, open_session, stats,
                     make_m3, is_stop, dump)
    delta = getattr(opts, "inv_delta", True)
    try:
        k = -1
        while True:
            k += 1
            run.assert_chain_step(run.base, k)
            run.filter_until_entailed(run.base, cset, k, phase=1)
            working = cset.copy()
            changed = False
            while True:
                run.ind.reset()
                for i in range(1, k + 2):
                    run.ind.assert_formula(instantiate_trans(ts.trans_formula(), i - 1))
                for i in range(k + 1):
                    run.ind.assert_formula(working.conjunction_at(i))
                if not run.filter_until_entailed(run.ind, working, k + 1, phase=2):
                    break
                changed = True
            proved = working.alive_candidates()
            if delta:
                payload = [c for c in proved if c.cid not in cset.emitted_ids]
            else:
                payload = proved
            if payload:
                run.emit(payload, k)
            if not changed:
                return
    except _Stopped:
        pass
    except _Aborted as e:
        run.abort_empty(str(e))
    finally:
        run.close()
