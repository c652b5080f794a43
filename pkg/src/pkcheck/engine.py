"""Parallel k-induction engine: base and step workers, message protocol,
path compression, trace extraction/validation, and the three-mode
orchestrator.

Workers share nothing: each owns its solver subprocess and communicates over
unbounded FIFO queues with non-blocking sends and receives, polled between
solver checks.  The message vocabulary is fixed: M1 (step proved at k, step
to base), M2 (base terminated, base to step), M3 (invariants, generator to
step), M4 (stop the generator, base to generator).  The orchestrator may
additionally inject Stop on every queue when its global deadline passes.
"""

from __future__ import annotations

import enum
import queue
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from types import SimpleNamespace
from typing import Optional, Union

from . import invgen as invgen_mod
from .encoder import TransitionSystem, harvest_terms
from .logic import (Sort, Term, Value, conj, eq, evaluate, instantiate_state,
                    instantiate_trans, lnot, IVar)
from .smt import (Entailed, NotEntailed, SolverConfig, SolverError,
                  SolverSession, Unknown as SolverUnknown,
                  default_solver_command, open_session)


class Mode(enum.Enum):
    K_INDUCT = "k-induct"
    NO_INC_INVARIANT = "no-inc-inv"
    INC_INVARIANT = "inc-inv"


# ---------------------------------------------------------------------------
# Messages

@dataclass(frozen=True)
class M1StepProved:
    k: int


@dataclass(frozen=True)
class M2BaseTerminated:
    kind: str  # 'valid' | 'invalid' | 'unknown'


@dataclass(frozen=True)
class M3Invariants:
    formulas: tuple
    proved_at_k: int
    ids: tuple = ()


@dataclass(frozen=True)
class M4StopInvGen:
    pass


@dataclass(frozen=True)
class Stop:
    """Orchestrator-injected stop (global timeout or shutdown)."""


# ---------------------------------------------------------------------------
# Verdicts and traces

@dataclass(frozen=True)
class Trace:
    steps: tuple  # one full {var: value} map per step

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def depth(self) -> int:
        return len(self.steps) - 1

    def assignment(self) -> dict:
        return {(v, i): val
                for i, step in enumerate(self.steps) for v, val in step.items()}


@dataclass(frozen=True)
class Valid:
    k: int
    invariants_used: int = 0


@dataclass(frozen=True)
class Invalid:
    trace: Trace

    @property
    def k(self) -> int:
        return self.trace.depth


@dataclass(frozen=True)
class Unknown:
    reason: str  # 'timeout' | 'solver-unknown' | 'max-k'
    detail: str = ""


Verdict = Union[Valid, Invalid, Unknown]


class TraceError(Exception):
    pass


class IncompletableModel(TraceError):
    pass


@dataclass
class EngineOptions:
    mode: Mode = Mode.K_INDUCT
    timeout: float = 100.0
    max_k: int = 200
    path_compression: bool = False
    solver_cmd: Optional[list] = None
    int_term_cap: int = 60
    bool_term_cap: int = 60
    inv_templates: tuple = ("int-leq", "bool-imp")
    inv_delta: bool = True
    include_property_terms: bool = False
    per_check_timeout: Optional[float] = None
    validate_models: bool = False
    dump_smt_dir: Optional[str] = None
    dump_invariants: Optional[str] = None
    step_check_delay: float = 0.0  # test hook: artificially slow inductive checks
    grace: float = 5.0

    def __post_init__(self):
        if self.max_k < 0:
            raise ValueError("max_k must be nonnegative")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class RunStats:
    mode: str = ""
    wall_time: float = 0.0
    checks_base: int = 0
    checks_step: int = 0
    checks_invgen: int = 0
    inv_emitted: int = 0
    inv_used: int = 0
    emissions: list = field(default_factory=list)  # (proved_at_k, ids)
    invgen_aborted: bool = False
    notes: list = field(default_factory=list)


@dataclass
class RunResult:
    verdict: Verdict
    stats: RunStats


# ---------------------------------------------------------------------------
# Session factory (tracks every solver subprocess for liveness control)

class SessionFactory:
    def __init__(self, opts: EngineOptions):
        self.opts = opts
        self.cmd = opts.solver_cmd or default_solver_command()
        self.sessions: list[SolverSession] = []
        self._lock = threading.Lock()

    def open(self) -> SolverSession:
        config = SolverConfig(cmd=self.cmd,
                              per_check_timeout=self.opts.per_check_timeout,
                              validate_models=self.opts.validate_models,
                              dump_path=self.opts.dump_smt_dir)
        session = open_session(config=config)
        with self._lock:
            self.sessions.append(session)
        return session

    def kill_all(self) -> None:
        with self._lock:
            sessions = list(self.sessions)
        for s in sessions:
            s.kill()

    def close_all(self) -> None:
        with self._lock:
            sessions = list(self.sessions)
        for s in sessions:
            s.close()

    def all_terminated(self) -> bool:
        with self._lock:
            return all(s.proc.poll() is not None for s in self.sessions)


def _drain(inbox: queue.Queue) -> list:
    out = []
    while True:
        try:
            out.append(inbox.get_nowait())
        except queue.Empty:
            return out


# ---------------------------------------------------------------------------
# Path compression

def state_equality(ts: TransitionSystem, i: int, j: int) -> Term:
    """Conjunction of per-variable equalities between steps i and j."""
    return conj(eq(IVar(v, i, s), IVar(v, j, s)) for v, s in ts.state_vars)


def path_compression_constraints(ts: TransitionSystem, k: int) -> list[Term]:
    """No repeated states and no re-entry into an initial state, steps 0..k+1."""
    init = ts.init_formula()
    out: list[Term] = []
    for j in range(1, k + 2):
        for i in range(j):
            out.append(lnot(state_equality(ts, i, j)))
    for j in range(1, k + 2):
        out.append(lnot(instantiate_state(init, j)))
    return out


def _compression_increment(ts: TransitionSystem, init: Term, m: int) -> list[Term]:
    """Constraints newly needed when state index m joins the window."""
    out = [lnot(state_equality(ts, i, m)) for i in range(m)]
    out.append(lnot(instantiate_state(init, m)))
    return out


# ---------------------------------------------------------------------------
# Trace extraction and validation

_DEFAULTS = {Sort.BOOL: False, Sort.INT: 0, Sort.REAL: Fraction(0)}


def extract_trace(model: dict, ts: TransitionSystem, k: int) -> Trace:
    """Build the k+1-step trace, completing variables the solver left out.

    Defined variables are re-evaluated from their equations; unconstrained
    ones (inputs, instant-0 fresh variables) fall back to sort defaults.
    The result must validate, otherwise IncompletableModel is raised.
    """
    sorts = ts.sorts
    init_rhs = dict(ts.init_eqs)
    trans_rhs = dict(ts.trans_eqs)
    defined = set(init_rhs)
    order = list(ts.info.eval_order) if ts.info else sorted(defined)
    acc: dict = {}
    for i in range(k + 1):
        for v, _ in ts.state_vars:
            val = model.get((v, i))
            if val is not None:
                acc[(v, i)] = val
        # default the unconstrained variables, then re-derive the defined ones
        for v, s in ts.state_vars:
            if v not in defined and (v, i) not in acc:
                acc[(v, i)] = _DEFAULTS[s]
        for v in order:
            if (v, i) in acc:
                continue
            rhs = init_rhs[v] if i == 0 else trans_rhs[v]
            indexed = (instantiate_state(rhs, 0) if i == 0
                       else instantiate_trans(rhs, i - 1))
            val = evaluate(indexed, acc)
            acc[(v, i)] = val if val is not None else _DEFAULTS[sorts[v]]
    steps = tuple({v: acc[(v, i)] for v, _ in ts.state_vars} for i in range(k + 1))
    return Trace(steps)


@dataclass(frozen=True)
class Ok:
    pass


@dataclass(frozen=True)
class Violation:
    step: int
    kind: str  # 'init' | 'trans' | 'property'
    formula: Optional[Term] = None


def validate_trace(ts: TransitionSystem, trace: Trace, prop: Term
                   ) -> Union[Ok, Violation]:
    """Ground re-check of a counterexample: no solver involved."""
    a = trace.assignment()
    init = ts.init_formula()
    if evaluate(instantiate_state(init, 0), a) is not True:
        return Violation(0, "init", init)
    trans = ts.trans_formula()
    for i in range(len(trace) - 1):
        if evaluate(instantiate_trans(trans, i), a) is not True:
            return Violation(i + 1, "trans", trans)
    last = len(trace) - 1
    if evaluate(instantiate_state(prop, last), a) is not False:
        return Violation(last, "property", prop)
    return Ok()


# ---------------------------------------------------------------------------
# Base worker

@dataclass
class _WorkerBox:
    verdict: Optional[Verdict] = None
    error: Optional[BaseException] = None
    session_stats: Optional[object] = None
    invariants_used: int = 0
    proved_k: Optional[int] = None


def run_base(ts: TransitionSystem, prop: Term, inbox: queue.Queue,
             to_step: queue.Queue, to_invgen: Optional[queue.Queue],
             opts: EngineOptions, factory: SessionFactory,
             box: _WorkerBox, deadline: float) -> Verdict:
    """BMC-style loop: check prop at k = 0, 1, ... until a counterexample,
    a step-proved depth is confirmed, or a resource bound trips."""
    session = factory.open()
    box.session_stats = session.stats

    def stop_peers(kind: str) -> None:
        to_step.put(M2BaseTerminated(kind))
        if to_invgen is not None:
            to_invgen.put(M4StopInvGen())

    target_n: Optional[int] = None
    k = 0
    try:
        while True:
            if time.monotonic() > deadline:
                stop_peers("unknown")
                return Unknown("timeout")
            if k > opts.max_k:
                stop_peers("unknown")
                return Unknown("max-k", f"no verdict up to max_k={opts.max_k}")
            if k == 0:
                session.assert_formula(instantiate_state(ts.init_formula(), 0))
            else:
                session.assert_formula(instantiate_trans(ts.trans_formula(), k - 1))
            result = session.entailed(instantiate_state(prop, k))
            if isinstance(result, NotEntailed):
                trace = extract_trace(result.model, ts, k)
                check = validate_trace(ts, trace, prop)
                if not isinstance(check, Ok):
                    raise IncompletableModel(
                        f"counterexample completion failed at step {check.step}"
                        f" ({check.kind})")
                stop_peers("invalid")
                return Invalid(trace)
            if isinstance(result, SolverUnknown):
                stop_peers("unknown")
                return Unknown("solver-unknown", f"base check at k={k}")
            if target_n is not None and k >= target_n:
                stop_peers("valid")
                return Valid(target_n)
            for msg in _drain(inbox):
                if isinstance(msg, M1StepProved):
                    target_n = msg.k if target_n is None else min(target_n, msg.k)
                elif isinstance(msg, Stop):
                    stop_peers("unknown")
                    return Unknown("timeout")
            if target_n is not None and k >= target_n:
                stop_peers("valid")
                return Valid(target_n)
            k += 1
    finally:
        session.close()


# ---------------------------------------------------------------------------
# Inductive-step worker

def run_step(ts: TransitionSystem, prop: Term, inbox: queue.Queue,
             to_base: queue.Queue, opts: EngineOptions,
             factory: SessionFactory, box: _WorkerBox, deadline: float) -> None:
    """Prove the inductive step at growing k, consuming invariants as they
    arrive; after success, announce M1 and stay idle until the base stops us."""
    session = factory.open()
    box.session_stats = session.stats
    init = ts.init_formula()
    trans = ts.trans_formula()
    invariants: list[Term] = []
    seen_inv_keys: set[Term] = set()
    consecutive_unknown = 0

    def assert_invariants(invs: list[Term], lo: int, hi: int) -> None:
        for f in invs:
            for i in range(lo, hi + 1):
                session.assert_formula(instantiate_state(f, i))

    def take_messages() -> tuple[bool, list[Term]]:
        fresh: list[Term] = []
        for msg in _drain(inbox):
            if isinstance(msg, (M2BaseTerminated, Stop)):
                return True, fresh
            if isinstance(msg, M3Invariants):
                for f in msg.formulas:
                    if f not in seen_inv_keys:  # Version B may resend supersets
                        seen_inv_keys.add(f)
                        fresh.append(f)
        return False, fresh

    def wait_for_stop() -> None:
        while True:
            try:
                msg = inbox.get(timeout=0.2)
            except queue.Empty:
                if time.monotonic() > deadline + opts.grace:
                    return
                continue
            if isinstance(msg, (M2BaseTerminated, Stop)):
                return

    try:
        k = 0
        while True:
            # entering level k: window is states 0..k+1
            session.assert_formula(instantiate_trans(trans, k))
            session.assert_formula(instantiate_state(prop, k))
            if opts.path_compression:
                for c in _compression_increment(ts, init, k + 1):
                    session.assert_formula(c)
            assert_invariants(invariants, k + 1, k + 1)
            while True:
                stop, fresh = take_messages()
                if stop:
                    return
                if fresh:
                    assert_invariants(fresh, 0, k + 1)
                    invariants.extend(fresh)
                if opts.step_check_delay:
                    time.sleep(opts.step_check_delay)
                if time.monotonic() > deadline:
                    return
                result = session.entailed(instantiate_state(prop, k + 1))
                if isinstance(result, Entailed):
                    box.proved_k = k
                    box.invariants_used = len(invariants)
                    to_base.put(M1StepProved(k))
                    wait_for_stop()
                    return
                if isinstance(result, SolverUnknown):
                    consecutive_unknown += 1
                    if consecutive_unknown >= 5:
                        box.error = SolverError("step checks persistently unknown")
                        return
                    break  # skip to k+1
                consecutive_unknown = 0
                stop, fresh = take_messages()
                if stop:
                    return
                if fresh:
                    assert_invariants(fresh, 0, k + 1)
                    invariants.extend(fresh)
                    continue  # re-check at the same k with a stronger hypothesis
                break
            k += 1
            if k > opts.max_k:
                wait_for_stop()
                return
    finally:
        session.close()


# ---------------------------------------------------------------------------
# Invariant generation worker (wraps the procedures in invgen)

def run_invgen(ts: TransitionSystem, inbox: queue.Queue, to_step: queue.Queue,
               opts: EngineOptions, factory: SessionFactory,
               stats: invgen_mod.InvgenStats, version: str,
               deadline: float) -> None:
    pool = harvest_terms(ts, opts.int_term_cap, opts.bool_term_cap,
                         opts.include_property_terms)
    cset = invgen_mod.generate_candidates(pool, opts.inv_templates)
    dump = open(opts.dump_invariants, "a") if opts.dump_invariants else None
    run_opts = SimpleNamespace(inv_delta=opts.inv_delta, deadline=deadline)

    def is_stop(m):
        return isinstance(m, (M4StopInvGen, Stop))

    proc = (invgen_mod.invgen_version_b if version == "b"
            else invgen_mod.invgen_version_a)
    try:
        proc(ts, cset, inbox, to_step, run_opts, factory.open, stats,
             M3Invariants, is_stop, dump)
    finally:
        if dump is not None:
            dump.close()


# ---------------------------------------------------------------------------
# Orchestrator

def orchestrate(ts: TransitionSystem, opts: EngineOptions) -> RunResult:
    """Spawn the workers for the selected mode, wire the queues of the
    three-process architecture, and return the base worker's verdict."""
    start = time.monotonic()
    deadline = start + opts.timeout
    prop = ts.property_formula()
    factory = SessionFactory(opts)
    stats = RunStats(mode=opts.mode.value)

    to_base: queue.Queue = queue.Queue()
    to_step: queue.Queue = queue.Queue()
    to_invgen: queue.Queue = queue.Queue()
    use_invgen = opts.mode is not Mode.K_INDUCT

    base_box, step_box = _WorkerBox(), _WorkerBox()
    inv_stats = invgen_mod.InvgenStats()

    def base_main():
        try:
            base_box.verdict = run_base(ts, prop, to_base, to_step,
                                        to_invgen if use_invgen else None,
                                        opts, factory, base_box, deadline)
        except BaseException as e:  # noqa: BLE001 - reported via the verdict
            base_box.error = e
            to_step.put(M2BaseTerminated("unknown"))
            to_invgen.put(M4StopInvGen())

    def step_main():
        try:
            run_step(ts, prop, to_step, to_base, opts, factory, step_box, deadline)
        except BaseException as e:
            step_box.error = e

    threads = [threading.Thread(target=base_main, name="pk-base", daemon=True),
               threading.Thread(target=step_main, name="pk-step", daemon=True)]
    if use_invgen:
        version = "b" if opts.mode is Mode.INC_INVARIANT else "a"

        def invgen_main():
            try:
                run_invgen(ts, to_invgen, to_step, opts, factory, inv_stats,
                           version, deadline)
            except BaseException as e:
                inv_stats.aborted = True
                inv_stats.note = f"crashed: {e}"

        threads.append(threading.Thread(target=invgen_main, name="pk-invgen",
                                        daemon=True))
    for t in threads:
        t.start()

    base_thread = threads[0]
    stops_sent = killed = False
    while base_thread.is_alive():
        base_thread.join(timeout=0.05)
        now = time.monotonic()
        if not stops_sent and now > deadline:
            for q in (to_base, to_step, to_invgen):
                q.put(Stop())
            stops_sent = True
        if not killed and now > deadline + opts.grace:
            factory.kill_all()
            killed = True
        if now > deadline + 3 * opts.grace:
            break

    # base is done (or abandoned): make sure everyone else winds down
    to_step.put(Stop())
    to_invgen.put(Stop())
    join_deadline = time.monotonic() + opts.grace
    for t in threads[1:]:
        t.join(timeout=max(join_deadline - time.monotonic(), 0.1))
    if any(t.is_alive() for t in threads):
        factory.kill_all()
        for t in threads:
            t.join(timeout=opts.grace)
    factory.close_all()

    verdict = base_box.verdict
    if verdict is None:
        detail = str(base_box.error) if base_box.error else "base worker failed"
        verdict = Unknown("timeout" if stops_sent else "solver-unknown", detail)
    if isinstance(verdict, Valid):
        verdict = Valid(verdict.k, step_box.invariants_used)
    if isinstance(verdict, Invalid):
        check = validate_trace(ts, verdict.trace, prop)
        if not isinstance(check, Ok):  # production-side soundness assertion
            verdict = Unknown("solver-unknown",
                              f"invalid trace failed validation at {check.step}")

    stats.wall_time = time.monotonic() - start
    if base_box.session_stats:
        stats.checks_base = base_box.session_stats.checks
    if step_box.session_stats:
        stats.checks_step = step_box.session_stats.checks
    stats.checks_invgen = inv_stats.checks
    stats.inv_emitted = inv_stats.emitted_total
    stats.inv_used = step_box.invariants_used
    stats.emissions = list(inv_stats.emissions)
    stats.invgen_aborted = inv_stats.aborted
    if base_box.error:
        stats.notes.append(f"base: {base_box.error}")
    if step_box.error:
        stats.notes.append(f"step: {step_box.error}")
    if inv_stats.note:
        stats.notes.append(f"invgen: {inv_stats.note}")
    return RunResult(verdict, stats)
