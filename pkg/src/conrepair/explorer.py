"""Bounded explicit-state execution of CWhile programs.

Threads are compiled into flat instruction lists.  A scheduling *step* runs
one statement, one ``if (*)``/``while (*)`` choice, or a whole atomic region
(every labeled statement of a region is still reported as its own event).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Optional

from . import program as P
from .syntax import (
    ERR_VAR, Atomic, EvalError, Group, IfStar, Program, WhileStar, is_preemption_point,
)


class DomainError(Exception):
    """A variable left the configured value range."""


@dataclass(frozen=True)
class Bounds:
    loop_unroll: int = 2
    max_steps: int = 64
    max_traces: int = 100_000
    domain_bound: int = 4


@dataclass(frozen=True)
class Event:
    thread: int
    label: str
    branch: Optional[int] = None   # taken branch of an if/while choice

    def text(self) -> str:
        b = "" if self.branch is None else f"?{self.branch}"
        return f"{self.thread}:{self.label}{b}"


@dataclass(frozen=True)
class State:
    vals: tuple     # aligned with Compiled.vars
    pcs: tuple
    loops: tuple    # per thread: tuple of loop counters

    def env(self, names) -> dict:
        return dict(zip(names, self.vals))


# ------------------------------------------------------------------ compiling


@dataclass
class Instr:
    kind: str                 # stmt | if | while | jump
    label: Optional[str] = None
    stmt: object = None
    target: int = -1          # jump target / else branch / loop exit
    slot: int = -1            # loop counter slot
    region_end: int = -1      # set on the first instruction of an atomic region
    region: object = None     # the region statement (for preemption checks)


def _compile_body(body, out: list, slots: list):
    for s in body:
        if isinstance(s, Group):
            _compile_body(s.body, out, slots)
        elif P.is_region(s):
            start = len(out)
            _compile_body(s.body, out, slots)
            if len(out) > start and out[start].region_end < 0:
                out[start].region_end = len(out)
                out[start].region = s
        elif isinstance(s, IfStar):
            i = len(out)
            out.append(Instr("if", s.label, s))
            _compile_body(s.then, out, slots)
            j = len(out)
            out.append(Instr("jump"))
            out[i].target = len(out)
            _compile_body(s.orelse, out, slots)
            out[j].target = len(out)
        elif isinstance(s, WhileStar):
            i = len(out)
            out.append(Instr("while", s.label, s, slot=len(slots)))
            slots.append(s.label)
            _compile_body(s.body, out, slots)
            out.append(Instr("jump", target=i))
            out[i].target = len(out)
        else:
            out.append(Instr("stmt", s.label, s))


@dataclass
class Compiled:
    prog: Program
    vars: tuple
    code: list           # per thread instruction list
    nslots: tuple
    label_pc: dict = field(default_factory=dict)   # label -> (thread, pc)

    def norm(self, t: int, pc: int) -> int:
        code = self.code[t]
        while pc < len(code) and code[pc].kind == "jump":
            pc = code[pc].target
        return pc

    def initial(self) -> State:
        init = self.prog.init_map
        vals = tuple(init.get(v, 0) for v in self.vars)
        pcs = tuple(self.norm(t, 0) for t in range(len(self.code)))
        return State(vals, pcs, tuple((0,) * n for n in self.nslots))

    def finished(self, s: State, t: int) -> bool:
        return s.pcs[t] >= len(self.code[t])

    def all_finished(self, s: State) -> bool:
        return all(self.finished(s, t) for t in range(len(self.code)))

    def err(self, s: State) -> int:
        return s.vals[self.err_idx]

    @property
    def err_idx(self) -> int:
        return self.vars.index(ERR_VAR)

    def next_is_preemption_point(self, s: State, t: int) -> bool:
        if self.finished(s, t):
            return False
        ins = self.code[t][s.pcs[t]]
        if ins.region_end >= 0:
            return is_preemption_point(ins.region)
        return ins.kind == "stmt" and is_preemption_point(ins.stmt)


@lru_cache(maxsize=1024)
def compile_program(prog: Program) -> Compiled:
    code, nslots = [], []
    for th in prog.threads:
        out, slots = [], []
        _compile_body(th.body, out, slots)
        code.append(out)
        nslots.append(len(slots))
    names = set(P.variables(prog))
    c = Compiled(prog, tuple(sorted(names)), code, tuple(nslots))
    for t, out in enumerate(code):
        for pc, ins in enumerate(out):
            if ins.label is not None:
                c.label_pc[ins.label] = (t, pc)
    return c


# ------------------------------------------------------------------ stepping


def _exec(c: Compiled, stmt, vals: tuple, bound: int):
    env = dict(zip(c.vars, vals))
    try:
        env = P.exec_stmt(stmt, env)
    except EvalError as exc:
        raise DomainError(f"{stmt.label}: {exc}") from None
    if env is P.BLOCKED:
        return None
    out = tuple(env[v] for v in c.vars)
    for v, x in zip(c.vars, out):
        if abs(x) > bound:
            raise DomainError(f"{stmt.label}: {v}={x} outside [-{bound},{bound}]")
    return out


def successors(c: Compiled, s: State, t: int, bounds: Bounds) -> list:
    """All ways thread ``t`` can take one step.

    Each entry is ``(events, post)`` where ``post`` is a State for choices and a
    tuple of per-event States for statements and atomic regions.
    """
    if c.finished(s, t):
        return []
    code = c.code[t]
    pc = s.pcs[t]
    ins = code[pc]

    def with_pc(vals, newpc, loops=None):
        pcs = s.pcs[:t] + (c.norm(t, newpc),) + s.pcs[t + 1:]
        return State(vals, pcs, s.loops if loops is None else loops)

    if ins.kind == "if":
        return [((Event(t, ins.label, 0),), with_pc(s.vals, pc + 1)),
                ((Event(t, ins.label, 1),), with_pc(s.vals, ins.target))]
    if ins.kind == "while":
        counters = s.loops[t]
        out = []
        if counters[ins.slot] < bounds.loop_unroll:
            cs = counters[:ins.slot] + (counters[ins.slot] + 1,) + counters[ins.slot + 1:]
            loops = s.loops[:t] + (cs,) + s.loops[t + 1:]
            out.append(((Event(t, ins.label, 0),), with_pc(s.vals, pc + 1, loops)))
        cs = counters[:ins.slot] + (0,) + counters[ins.slot + 1:]
        loops = s.loops[:t] + (cs,) + s.loops[t + 1:]
        out.append(((Event(t, ins.label, 1),), with_pc(s.vals, ins.target, loops)))
        return out
    end = ins.region_end if ins.region_end >= 0 else pc + 1
    vals, events, mids = s.vals, [], []
    for j in range(pc, end):
        vals = _exec(c, code[j].stmt, vals, bounds.domain_bound)
        if vals is None:
            return []
        events.append(Event(t, code[j].label))
        mids.append(with_pc(vals, j + 1))
    return [(tuple(events), tuple(mids))]


def _expand(c: Compiled, s: State, t: int, bounds: Bounds):
    """Normalise successors to (events, states-after-each-event)."""
    out = []
    for item in successors(c, s, t, bounds):
        evs, st = item
        out.append((evs, st if isinstance(st, tuple) else (st,)))
    return out


# ------------------------------------------------------------------- traces


@dataclass(frozen=True)
class Trace:
    program: Program
    events: tuple
    states: tuple          # len(events) + 1 states
    truncated: bool = False

    def __len__(self):
        return len(self.events)

    @property
    def compiled(self) -> Compiled:
        return compile_program(self.program)

    @property
    def bad(self) -> bool:
        c = self.compiled
        return c.err(self.states[0]) == 0 and c.err(self.states[-1]) == 1

    @property
    def good(self) -> bool:
        return not self.bad

    @property
    def complete(self) -> bool:
        return self.compiled.all_finished(self.states[-1])

    def _switches_ok(self, allow_preemption: bool) -> bool:
        c = self.compiled
        for i in range(len(self.events) - 1):
            t, u = self.events[i].thread, self.events[i + 1].thread
            if t == u:
                continue
            after = self.states[i + 1]
            if c.finished(after, t):
                continue
            if allow_preemption and c.next_is_preemption_point(after, t):
                continue
            return False
        return True

    @property
    def preemption_free(self) -> bool:
        return self._switches_ok(True)

    @property
    def sequential(self) -> bool:
        return self._switches_ok(False)

    def labels(self) -> list:
        return [e.label for e in self.events]

    def env(self, i: int) -> dict:
        return self.states[i].env(self.compiled.vars)

    def dump(self) -> str:
        c = self.compiled
        shown = [v for v in c.vars]
        lines = []
        for ev, st in zip(self.events, self.states[1:]):
            vals = ",".join(f"{v}={x}" for v, x in zip(shown, st.vals))
            lines.append(f"{ev.text()} | {vals}")
        lines.append(f"# bad={int(self.bad)} complete={int(self.complete)} "
                     f"pf={int(self.preemption_free)} seq={int(self.sequential)}")
        return "\n".join(lines) + "\n"

    def __str__(self) -> str:
        return ",".join(self.labels())


POLICIES = ("all", "preemptionFreeOnly", "sequentialOnly")


def enumerate_traces(prog: Program, bounds: Bounds = Bounds(),
                     policy: str = "all") -> Iterator[Trace]:
    """Depth-first enumeration of maximal traces, thread index ascending.

    Branches cut by ``max_steps`` are yielded with ``truncated=True``; when
    ``max_traces`` is reached the last yielded trace is marked truncated too.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    c = compile_program(prog)
    count = 0
    nthreads = len(c.code)
    stack = [((), (c.initial(),))]
    while stack:
        events, states = stack.pop()
        s = states[-1]
        last = events[-1].thread if events else None
        if last is None or c.finished(s, last) or policy == "all":
            allowed = range(nthreads)
        elif policy == "preemptionFreeOnly" and c.next_is_preemption_point(s, last):
            allowed = range(nthreads)
        else:
            allowed = (last,)
        nexts = []
        for t in allowed:
            for evs, sts in _expand(c, s, t, bounds):
                nexts.append((events + evs, states + sts))
        truncated = bool(nexts) and len(events) >= bounds.max_steps
        if not nexts or truncated:
            count += 1
            cut = truncated or count >= bounds.max_traces
            yield Trace(prog, events, states, truncated=cut)
            if count >= bounds.max_traces:
                return
            continue
        stack.extend(reversed(nexts))


@dataclass(frozen=True)
class Verdict:
    status: str                    # correct | bad | unknown
    trace: Optional[Trace] = None
    reason: str = ""


def find_bad_trace(prog: Program, bounds: Bounds = Bounds()) -> Verdict:
    """Breadth-first search for a shortest bad prefix (threads ascending)."""
    c = compile_program(prog)
    init = c.initial()
    parent = {init: None}
    queue = deque([(init, 0)])
    truncated = False
    while queue:
        s, depth = queue.popleft()
        for t in range(len(c.code)):
            for evs, sts in _expand(c, s, t, bounds):
                nxt = sts[-1]
                if nxt in parent:
                    continue
                if depth + 1 > bounds.max_steps:
                    truncated = True
                    continue
                parent[nxt] = (s, evs, sts)
                if c.err(nxt) == 1:
                    return Verdict("bad", _rebuild(prog, c, parent, nxt))
                queue.append((nxt, depth + 1))
    if truncated:
        return Verdict("unknown", reason="step bound reached")
    return Verdict("correct")


def _rebuild(prog, c, parent, s) -> Trace:
    chunks = []
    while parent[s] is not None:
        prev, evs, sts = parent[s]
        chunks.append((evs, sts))
        s = prev
    events, states = (), (s,)
    for evs, sts in reversed(chunks):
        events += evs
        states += sts
    return Trace(prog, events, states)


def extend(tr: Trace, bounds: Bounds = Bounds()) -> Trace:
    """Run the lowest enabled thread until completion, deadlock or the step bound.

    Choices take the last branch (else / loop exit) to guarantee progress.
    """
    c = tr.compiled
    events, states = tr.events, tr.states
    while len(events) < bounds.max_steps:
        s = states[-1]
        for t in range(len(c.code)):
            options = _expand(c, s, t, bounds)
            if options:
                evs, sts = options[-1]
                events, states = events + evs, states + sts
                break
        else:
            break
    return Trace(tr.program, events, states)


def verify(prog: Program, bounds: Bounds = Bounds()) -> Verdict:
    v = find_bad_trace(prog, bounds)
    if v.status == "bad":
        return Verdict("bad", extend(v.trace, bounds))
    return v


# -------------------------------------------------------------------- replay


def replay(prog: Program, events, bounds: Bounds = Bounds(), start: Optional[State] = None) -> Optional[Trace]:
    """Re-execute an event sequence; None if it is not a run of ``prog``."""
    c = compile_program(prog)
    s = start or c.initial()
    states = [s]
    events = tuple(events)
    i = 0
    try:
        while i < len(events):
            ev = events[i]
            if ev.thread >= len(c.code) or c.finished(s, ev.thread):
                return None
            ins = c.code[ev.thread][s.pcs[ev.thread]]
            if ins.label != ev.label:
                return None
            options = _expand(c, s, ev.thread, bounds)
            match = None
            for evs, sts in options:
                if events[i:i + len(evs)] == evs:
                    match = (evs, sts)
                    break
            if match is None:
                return None
            states.extend(match[1])
            s = match[1][-1]
            i += len(match[0])
    except DomainError:
        return None
    return Trace(prog, events, tuple(states))


def parse_dump(prog: Program, text: str) -> Trace:
    """Read a trace dump back (the recorded valuations are re-derived by replay)."""
    events = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head = line.split("|", 1)[0].strip()
        t, lab = head.split(":", 1)
        branch = None
        if "?" in lab:
            lab, b = lab.rsplit("?", 1)
            branch = int(b)
        events.append(Event(int(t), lab, branch))
    tr = replay(prog, events)
    if tr is None:
        raise ValueError("dumped trace is not a run of the program")
    return tr


def sequential_traces(prog: Program, bounds: Bounds = Bounds()) -> list:
    return [t for t in enumerate_traces(prog, bounds, "sequentialOnly")]


def good_traces(prog: Program, bounds: Bounds = Bounds(), limit: int = 10) -> list:
    """Complete preemption-free good traces first, then the shortest preemptive ones."""
    pf, seen = [], set()
    for tr in enumerate_traces(prog, bounds, "preemptionFreeOnly"):
        if tr.complete and tr.good and tr.events not in seen:
            seen.add(tr.events)
            pf.append(tr)
    out = pf[:limit]
    if len(out) < limit:
        rest = [tr for tr in enumerate_traces(prog, bounds, "all")
                if tr.complete and tr.good and tr.events not in seen]
        rest.sort(key=lambda tr: (len(tr.events), [e.thread for e in tr.events]))
        out += rest[:limit - len(out)]
    return out


# ----------------------------------------------------- trace transformations


class ClosureBudgetExceeded(Exception):
    """A trace-closure computation exceeded its expansion budget."""


def steps_of(tr: Trace) -> tuple:
    """Group events into scheduling steps (atomic regions stay together)."""
    c = tr.compiled
    out, i = [], 0
    while i < len(tr.events):
        ev = tr.events[i]
        t, pc = c.label_pc.get(ev.label, (ev.thread, -1))
        ins = c.code[t][pc] if pc >= 0 else None
        n = 1
        if ins is not None and ins.region_end >= 0 and ev.branch is None:
            n = sum(1 for j in range(pc, ins.region_end) if c.code[t][j].label is not None)
        out.append(tuple(tr.events[i:i + n]))
        i += n
    return tuple(out)


def _apply_step(c: Compiled, s: State, step: tuple, bounds: Bounds):
    try:
        for evs, sts in _expand(c, s, step[0].thread, bounds):
            if evs == step:
                return sts
    except DomainError:
        return None
    return None


def replay_steps(prog: Program, steps, bounds: Bounds = Bounds()) -> Optional[Trace]:
    c = compile_program(prog)
    s = c.initial()
    states, events = [s], []
    for step in steps:
        sts = _apply_step(c, s, step, bounds)
        if sts is None:
            return None
        states.extend(sts)
        events.extend(step)
        s = sts[-1]
    return Trace(prog, tuple(events), tuple(states))


def _without_err(c: Compiled, s: State) -> tuple:
    k = c.err_idx
    return (s.vals[:k] + s.vals[k + 1:], s.pcs, s.loops)


def free_neighbours(prog: Program, steps: tuple, bounds: Bounds = Bounds()):
    """Step sequences reachable by one free transformation."""
    c = compile_program(prog)
    s = c.initial()
    boundary = [s]
    for step in steps:
        sts = _apply_step(c, s, step, bounds)
        if sts is None:
            return
        s = sts[-1]
        boundary.append(s)
    for i in range(len(steps) - 1):
        a, b = steps[i], steps[i + 1]
        if a[0].thread == b[0].thread:
            continue
        mid = _apply_step(c, boundary[i], b, bounds)
        if mid is None:
            continue
        end = _apply_step(c, mid[-1], a, bounds)
        if end is None:
            continue
        if _without_err(c, end[-1]) == _without_err(c, boundary[i + 2]):
            yield steps[:i] + (b, a) + steps[i + 2:]


def free_closure(prog: Program, seeds, bounds: Bounds = Bounds(), budget: int = 100_000) -> set:
    """All step sequences reachable from ``seeds`` by free transformations."""
    seen = set(seeds)
    todo = list(seen)
    expansions = 0
    while todo:
        cur = todo.pop()
        expansions += 1
        if expansions > budget:
            raise ClosureBudgetExceeded(f"free closure exceeded {budget} expansions")
        for nxt in free_neighbours(prog, cur, bounds):
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def freely_transforms_to_preemption_free(tr: Trace, prog: Optional[Program] = None,
                                         bounds: Bounds = Bounds(), budget: int = 20_000) -> bool:
    """Whether free transformations turn ``tr`` into a preemption-free trace.

    An exceeded search budget yields the conservative answer False.
    """
    prog = prog or tr.program
    if tr.preemption_free:
        return True
    try:
        closure = free_closure(prog, [steps_of(tr)], bounds, budget)
    except ClosureBudgetExceeded:
        return False
    for steps in sorted(closure, key=lambda st: [e.text() for s in st for e in s]):
        t2 = replay_steps(prog, steps, bounds)
        if t2 is not None and t2.preemption_free:
            return True
    return False


def _unit_labels(prog: Program, name: str) -> tuple:
    loc = P.index(prog).resolve(name)
    return loc.thread, tuple(P.labels_in(loc.stmt))


def _apply_swap_to_steps(prog: Program, steps: tuple, a: str, b: str):
    """Trace image of ``a <-> b``: swap every adjacent occurrence of the two units."""
    try:
        ta, la = _unit_labels(prog, a)
        tb, lb = _unit_labels(prog, b)
    except P.ProgramError:
        return None
    events = [e for st in steps for e in st]
    labels = [e.label for e in events]
    out, i, changed = [], 0, False
    while i < len(events):
        j = i + len(la)
        if (tuple(labels[i:j]) == la and tuple(labels[j:j + len(lb)]) == lb
                and all(e.thread == ta for e in events[i:j + len(lb)])):
            out += events[j:j + len(lb)] + events[i:j]
            i = j + len(lb)
            changed = True
        else:
            out.append(events[i])
            i += 1
    return tuple(out) if changed else None


def transformation_closure(tr: Trace, transformations, programs, bounds: Bounds = Bounds(),
                           budget: int = 100_000) -> Optional[set]:
    """Images of ``tr`` under program transformations interleaved with free ones.

    ``programs`` lists P0 (the program of ``tr``) followed by the program after
    each transformation.  Returns a set of traces of the last program, or None
    if some transformation has no trace-level counterpart (wait/notify).
    """
    from .program import AtomicSection, Swap

    current = free_closure(programs[0], [steps_of(tr)], bounds, budget)
    for t, before, after in zip(transformations, programs, programs[1:]):
        if not isinstance(t, (Swap, AtomicSection)):
            return None
        seeds = set()
        for steps in current:
            candidates = [tuple(e for st in steps for e in st)]
            if isinstance(t, Swap):
                swapped = _apply_swap_to_steps(before, steps, t.a, t.b)
                if swapped is not None:
                    candidates.append(swapped)
            for evs in candidates:
                t2 = replay(after, evs, bounds)
                if t2 is not None:
                    seeds.add(steps_of(t2))
        current = free_closure(after, seeds, bounds, budget) if seeds else set()
    last_prog = programs[-1]
    out = set()
    for steps in current:
        t2 = replay_steps(last_prog, steps, bounds)
        if t2 is not None:
            out.add(t2)
    return out


def apply_trace_transformations(tr: Trace, transformations, p_final: Program,
                                bounds: Bounds = Bounds(), budget: int = 100_000) -> Optional[set]:
    """Closure of ``tr`` under ``transformations`` plus free ones, as traces of ``p_final``."""
    programs = [tr.program]
    for t in transformations:
        programs.append(P.apply_transformation(programs[-1], t))
    return transformation_closure(tr, transformations, programs, bounds, budget)
