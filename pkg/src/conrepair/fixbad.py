"""Eliminating bad traces: trace elimination graphs, cycles, and fixes.

A bad trace is generalised into the happens-before edges the failure needs.
An *elimination cycle* visits threads in turn; inside thread ``t`` it enters
at node ``x`` (target of an incoming edge) and leaves from node ``y`` (source
of an outgoing edge).  Adopting ``x <= y`` for every visited thread makes the
bug's happens-before order cyclic, i.e. impossible.  When ``x`` runs after
``y`` in the bad trace the atom *changes* the program: either by reordering
(``x <= y``) or by an atomic section ``[y;x]``.  With wait/notify enabled an
edge between threads may also be a scheduling atom ``y -> x``.
"""
from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import constraint as C
from . import explorer as E
from . import program as P
from .syntax import Program, is_preemption_point, stmt_writes
from .tracegraph import BOT, TraceGraph, depends

log = logging.getLogger(__name__)

KIND_RANK = {"ord": 0, "atom": 1, "sched": 2}


class NoFixFound(Exception):
    pass


@dataclass(frozen=True)
class Node:
    key: int          # trace position; pending statements come after the trace
    thread: int
    label: str
    pending: bool = False

    def text(self) -> str:
        return f"{self.label}{'*' if self.pending else ''}"


@dataclass
class EliminationGraph:
    trace: E.Trace
    nodes: list
    necessary: set                # (key, key) pairs
    failing: int                  # position of the failing assertion
    allow_wait_notify: bool = False

    def node(self, key: int) -> Node:
        return self.by_key[key]

    def __post_init__(self):
        self.by_key = {n.key: n for n in self.nodes}

    def cross(self, y: Node) -> list:
        out = [(self.by_key[b], "nec") for a, b in sorted(self.necessary)
               if a == y.key and self.by_key[b].thread != y.thread]
        if self.allow_wait_notify and not y.pending:
            out += [(n, "sched") for n in self.nodes
                    if n.thread != y.thread and n.key < y.key and not n.pending]
        return out


@dataclass(frozen=True)
class Segment:
    thread: int
    enter: Node
    exit: Node

    @property
    def changing(self) -> bool:
        return self.enter.key > self.exit.key


@dataclass(frozen=True)
class Cycle:
    segments: tuple
    links: tuple      # (from Node, to Node, "nec" | "sched")

    def text(self) -> str:
        parts = []
        for seg, (_, _, kind) in zip(self.segments, self.links):
            parts.append(seg.enter.text())
            if seg.exit != seg.enter:
                parts.append(seg.exit.text())
        parts.append(self.segments[0].enter.text())
        return " -> ".join(parts)


@dataclass
class FixOption:
    cycle: Cycle
    choices: tuple            # (kind, atom) per changing element
    fixed: tuple              # atoms that already hold and are kept

    @property
    def constraint(self) -> C.Constraint:
        return C.conj(*[a for _, a in self.choices], *self.fixed)

    @property
    def text(self) -> str:
        return C.to_text(self.constraint)

    @property
    def max_kind(self) -> int:
        return max((KIND_RANK[k] for k, _ in self.choices), default=0)

    @property
    def has_atomic(self) -> bool:
        return any(k == "atom" for k, _ in self.choices)


@dataclass
class Fix:
    transformations: list
    constraint: C.Constraint
    program: Program
    cycle: Optional[Cycle] = None
    escalated: bool = False
    notes: list = field(default_factory=list)

    def report(self) -> dict:
        return {
            "cycle": self.cycle.text() if self.cycle else None,
            "atoms": C.to_text(self.constraint),
            "transformations": [t.text() for t in self.transformations],
            "escalated": self.escalated,
        }


@dataclass
class FixConfig:
    heuristic: str = "ce1"
    ce2_threshold: int = 3
    reorder_fixes: int = 0            # reorder fixes applied so far (for ce2)
    allow_wait_notify: bool = False
    domain_bound: int = 2             # for sequential-equivalence checks
    cycle_limit: int = 256
    search_nodes: int = 3000
    bounds: E.Bounds = E.Bounds()


# ---------------------------------------------------------------- generalise


def failing_position(tr: E.Trace) -> int:
    c = tr.compiled
    for i in range(len(tr.events)):
        if c.err(tr.states[i]) == 0 and c.err(tr.states[i + 1]) == 1:
            return i
    raise ValueError("trace is not bad")


def pending_nodes(tr: E.Trace, start_key: int) -> list:
    """Statements each unfinished thread would run next, up to the next branch."""
    c = tr.compiled
    s = tr.states[-1]
    out, key = [], start_key
    for t in range(len(c.code)):
        pc = s.pcs[t]
        code = c.code[t]
        while pc < len(code) and code[pc].kind == "stmt":
            out.append(Node(key, t, code[pc].label, True))
            key += 1
            pc = c.norm(t, pc + 1)
    return out


def generalize_bad_trace(tr: E.Trace, allow_wait_notify: bool = False) -> EliminationGraph:
    if not tr.bad:
        raise ValueError("generalize_bad_trace needs a bad trace")
    g = TraceGraph(tr)
    n = len(tr.events)
    nodes = [Node(i, e.thread, e.label) for i, e in enumerate(tr.events)]
    pend = pending_nodes(tr, n)
    nodes += pend
    nec = set()
    # (i) program order between consecutive nodes of a thread
    by_thread = {}
    for nd in nodes:
        by_thread.setdefault(nd.thread, []).append(nd)
    for seq in by_thread.values():
        for a, b in zip(seq, seq[1:]):
            nec.add((a.key, b.key))
    # (ii) data flow into conditionals
    nec |= {(w, r) for (w, r) in g.dfconds if w != BOT}
    # (iii) data flow into the failing assertion; each read in that flow must
    #       keep its writer: earlier writes stay before it, later ones after it
    a = failing_position(tr)
    flow = depends(tr, a, g.info)
    nec |= {(w, r) for (w, r, _) in flow if w != BOT}
    idx = P.index(tr.program)
    for (w, r, v) in flow:
        # earlier writes to v must stay before the write that is read ...
        if w != BOT:
            for j in range(w):
                if v in g.info.writes[j]:
                    nec.add((j, w))
        # ... and the read must happen before later writes
        for j in range(r + 1, n):
            if v in g.info.writes[j]:
                nec.add((r, j))
        for nd in pend:
            if v in stmt_writes(idx.loc[nd.label].stmt):
                nec.add((r, nd.key))
    return EliminationGraph(tr, nodes, nec, a, allow_wait_notify)


# -------------------------------------------------------------------- cycles


def find_elimination_cycles(g: EliminationGraph, limit: int = 256) -> list:
    by_thread = {}
    for nd in g.nodes:
        by_thread.setdefault(nd.thread, []).append(nd)
    cycles = []

    def dfs(start: Node, cur: Node, visited: tuple, segs: tuple, links: tuple):
        if len(cycles) >= limit:
            return
        for y in by_thread[cur.thread]:
            if y.label == cur.label and y != cur:
                continue
            seg = Segment(cur.thread, cur, y)
            for x2, kind in g.cross(y):
                if x2 == start:
                    cyc = Cycle(segs + (seg,), links + ((y, x2, kind),))
                    if any(s.changing for s in cyc.segments) or any(k == "sched" for *_, k in cyc.links):
                        cycles.append(cyc)
                elif x2.thread not in visited and x2.thread > start.thread:
                    dfs(start, x2, visited + (x2.thread,), segs + (seg,), links + ((y, x2, kind),))

    for t in sorted(by_thread):
        for x in by_thread[t]:
            dfs(x, x, (t,), (), ())
    return cycles


def fix_options(cycle: Cycle, p: Program) -> list:
    fixed, changing = [], []
    for seg in cycle.segments:
        x, y = seg.enter, seg.exit
        if x == y:
            continue
        if seg.changing:
            changing.append([("ord", C.Ordering(x.label, y.label)),
                             ("atom", C.Atomicity(y.label, x.label))])
        elif P.holds_ordering(p, x.label, y.label):
            fixed.append(C.Ordering(x.label, y.label))
    for y, x, kind in cycle.links:
        if kind == "sched":
            changing.append([("sched", C.Scheduling(y.label, x.label))])
    return [FixOption(cycle, tuple(choice), tuple(fixed))
            for choice in itertools.product(*changing)]


def rank_key(opt: FixOption, cfg: FixConfig):
    n = len(opt.choices)
    if cfg.heuristic == "ce2" and cfg.reorder_fixes >= cfg.ce2_threshold:
        return (0 if opt.has_atomic else 1, n, opt.max_kind)
    return (opt.max_kind, n)


# --------------------------------------------------------------- realisation


def _units_between(p: Program, a: str, b: str) -> Optional[list]:
    """Labels naming the sibling units from the one holding ``a`` to the one holding ``b``."""
    idx = P.index(p)
    la, lb = idx.resolve(a), idx.resolve(b)
    if la.thread != lb.thread:
        return None
    k = P._common(la.path, lb.path)
    if k % 2 == 1 or k >= min(len(la.path), len(lb.path)):
        return None
    seq = idx.stmt_at(la.thread, la.path[:k])
    i, j = la.path[k], lb.path[k]
    if i > j:
        return None
    out = []
    for u in seq[i:j + 1]:
        labs = P.labels_in(u)
        if not labs:
            return None
        out.append(labs[0])
    return out


def _atomic_transformations(p: Program, atom: C.Atomicity, cfg: FixConfig, discipline: bool):
    if P.holds_atomicity(p, atom.a, atom.b):
        return p, []
    units = _units_between(p, atom.a, atom.b)
    if not units or len(units) < 2:
        return None
    ts = []
    for u, v in zip(units, units[1:]):
        t = P.AtomicSection(u, v)
        if discipline and any(is_preemption_point(P.index(p).resolve(w).stmt) for w in (u, v)):
            return None
        try:
            p = P.apply_transformation(p, t, cfg.domain_bound)
        except P.IllegalTransformation:
            return None
        ts.append(t)
    return p, ts


def _swap_moves(p: Program, threads: set, cfg: FixConfig, discipline: bool) -> list:
    idx = P.index(p)
    seqs = {(t, ()) for t in threads}
    for loc in idx.name.values():
        if loc.thread in threads:
            for b, _ in enumerate(P.bodies(loc.stmt)):
                seqs.add((loc.thread, loc.path + (b,)))
    out = []
    for t, sp in sorted(seqs):
        seq = idx.stmt_at(t, sp)
        for i in range(len(seq) - 1):
            u1, u2 = seq[i], seq[i + 1]
            if discipline and (is_preemption_point(u1) or is_preemption_point(u2)):
                continue
            try:
                sw = P.Swap(P.unit_id(u1), P.unit_id(u2))
            except P.ProgramError:
                continue
            if P.swap_legality(p, sw, cfg.domain_bound) is None:
                out.append(sw)
    return out


def _displacement(p: Program, q: Program, keep: set) -> int:
    """How far statements other than ``keep`` moved between ``p`` and ``q``."""
    total = 0
    for tp, tq in zip(p.threads, q.threads):
        before = [l for l in P.labels_in_body(tp.body)]
        after = {l: i for i, l in enumerate(P.labels_in_body(tq.body))}
        total += sum(abs(after[l] - i) for i, l in enumerate(before) if l not in keep)
    return total


def _search_swaps(p: Program, target: C.Constraint, threads: set, cfg: FixConfig,
                  discipline: bool, movers: set = frozenset()):
    """Fewest legal swaps (breadth first) making ``p`` satisfy ``target``.

    Among equally short solutions, prefer moving the ``movers`` statements
    and disturbing the others least.
    """
    if P.satisfies(p, target):
        return p, []
    seen = {p}
    level = [(p, [])]
    while level and len(seen) < cfg.search_nodes:
        found, nxt = [], []
        for q, ts in level:
            for sw in _swap_moves(q, threads, cfg, discipline):
                q2 = P.apply_transformation(q, sw, cfg.domain_bound)
                if q2 in seen:
                    continue
                seen.add(q2)
                if P.satisfies(q2, target):
                    found.append((q2, ts + [sw]))
                nxt.append((q2, ts + [sw]))
        if found:
            return min(found, key=lambda r: _displacement(p, r[0], movers))
        level = nxt
    return None


def realize(opt: FixOption, p: Program, phi: C.Constraint, cfg: FixConfig,
            discipline: bool) -> Optional[Fix]:
    ts = []
    q = p
    for kind, atom in opt.choices:
        if kind == "sched":
            t = P.WaitNotify(atom.a, atom.b)
            try:
                q = P.apply_transformation(q, t)
            except P.IllegalTransformation:
                return None
            ts.append(t)
    for kind, atom in opt.choices:
        if kind == "atom":
            res = _atomic_transformations(q, atom, cfg, discipline)
            if res is None:
                return None
            q, more = res
            ts += more
    target = C.conj(phi, opt.constraint)
    threads = {P.index(q).resolve(a.a).thread for k, a in opt.choices if k == "ord"}
    movers = {a.a for k, a in opt.choices if k == "ord"}
    res = _search_swaps(q, target, threads, cfg, discipline, movers)
    if res is None:
        return None
    q, more = res
    ts += more
    if not P.satisfies(q, target):
        return None
    return Fix(ts, opt.constraint, q, opt.cycle)


def eliminates(tr: E.Trace, q: Program, bounds: E.Bounds) -> bool:
    """The bad trace's event sequence is no longer a bad run of ``q``."""
    t2 = E.replay(q, tr.events, bounds)
    return t2 is None or not t2.bad


# ------------------------------------------------------------------ fix bad


@dataclass
class FixBadResult:
    fix: Fix
    constraint: C.Constraint      # the error-eliminating constraint
    cycles: int
    options_tried: int
    discipline: bool


def fix_bad(p: Program, phi: C.Constraint, tr: E.Trace, cfg: FixConfig = FixConfig()) -> FixBadResult:
    g = generalize_bad_trace(tr, cfg.allow_wait_notify)
    cycles = find_elimination_cycles(g, cfg.cycle_limit)
    discipline = not E.freely_transforms_to_preemption_free(tr, p, cfg.bounds)
    options = [o for cyc in cycles for o in fix_options(cyc, p)]
    options.sort(key=lambda o: (rank_key(o, cfg), o.text))
    tried = 0
    for _, group in itertools.groupby(options, key=lambda o: rank_key(o, cfg)):
        realized, seen = [], set()
        for opt in group:
            if opt.text in seen:
                continue
            seen.add(opt.text)
            tried += 1
            fix = realize(opt, p, phi, cfg, discipline)
            if fix is not None and eliminates(tr, fix.program, cfg.bounds):
                realized.append(fix)
        if realized:
            realized.sort(key=lambda f: (len(f.transformations), C.to_text(f.constraint)))
            best = realized[0]
            return FixBadResult(best, best.constraint, len(cycles), tried, discipline)
    fix = escalate(p, tr, cfg, discipline)
    return FixBadResult(fix, fix.constraint, len(cycles), tried, discipline)


def _escalation_runs(q: Program, block, discipline: bool) -> list:
    """Unit runs of a block to wrap; under the discipline, awaits split runs."""
    if not discipline:
        return [list(block.units)]
    idx = P.index(q)
    runs, cur = [], []
    for u in block.units:
        if is_preemption_point(idx.resolve(u).stmt):
            runs.append(cur)
            cur = []
        else:
            cur.append(u)
    return runs + [cur]


def escalate(p: Program, tr: E.Trace, cfg: FixConfig, discipline: bool = False) -> Fix:
    """Wrap straight-line runs of the involved threads into atomic sections."""
    order = []
    a = failing_position(tr)
    for e in (tr.events[a],) + tr.events:
        if e.thread not in order:
            order.append(e.thread)
    q, ts, atoms = p, [], []
    for t in order:
        for block in P.basic_blocks(q):
            if block.thread != t:
                continue
            for run in _escalation_runs(q, block, discipline):
                if len(run) < 2:
                    continue
                first = P.labels_in(P.index(q).resolve(run[0]).stmt)[0]
                last = P.labels_in(P.index(q).resolve(run[-1]).stmt)[-1]
                res = _atomic_transformations(q, C.Atomicity(first, last), cfg, discipline)
                if res is None:
                    continue
                q, more = res
                ts += more
                atoms.append(C.Atomicity(first, last))
        if eliminates(tr, q, cfg.bounds):
            return Fix(ts, C.conj(*atoms), q, escalated=True,
                       notes=["no elimination cycle could be realised; used atomic sections"])
    raise NoFixFound("no fix eliminates the bad trace")
