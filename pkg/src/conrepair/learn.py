"""Learning regression-preventing constraints from good traces.

``learn_good`` is the polynomial cover-based learner; ``check_regression``
decides the regression definition directly on trace closures, and
``sound_complete_oracle`` brute-forces the exact constraint over a small
family of transformed programs (used as a test oracle).
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import constraint as C
from . import explorer as E
from . import program as P
from .syntax import Program
from .tracegraph import BOT, TraceGraph, last

log = logging.getLogger(__name__)


@dataclass
class LearnResult:
    constraint: C.Constraint
    warnings: list = field(default_factory=list)
    fallback: bool = False


def _ordering(g: TraceGraph, x: int, y: int):
    """Atom for an intra-thread hop, or None when the learner drops it."""
    if x == BOT:
        return None
    tx, ty = g.info.tags[x], g.info.tags[y]
    if tx is None or tx != ty:
        return None
    return C.Ordering(g.tr.events[x].label, g.tr.events[y].label)


def target_edges(g: TraceGraph) -> list:
    """DFAsserts edges plus the interference edges of each of them."""
    out = set(g.dfasserts)
    for (w, r) in g.dfasserts:
        out |= g.interfere(w, r)
    return sorted(out)


def fallback_constraint(g: TraceGraph) -> C.Constraint:
    """Every intra-thread order inside one execution of a basic block."""
    atoms = []
    for x in range(g.n):
        for y in range(x + 1, g.n):
            if g.thread(x) == g.thread(y):
                a = _ordering(g, x, y)
                if a is not None and a.a != a.b:
                    atoms.append(a)
    return C.conj(*atoms)


def learn_good_report(tr: E.Trace, prog: Optional[Program] = None, *,
                      sound_fallback: bool = False, max_covers: int = 64) -> LearnResult:
    prog = prog or tr.program
    if tr.bad:
        raise ValueError("learn_good needs a good trace")
    if E.replay(prog, tr.events) is None:
        raise ValueError("trace is not a run of the program")
    g = TraceGraph(tr if tr.program is prog else E.replay(prog, tr.events))
    phi, warnings = C.TRUE, []
    for (x, y) in target_edges(g):
        covers = g.find_covers(x, y, max_covers)
        if not covers:
            msg = f"edge {g.node_name(x)} -> {g.node_name(y)} has no cover"
            if sound_fallback:
                return LearnResult(fallback_constraint(g), [msg + "; using fallback"], True)
            warnings.append(msg + "; ignored")
            log.info(msg)
            continue
        options = []
        for cov in covers:
            atoms = [a for a in (_ordering(g, a, b) for a, b in cov.intra) if a is not None]
            options.append(C.conj(*atoms))
        phi = C.conj(phi, C.disj(*options))
    return LearnResult(phi, warnings)


def learn_good(tr: E.Trace, prog: Optional[Program] = None, **kw) -> C.Constraint:
    return learn_good_report(tr, prog, **kw).constraint


# ----------------------------------------------------------------- regression


@dataclass(frozen=True)
class RegressionResult:
    status: str                       # absent | present | unknown
    witness: Optional[E.Trace] = None
    note: str = ""

    @property
    def present(self) -> bool:
        return self.status == "present"


def event_ids(tr: E.Trace) -> list:
    seen, out = {}, []
    for e in tr.events:
        k = seen.get((e.thread, e.label), 0)
        seen[(e.thread, e.label)] = k + 1
        out.append((e.thread, e.label, k))
    return out


def preserves_dfconds(orig: E.Trace, g: TraceGraph, image: E.Trace) -> bool:
    pos = {eid: i for i, eid in enumerate(event_ids(image))}
    ids = event_ids(orig)
    info = None
    from .tracegraph import TraceInfo

    for (w, r), vs in g.dfconds.items():
        if ids[r] not in pos:
            return False
        pr = pos[ids[r]]
        pw = BOT if w == BOT else pos.get(ids[w])
        if pw is None:
            return False
        info = info or TraceInfo(image)
        for v in vs:
            if v not in info.reads[pr] or last(image, pr, v, info) != pw:
                return False
    return True


def _sorted_traces(traces) -> list:
    return sorted(traces, key=lambda t: (len(t.events), [e.text() for e in t.events]))


def check_regression(ts, p: Program, p2: Program, tr: E.Trace,
                     bounds: E.Bounds = E.Bounds(), budget: int = 100_000) -> RegressionResult:
    ts = list(ts)
    if any(isinstance(t, P.WaitNotify) for t in ts):
        return RegressionResult("absent", note="wait/notify insertion has no trace image")
    try:
        for steps in E.free_closure(p, [E.steps_of(tr)], bounds, budget):
            t2 = E.replay_steps(p, steps, bounds)
            if t2 is not None and t2.bad:
                return RegressionResult("absent", note="trace already freely transforms to a bad trace")
        programs = [p]
        for t in ts:
            programs.append(P.apply_transformation(programs[-1], t))
        if programs[-1] != p2:
            raise ValueError("transformations do not produce the given program")
        images = E.transformation_closure(tr, ts, programs, bounds, budget)
    except E.ClosureBudgetExceeded as exc:
        return RegressionResult("unknown", note=str(exc))
    g = TraceGraph(tr)
    for image in _sorted_traces(images or ()):
        if image.bad and preserves_dfconds(tr, g, image):
            return RegressionResult("present", image)
    return RegressionResult("absent")


# --------------------------------------------------------------------- oracle


def neighbours(p: Program, domain_bound: int = 2) -> list:
    """Every legal single swap or atomic-section insertion."""
    out = []
    idx = P.index(p)
    seqs = [(ti, ()) for ti in range(len(p.threads))]
    for name, loc in idx.name.items():
        for b, _ in enumerate(P.bodies(loc.stmt)):
            seqs.append((loc.thread, loc.path + (b,)))
    for ti, sp in sorted(set(seqs)):
        seq = idx.stmt_at(ti, sp)
        for i in range(len(seq) - 1):
            try:
                a, b = P.unit_id(seq[i]), P.unit_id(seq[i + 1])
            except P.ProgramError:
                continue
            for t in (P.Swap(a, b), P.AtomicSection(a, b)):
                try:
                    out.append((t, P.apply_transformation(p, t, domain_bound)))
                except P.IllegalTransformation:
                    pass
    return out


def reachable_programs(p: Program, k: int, domain_bound: int = 2) -> list:
    """(program, transformation list) for programs within k transformations, BFS order."""
    seen = {p: ()}
    order = [(p, ())]
    frontier = deque([(p, ())])
    while frontier:
        q, ts = frontier.popleft()
        if len(ts) >= k:
            continue
        for t, q2 in neighbours(q, domain_bound):
            if q2 not in seen:
                seen[q2] = ts + (t,)
                order.append((q2, ts + (t,)))
                frontier.append((q2, ts + (t,)))
    return order


def atom_universe(p: Program) -> list:
    out = []
    idx = P.index(p)
    by_thread = {}
    for lab, loc in idx.loc.items():
        if lab in idx.block_of:
            by_thread.setdefault(loc.thread, []).append(lab)
    for labs in by_thread.values():
        for a in labs:
            for b in labs:
                if a != b:
                    out.append(C.Ordering(a, b))
                    if (idx.loc[a].path < idx.loc[b].path):
                        out.append(C.Atomicity(a, b))
    return out


@dataclass
class OracleResult:
    constraint: C.Constraint
    family: list            # (program, transformations, regresses)
    exact: bool


def sound_complete_oracle(tr: E.Trace, p: Program, k: int = 1,
                          bounds: E.Bounds = E.Bounds(), domain_bound: int = 2) -> OracleResult:
    if len(tr.events) > 10 or k > 3:
        raise ValueError("oracle is limited to traces of at most 10 events and k <= 3")
    family = []
    for q, ts in reachable_programs(p, k, domain_bound):
        res = check_regression(ts, p, q, tr, bounds)
        family.append((q, ts, res.status != "absent"))
    universe = atom_universe(p)
    varying = [a for a in universe
               if len({P.holds(q, a) for q, _, _ in family}) > 1]
    terms = [C.conj(*[a for a in varying if P.holds(q, a)])
             for q, _, bad in family if not bad]
    phi = C.disj(*terms)
    exact = all(P.satisfies(q, phi) == (not bad) for q, _, bad in family)
    return OracleResult(phi, family, exact)
