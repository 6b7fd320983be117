"""The repair loop: learn from good traces, fix bad traces, accumulate constraints."""
from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field
from typing import Optional

from . import constraint as C
from . import explorer as E
from . import fixbad as F
from . import learn as L
from . import program as P
from .syntax import Program

log = logging.getLogger(__name__)

MODES = ("mixed", "bad-only")
HEURISTICS = ("ce1", "ce2")


class InputContractError(Exception):
    """The input program has a bad complete sequential trace."""


@dataclass(frozen=True)
class RepairConfig:
    mode: str = "mixed"
    heuristic: str = "ce1"
    bounds: E.Bounds = E.Bounds()
    max_good: int = 10
    max_iterations: int = 64
    sound_fallback: bool = False
    allow_wait_notify: bool = False
    seed: Optional[int] = None
    equivalence_bound: int = 2
    closure_budget: int = 100_000
    max_good_images: int = 2
    check_regressions: bool = True
    audit: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}")
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")


@dataclass
class IterationRecord:
    kind: str                         # "good" (learning) or "bad" (FixBad)
    trace: str
    constraint: str                   # constraint learned / adopted in this step
    transformations: list = field(default_factory=list)
    cycle: Optional[str] = None
    regressions: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    dump: str = field(default="", repr=False)   # full trace dump (not part of reports)

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "dump"}


@dataclass
class RepairResult:
    status: str                       # fixed | input-contract-violation | budget-exhausted | unknown | no-fix
    original: Program
    program: Program
    constraint: C.Constraint = C.TRUE
    transformations: list = field(default_factory=list)
    history: list = field(default_factory=list)
    iterations: int = 0
    good_analyzed: int = 0
    timings: dict = field(default_factory=dict)
    message: str = ""
    regression_free: bool = True
    monotone: bool = True
    satisfies_constraint: bool = True
    preservation: dict = field(default_factory=dict)

    @property
    def fixed(self) -> bool:
        return self.status == "fixed"


def bad_sequential_trace(p: Program, bounds: E.Bounds) -> Optional[E.Trace]:
    for tr in E.enumerate_traces(p, bounds, "sequentialOnly"):
        if tr.complete and tr.bad:
            return tr
    return None


def choose_good_traces(p: Program, cfg: RepairConfig) -> list:
    """Preemption-free complete good traces first, then short preemptive ones."""
    traces = E.good_traces(p, cfg.bounds, limit=10 ** 6 if cfg.seed is not None else cfg.max_good)
    if cfg.seed is not None:
        pf = [t for t in traces if t.preemption_free]
        rest = [t for t in traces if not t.preemption_free]
        random.Random(cfg.seed).shuffle(pf)
        traces = (pf + rest)
    return traces[:cfg.max_good]


def adjust_good_traces(goods: list, ts: list, before: Program, after: Program,
                       cfg: RepairConfig, notes: list) -> list:
    """Map good traces through the applied transformations (Alg. 2 line 9)."""
    if not ts:
        return list(goods)
    programs = [before]
    for t in ts:
        programs.append(P.apply_transformation(programs[-1], t, cfg.equivalence_bound))
    out = []
    for tr in goods:
        try:
            images = E.transformation_closure(tr, ts, programs, cfg.bounds, cfg.closure_budget)
        except E.ClosureBudgetExceeded:
            notes.append(f"good trace {tr} dropped: closure budget exceeded")
            continue
        if images is None:
            notes.append(f"good trace {tr} dropped: transformation has no trace image")
            continue
        kept = [t for t in sorted(images, key=lambda t: [e.text() for e in t.events])
                if t.complete and t.good][:cfg.max_good_images]
        if not kept:
            notes.append(f"good trace {tr} dropped: no image in the new program")
        out += kept
    return out[:cfg.max_good * cfg.max_good_images]


def _monotone(new: C.Constraint, old: C.Constraint) -> bool:
    try:
        return C.implies(new, old)
    except ValueError:
        # too many atoms for a truth table: new is built as old & delta
        return isinstance(new, C.And) and (old == C.TRUE or _as_set(old) <= new.args)


def _as_set(c):
    return c.args if isinstance(c, C.And) else frozenset((c,))


def repair(p: Program, cfg: RepairConfig = RepairConfig()) -> RepairResult:
    timings = {"learn_ms": 0.0, "verify_ms": 0.0, "fix_ms": 0.0, "audit_ms": 0.0}
    result = RepairResult("unknown", p, p, timings=timings)

    def clock(key, t0):
        timings[key] += (time.perf_counter() - t0) * 1000

    t0 = time.perf_counter()
    if not cfg.allow_wait_notify:
        bad_seq = bad_sequential_trace(p, cfg.bounds)
        if bad_seq is not None:
            result.status = "input-contract-violation"
            result.message = f"sequential trace {bad_seq} is bad"
            clock("verify_ms", t0)
            return result
    clock("verify_ms", t0)

    phi = C.TRUE
    goods = []
    if cfg.mode == "mixed":
        t0 = time.perf_counter()
        for tr in choose_good_traces(p, cfg):
            res = L.learn_good_report(tr, p, sound_fallback=cfg.sound_fallback)
            phi = C.conj(phi, res.constraint)
            goods.append(tr)
            result.history.append(IterationRecord("good", str(tr), C.to_text(res.constraint),
                                                  notes=res.warnings, dump=tr.dump()))
        result.good_analyzed = len(goods)
        clock("learn_ms", t0)

    current, applied, reorder_fixes = p, [], 0
    while True:
        t0 = time.perf_counter()
        verdict = E.verify(current, cfg.bounds)
        clock("verify_ms", t0)
        if verdict.status == "correct":
            result.status = "fixed"
            break
        if verdict.status == "unknown":
            result.status = "unknown"
            result.message = verdict.reason
            break
        if result.iterations >= cfg.max_iterations:
            result.status = "budget-exhausted"
            result.message = f"no fix within {cfg.max_iterations} iterations"
            break
        result.iterations += 1
        t0 = time.perf_counter()
        fcfg = F.FixConfig(heuristic=cfg.heuristic, reorder_fixes=reorder_fixes,
                           allow_wait_notify=cfg.allow_wait_notify,
                           domain_bound=cfg.equivalence_bound, bounds=cfg.bounds)
        try:
            fb = F.fix_bad(current, phi, verdict.trace, fcfg)
        except F.NoFixFound as exc:
            clock("fix_ms", t0)
            result.status = "no-fix"
            result.message = str(exc)
            break
        clock("fix_ms", t0)
        fix = fb.fix
        record = IterationRecord("bad", str(verdict.trace), C.to_text(fb.constraint),
                                 [t.text() for t in fix.transformations],
                                 fix.cycle.text() if fix.cycle else None, notes=list(fix.notes),
                                 dump=verdict.trace.dump())
        if cfg.check_regressions:
            for g in goods:
                r = L.check_regression(fix.transformations, current, fix.program, g,
                                       cfg.bounds, cfg.closure_budget)
                if r.status == "present":
                    record.regressions.append(f"{g} -> {r.witness}")
                    result.regression_free = False
                elif r.status == "unknown":
                    record.notes.append(f"regression check unknown for {g}: {r.note}")
        new_phi = C.conj(phi, fb.constraint)
        if not _monotone(new_phi, phi):
            result.monotone = False
        if not P.satisfies(fix.program, new_phi):
            result.satisfies_constraint = False
            record.notes.append("fixed program violates the accumulated constraint")
        goods = adjust_good_traces(goods, fix.transformations, current, fix.program, cfg, record.notes)
        if any(isinstance(t, P.Swap) for t in fix.transformations) and not any(
                isinstance(t, P.AtomicSection) for t in fix.transformations):
            reorder_fixes += 1
        result.history.append(record)
        current, phi = fix.program, new_phi
        applied += fix.transformations

    result.program = current
    result.constraint = phi
    result.transformations = applied
    if result.fixed and cfg.audit:
        t0 = time.perf_counter()
        result.preservation = preservation_audit(p, applied, cfg)
        clock("audit_ms", t0)
    return result


def preservation_audit(p: Program, ts: list, cfg: RepairConfig) -> dict:
    """Check that sequential (and, if all good, preemption-free) traces survive."""
    out = {}
    programs = [p]
    for t in ts:
        programs.append(P.apply_transformation(programs[-1], t, cfg.equivalence_bound))

    def check(policy, want):
        status = "ok"
        for tr in E.enumerate_traces(p, cfg.bounds, policy):
            if not tr.complete:
                continue
            try:
                images = E.transformation_closure(tr, ts, programs, cfg.bounds, cfg.closure_budget)
            except E.ClosureBudgetExceeded:
                return "unknown"
            if images is None:
                return "unknown"
            if not any(i.complete and getattr(i, want) for i in images):
                return f"missing image of {tr}"
        return status

    out["sequential"] = check("sequentialOnly", "sequential")
    pf = [t for t in E.enumerate_traces(p, cfg.bounds, "preemptionFreeOnly") if t.complete]
    if pf and all(t.good for t in pf):
        out["preemption_free"] = check("preemptionFreeOnly", "preemption_free")
    else:
        out["preemption_free"] = "not required"
    return out
