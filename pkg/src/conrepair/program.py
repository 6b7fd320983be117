"""Structural queries and transformations on CWhile programs.

Statement positions are *paths*: ``(i0, b0, i1, b1, ..., ik)``.  ``i`` entries
index a statement sequence, ``b`` entries select a body of the container
statement (0 for the only body, 1 for the else branch of ``if (*)``).  A path
of even length names a sequence (``()`` is the thread body), odd length a
statement.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

from . import constraint as C
from .syntax import (
    ERR_VAR, SIMPLE, Assert, Assign, Assume, Atomic, Await, EvalError, Group, IfStar,
    Notify, Program, Skip, Thread, Wait, WhileStar, evaluate, expr_vars, iter_stmts,
    is_preemption_point, stmt_reads, stmt_writes,
)


class ProgramError(Exception):
    pass


class IllegalTransformation(ProgramError):
    pass


BLOCKED = None


# ------------------------------------------------------------------ indexing


def bodies(s) -> tuple:
    if isinstance(s, IfStar):
        return (s.then, s.orelse)
    if isinstance(s, (WhileStar, Group)):
        return (s.body,)
    if isinstance(s, Atomic) and s.label is None:
        return (s.body,)
    return ()


def is_region(s) -> bool:
    return isinstance(s, Atomic) and s.label is None


def is_transparent(s) -> bool:
    """Containers that do not start a new basic block."""
    return is_region(s) or isinstance(s, Group)


def labels_in(s) -> list:
    out = [s.label] if s.label is not None and not is_transparent(s) else []
    for b in bodies(s):
        for inner in iter_stmts(b):
            if inner.label is not None and not is_transparent(inner):
                out.append(inner.label)
    return out


def labels_in_body(body) -> list:
    out = []
    for s in body:
        out += labels_in(s)
    return out


def unit_id(s) -> str:
    if s.label is not None:
        return s.label
    labs = labels_in(s)
    if not labs:
        raise ProgramError("empty container has no identifier")
    return f"{labs[0]}..{labs[-1]}"


@dataclass(frozen=True)
class Loc:
    thread: int
    path: tuple
    stmt: object


class Index:
    def __init__(self, prog: Program):
        self.prog = prog
        self.loc: dict = {}      # statement label -> Loc
        self.name: dict = {}     # label or container id -> Loc
        self.block_of: dict = {}  # label -> basic block id
        self.blocks: list = []
        for ti, th in enumerate(prog.threads):
            self._walk(ti, th.body, ())
            self._blocks(ti, th.body, ())

    def _walk(self, ti, seq, prefix):
        for i, s in enumerate(seq):
            path = prefix + (i,)
            if s.label is not None:
                if s.label in self.loc or s.label in self.name:
                    raise ProgramError(f"duplicate label {s.label!r}")
                if not is_transparent(s):
                    self.loc[s.label] = Loc(ti, path, s)
            try:
                self.name.setdefault(unit_id(s), Loc(ti, path, s))
            except ProgramError:
                pass
            for b, body in enumerate(bodies(s)):
                self._walk(ti, body, path + (b,))

    def _blocks(self, ti, seq, prefix):
        run, run_units, k = [], [], 0

        def flush():
            nonlocal run, run_units, k
            if run_units:
                bid = (ti, prefix, k)
                self.blocks.append(BasicBlock(ti, tuple(run), tuple(run_units), bid))
                for lab in run:
                    self.block_of[lab] = bid
                k += 1
            run, run_units = [], []

        for i, s in enumerate(seq):
            if isinstance(s, (IfStar, WhileStar)):
                flush()
                for b, body in enumerate(bodies(s)):
                    self._blocks(ti, body, prefix + (i, b))
            else:
                run += labels_in(s)
                run_units.append(unit_id(s))
        flush()

    def stmt_at(self, thread: int, path: tuple):
        seq = self.prog.threads[thread].body
        s = None
        for j, step in enumerate(path):
            if j % 2 == 0:
                s = seq[step]
            else:
                seq = bodies(s)[step]
        return s if len(path) % 2 else seq

    def resolve(self, name: str) -> Loc:
        try:
            return self.name[name]
        except KeyError:
            raise ProgramError(f"unknown location {name!r}") from None


@dataclass(frozen=True)
class BasicBlock:
    thread: int
    labels: tuple   # every straight-line statement label in the block
    units: tuple    # movable units (statements, groups, atomic regions)
    ident: tuple


@lru_cache(maxsize=4096)
def index(prog: Program) -> Index:
    return Index(prog)


def validate(prog: Program) -> None:
    index(prog)

    def check(seq, in_unit):
        for s in seq:
            if isinstance(s, Atomic) and s.label is not None:
                for inner in s.body:
                    if not isinstance(inner, SIMPLE) or inner.label is not None:
                        raise ProgramError(
                            f"labeled atomic block {s.label!r} may only hold unlabeled simple statements")
            if isinstance(s, (IfStar, WhileStar)) and in_unit:
                raise ProgramError("branches are not allowed inside atomic regions or groups")
            for b in bodies(s):
                check(b, in_unit or is_transparent(s))

    for th in prog.threads:
        check(th.body, False)


def basic_blocks(prog: Program) -> list:
    return list(index(prog).blocks)


def variables(prog: Program) -> list:
    out = {ERR_VAR} | set(prog.init_map)
    for th in prog.threads:
        for s in iter_stmts(th.body):
            out |= stmt_reads(s) | stmt_writes(s)
            if isinstance(s, Atomic):
                for inner in s.body:
                    out |= stmt_reads(inner) | stmt_writes(inner)
    return sorted(out)


# ----------------------------------------------------------------- semantics


def exec_stmt(s, env: dict) -> Optional[dict]:
    """Run a statement sequentially; returns the new valuation or BLOCKED."""
    if isinstance(s, Assign):
        env = dict(env)
        env[s.var] = evaluate(s.expr, env)
        return env
    if isinstance(s, (Assume, Await)):
        return env if evaluate(s.cond, env) else BLOCKED
    if isinstance(s, Assert):
        if evaluate(s.cond, env):
            return env
        env = dict(env)
        env[ERR_VAR] = 1
        return env
    if isinstance(s, Skip):
        return env
    if isinstance(s, Wait):
        return env if env.get(s.signal, 0) == 1 else BLOCKED
    if isinstance(s, Notify):
        env = dict(env)
        env[s.signal] = 1
        return env
    if isinstance(s, (Atomic, Group)):
        for inner in s.body:
            env = exec_stmt(inner, env)
            if env is BLOCKED:
                return BLOCKED
        return env
    raise ProgramError(f"cannot execute {type(s).__name__} as straight-line code")


def _unit_vars(s) -> set:
    out = set(stmt_reads(s) | stmt_writes(s))
    if isinstance(s, (Atomic, Group)):
        for inner in s.body:
            out |= _unit_vars(inner)
    return out - {ERR_VAR}


def sequentially_equivalent(prog: Program, l1: str, l2: str, domain_bound: int = 2) -> bool:
    """Exhaustively compare ``l1; l2`` with ``l2; l1`` over a bounded domain."""
    idx = index(prog)
    s1, s2 = idx.resolve(l1).stmt, idx.resolve(l2).stmt
    return _equiv(s1, s2, domain_bound)


@lru_cache(maxsize=65536)
def _equiv(s1, s2, domain_bound: int) -> bool:
    if isinstance(s1, (IfStar, WhileStar)) or isinstance(s2, (IfStar, WhileStar)):
        return False
    vs = sorted(_unit_vars(s1) | _unit_vars(s2))
    rng = range(-domain_bound, domain_bound + 1)

    def outcome(first, second, env):
        try:
            e = exec_stmt(first, env)
            if e is BLOCKED:
                return "blocked"
            e = exec_stmt(second, e)
            return "blocked" if e is BLOCKED else tuple(sorted(e.items()))
        except EvalError:
            return "error"

    for values in itertools.product(rng, repeat=len(vs)):
        env = dict(zip(vs, values))
        env[ERR_VAR] = 0
        if outcome(s1, s2, env) != outcome(s2, s1, env):
            return False
    return True


# ----------------------------------------------------------------- rebuilding


def _replace_seq(seq: tuple, path: tuple, new_seq: tuple) -> tuple:
    if not path:
        return new_seq
    i, b, rest = path[0], path[1], path[2:]
    s = seq[i]
    bs = list(bodies(s))
    bs[b] = _replace_seq(bs[b], rest, new_seq)
    if isinstance(s, IfStar):
        s2 = IfStar(s.label, bs[0], bs[1])
    elif isinstance(s, WhileStar):
        s2 = WhileStar(s.label, bs[0])
    elif isinstance(s, Group):
        s2 = Group(s.label, bs[0])
    else:
        s2 = Atomic(s.label, bs[0])
    return seq[:i] + (s2,) + seq[i + 1:]


def replace_seq(prog: Program, thread: int, seq_path: tuple, new_seq: tuple) -> Program:
    th = prog.threads[thread]
    threads = list(prog.threads)
    threads[thread] = Thread(th.name, _replace_seq(th.body, seq_path, new_seq))
    return Program(tuple(threads), prog.init)


# ------------------------------------------------------------ transformations


@dataclass(frozen=True)
class Swap:
    """Exchange the adjacent units ``a; b`` into ``b; a``."""

    a: str
    b: str

    def text(self) -> str:
        return f"swap({self.a}, {self.b})"


@dataclass(frozen=True)
class AtomicSection:
    """Put the neighbouring units ``a; b`` into one atomic region."""

    a: str
    b: str

    def text(self) -> str:
        return f"atomic({self.a}, {self.b})"


@dataclass(frozen=True)
class WaitNotify:
    """Insert ``notify(s)`` after ``notify_after`` and ``wait(s)`` before ``wait_before``."""

    notify_after: str
    wait_before: str

    def text(self) -> str:
        return f"waitnotify({self.notify_after}, {self.wait_before})"


Transformation = Union[Swap, AtomicSection, WaitNotify]


def _adjacent_units(prog: Program, a: str, b: str):
    """Sibling units containing ``a`` and ``b`` in their innermost common sequence."""
    idx = index(prog)
    la, lb = idx.resolve(a), idx.resolve(b)
    if la.thread != lb.thread:
        raise IllegalTransformation(f"{a} and {b} are in different threads")
    pa, pb = la.path, lb.path
    k = 0
    while k < min(len(pa), len(pb)) and pa[k] == pb[k]:
        k += 1
    if k % 2 == 1 or k >= min(len(pa), len(pb)):
        raise IllegalTransformation(f"{a} and {b} are not in one statement sequence")
    seq_path = pa[:k]
    ia, ib = pa[k], pb[k]
    if ib != ia + 1:
        raise IllegalTransformation(f"{a} does not immediately precede {b}")
    seq = idx.stmt_at(la.thread, seq_path)
    return la.thread, seq_path, seq, ia, ib


def container_chain(prog: Program, thread: int, seq_path: tuple) -> list:
    """Container statements enclosing a sequence, outermost first."""
    idx = index(prog)
    return [idx.stmt_at(thread, seq_path[:j + 1]) for j in range(0, len(seq_path), 2)]


def swap_legality(prog: Program, t: Swap, domain_bound: int = 2) -> Optional[str]:
    """Reason the swap is illegal, or None."""
    try:
        thread, seq_path, seq, ia, ib = _adjacent_units(prog, t.a, t.b)
    except (IllegalTransformation, ProgramError) as exc:
        return str(exc)
    chain = container_chain(prog, thread, seq_path)
    if chain and isinstance(chain[-1], Group):
        return "statements of a group cannot be reordered"
    u1, u2 = seq[ia], seq[ib]
    if isinstance(u1, (IfStar, WhileStar)) or isinstance(u2, (IfStar, WhileStar)):
        return "not in the same basic block"
    if not _equiv(u1, u2, domain_bound):
        return f"{unit_id(u1)}; {unit_id(u2)} is not sequentially equivalent to the swapped order"
    return None


def acts_across_preemption(prog: Program, t: Transformation) -> bool:
    idx = index(prog)
    if isinstance(t, Swap):
        return (is_preemption_point(idx.resolve(t.a).stmt)
                or is_preemption_point(idx.resolve(t.b).stmt))
    if isinstance(t, AtomicSection):
        return is_preemption_point(idx.resolve(t.b).stmt)
    return False


def apply_transformation(prog: Program, t: Transformation, domain_bound: int = 2) -> Program:
    if isinstance(t, Swap):
        why = swap_legality(prog, t, domain_bound)
        if why:
            raise IllegalTransformation(f"{t.text()}: {why}")
        thread, seq_path, seq, ia, ib = _adjacent_units(prog, t.a, t.b)
        new = seq[:ia] + (seq[ib], seq[ia]) + seq[ib + 1:]
        return replace_seq(prog, thread, seq_path, new)
    if isinstance(t, AtomicSection):
        try:
            thread, seq_path, seq, ia, ib = _adjacent_units(prog, t.a, t.b)
        except ProgramError as exc:
            raise IllegalTransformation(f"{t.text()}: {exc}") from None
        if any(is_region(c) for c in container_chain(prog, thread, seq_path)):
            raise IllegalTransformation(f"{t.text()}: already inside an atomic section")
        u1, u2 = seq[ia], seq[ib]
        if isinstance(u1, (IfStar, WhileStar)) or isinstance(u2, (IfStar, WhileStar)):
            raise IllegalTransformation(f"{t.text()}: branches cannot be made atomic")
        body = (u1.body if is_region(u1) else (u1,)) + (u2.body if is_region(u2) else (u2,))
        new = seq[:ia] + (Atomic(None, body),) + seq[ib + 1:]
        return replace_seq(prog, thread, seq_path, new)
    if isinstance(t, WaitNotify):
        idx = index(prog)
        try:
            ln, lw = idx.resolve(t.notify_after), idx.resolve(t.wait_before)
        except ProgramError as exc:
            raise IllegalTransformation(f"{t.text()}: {exc}") from None
        if ln.thread == lw.thread:
            raise IllegalTransformation(f"{t.text()}: wait/notify needs two threads")
        taken = set(variables(prog)) | set(idx.name)
        k = 1
        while f"sig{k}" in taken or f"notify{k}" in taken or f"wait{k}" in taken:
            k += 1
        sig = f"sig{k}"
        # insert the wait first: paths of the notify side stay valid across threads
        seq_w = idx.stmt_at(lw.thread, lw.path[:-1])
        i = lw.path[-1]
        prog = replace_seq(prog, lw.thread, lw.path[:-1],
                           seq_w[:i] + (Wait(f"wait{k}", sig),) + seq_w[i:])
        idx = index(prog)
        seq_n = idx.stmt_at(ln.thread, ln.path[:-1])
        i = ln.path[-1]
        return replace_seq(prog, ln.thread, ln.path[:-1],
                           seq_n[:i + 1] + (Notify(f"notify{k}", sig),) + seq_n[i + 1:])
    raise TypeError(t)


def apply_all(prog: Program, ts, domain_bound: int = 2) -> Program:
    for t in ts:
        prog = apply_transformation(prog, t, domain_bound)
    return prog


# ---------------------------------------------------------------- constraints


def _common(pa: tuple, pb: tuple) -> int:
    k = 0
    while k < min(len(pa), len(pb)) and pa[k] == pb[k]:
        k += 1
    return k


def holds_atomicity(prog: Program, a: str, b: str) -> bool:
    idx = index(prog)
    la, lb = idx.resolve(a), idx.resolve(b)
    if la.thread != lb.thread:
        return False
    k = _common(la.path, lb.path)
    # containers shared by both: odd-length prefixes of the common part
    for j in range(1, k + 1, 2):
        if is_region(idx.stmt_at(la.thread, la.path[:j])) and j < len(la.path) and j < len(lb.path):
            return True
    return False


def holds_ordering(prog: Program, a: str, b: str) -> bool:
    if a == b:
        return True
    idx = index(prog)
    la, lb = idx.resolve(a), idx.resolve(b)
    if la.thread != lb.thread:
        return False
    if holds_atomicity(prog, a, b):
        return True
    if idx.block_of.get(a) is None or idx.block_of.get(a) != idx.block_of.get(b):
        return False
    k = _common(la.path, lb.path)
    if k % 2 == 1:
        return False
    return la.path[k] < lb.path[k]


def holds_scheduling(prog: Program, a: str, b: str) -> bool:
    idx = index(prog)
    notified, waited = {}, {}
    for ti, th in enumerate(prog.threads):
        for s in iter_stmts(th.body):
            if isinstance(s, (Notify, Wait)) and s.label in idx.loc:
                loc = idx.loc[s.label]
                seq = idx.stmt_at(ti, loc.path[:-1])
                i = loc.path[-1]
                step = -1 if isinstance(s, Notify) else 1
                j = i + step
                while 0 <= j < len(seq) and isinstance(seq[j], (Notify, Wait)):
                    j += step
                if 0 <= j < len(seq):
                    target = notified if isinstance(s, Notify) else waited
                    target.setdefault(s.signal, set()).update(labels_in(seq[j]) + [unit_id(seq[j])])
    return any(a in notified[sig] and b in waited.get(sig, ()) for sig in notified)


def holds(prog: Program, atom) -> bool:
    if isinstance(atom, C.Ordering):
        return holds_ordering(prog, atom.a, atom.b)
    if isinstance(atom, C.Atomicity):
        return holds_atomicity(prog, atom.a, atom.b)
    if isinstance(atom, C.Scheduling):
        return holds_scheduling(prog, atom.a, atom.b)
    raise TypeError(atom)


def satisfies(prog: Program, c) -> bool:
    idx = index(prog)
    for atom in C.atoms(c):
        for lab in (atom.a, atom.b):
            idx.resolve(lab)
    return C.evaluate(c, lambda atom: holds(prog, atom))
