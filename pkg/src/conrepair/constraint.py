"""Program constraints: boolean formulas over ordering, atomicity and scheduling atoms.

Canonical text form::

    (B <= C) & (n <= p)     ordering atoms, conjoined
    [A;B]                   atomicity atom
    B -> 1                  scheduling atom (B is scheduled before 1)
    (1 <= 2) | [A;B]        disjunction
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Union


def label_key(label: str):
    """Natural sort key: numeric labels first, in numeric order."""
    parts = re.split(r"(\d+)", label)
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in parts if p != "")


@dataclass(frozen=True)
class Ordering:
    """``a <= b``: same basic block and a before b, or both in one atomic block."""

    a: str
    b: str

    def text(self) -> str:
        return f"{self.a} <= {self.b}"


@dataclass(frozen=True)
class Atomicity:
    a: str
    b: str

    def text(self) -> str:
        return f"[{self.a};{self.b}]"


@dataclass(frozen=True)
class Scheduling:
    """``a -> b``: a wait/notify pair forces a to be scheduled before b."""

    a: str
    b: str

    def text(self) -> str:
        return f"{self.a} -> {self.b}"


Atom = Union[Ordering, Atomicity, Scheduling]
ATOM_TYPES = (Ordering, Atomicity, Scheduling)


@dataclass(frozen=True)
class And:
    args: frozenset


@dataclass(frozen=True)
class Or:
    args: frozenset


@dataclass(frozen=True)
class BoolConst:
    value: bool


TRUE = BoolConst(True)
FALSE = BoolConst(False)

Constraint = Union[Atom, And, Or, BoolConst]


def _flatten(kind, items):
    for c in items:
        if isinstance(c, kind):
            yield from c.args
        else:
            yield c


def _as_set(c) -> frozenset:
    """Members of a junction, viewed as a set for absorption."""
    return c.args if isinstance(c, (And, Or)) else frozenset((c,))


def conj(*cs: Constraint) -> Constraint:
    items = set(_flatten(And, cs))
    if FALSE in items:
        return FALSE
    items.discard(TRUE)
    # absorption: x & (x | y) == x, also when x is a conjunction of items
    plain = {c for c in items if not isinstance(c, Or)}
    items = {c for c in items
             if not (isinstance(c, Or) and (
                 any(o is not c and _as_set(o) <= c.args for o in items)
                 or any(_as_set(d) <= plain for d in c.args)))}
    if not items:
        return TRUE
    if len(items) == 1:
        return next(iter(items))
    return And(frozenset(items))


def disj(*cs: Constraint) -> Constraint:
    items = set(_flatten(Or, cs))
    if TRUE in items:
        return TRUE
    items.discard(FALSE)
    # absorption: x | (x & y) == x
    items = {c for c in items
             if not (isinstance(c, And) and any(o is not c and _as_set(o) <= c.args for o in items))}
    if not items:
        return FALSE
    if len(items) == 1:
        return next(iter(items))
    return Or(frozenset(items))


def atoms(c: Constraint) -> frozenset:
    if isinstance(c, ATOM_TYPES):
        return frozenset((c,))
    if isinstance(c, (And, Or)):
        return frozenset().union(*(atoms(a) for a in c.args))
    return frozenset()


def evaluate(c: Constraint, holds: Callable[[Atom], bool]) -> bool:
    if isinstance(c, BoolConst):
        return c.value
    if isinstance(c, And):
        return all(evaluate(a, holds) for a in c.args)
    if isinstance(c, Or):
        return any(evaluate(a, holds) for a in c.args)
    return holds(c)


def _truth_table(cs, limit=16):
    universe = sorted(set().union(*(atoms(c) for c in cs)), key=_sort_key)
    if len(universe) > limit:
        raise ValueError(f"too many atoms ({len(universe)}) for a truth-table check")
    for values in itertools.product((False, True), repeat=len(universe)):
        env = dict(zip(universe, values))
        yield env.__getitem__


def implies(c1: Constraint, c2: Constraint) -> bool:
    """Propositional implication, atoms treated as independent variables."""
    return all(evaluate(c2, h) for h in _truth_table([c1, c2]) if evaluate(c1, h))


def equivalent(c1: Constraint, c2: Constraint) -> bool:
    return all(evaluate(c1, h) == evaluate(c2, h) for h in _truth_table([c1, c2]))


# ------------------------------------------------------------------ text form


def _sort_key(c):
    if isinstance(c, ATOM_TYPES):
        return (0, label_key(c.a), label_key(c.b), ATOM_TYPES.index(type(c)))
    return (1, (), (), to_text(c))


def to_text(c: Constraint, nested: bool = False) -> str:
    if isinstance(c, BoolConst):
        return "true" if c.value else "false"
    if isinstance(c, Atomicity):
        return c.text()
    if isinstance(c, ATOM_TYPES):
        return f"({c.text()})" if nested else c.text()
    sep = " & " if isinstance(c, And) else " | "
    body = sep.join(to_text(a, nested=True) for a in sorted(c.args, key=_sort_key))
    return f"({body})" if nested else body


_TOK = re.compile(r"\s*(<=|->|[()\[\];&|]|[A-Za-z0-9_'.]+)")


def parse_constraint(text: str) -> Constraint:
    toks, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m:
            raise ValueError(f"bad constraint text at {pos}: {text!r}")
        toks.append(m.group(1))
        pos = m.end()
    toks.append("")
    i = 0

    def peek():
        return toks[i] if i < len(toks) else ""

    def take(expected=None):
        nonlocal i
        t = peek()
        if t == "" or (expected is not None and t != expected):
            raise ValueError(f"expected {expected or 'more input'!r} got {t or 'end of input'!r} in {text!r}")
        i += 1
        return t

    def label():
        t = take()
        if t in ("&", "|", "(", ")", ";", "[", "]", "<=", "->"):
            raise ValueError(f"expected a label, got {t!r} in {text!r}")
        return t

    def disjunction():
        parts = [conjunction()]
        while peek() == "|":
            take()
            parts.append(conjunction())
        return disj(*parts)

    def conjunction():
        parts = [primary()]
        while peek() == "&":
            take()
            parts.append(primary())
        return conj(*parts)

    def primary():
        t = peek()
        if t == "(":
            take()
            c = disjunction()
            take(")")
            return c
        if t == "[":
            take()
            a = label()
            take(";")
            b = label()
            take("]")
            return Atomicity(a, b)
        if t in ("true", "false"):
            take()
            return TRUE if t == "true" else FALSE
        a = label()
        op = take()
        b = label()
        if op == "<=":
            return Ordering(a, b)
        if op == "->":
            return Scheduling(a, b)
        raise ValueError(f"unknown operator {op!r} in {text!r}")

    c = disjunction()
    if peek() != "":
        raise ValueError(f"trailing input in {text!r}")
    return c
