"""Trace analysis graphs: data-flow, non-free orders, covers and interference."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import networkx as nx

from . import program as P
from .explorer import Trace
from .syntax import (
    Assert, Assume, Atomic, Await, Wait, has_kind, stmt_reads, stmt_writes,
)

BOT = -1

INTRA = "IntraThreadOrder"
DFCONDS = "DFConds"
DFASSERTS = "DFAsserts"
NONFREE = "NonFreeOrder"
KINDS = (INTRA, DFCONDS, DFASSERTS, NONFREE)


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: str
    vars: frozenset = frozenset()


@dataclass(frozen=True)
class Cover:
    path: tuple            # node sequence x1..xn
    intra: tuple           # (x, y) hops that can only be taken as intra-thread order


class TraceInfo:
    """Static read/write facts for every event of a trace."""

    def __init__(self, tr: Trace):
        self.tr = tr
        idx = P.index(tr.program)
        self.stmts = [idx.loc[e.label].stmt for e in tr.events]
        self.reads = [frozenset() if e.branch is not None else stmt_reads(s)
                      for e, s in zip(tr.events, self.stmts)]
        self.writes = [frozenset() if e.branch is not None else stmt_writes(s)
                       for e, s in zip(tr.events, self.stmts)]
        self.tags = self._activation_tags(idx)

    def _activation_tags(self, idx) -> list:
        tags, count, prev = [], {}, {}
        for i, e in enumerate(self.tr.events):
            if e.branch is not None:
                tags.append(None)
                prev[e.thread] = None
                continue
            block = idx.block_of.get(e.label)
            if prev.get(e.thread, "start") != block:
                count[block] = count.get(block, 0) + 1
            prev[e.thread] = block
            tags.append((block, count[block]))
        return tags

    def kind(self, i: int) -> str:
        s = self.stmts[i]
        if self.tr.events[i].branch is not None:
            return "choice"
        if isinstance(s, Assert) or (isinstance(s, Atomic) and has_kind(s, (Assert,))):
            return "assert"
        if isinstance(s, (Assume, Await, Wait)) or (
                isinstance(s, Atomic) and has_kind(s, (Assume, Await, Wait))):
            return "cond"
        return "other"

    def value_written(self, i: int, v: str) -> int:
        return self.tr.env(i + 1)[v]


def last(tr: Trace, i: int, v: str, info: Optional[TraceInfo] = None) -> int:
    """Position whose write to ``v`` event ``i`` reads, or BOT."""
    info = info or TraceInfo(tr)
    if v not in info.reads[i]:
        raise ValueError(f"{tr.events[i].label} does not read {v}")
    for j in range(i - 1, -1, -1):
        if v in info.writes[j]:
            return j
    return BOT


def depends(tr: Trace, i: int, info: Optional[TraceInfo] = None) -> set:
    """Transitive data-flow edges ``(w, r, v)`` into position ``i``."""
    info = info or TraceInfo(tr)
    out, todo, seen = set(), [i], set()
    while todo:
        r = todo.pop()
        if r == BOT or r in seen:
            continue
        seen.add(r)
        for v in sorted(info.reads[r]):
            w = last(tr, r, v, info)
            out.add((w, r, v))
            todo.append(w)
    return out


def _group_vars(triples) -> dict:
    out = {}
    for w, r, v in triples:
        out.setdefault((w, r), set()).add(v)
    return {k: frozenset(vs) for k, vs in out.items()}


class TraceGraph:
    def __init__(self, tr: Trace):
        self.tr = tr
        self.info = info = TraceInfo(tr)
        n = len(tr.events)
        self.n = n
        conds, asserts = set(), set()
        for i in range(n):
            k = info.kind(i)
            if k == "cond":
                conds |= depends(tr, i, info)
            elif k == "assert":
                asserts |= depends(tr, i, info)
        self.dfconds = _group_vars(conds)
        self.dfasserts = _group_vars(asserts)
        self.nonfree = {}
        for x in range(n):
            for y in range(x + 1, n):
                common = info.writes[x] & info.writes[y]
                diff = frozenset(v for v in common
                                 if info.value_written(x, v) != info.value_written(y, v))
                if diff:
                    self.nonfree[(x, y)] = diff

    # -------------------------------------------------------------- edges
    def thread(self, i: int) -> Optional[int]:
        return None if i == BOT else self.tr.events[i].thread

    def is_intra(self, x: int, y: int) -> bool:
        return x == BOT and y != BOT or (
            x != BOT and x < y and self.thread(x) == self.thread(y))

    def edges(self, kind: Optional[str] = None) -> list:
        out = []
        if kind in (None, INTRA):
            out += [Edge(BOT, y, INTRA) for y in range(self.n)]
            out += [Edge(x, y, INTRA) for x in range(self.n) for y in range(x + 1, self.n)
                    if self.thread(x) == self.thread(y)]
        if kind in (None, DFCONDS):
            out += [Edge(w, r, DFCONDS, vs) for (w, r), vs in sorted(self.dfconds.items())]
        if kind in (None, DFASSERTS):
            out += [Edge(w, r, DFASSERTS, vs) for (w, r), vs in sorted(self.dfasserts.items())]
        if kind in (None, NONFREE):
            out += [Edge(x, y, NONFREE, vs) for (x, y), vs in sorted(self.nonfree.items())]
        return out

    def cover_succ(self, x: int) -> list:
        """Successors along cover edges (intra, DFConds, non-free), ascending."""
        out = set()
        for y in range(max(x + 1, 0), self.n):
            if self.is_intra(x, y) or (x, y) in self.dfconds or (x, y) in self.nonfree:
                out.add(y)
        return sorted(out)

    def only_intra(self, x: int, y: int) -> bool:
        return (x, y) not in self.dfconds and (x, y) not in self.nonfree

    # ------------------------------------------------------------- covers
    @cached_property
    def _succ(self) -> dict:
        return {x: self.cover_succ(x) for x in range(BOT, self.n)}

    def reaches(self, x: int, y: int) -> bool:
        return x == y or y in self._closure(x)

    def _closure(self, x: int) -> set:
        cache = self.__dict__.setdefault("_reach", {})
        if x not in cache:
            seen, todo = set(), [x]
            while todo:
                u = todo.pop()
                for v in self._succ[u]:
                    if v not in seen:
                        seen.add(v)
                        todo.append(v)
            cache[x] = seen
        return cache[x]

    def find_covers(self, src: int, dst: int, max_covers: int = 64) -> list:
        """Covers of ``src -> dst``, shortest first, then lexicographic."""
        if not self.reaches(src, dst) or src == dst:
            return []
        out = []
        for length in range(1, self.n + 2):
            for path in self._paths(src, dst, length):
                intra = tuple((a, b) for a, b in zip(path, path[1:])
                              if self.only_intra(a, b))
                out.append(Cover(path, intra))
                if len(out) >= max_covers:
                    return out
        return out

    def _paths(self, x: int, dst: int, length: int, prefix=()):
        prefix = prefix + (x,)
        if length == 0:
            if x == dst:
                yield prefix
            return
        for y in self._succ[x]:
            if y > dst or not self.reaches(y, dst):
                continue
            if y == dst and length != 1:
                continue
            yield from self._paths(y, dst, length - 1, prefix)

    # -------------------------------------------------------- interference
    def interfere(self, w: int, r: int) -> set:
        info = self.info
        rd = info.reads[r]
        out = set()
        for w2 in range(self.n):
            if w == BOT:
                if w2 > r and info.writes[w2] & rd:
                    out.add((r, w2))
                continue
            common = info.writes[w2] & info.writes[w] & rd
            if not common or w2 in (w, r):
                continue
            if w2 > r:
                out.add((r, w2))
            elif w2 < w:
                out.add((w2, w))
        return out

    # ------------------------------------------------------------- export
    def node_name(self, i: int) -> str:
        if i == BOT:
            return "bot"
        e = self.tr.events[i]
        return f"{e.thread}:{e.label}#{i}"

    def to_networkx(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        for i in range(BOT, self.n):
            g.add_node(self.node_name(i), label=self.node_name(i))
        for e in self.edges():
            g.add_edge(self.node_name(e.src), self.node_name(e.dst), kind=e.kind,
                       vars=",".join(sorted(e.vars)))
        return g

    def to_dot(self) -> str:
        lines = ["digraph trace {"]
        for i in range(BOT, self.n):
            lines.append(f'  "{self.node_name(i)}";')
        for e in self.edges():
            if e.kind == INTRA and not (e.src == BOT or self._adjacent_intra(e.src, e.dst)):
                continue
            lines.append(f'  "{self.node_name(e.src)}" -> "{self.node_name(e.dst)}" [kind="{e.kind}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def _adjacent_intra(self, x: int, y: int) -> bool:
        t = self.thread(x)
        return not any(self.thread(z) == t for z in range(x + 1, y))


def build_graph(tr: Trace) -> TraceGraph:
    return TraceGraph(tr)
