from conrepair import tracegraph as T
from conrepair.syntax import parse
from conftest import load, trace_of


def lab(tr, i):
    return "bot" if i == T.BOT else tr.events[i].label


def named(tr, pairs):
    return {(lab(tr, a), lab(tr, b)) for a, b in pairs}


def test_last_and_depends_on_tau3():
    tr = trace_of(load("paper1"), "A,B,C,1,2,n,3,p")
    p = tr.labels().index("p")
    assert lab(tr, T.last(tr, p, "y")) == "B"
    assert {(lab(tr, w), lab(tr, r)) for w, r, _ in T.depends(tr, p)} == {("B", "p")}


def test_read_before_write_is_bottom():
    p = parse("thread a:\n  1: x := y;\n")
    tr = trace_of(p, "1")
    assert T.last(tr, 0, "y") == T.BOT
    assert T.depends(tr, 0) == {(T.BOT, 0, "y")}


def test_constant_assert_has_no_dependencies():
    tr = trace_of(parse("thread a:\n  1: assert(1 == 1);\n"), "1")
    assert T.depends(tr, 0) == set()


def test_fig3a_edges():
    tr = trace_of(load("fig3a"), "1,2,A,B")
    g = T.TraceGraph(tr)
    assert named(tr, g.dfconds) == {("2", "A")}
    assert named(tr, g.dfasserts) == {("1", "B")}
    covers = g.find_covers(0, 3)
    assert [tuple(lab(tr, i) for i in c.path) for c in covers] == [("1", "2", "A", "B")]
    assert named(tr, covers[0].intra) == {("1", "2"), ("A", "B")}


def test_tau3_graph():
    tr = trace_of(load("paper1"), "A,B,C,1,2,n,3,p")
    g = T.TraceGraph(tr)
    assert named(tr, g.dfasserts) == {("C", "3"), ("B", "p")}
    assert named(tr, g.dfconds) == {("A", "1"), ("B", "2"), ("C", "n")}
    b, p = tr.labels().index("B"), tr.labels().index("p")
    first = g.find_covers(b, p)[0]
    assert [lab(tr, i) for i in first.path] == ["B", "C", "n", "p"]


def test_fig3b_interference():
    tr = trace_of(load("fig3b"), "1,2,A,B,C,3,4")
    one, b = tr.labels().index("1"), tr.labels().index("B")
    assert lab(tr, T.last(tr, b, "x")) == "1"
    assert named(tr, T.TraceGraph(tr).interfere(one, b)) == {("B", "4")}


def test_fig3c_nonfree():
    tr = trace_of(load("fig3c"), "1,2',2,A,B")
    g = T.TraceGraph(tr)
    assert named(tr, g.dfconds) == {("2", "A")}
    assert named(tr, g.dfasserts) == {("1", "B")}
    assert named(tr, g.nonfree) == {("2'", "2")}


def test_bottom_interference():
    p = parse("thread a:\n  1: assert(x == 0);\nthread b:\n  2: x := 1;\n")
    tr = trace_of(p, "1,2")
    assert named(tr, T.TraceGraph(tr).interfere(T.BOT, 0)) == {("1", "2")}


def test_single_statement_graph():
    tr = trace_of(parse("thread a:\n  1: x := 1;\n"), "1")
    g = T.TraceGraph(tr)
    assert {(e.src, e.dst, e.kind) for e in g.edges()} == {(T.BOT, 0, T.INTRA)}


def test_one_hop_intra_cover():
    tr = trace_of(load("fig3a"), "1,2,A,B")
    covers = T.TraceGraph(tr).find_covers(0, 1)
    assert [c.path for c in covers] == [(0, 1)]


def test_exports():
    tr = trace_of(load("fig3a"), "1,2,A,B")
    g = T.build_graph(tr)
    nxg = g.to_networkx()
    kinds = {d["kind"] for _, _, d in nxg.edges(data=True)}
    assert kinds == {T.INTRA, T.DFCONDS, T.DFASSERTS}
    assert g.to_dot().startswith("digraph trace {")


def test_dataflow_edges_match_interpreter():
    tr = trace_of(load("paper1"), "A,B,C,1,2,n,3,p")
    g = T.TraceGraph(tr)
    for edges in (g.dfconds, g.dfasserts):
        for (w, r), vs in edges.items():
            for v in vs:
                assert tr.env(r)[v] == (tr.env(w + 1)[v] if w != T.BOT else tr.program.init_map.get(v, 0))
