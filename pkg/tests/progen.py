"""Random small CWhile programs for property tests."""
from hypothesis import strategies as st

VARS = ("x", "y")
VALUES = ("0", "1", "2")


def _expr():
    return st.sampled_from(VALUES + VARS)


def _cond():
    return st.builds(lambda v, op, e: f"{v} {op} {e}", st.sampled_from(VARS),
                     st.sampled_from(["==", "!=", ">="]), _expr())


def _simple():
    return st.one_of(
        st.builds(lambda v, e: f"{v} := {e}", st.sampled_from(VARS), _expr()),
        st.builds(lambda c: f"assume({c})", _cond()),
        st.builds(lambda c: f"await({c})", _cond()),
        st.builds(lambda c: f"assert({c})", _cond()),
    )


def _thread(max_stmts):
    return st.lists(_simple(), min_size=1, max_size=max_stmts)


def render(threads) -> str:
    lines, n = [], 0
    for ti, body in enumerate(threads):
        lines.append(f"thread t{ti}:")
        for s in body:
            n += 1
            lines.append(f"  {chr(ord('a') + ti)}{n}: {s};")
    return "\n".join(lines) + "\n"


def programs(max_threads=3, max_stmts=4):
    return st.lists(_thread(max_stmts), min_size=1, max_size=max_threads).map(render)
