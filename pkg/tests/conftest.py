import pytest

from conrepair import explorer as E
from conrepair.cli import fixtures_dir
from conrepair.syntax import parse

FIXTURES = sorted(p.stem for p in fixtures_dir().glob("*.cw"))


def load(name: str):
    return parse((fixtures_dir() / f"{name}.cw").read_text())


def trace_of(prog, labels: str):
    """Replay a comma-separated label schedule (branch events as ``label?b``)."""
    events = []
    for item in labels.split(","):
        lab, _, br = item.strip().partition("?")
        events.append((lab, int(br) if br else None))
    tr = E.replay(prog, [E.Event(prog.thread_of(lab), lab, br) for lab, br in events])
    assert tr is not None, f"schedule {labels} is not executable"
    return tr


@pytest.fixture
def fixture():
    return load
