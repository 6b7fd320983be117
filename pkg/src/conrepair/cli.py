"""Command-line driver, structured reports and the fixture corpus runner."""
from __future__ import annotations

import argparse
import difflib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from . import constraint as C
from . import engine as G
from .explorer import Bounds, DomainError
from .program import ProgramError
from .syntax import ParseError, parse, print_program

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1

EXIT_FIXED, EXIT_NOT_FIXED, EXIT_USAGE = 0, 1, 2


def fixtures_dir() -> Path:
    return Path(str(resources.files("conrepair") / "fixtures"))


def resolve_source(path: str) -> Path:
    """A path on disk, or ``fixtures/NAME.cw`` naming a bundled fixture."""
    p = Path(path)
    if p.exists():
        return p
    bundled = fixtures_dir() / p.name
    if p.parent.name == "fixtures" or str(p.parent) == ".":
        if bundled.exists():
            return bundled
    raise FileNotFoundError(path)


# ------------------------------------------------------------------- reports


@dataclass
class RepairReport:
    status: str
    iterations: int
    good_traces_analyzed: int
    transformations: list
    final_constraint: str
    timings: dict
    diff: str
    regression_free: bool
    monotone: bool
    preservation: dict = field(default_factory=dict)
    message: str = ""
    history: list = field(default_factory=list)
    schema: int = REPORT_SCHEMA

    @classmethod
    def from_result(cls, r: G.RepairResult, name: str = "program") -> "RepairReport":
        before = print_program(r.original).splitlines(keepends=True)
        after = print_program(r.program).splitlines(keepends=True)
        diff = "".join(difflib.unified_diff(before, after, f"a/{name}", f"b/{name}"))
        return cls(status=r.status, iterations=r.iterations, good_traces_analyzed=r.good_analyzed,
                   transformations=[t.text() for t in r.transformations],
                   final_constraint=C.to_text(r.constraint),
                   timings={k: round(v, 3) for k, v in r.timings.items()}, diff=diff,
                   regression_free=r.regression_free, monotone=r.monotone,
                   preservation=dict(r.preservation), message=r.message,
                   history=[h.as_dict() for h in r.history])

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"status: {self.status}",
                 f"iterations: {self.iterations}",
                 f"good traces analyzed: {self.good_traces_analyzed}",
                 f"transformations: {', '.join(self.transformations) or '-'}",
                 f"constraint: {self.final_constraint}",
                 f"regression free: {self.regression_free}",
                 f"monotone: {self.monotone}"]
        if self.preservation:
            lines.append("preservation: " + ", ".join(f"{k}={v}" for k, v in sorted(self.preservation.items())))
        if self.message:
            lines.append(f"message: {self.message}")
        for i, h in enumerate(self.history):
            extra = f" via {', '.join(h['transformations'])}" if h["transformations"] else ""
            lines.append(f"  [{i}] {h['kind']} {h['trace']}: {h['constraint']}{extra}")
            for reg in h["regressions"]:
                lines.append(f"      regression: {reg}")
        lines.append("timings (ms): " + ", ".join(f"{k}={v}" for k, v in sorted(self.timings.items())))
        if self.diff:
            lines.append(self.diff.rstrip("\n"))
        return "\n".join(lines) + "\n"


def exit_code(status: str) -> int:
    if status == "fixed":
        return EXIT_FIXED
    if status == "input-contract-violation":
        return EXIT_USAGE
    return EXIT_NOT_FIXED


# -------------------------------------------------------------------- corpus


@dataclass
class CorpusRow:
    fixture: str
    mode: str
    options: str
    iterations: int
    status: str
    expected: str
    ok: bool
    flag: str = ""


def _run_config(run: dict, base: Bounds) -> G.RepairConfig:
    return G.RepairConfig(mode=run.get("mode", "mixed"), heuristic=run.get("heuristic", "ce1"),
                          sound_fallback=run.get("sound_fallback", False),
                          allow_wait_notify=run.get("allow_wait_notify", False), bounds=base)


def _check(result: G.RepairResult, expect: dict) -> list:
    problems = []
    if result.status != expect.get("status", "fixed"):
        problems.append(f"status {result.status}")
    if "iterations" in expect and result.iterations != expect["iterations"]:
        problems.append(f"iterations {result.iterations}")
    if "max_iterations" in expect and result.iterations > expect["max_iterations"]:
        problems.append(f"iterations {result.iterations}")
    if "constraint" in expect and C.to_text(result.constraint) != expect["constraint"]:
        problems.append(f"constraint {C.to_text(result.constraint)}")
    if "transformations" in expect and [t.text() for t in result.transformations] != expect["transformations"]:
        problems.append("transformations " + ", ".join(t.text() for t in result.transformations))
    if "regression_free" in expect and result.regression_free != expect["regression_free"]:
        problems.append(f"regression_free {result.regression_free}")
    return problems


def _expected_text(expect: dict) -> str:
    it = expect.get("iterations")
    it = f"={it}" if it is not None else f"<={expect.get('max_iterations', '?')}"
    return f"{expect.get('status', 'fixed')} it{it}"


def run_corpus(directory, mode: Optional[str] = None, bounds: Bounds = Bounds()) -> list:
    """Run every ``.cw`` fixture with a sidecar and compare against its goldens."""
    rows = []
    for src in sorted(Path(directory).glob("*.cw")):
        sidecar = src.with_suffix(".expect.json")
        if not sidecar.exists():
            log.warning("%s: no expected-outcome sidecar, skipped", src.name)
            continue
        golden = json.loads(sidecar.read_text())
        prog = parse(src.read_text())
        for run in golden["runs"]:
            if mode is not None and run.get("mode", "mixed") != mode:
                continue
            cfg = _run_config(run, bounds)
            result = G.repair(prog, cfg)
            problems = _check(result, run["expect"])
            opts = ",".join(k for k in ("sound_fallback", "allow_wait_notify") if run.get(k))
            if cfg.heuristic != "ce1":
                opts = ",".join(filter(None, [opts, cfg.heuristic]))
            flag = ""
            if run.get("expected_unsound"):
                flag = "expected-unsound" if not result.regression_free else "unsound-not-observed"
            rows.append(CorpusRow(src.stem, cfg.mode, opts or "-", result.iterations, result.status,
                                  _expected_text(run["expect"]), not problems,
                                  "; ".join([flag] * bool(flag) + problems)))
    return rows


def format_corpus(rows: list) -> str:
    head = ("fixture", "mode", "options", "iter", "status", "expected", "ok", "note")
    table = [head] + [(r.fixture, r.mode, r.options, str(r.iterations), r.status, r.expected,
                       "yes" if r.ok else "NO", r.flag) for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(head))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                     for row in table) + "\n"


# ----------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conrepair", description=(
        "Repair concurrency bugs in a CWhile program using good and bad traces."))
    ap.add_argument("program", nargs="?", help="CWhile source file (or fixtures/NAME.cw)")
    ap.add_argument("--corpus", metavar="DIR", nargs="?", const="",
                    help="run a fixture corpus against its sidecar goldens (default: bundled)")
    ap.add_argument("--mode", choices=G.MODES, default=None,
                    help="repair mode (default: mixed; with --corpus, run every listed mode)")
    ap.add_argument("--heuristic", choices=G.HEURISTICS, default="ce1")
    ap.add_argument("--loop-bound", type=int, default=Bounds.loop_unroll, metavar="N")
    ap.add_argument("--max-steps", type=int, default=Bounds.max_steps, metavar="N")
    ap.add_argument("--domain-bound", type=int, default=Bounds.domain_bound, metavar="N")
    ap.add_argument("--max-good", type=int, default=10, metavar="K")
    ap.add_argument("--max-iter", type=int, default=64, metavar="N")
    ap.add_argument("--sound-fallback", action="store_true")
    ap.add_argument("--allow-wait-notify", action="store_true")
    ap.add_argument("--seed", type=int, default=None, metavar="S")
    ap.add_argument("--emit-fixed", metavar="PATH", help="write the repaired program here")
    ap.add_argument("--report", choices=("text", "json"), default="text")
    ap.add_argument("--dump-traces", metavar="PATH", help="write every analysed trace here")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        bounds = Bounds(loop_unroll=args.loop_bound, max_steps=args.max_steps,
                        domain_bound=args.domain_bound)
    except (TypeError, ValueError) as exc:
        ap.error(str(exc))
    if args.corpus is not None:
        directory = args.corpus or fixtures_dir()
        try:
            rows = run_corpus(directory, args.mode, bounds)
        except (ParseError, DomainError) as exc:
            print(f"conrepair: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if args.report == "json":
            sys.stdout.write(json.dumps([asdict(r) for r in rows], indent=2) + "\n")
        else:
            sys.stdout.write(format_corpus(rows))
        return EXIT_FIXED if all(r.ok for r in rows) else EXIT_NOT_FIXED
    if args.program is None:
        ap.error("a program file or --corpus is required")
    try:
        path = resolve_source(args.program)
        prog = parse(path.read_text())
        cfg = G.RepairConfig(mode=args.mode or "mixed", heuristic=args.heuristic, bounds=bounds,
                             max_good=args.max_good, max_iterations=args.max_iter,
                             sound_fallback=args.sound_fallback,
                             allow_wait_notify=args.allow_wait_notify, seed=args.seed)
        result = G.repair(prog, cfg)
    except FileNotFoundError as exc:
        print(f"conrepair: no such file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ProgramError, DomainError, ValueError) as exc:
        print(f"conrepair: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = RepairReport.from_result(result, path.name)
    sys.stdout.write(report.to_json() if args.report == "json" else report.to_text())
    if result.status == "input-contract-violation":
        print(f"conrepair: input contract violated: {result.message}", file=sys.stderr)
    if args.emit_fixed and result.fixed:
        Path(args.emit_fixed).write_text(print_program(result.program))
    if args.dump_traces:
        parts = [f"# {h.kind} {h.trace}\n{h.dump}" for h in result.history if h.dump]
        Path(args.dump_traces).write_text("\n".join(parts))
    return exit_code(result.status)
