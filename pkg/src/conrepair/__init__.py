"""conrepair: repair concurrency bugs in CWhile programs.

The tool learns regression-preventing constraints from good traces and
error-eliminating constraints from bad traces, and applies statement swaps,
atomic sections or wait/notify pairs until a bounded explorer finds no bad
trace.
"""
from .constraint import parse_constraint, to_text
from .engine import RepairConfig, RepairResult, repair
from .explorer import Bounds, DomainError, verify
from .learn import check_regression, learn_good
from .syntax import ParseError, parse, print_program

__version__ = "0.1.0"

__all__ = [
    "Bounds", "DomainError", "ParseError", "RepairConfig", "RepairResult",
    "check_regression", "learn_good", "parse", "parse_constraint",
    "print_program", "repair", "to_text", "verify",
]
