"""CWhile abstract syntax, parser and canonical printer.

Expressions are restricted to the core operators ``+ / * >= == && !``.
Convenience forms (``-``, ``<=``, ``<``, ``>``, ``!=``, ``||``) are accepted
by the parser and desugared into the core operators, so printing a parsed
program and parsing it again is the identity on the tree.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

ERR_VAR = "err"


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + / * >= == &&
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[Const, Var, BinOp, Not]

BINOPS = ("+", "/", "*", ">=", "==", "&&")


def expr_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, Not):
        return expr_vars(e.operand)
    return frozenset()


class EvalError(Exception):
    """Arithmetic failure (division by zero)."""


def evaluate(e: Expr, env) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env.get(e.name, 0)
    if isinstance(e, Not):
        return 0 if evaluate(e.operand, env) else 1
    a = evaluate(e.left, env)
    if e.op == "&&":
        return 1 if a and evaluate(e.right, env) else 0
    b = evaluate(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if b == 0:
            raise EvalError("division by zero")
        q = abs(a) // abs(b)
        return q if (a >= 0) == (b >= 0) else -q
    if e.op == ">=":
        return 1 if a >= b else 0
    if e.op == "==":
        return 1 if a == b else 0
    raise ValueError(e.op)


# ----------------------------------------------------------------- statements


@dataclass(frozen=True)
class Assign:
    label: Optional[str]
    var: str
    expr: Expr


@dataclass(frozen=True)
class Assume:
    label: Optional[str]
    cond: Expr


@dataclass(frozen=True)
class Assert:
    label: Optional[str]
    cond: Expr


@dataclass(frozen=True)
class Await:
    label: Optional[str]
    cond: Expr


@dataclass(frozen=True)
class Skip:
    label: Optional[str]


@dataclass(frozen=True)
class Wait:
    """``await(signal == 1)`` inserted by a wait/notify fix."""

    label: Optional[str]
    signal: str


@dataclass(frozen=True)
class Notify:
    """``signal := 1`` inserted by a wait/notify fix."""

    label: Optional[str]
    signal: str


@dataclass(frozen=True)
class Atomic:
    """Atomic block.

    A labeled atomic block is a single location (e.g. a lock acquisition);
    its body holds unlabeled straight-line statements.  An unlabeled atomic
    block is an atomic *region* around labeled statements: each inner
    statement keeps its own location but the region runs without preemption.
    """

    label: Optional[str]
    body: tuple


@dataclass(frozen=True)
class Group:
    """Statements that reorderings may only move as one unit."""

    label: Optional[str]
    body: tuple


@dataclass(frozen=True)
class IfStar:
    label: Optional[str]
    then: tuple
    orelse: tuple


@dataclass(frozen=True)
class WhileStar:
    label: Optional[str]
    body: tuple


Stmt = Union[Assign, Assume, Assert, Await, Skip, Wait, Notify, Atomic, Group, IfStar, WhileStar]
SIMPLE = (Assign, Assume, Assert, Await, Skip, Wait, Notify)


@dataclass(frozen=True)
class Thread:
    name: str
    body: tuple


@dataclass(frozen=True)
class Program:
    threads: tuple
    init: tuple = ()  # sorted (var, value) pairs declared by the init: header

    @property
    def init_map(self) -> dict:
        return dict(self.init)

    def thread_of(self, label: str) -> int:
        from .program import index

        return index(self).loc[label].thread

    @property
    def labels(self) -> list:
        return [s.label for t in self.threads for s in iter_stmts(t.body) if s.label is not None]


def iter_stmts(body) -> Iterator[Stmt]:
    """All statements of a body in program order, containers before contents."""
    for s in body:
        yield s
        if isinstance(s, IfStar):
            yield from iter_stmts(s.then)
            yield from iter_stmts(s.orelse)
        elif isinstance(s, (WhileStar, Group)):
            yield from iter_stmts(s.body)
        elif isinstance(s, Atomic) and s.label is None:
            yield from iter_stmts(s.body)


def stmt_reads(s: Stmt) -> frozenset:
    """Variables whose incoming value the statement observes (``err`` excluded)."""
    if isinstance(s, Assign):
        r = expr_vars(s.expr)
    elif isinstance(s, (Assume, Assert, Await)):
        r = expr_vars(s.cond)
    elif isinstance(s, Wait):
        r = frozenset((s.signal,))
    elif isinstance(s, Atomic):
        r, written = set(), set()
        for inner in s.body:
            r |= stmt_reads(inner) - written
            written |= stmt_writes(inner)
        r = frozenset(r)
    else:
        r = frozenset()
    return r - {ERR_VAR}


def stmt_writes(s: Stmt) -> frozenset:
    if isinstance(s, Assign):
        return frozenset((s.var,)) - {ERR_VAR}
    if isinstance(s, Notify):
        return frozenset((s.signal,))
    if isinstance(s, Atomic):
        out = frozenset()
        for inner in s.body:
            out |= stmt_writes(inner)
        return out
    return frozenset()


def has_kind(s: Stmt, kinds) -> bool:
    if isinstance(s, kinds):
        return True
    if isinstance(s, (Atomic, Group)):
        return any(has_kind(i, kinds) for i in s.body)
    return False


def is_preemption_point(s: Stmt) -> bool:
    """``await`` (and wait) are the blocking operations; a lock is an atomic await."""
    return has_kind(s, (Await, Wait))


# -------------------------------------------------------------------- lexing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<par>\|\|\|)
  | (?P<op>:=|==|>=|<=|!=|&&|\|\||[-+*/<>!(){};:,=])
  | (?P<word>[A-Za-z0-9_']+)
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list:
    out, pos, line, lstart = [], 0, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - lstart + 1)
        kind = m.lastgroup
        if kind == "nl":
            out.append(Token("nl", "\n", line, pos - lstart + 1))
            line += 1
            lstart = m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, pos - lstart + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - lstart + 1))
    return out


KEYWORDS = {"assume", "assert", "await", "skip", "wait", "notify", "atomic",
            "group", "if", "else", "while", "thread", "init"}


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    # token helpers ignore newlines except where the init header needs them
    def _skip_nl(self):
        while self.toks[self.i].kind == "nl":
            self.i += 1

    def peek(self, k=0) -> Token:
        self._skip_nl()
        j = self.i
        for _ in range(k):
            j += 1
            while self.toks[j].kind == "nl":
                j += 1
        return self.toks[j]

    def next(self) -> Token:
        self._skip_nl()
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, got {t.text or 'end of input'!r}", t.line, t.col)
        return t

    def accept(self, text: str) -> bool:
        if self.peek().text == text:
            self.next()
            return True
        return False

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return ParseError(msg, tok.line, tok.col)

    # --- program
    def program(self) -> Program:
        init = {}
        if self.peek().text == "init" and self.peek(1).text == ":":
            self.next()
            self.next()
            init = self.init_line()
        threads = []
        if self.peek().text == "thread":
            while self.peek().text == "thread":
                self.next()
                name_tok = self.next()
                if name_tok.kind != "word":
                    raise self.error("thread name expected", name_tok)
                self.expect(":")
                body = self.stmts(stop=("thread", ""))
                threads.append(Thread(name_tok.text, tuple(body)))
        else:
            while True:
                body = self.stmts(stop=("|||", ""))
                threads.append(Thread(f"t{len(threads)}", tuple(body)))
                if not self.accept("|||"):
                    break
        if self.peek().kind != "eof":
            raise self.error(f"unexpected {self.peek().text!r}")
        return Program(tuple(threads), tuple(sorted(init.items())))

    def init_line(self) -> dict:
        out = {}
        while True:
            t = self.toks[self.i]
            if t.kind in ("nl", "eof"):
                break
            if t.text in (";", ","):
                self.i += 1
                continue
            if t.kind != "word" or t.text in KEYWORDS:
                raise ParseError("variable expected in init header", t.line, t.col)
            self.i += 1
            eq = self.toks[self.i]
            if eq.text != "=":
                raise ParseError("'=' expected in init header", eq.line, eq.col)
            self.i += 1
            sign = 1
            if self.toks[self.i].text == "-":
                sign = -1
                self.i += 1
            num = self.toks[self.i]
            if not num.text.lstrip("-").isdigit():
                raise ParseError("integer expected in init header", num.line, num.col)
            self.i += 1
            if t.text in out:
                raise ParseError(f"variable {t.text} initialised twice", t.line, t.col)
            out[t.text] = sign * int(num.text)
        if out.get(ERR_VAR, 0) != 0:
            raise ParseError("err must start at 0")
        return out

    def stmts(self, stop) -> list:
        out = []
        while True:
            while self.accept(";"):
                pass
            t = self.peek()
            if t.text in stop or t.kind == "eof" or t.text == "}":
                return out
            out.append(self.stmt())

    def block(self) -> tuple:
        self.expect("{")
        body = self.stmts(stop=("}",))
        self.expect("}")
        return tuple(body)

    def stmt(self) -> Stmt:
        label = None
        t0, t1 = self.peek(), self.peek(1)
        if t0.kind == "word" and t1.text == ":" and t0.text not in KEYWORDS:
            label = t0.text
            self.next()
            self.next()
        t = self.next()
        w = t.text
        if w == "assume":
            return Assume(label, self.paren_expr())
        if w == "assert":
            return Assert(label, self.paren_expr())
        if w == "await":
            return Await(label, self.paren_expr())
        if w == "skip":
            return Skip(label)
        if w in ("wait", "notify"):
            self.expect("(")
            sig = self.next()
            self.expect(")")
            return (Wait if w == "wait" else Notify)(label, sig.text)
        if w == "atomic":
            return Atomic(label, self.block())
        if w == "group":
            return Group(label, self.block())
        if w == "if":
            self.star()
            then = self.block()
            self.expect("else")
            return IfStar(label, then, self.block())
        if w == "while":
            self.star()
            return WhileStar(label, self.block())
        if t.kind == "word" and w not in KEYWORDS and self.peek().text == ":=":
            if w == ERR_VAR:
                raise self.error("err may not be assigned", t)
            self.next()
            return Assign(label, w, self.expr())
        raise self.error(f"statement expected, got {w or 'end of input'!r}", t)

    def star(self):
        self.expect("(")
        self.expect("*")
        self.expect(")")

    def paren_expr(self) -> Expr:
        self.expect("(")
        e = self.expr()
        self.expect(")")
        return e

    # --- expressions, lowest precedence first
    def expr(self) -> Expr:
        e = self.conj()
        while self.accept("||"):
            r = self.conj()
            e = Not(BinOp("&&", Not(e), Not(r)))
        return e

    def conj(self) -> Expr:
        e = self.cmp()
        while self.accept("&&"):
            e = BinOp("&&", e, self.cmp())
        return e

    def cmp(self) -> Expr:
        e = self.add()
        op = self.peek().text
        if op in ("==", ">=", "<=", "!=", "<", ">"):
            self.next()
            r = self.add()
            if op == "==":
                e = BinOp("==", e, r)
            elif op == ">=":
                e = BinOp(">=", e, r)
            elif op == "<=":
                e = BinOp(">=", r, e)
            elif op == "!=":
                e = Not(BinOp("==", e, r))
            elif op == "<":
                e = Not(BinOp(">=", e, r))
            else:
                e = Not(BinOp(">=", r, e))
        return e

    def add(self) -> Expr:
        e = self.mul()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            r = self.mul()
            if op == "-":
                r = _negate(r)
            e = BinOp("+", e, r)
        return e

    def mul(self) -> Expr:
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("-"):
            return _negate(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        t = self.next()
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "word":
            if t.text.isdigit():
                return Const(int(t.text))
            if t.text in KEYWORDS or not re.match(r"[A-Za-z_]", t.text):
                raise self.error(f"bad operand {t.text!r}", t)
            return Var(t.text)
        raise self.error(f"operand expected, got {t.text or 'end of input'!r}", t)


def _negate(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value)
    return BinOp("*", Const(-1), e)


def parse(source: str) -> Program:
    """Parse CWhile source text, assign missing labels and validate."""
    from .program import validate

    prog = _Parser(tokenize(source)).program()
    prog = _autolabel(prog)
    validate(prog)
    return prog


def _autolabel(prog: Program) -> Program:
    taken = {s.label for t in prog.threads for s in iter_stmts(t.body) if s.label}
    counter = [0]

    def fresh(ti):
        while True:
            counter[0] += 1
            lab = f"t{ti}s{counter[0]}"
            if lab not in taken:
                taken.add(lab)
                return lab

    def fix(body, ti, inside_unit=False):
        out = []
        for s in body:
            if inside_unit:
                out.append(s)
                continue
            if isinstance(s, SIMPLE) and s.label is None:
                s = type(s)(fresh(ti), *[getattr(s, f) for f in s.__dataclass_fields__ if f != "label"])
            elif isinstance(s, IfStar):
                s = IfStar(s.label or fresh(ti), fix(s.then, ti), fix(s.orelse, ti))
            elif isinstance(s, WhileStar):
                s = WhileStar(s.label or fresh(ti), fix(s.body, ti))
            elif isinstance(s, Group):
                s = Group(s.label, fix(s.body, ti))
            elif isinstance(s, Atomic):
                s = Atomic(s.label, fix(s.body, ti, inside_unit=s.label is not None))
            out.append(s)
        return tuple(out)

    return Program(tuple(Thread(t.name, fix(t.body, i)) for i, t in enumerate(prog.threads)), prog.init)


# ------------------------------------------------------------------ printing

_PREC = {"&&": 1, "==": 2, ">=": 2, "+": 3, "*": 4, "/": 4}


def expr_str(e: Expr, parent: int = 0) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Not):
        inner = expr_str(e.operand, 5)
        return "!" + inner
    p = _PREC[e.op]
    # left-assoc: right operand of equal precedence needs parentheses
    s = f"{expr_str(e.left, p)} {e.op} {expr_str(e.right, p + 1)}"
    if e.op in ("==", ">="):
        s = f"{expr_str(e.left, p + 1)} {e.op} {expr_str(e.right, p + 1)}"
    return f"({s})" if p < parent else s


def _stmt_lines(s: Stmt, indent: int) -> list:
    pad = "  " * indent
    lab = f"{s.label}: " if s.label is not None else ""
    if isinstance(s, Assign):
        return [f"{pad}{lab}{s.var} := {expr_str(s.expr)};"]
    if isinstance(s, (Assume, Assert, Await)):
        kw = type(s).__name__.lower()
        return [f"{pad}{lab}{kw}({expr_str(s.cond)});"]
    if isinstance(s, Skip):
        return [f"{pad}{lab}skip;"]
    if isinstance(s, Wait):
        return [f"{pad}{lab}wait({s.signal});"]
    if isinstance(s, Notify):
        return [f"{pad}{lab}notify({s.signal});"]
    if isinstance(s, (Atomic, Group, WhileStar)):
        head = {Atomic: "atomic", Group: "group", WhileStar: "while (*)"}[type(s)]
        lines = [f"{pad}{lab}{head} {{"]
        for i in s.body:
            lines += _stmt_lines(i, indent + 1)
        return lines + [f"{pad}}}"]
    if isinstance(s, IfStar):
        lines = [f"{pad}{lab}if (*) {{"]
        for i in s.then:
            lines += _stmt_lines(i, indent + 1)
        lines.append(f"{pad}}} else {{")
        for i in s.orelse:
            lines += _stmt_lines(i, indent + 1)
        return lines + [f"{pad}}}"]
    raise TypeError(s)


def print_program(p: Program) -> str:
    lines = []
    if p.init:
        lines.append("init: " + "; ".join(f"{v} = {n}" for v, n in p.init))
    for t in p.threads:
        lines.append(f"thread {t.name}:")
        for s in t.body:
            lines += _stmt_lines(s, 1)
    return "\n".join(lines) + "\n"


def print_stmt(s: Stmt) -> str:
    return " ".join(line.strip() for line in _stmt_lines(s, 0))
