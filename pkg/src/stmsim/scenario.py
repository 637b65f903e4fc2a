"""Scenario files: a line-oriented DSL describing one experiment.

Example::

    param capacity 4
    chunk ac_roc := 5 8 5
    chunk my_pin := @0 ac_roc @3 2
    at 0 store 1:5
    at 4 use 1:5
    tasks length 6 block_until 8
    skill duration click_menu 3
    horizon 8
    expect at 8 in_stm 1:ac_roc exp 26
    expect trajectories 1

``parse`` reports every problem it finds as a :class:`Diagnostic` with a
1-based line and column, then raises :class:`ScenarioError` if any were
found.  ``render`` produces canonical text that parses back to an equal
scenario.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from stmsim.chunking import ChunkSchema, find_cycle
from stmsim.core import (
    Action,
    External,
    Params,
    StmError,
    Store,
    Symbol,
    Term,
    TieBreak,
    Use,
    action_sort_key,
    is_stm_related,
)
from stmsim.taskexec import Completed, Forgotten, InProgress, SkillProfile, TaskProgram, TaskStatus, Waiting


# --------------------------------------------------------------------------
# expectations

@dataclass(frozen=True)
class Present:
    symbol: Symbol
    remaining: Optional[int] = None

    def __str__(self) -> str:
        return f"in_stm {self.symbol}" + ("" if self.remaining is None else f" exp {self.remaining}")


@dataclass(frozen=True)
class Absent:
    symbol: Symbol

    def __str__(self) -> str:
        return f"absent {self.symbol}"


@dataclass(frozen=True)
class Status:
    status: TaskStatus

    def __str__(self) -> str:
        return str(self.status)


@dataclass(frozen=True)
class Occurs:
    action: Action

    def __str__(self) -> str:
        return f"occurs {self.action}"


@dataclass(frozen=True)
class Size:
    size: int

    def __str__(self) -> str:
        return f"size {self.size}"


@dataclass(frozen=True)
class TrajectoryCount:
    count: int

    def __str__(self) -> str:
        return f"trajectories {self.count}"


ExpectationKind = Union[Present, Absent, Status, Occurs, Size, TrajectoryCount]


@dataclass(frozen=True)
class Expectation:
    step: Optional[int]
    kind: ExpectationKind

    def __str__(self) -> str:
        if self.step is None:
            return f"expect {self.kind}"
        return f"expect at {self.step} {self.kind}"


# --------------------------------------------------------------------------
# scenario

@dataclass(frozen=True)
class Scenario:
    params: Params = field(default_factory=Params)
    schemas: tuple[ChunkSchema, ...] = ()
    schedule: tuple[tuple[int, tuple[Action, ...]], ...] = ()
    program: Optional[TaskProgram] = None
    horizon: Optional[int] = 0
    expectations: tuple[Expectation, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "schemas", tuple(sorted(self.schemas, key=lambda s: s.name)))
        merged: dict[int, set] = defaultdict(set)
        for step, actions in self.schedule:
            merged[step].update(actions)
        object.__setattr__(self, "schedule", tuple(
            (step, tuple(sorted(merged[step], key=action_sort_key))) for step in sorted(merged) if merged[step]
        ))
        object.__setattr__(self, "expectations", tuple(self.expectations))

    def actions_at(self, step: int) -> tuple[Action, ...]:
        return dict(self.schedule).get(step, ())

    @property
    def schema_table(self) -> dict[str, ChunkSchema]:
        return {s.name: s for s in self.schemas}

    @property
    def max_index(self) -> int:
        indices = [a.symbol.index for _, acts in self.schedule for a in acts if is_stm_related(a)]
        return max(indices, default=0)

    @property
    def base_range(self) -> range:
        span = max((s.span for s in self.schemas), default=0)
        return range(1, self.max_index + span + 1)

    @property
    def last_scheduled_step(self) -> int:
        return max((step for step, _ in self.schedule), default=-1)


class ScenarioError(StmError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    message: str
    kind: str = "syntax"

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.kind} error: {self.message}"


# --------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\f\v]+)|(?P<int>[0-9]+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<assign>:=)|(?P<punct>[():,@])"
)


@dataclass(frozen=True)
class Token:
    kind: str  # int, ident, punct, assign, eol
    text: str
    column: int


class _Syntax(Exception):
    def __init__(self, column: int, message: str):
        self.column = column
        self.message = message


def _tokenize(line: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise _Syntax(pos + 1, f"unexpected character {line[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos + 1))
        pos = m.end()
    tokens.append(Token("eol", "", len(line) + 1))
    return tokens


class _Line:
    """Recursive-descent reader over the tokens of one line."""

    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def peek(self) -> Token:
        return self.tokens[self.pos]

    def take(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eol":
            self.pos += 1
        return tok

    def fail(self, expected: str, tok: Optional[Token] = None) -> _Syntax:
        tok = tok or self.peek
        found = "end of line" if tok.kind == "eol" else repr(tok.text)
        return _Syntax(tok.column, f"expected {expected}, found {found}")

    def keyword(self, *words: str) -> str:
        tok = self.peek
        if tok.kind == "ident" and tok.text in words:
            return self.take().text
        raise self.fail(" or ".join(repr(w) for w in words))

    def at_keyword(self, word: str) -> bool:
        return self.peek.kind == "ident" and self.peek.text == word

    def punct(self, ch: str) -> None:
        if self.peek.kind == "punct" and self.peek.text == ch:
            self.take()
            return
        raise self.fail(repr(ch))

    def integer(self, what: str = "integer") -> int:
        if self.peek.kind != "int":
            raise self.fail(what)
        return int(self.take().text)

    def ident(self, what: str = "identifier") -> str:
        if self.peek.kind != "ident":
            raise self.fail(what)
        return self.take().text

    def term(self) -> Term:
        tok = self.peek
        if tok.kind == "int":
            head: Union[int, str] = int(self.take().text)
        elif tok.kind == "ident":
            head = self.take().text
        else:
            raise self.fail("term")
        args = []
        if self.peek.kind == "punct" and self.peek.text == "(":
            self.take()
            args.append(self.term())
            while self.peek.kind == "punct" and self.peek.text == ",":
                self.take()
                args.append(self.term())
            self.punct(")")
        return Term(head, tuple(args))

    def symbol(self) -> Symbol:
        tok = self.peek
        index = self.integer("symbol index")
        if index < 1:
            raise _Syntax(tok.column, "symbol index must be >= 1")
        self.punct(":")
        return Symbol(index, self.term())

    def end(self) -> None:
        if self.peek.kind != "eol":
            raise self.fail("end of line")


# --------------------------------------------------------------------------
# parser

_PARAM_NAMES = ("capacity", "epsilon", "default_duration", "tie_break")
_TIE_BREAK = {"lex": TieBreak.LEXICOGRAPHIC, "lexicographic": TieBreak.LEXICOGRAPHIC, "branch": TieBreak.BRANCH}


def parse_term(text: str) -> Term:
    return _parse_fragment(text, _Line.term)


def parse_symbol(text: str) -> Symbol:
    return _parse_fragment(text, _Line.symbol)


def _parse_fragment(text, method):
    try:
        line = _Line(_tokenize(text))
        value = method(line)
        line.end()
    except _Syntax as e:
        raise ValueError(f"column {e.column}: {e.message}") from None
    return value


def parse_override(key: str, value: str) -> Union[int, TieBreak]:
    """Validate one ``--set key=value`` override."""
    if key not in _PARAM_NAMES:
        raise ValueError(f"unknown parameter {key!r} (expected one of {', '.join(_PARAM_NAMES)})")
    if key == "tie_break":
        if value not in _TIE_BREAK:
            raise ValueError(f"tie_break must be lex or branch, got {value!r}")
        return _TIE_BREAK[value]
    if not value.isdigit() or int(value) < 1:
        raise ValueError(f"{key} must be a positive integer, got {value!r}")
    return int(value)


class _Builder:
    def __init__(self) -> None:
        self.diagnostics: list[Diagnostic] = []
        self.params: dict[str, tuple[object, int, int]] = {}
        self.schemas: dict[str, tuple[ChunkSchema, int, int]] = {}
        self.schedule: list[tuple[int, Action, int, int]] = []
        self.tasks: Optional[tuple[Optional[int], int, int, int]] = None
        self.skill_durations: dict[str, int] = {}
        self.skill_default: Optional[int] = None
        self.skill_line: Optional[tuple[int, int]] = None
        self.horizon: Optional[tuple[int, int, int]] = None
        self.expectations: list[tuple[Expectation, int, int]] = []

    def error(self, line: int, column: int, message: str, kind: str = "semantic") -> None:
        self.diagnostics.append(Diagnostic(line, column, message, kind))

    def directive(self, lineno: int, p: _Line) -> None:
        start = p.peek
        word = p.keyword("param", "chunk", "at", "tasks", "skill", "horizon", "expect")
        getattr(self, f"_{word}")(lineno, start.column, p)
        p.end()

    def _param(self, lineno: int, col: int, p: _Line) -> None:
        name_tok = p.peek
        name = p.keyword(*_PARAM_NAMES)
        if name == "tie_break":
            tok = p.peek
            mode = p.keyword(*_TIE_BREAK)
            value: object = _TIE_BREAK[mode]
        else:
            tok = p.peek
            value = p.integer(f"value for {name}")
            if value < 1:
                raise _Syntax(tok.column, f"{name} must be >= 1")
        if name in self.params:
            self.error(lineno, name_tok.column, f"duplicate param {name} (first set on line {self.params[name][1]})")
            return
        self.params[name] = (value, lineno, name_tok.column)

    def _chunk(self, lineno: int, col: int, p: _Line) -> None:
        name_tok = p.peek
        name = p.ident("chunk name")
        if not (p.peek.kind == "assign"):
            raise p.fail("':='")
        p.take()
        elements: list[tuple[int, Term]] = []
        if p.peek.kind == "punct" and p.peek.text == "@":
            while p.peek.kind != "eol":
                p.punct("@")
                elements.append((p.integer("offset"), p.term()))
        else:
            while p.peek.kind != "eol":
                if p.peek.kind == "punct" and p.peek.text == "@":
                    raise _Syntax(p.peek.column, "cannot mix '@offset' elements with positional elements")
                elements.append((len(elements), p.term()))
        if not elements:
            raise p.fail("chunk element")
        offsets = [o for o, _ in elements]
        if len(set(offsets)) != len(offsets):
            self.error(lineno, name_tok.column, f"chunk {name} repeats an offset")
            return
        if 0 not in offsets:
            self.error(lineno, name_tok.column, f"chunk {name} needs an element at offset 0")
            return
        if name in self.schemas:
            self.error(lineno, name_tok.column,
                       f"duplicate chunk name {name} (first declared on line {self.schemas[name][1]})")
            return
        self.schemas[name] = (ChunkSchema(name, tuple(elements)), lineno, name_tok.column)

    def _at(self, lineno: int, col: int, p: _Line) -> None:
        step = p.integer("step")
        tok = p.peek
        kind = p.keyword("store", "use", "do")
        if kind == "do":
            action: Action = External(p.term())
        else:
            sym = p.symbol()
            action = Store(sym) if kind == "store" else Use(sym)
        self.schedule.append((step, action, lineno, tok.column))

    def _tasks(self, lineno: int, col: int, p: _Line) -> None:
        length = None
        block_until = -1
        while p.peek.kind != "eol":
            word = p.keyword("length", "block_until")
            if word == "length":
                tok = p.peek
                length = p.integer("task count")
                if length < 1:
                    raise _Syntax(tok.column, "task length must be >= 1")
            else:
                block_until = p.integer("step")
        if self.tasks is not None:
            self.error(lineno, col, f"duplicate tasks directive (first on line {self.tasks[2]})")
            return
        self.tasks = (length, block_until, lineno, col)

    def _skill(self, lineno: int, col: int, p: _Line) -> None:
        word = p.keyword("duration", "default")
        if word == "duration":
            name_tok = p.peek
            name = p.ident("operation name")
            tok = p.peek
            value = p.integer("duration")
            if value < 1:
                raise _Syntax(tok.column, "duration must be >= 1")
            if name in self.skill_durations:
                self.error(lineno, name_tok.column, f"duplicate skill duration for {name}")
            self.skill_durations[name] = value
        else:
            tok = p.peek
            value = p.integer("duration")
            if value < 1:
                raise _Syntax(tok.column, "duration must be >= 1")
            if self.skill_default is not None:
                self.error(lineno, col, "duplicate skill default")
            self.skill_default = value
        self.skill_line = self.skill_line or (lineno, col)

    def _horizon(self, lineno: int, col: int, p: _Line) -> None:
        value = p.integer("horizon step")
        if self.horizon is not None:
            self.error(lineno, col, f"duplicate horizon (first on line {self.horizon[1]})")
            return
        self.horizon = (value, lineno, col)

    def _expect(self, lineno: int, col: int, p: _Line) -> None:
        if p.at_keyword("trajectories"):
            p.take()
            self.expectations.append((Expectation(None, TrajectoryCount(p.integer("count"))), lineno, col))
            return
        p.keyword("at")
        step = p.integer("step")
        what = p.keyword("in_stm", "absent", "forgotten", "completed", "current", "waiting", "occurs", "size")
        kind: ExpectationKind
        if what == "in_stm":
            sym = p.symbol()
            remaining = None
            if p.at_keyword("exp"):
                p.take()
                remaining = p.integer("remaining time")
            kind = Present(sym, remaining)
        elif what == "absent":
            kind = Absent(p.symbol())
        elif what == "forgotten":
            kind = Status(Forgotten(p.integer("task index"), step))
        elif what == "completed":
            kind = Status(Completed(step))
        elif what == "current":
            kind = Status(InProgress(p.integer("task index")))
        elif what == "waiting":
            kind = Status(Waiting())
        elif what == "occurs":
            verb = p.keyword("store", "use", "do")
            kind = Occurs(External(p.term()) if verb == "do" else (Store if verb == "store" else Use)(p.symbol()))
        else:
            kind = Size(p.integer("size"))
        self.expectations.append((Expectation(step, kind), lineno, col))

    def build(self, overrides: Mapping[str, object]) -> Scenario:
        values = {name: v for name, (v, _, _) in self.params.items()}
        values.update(overrides)
        params = Params(**values)

        schemas = {name: s for name, (s, _, _) in self.schemas.items()}
        cycle = find_cycle(list(schemas.values()))
        if cycle:
            _, line, col = self.schemas[cycle[0]]
            self.error(line, col, f"cyclic chunk definition: {' -> '.join(cycle)}")

        stm_ops: dict[int, tuple[Action, int]] = {}
        for step, action, line, col in self.schedule:
            if not is_stm_related(action):
                continue
            if step in stm_ops and stm_ops[step][0] != action:
                first, first_line = stm_ops[step]
                self.error(line, col, f"only one store/use may occur at step {step}; "
                                      f"'{first}' is already scheduled on line {first_line}")
            else:
                stm_ops.setdefault(step, (action, line))

        stored_values = {a.symbol.value for a, _ in stm_ops.values()}
        for name, (schema, line, col) in self.schemas.items():
            for ref in sorted(schema.references()):
                if ref not in schemas and Term(ref) not in stored_values:
                    self.error(line, col, f"chunk {name} refers to {ref}, which is neither a declared chunk "
                                          f"nor a stored symbol")

        program = None
        if self.tasks is not None:
            length, block_until, line, col = self.tasks
            max_index = max((a.symbol.index for a, _ in stm_ops.values()), default=0)
            if length is None:
                length = max_index
            if length < 1:
                self.error(line, col, "task program has no stored tasks")
            elif max_index and length != max_index:
                self.error(line, col, f"task length {length} differs from the highest stored index {max_index}")
            if length >= 1:
                skill = SkillProfile(tuple(self.skill_durations.items()), self.skill_default)
                program = TaskProgram(length, block_until, skill)
        elif self.skill_line is not None:
            self.error(*self.skill_line, "skill directives require a tasks directive")

        horizon: Optional[int]
        if self.horizon is not None:
            horizon = self.horizon[0]
        else:
            horizon = None if program is not None else 0
        for exp, line, col in self.expectations:
            if horizon is not None and exp.step is not None and exp.step > horizon:
                self.error(line, col, f"expectation at step {exp.step} is past the horizon {horizon}")

        if self.diagnostics:
            raise ScenarioError(sorted(self.diagnostics, key=lambda d: (d.line, d.column)))
        return Scenario(
            params=params,
            schemas=tuple(schemas.values()),
            schedule=tuple((step, (action,)) for step, action, _, _ in self.schedule),
            program=program,
            horizon=horizon,
            expectations=tuple(e for e, _, _ in self.expectations),
        )


def parse(text: Union[str, bytes], overrides: Optional[Mapping[str, object]] = None) -> Scenario:
    """Parse scenario text; raise :class:`ScenarioError` listing every problem."""
    builder = _Builder()
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ScenarioError([Diagnostic(1, e.start + 1, "input is not valid UTF-8")]) from None
    resolved: dict[str, object] = {}
    for key, value in (overrides or {}).items():
        try:
            resolved[key] = parse_override(key, value) if isinstance(value, str) else value
        except ValueError as e:
            builder.error(1, 1, f"override {key}: {e}")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0]
        try:
            tokens = _tokenize(line)
            if tokens[0].kind == "eol":
                continue
            builder.directive(lineno, _Line(tokens))
        except _Syntax as e:
            builder.error(lineno, e.column, e.message, "syntax")
    return builder.build(resolved)


def load(path, overrides: Optional[Mapping[str, object]] = None) -> Scenario:
    with open(path, "rb") as fh:
        return parse(fh.read(), overrides)


# --------------------------------------------------------------------------
# renderer

def _render_schema(schema: ChunkSchema) -> str:
    body = " ".join(f"@{o} {p}" for o, p in schema.elements)
    return f"chunk {schema.name} := {body}"


def _render_action(step: int, action: Action) -> str:
    return f"at {step} {action}"


def render(scenario: Scenario) -> str:
    """Canonical, fully explicit text for ``scenario``."""
    p = scenario.params
    lines = [
        f"param capacity {p.capacity}",
        f"param epsilon {p.epsilon}",
        f"param default_duration {p.default_duration}",
        f"param tie_break {p.tie_break.value}",
    ]
    lines += [_render_schema(s) for s in scenario.schemas]
    for step, actions in scenario.schedule:
        lines += [_render_action(step, a) for a in actions]
    prog = scenario.program
    if prog is not None:
        tasks = f"tasks length {prog.length}"
        if prog.block_until >= 0:
            tasks += f" block_until {prog.block_until}"
        lines.append(tasks)
        lines += [f"skill duration {name} {d}" for name, d in prog.skill.durations]
        if prog.skill.default is not None:
            lines.append(f"skill default {prog.skill.default}")
    if scenario.horizon is not None:
        lines.append(f"horizon {scenario.horizon}")
    lines += [str(e) for e in scenario.expectations]
    return "\n".join(lines) + "\n"
