"""Task execution driven by what can be recalled from STM.

The task sequence lives in STM as symbols ``n:op``.  The simulated user
performs the current task once the acquisition window is over, moving on
to the next index, and gives up as soon as the current task cannot be
recalled, even through chunk inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from stmsim.chunking import ChunkSchema, expand, inferable
from stmsim.core import External, StmError, StmState, Term


class AmbiguousRecall(StmError):
    pass


@dataclass(frozen=True)
class SkillProfile:
    """Per-operation durations keyed by the operation's functor."""

    durations: tuple[tuple[str, int], ...] = ()
    default: Optional[int] = None

    def __post_init__(self) -> None:
        durations = tuple(sorted(dict(self.durations).items()))
        for name, d in durations:
            if d < 1:
                raise ValueError(f"duration for {name} must be >= 1, got {d}")
        if self.default is not None and self.default < 1:
            raise ValueError(f"default duration must be >= 1, got {self.default}")
        object.__setattr__(self, "durations", durations)

    def duration_for(self, op: Term, fallback: int) -> int:
        table = dict(self.durations)
        if op.functor in table:
            return table[op.functor]
        return self.default if self.default is not None else fallback


@dataclass(frozen=True)
class TaskProgram:
    length: int
    block_until: int = -1
    skill: SkillProfile = field(default_factory=SkillProfile)

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError(f"task length must be >= 1, got {self.length}")


@dataclass(frozen=True)
class Waiting:
    """Task 1 has not been recalled yet; nothing is current."""

    def __str__(self) -> str:
        return "waiting"


@dataclass(frozen=True)
class InProgress:
    current: int

    def __str__(self) -> str:
        return f"current {self.current}"


@dataclass(frozen=True)
class Forgotten:
    index: int
    step: int

    def __str__(self) -> str:
        return f"forgotten {self.index}"


@dataclass(frozen=True)
class Completed:
    step: int

    def __str__(self) -> str:
        return "completed"


TaskStatus = Union[Waiting, InProgress, Forgotten, Completed]


def is_terminal(status: Optional[TaskStatus]) -> bool:
    return isinstance(status, (Forgotten, Completed))


def recall_task(state: StmState, schemas: Iterable[ChunkSchema], n: int) -> Optional[Term]:
    """The operation recalled for task ``n``, or None when it is lost.

    Chunk symbols are not operations; only what they expand to counts.
    """
    if n < 1:
        raise ValueError(f"task index must be >= 1, got {n}")
    table = schemas if isinstance(schemas, Mapping) else {s.name: s for s in schemas}
    ops = {s.value for s in inferable(state, table) if s.index == n and not expand(s, table)}
    if len(ops) > 1:
        raise AmbiguousRecall(f"task {n} recalls several operations: {', '.join(sorted(map(str, ops)))}")
    return next(iter(ops), None)


def task_status(state: StmState, schemas: Iterable[ChunkSchema], progress: int, program: TaskProgram,
                step: int = 0) -> TaskStatus:
    """Status at ``step`` given ``progress`` tasks done so far plus one.

    ``progress`` 0 means the sequence has not started.
    """
    if progress > program.length:
        return Completed(step)
    if progress == 0:
        return Waiting()
    if recall_task(state, schemas, progress) is None:
        return Forgotten(progress, step)
    return InProgress(progress)


def next_action(status: TaskStatus, state: StmState, schemas: Iterable[ChunkSchema], program: TaskProgram,
                step: int, fallback_duration: int = 1) -> Optional[tuple[External, int]]:
    if step <= program.block_until or not isinstance(status, InProgress):
        return None
    op = recall_task(state, schemas, status.current)
    if op is None:
        return None
    return External(op), program.skill.duration_for(op, fallback_duration)
