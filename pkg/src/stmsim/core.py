"""Short-term memory state and the single-step transition function.

A state maps symbols to the number of time units left before they are
forgotten.  ``apply_step`` advances a state by one step: stores, uses,
chunk replacement, eviction at capacity and decay all happen at once,
with every guard evaluated against the input state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Union


class StmError(Exception):
    """Base class for simulator errors."""


class ConstraintViolation(StmError):
    """Two STM operations requested in the same step."""


class InvalidDetection(StmError):
    """A detected chunk whose elements are not all in STM."""


@dataclass(frozen=True)
class Term:
    """A ground term: an integer or identifier head with optional arguments."""

    head: Union[int, str]
    args: tuple[Term, ...] = ()

    def __post_init__(self) -> None:
        if isinstance(self.head, bool) or not isinstance(self.head, (int, str)):
            raise TypeError(f"term head must be int or str, got {self.head!r}")
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    @property
    def functor(self) -> str:
        return str(self.head)

    @property
    def sort_key(self) -> tuple:
        head = (0, self.head, "") if isinstance(self.head, int) else (1, 0, self.head)
        return (head, tuple(a.sort_key for a in self.args))

    def __lt__(self, other: Term) -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        if not self.args:
            return str(self.head)
        return f"{self.head}({','.join(str(a) for a in self.args)})"


def term(head: Union[int, str], *args: Union[Term, int, str]) -> Term:
    """Shorthand constructor: ``term("click", term("m", "tools"))``."""
    return Term(head, tuple(a if isinstance(a, Term) else Term(a) for a in args))


@dataclass(frozen=True)
class Symbol:
    """An STM symbol: a term tagged with its position in the presented sequence."""

    index: int
    value: Term

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError(f"symbol index must be >= 1, got {self.index}")
        if not isinstance(self.value, Term):
            object.__setattr__(self, "value", Term(self.value))

    @property
    def sort_key(self) -> tuple:
        return (self.index, self.value.sort_key)

    def __lt__(self, other: Symbol) -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return f"{self.index}:{self.value}"


class TieBreak(str, Enum):
    LEXICOGRAPHIC = "lex"
    BRANCH = "branch"


@dataclass(frozen=True)
class Params:
    capacity: int = 4
    epsilon: int = 30
    default_duration: int = 1
    tie_break: TieBreak = TieBreak.LEXICOGRAPHIC

    def __post_init__(self) -> None:
        for name in ("capacity", "epsilon", "default_duration"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))


@dataclass(frozen=True)
class Store:
    symbol: Symbol

    def __str__(self) -> str:
        return f"store {self.symbol}"


@dataclass(frozen=True)
class Use:
    symbol: Symbol

    def __str__(self) -> str:
        return f"use {self.symbol}"


@dataclass(frozen=True)
class External:
    """An action on the outside world; never touches STM directly."""

    term: Term

    def __str__(self) -> str:
        return f"do {self.term}"


Action = Union[Store, Use, External]

_ACTION_RANK = {Store: 0, Use: 1, External: 2}


def action_sort_key(action: Action) -> tuple:
    payload = action.term if isinstance(action, External) else action.symbol
    return (_ACTION_RANK[type(action)], payload.sort_key)


def is_stm_related(action: Action) -> bool:
    return isinstance(action, (Store, Use))


class StmState(Mapping[Symbol, int]):
    """Immutable mapping from symbol to remaining time units.

    Every remaining value is positive: a symbol that reaches zero is absent.
    Iteration is in canonical symbol order.
    """

    __slots__ = ("_entries", "_hash")

    def __init__(self, entries: Union[Mapping[Symbol, int], Iterable[tuple[Symbol, int]], None] = None):
        items = dict(entries or {})
        for sym, remaining in items.items():
            if not isinstance(sym, Symbol):
                raise TypeError(f"state keys must be Symbols, got {sym!r}")
            if remaining <= 0:
                raise ValueError(f"{sym} has non-positive remaining time {remaining}")
        self._entries = dict(sorted(items.items(), key=lambda kv: kv[0].sort_key))
        self._hash: Optional[int] = None

    def __getitem__(self, sym: Symbol) -> int:
        return self._entries[sym]

    def __iter__(self) -> Iterator[Symbol]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._entries.items()))
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, StmState):
            return self._entries == other._entries
        return NotImplemented

    def __repr__(self) -> str:
        return f"StmState({{{', '.join(f'{s}: {r}' for s, r in self._entries.items())}}})"

    def __str__(self) -> str:
        return "{" + " ".join(f"{s}={r}" for s, r in self._entries.items()) + "}"


EMPTY_STATE = StmState()


def oldest_candidates(state: StmState) -> list[Symbol]:
    """All symbols sharing the minimal remaining time, in canonical order."""
    if not state:
        return []
    low = min(state.values())
    return [s for s, r in state.items() if r == low]


def oldest_symbol(state: StmState, tie_break: TieBreak = TieBreak.LEXICOGRAPHIC) -> Optional[Symbol]:
    """The symbol closest to expiring; ties resolve to the least symbol.

    In branch mode the same symbol is returned; callers that want every
    tied choice use :func:`oldest_candidates`.
    """
    candidates = oldest_candidates(state)
    return candidates[0] if candidates else None


def expiring_symbols(state: StmState, duration: int) -> frozenset[Symbol]:
    if duration < 1:
        raise ValueError(f"duration must be >= 1, got {duration}")
    return frozenset(s for s, r in state.items() if r <= duration)


def stm_action(actions: Iterable[Action]) -> Optional[Union[Store, Use]]:
    """The single store/use among ``actions``, or None."""
    ops = {a for a in actions if is_stm_related(a)}
    if len(ops) > 1:
        listed = ", ".join(sorted(str(a) for a in ops))
        raise ConstraintViolation(f"at most one store/use per step, got: {listed}")
    return next(iter(ops), None)


def eviction_choices(state: StmState, store: Symbol, duration: int, params: Params) -> list[Optional[Symbol]]:
    """Possible evictions caused by storing ``store``.

    ``[None]`` when no eviction fires.  Otherwise one entry per tied oldest
    symbol (lex mode keeps only the least); an entry equal to ``store``
    becomes ``None`` because a symbol never evicts itself.
    """
    if len(state) != params.capacity or expiring_symbols(state, duration):
        return [None]
    candidates = oldest_candidates(state)
    if params.tie_break is TieBreak.LEXICOGRAPHIC:
        candidates = candidates[:1]
    return [None if c == store else c for c in candidates]


def apply_step(
    state: StmState,
    actions: Iterable[Action],
    detected=None,
    duration: int = 1,
    params: Params = Params(),
    *,
    evict: Union[Symbol, None, type(...)] = ...,
) -> StmState:
    """Successor of ``state`` after one step of ``duration`` time units.

    ``detected`` is a :class:`~stmsim.chunking.ChunkInstance` or None.
    ``evict`` overrides the eviction choice (used by the engine in branch
    mode); it must be one of :func:`eviction_choices`.
    """
    if duration < 1:
        raise ValueError(f"duration must be >= 1, got {duration}")
    op = stm_action(actions)

    touched: dict[Symbol, int] = {}
    removed: set[Symbol] = set()

    if detected is not None:
        if op is not None:
            raise ConstraintViolation(f"chunk {detected.chunk_symbol} detected while STM is in use ({op})")
        missing = [s for s in detected.element_symbols if s not in state]
        if missing:
            raise InvalidDetection(
                f"chunk {detected.chunk_symbol} detected but {', '.join(map(str, sorted(missing)))} not in STM"
            )
        removed.update(detected.element_symbols)
        touched[detected.chunk_symbol] = params.epsilon

    if isinstance(op, Store):
        choices = eviction_choices(state, op.symbol, duration, params)
        if evict is ...:
            victim = choices[0]
        elif evict in choices:
            victim = evict
        else:
            raise ValueError(f"{evict} is not a valid eviction choice")
        if victim is not None:
            removed.add(victim)
        touched[op.symbol] = params.epsilon
    elif isinstance(op, Use) and op.symbol in state:
        touched[op.symbol] = params.epsilon

    nxt: dict[Symbol, int] = {}
    for sym, remaining in state.items():
        if sym in touched or sym in removed:
            continue
        if remaining > duration:
            nxt[sym] = remaining - duration
    nxt.update(touched)
    return StmState(nxt)
