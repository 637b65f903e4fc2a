"""Chunk schemas, grounding, detection and recursive inference from STM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from stmsim.core import StmState, Symbol, Term


@dataclass(frozen=True)
class ChunkSchema:
    """A chunk known from long-term memory, parametric in its base position.

    ``elements`` holds ``(offset, payload)`` pairs sorted by offset; the
    element at offset ``k`` grounds to ``Symbol(base + k, payload)``.
    """

    name: str
    elements: tuple[tuple[int, Term], ...]

    def __post_init__(self) -> None:
        elements = tuple(sorted(((int(o), p if isinstance(p, Term) else Term(p)) for o, p in self.elements),
                                key=lambda e: e[0]))
        if not elements:
            raise ValueError(f"chunk {self.name} has no elements")
        offsets = [o for o, _ in elements]
        if len(set(offsets)) != len(offsets):
            raise ValueError(f"chunk {self.name} repeats an offset")
        if offsets[0] != 0:
            raise ValueError(f"chunk {self.name} has no element at offset 0")
        object.__setattr__(self, "elements", elements)

    @classmethod
    def contiguous(cls, name: str, payloads: Iterable) -> ChunkSchema:
        return cls(name, tuple(enumerate(payloads)))

    @property
    def symbol_value(self) -> Term:
        return Term(self.name)

    @property
    def span(self) -> int:
        return self.elements[-1][0]

    def references(self) -> set[str]:
        """Payload identifiers that could name another schema."""
        return {p.head for _, p in self.elements if isinstance(p.head, str) and not p.args}


@dataclass(frozen=True)
class ChunkInstance:
    schema: ChunkSchema
    base: int

    @property
    def chunk_symbol(self) -> Symbol:
        return Symbol(self.base, self.schema.symbol_value)

    @property
    def element_symbols(self) -> frozenset[Symbol]:
        return frozenset(Symbol(self.base + o, p) for o, p in self.schema.elements)

    def __str__(self) -> str:
        return f"{self.schema.name}@{self.base}"


def instantiate(schema: ChunkSchema, base: int) -> ChunkInstance:
    if base < 1:
        raise ValueError(f"base must be >= 1, got {base}")
    return ChunkInstance(schema, base)


def detectable(state: StmState, schemas: Iterable[ChunkSchema], base_range: range) -> list[ChunkInstance]:
    """Every grounded chunk whose elements are all in ``state``.

    Instances whose chunk symbol is already in STM are left out.  The
    result is ordered by chunk symbol.
    """
    found = []
    for schema in schemas:
        head = schema.elements[0][1]
        # the offset-0 element pins the base, so only its matches need checking
        for sym in state:
            if sym.value != head or sym.index not in base_range:
                continue
            inst = ChunkInstance(schema, sym.index)
            if inst.chunk_symbol in state:
                continue
            if all(s in state for s in inst.element_symbols):
                found.append(inst)
    found.sort(key=lambda i: i.chunk_symbol.sort_key)
    return found


def _by_name(schemas: Iterable[ChunkSchema]) -> Mapping[str, ChunkSchema]:
    if isinstance(schemas, Mapping):
        return schemas
    return {s.name: s for s in schemas}


def expand(symbol: Symbol, schemas: Mapping[str, ChunkSchema]) -> frozenset[Symbol]:
    """Element symbols of ``symbol`` if it denotes a chunk, else empty."""
    value = symbol.value
    if value.args or not isinstance(value.head, str):
        return frozenset()
    schema = schemas.get(value.head)
    if schema is None:
        return frozenset()
    return ChunkInstance(schema, symbol.index).element_symbols


def inferable(state: Iterable[Symbol], schemas: Iterable[ChunkSchema]) -> frozenset[Symbol]:
    """Least set containing ``state`` and closed under chunk expansion."""
    table = _by_name(schemas)
    seen = set(state)
    todo = list(seen)
    while todo:
        for sym in expand(todo.pop(), table):
            if sym not in seen:
                seen.add(sym)
                todo.append(sym)
    return frozenset(seen)


def infer(state: StmState, schemas: Iterable[ChunkSchema], symbol: Symbol) -> bool:
    return symbol in inferable(state, schemas)


def find_cycle(schemas: Sequence[ChunkSchema]) -> Optional[list[str]]:
    """A cycle in the schema reference graph as a list of names, or None."""
    table = _by_name(schemas)
    color: dict[str, int] = {}
    path: list[str] = []

    def visit(name: str) -> Optional[list[str]]:
        color[name] = 1
        path.append(name)
        for ref in sorted(table[name].references()):
            if ref not in table:
                continue
            if color.get(ref) == 1:
                return path[path.index(ref):] + [ref]
            if ref not in color:
                cycle = visit(ref)
                if cycle:
                    return cycle
        path.pop()
        color[name] = 2
        return None

    for name in sorted(table):
        if name not in color:
            cycle = visit(name)
            if cycle:
                return cycle
    return None
