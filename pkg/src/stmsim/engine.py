"""Whole-run simulation with exhaustive branching.

Starting from an empty STM, each step applies the scheduled actions (plus
whatever the task layer decides to do).  When STM is idle and several
chunks could be detected, every choice becomes its own trajectory, so the
result of :func:`run` is the full set of possible evolutions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

from stmsim.chunking import ChunkInstance, detectable
from stmsim.core import (
    EMPTY_STATE,
    Action,
    External,
    StmError,
    StmState,
    Store,
    Symbol,
    action_sort_key,
    apply_step,
    eviction_choices,
    stm_action,
)
from stmsim.scenario import Scenario
from stmsim.taskexec import TaskStatus, is_terminal, next_action, recall_task, task_status

DEFAULT_MAX_TRAJECTORIES = 10_000


class SimulationError(StmError):
    def __init__(self, step: int, message: str):
        self.step = step
        super().__init__(f"step {step}: {message}")


class BranchLimitExceeded(StmError):
    pass


@dataclass(frozen=True)
class StepRecord:
    step: int
    state_before: StmState
    actions: tuple[Action, ...]
    detected: Optional[ChunkInstance]
    duration: int
    task_status: Optional[TaskStatus] = None
    evicted: Optional[Symbol] = None

    def __post_init__(self) -> None:
        if self.duration < 1:
            raise ValueError(f"duration must be >= 1, got {self.duration}")
        if self.detected is not None and stm_action(self.actions) is not None:
            raise ValueError(f"step {self.step}: chunk detected while STM is in use")


@dataclass(frozen=True)
class Trajectory:
    records: tuple[StepRecord, ...]
    final_state: StmState
    final_status: Optional[TaskStatus] = None

    @property
    def last_step(self) -> int:
        return len(self.records)

    def state_at(self, step: int) -> StmState:
        if not 0 <= step <= self.last_step:
            raise IndexError(f"step {step} outside 0..{self.last_step}")
        return self.final_state if step == self.last_step else self.records[step].state_before

    def status_at(self, step: int) -> Optional[TaskStatus]:
        if not 0 <= step <= self.last_step:
            raise IndexError(f"step {step} outside 0..{self.last_step}")
        return self.final_status if step == self.last_step else self.records[step].task_status

    def actions_at(self, step: int) -> tuple[Action, ...]:
        return self.records[step].actions if step < self.last_step else ()

    @property
    def detections(self) -> list[tuple[int, ChunkInstance]]:
        return [(r.step, r.detected) for r in self.records if r.detected is not None]

    @property
    def sort_key(self) -> tuple:
        return (
            tuple((r.step, r.detected.chunk_symbol.sort_key) for r in self.records if r.detected is not None),
            tuple((r.step, r.evicted.sort_key) for r in self.records if r.evicted is not None),
            self.last_step,
        )


def state_at(trajectory: Trajectory, step: int) -> StmState:
    return trajectory.state_at(step)


class Successor(NamedTuple):
    state: StmState
    detected: Optional[ChunkInstance]
    evicted: Optional[Symbol] = None


def successors(state: StmState, actions: Sequence[Action], duration: int, scenario: Scenario) -> list[Successor]:
    """Every possible next state, one per detection or eviction choice."""
    op = stm_action(actions)
    params = scenario.params
    if op is None:
        found = detectable(state, scenario.schemas, scenario.base_range)
        if found:
            return [Successor(apply_step(state, actions, inst, duration, params), inst) for inst in found]
        return [Successor(apply_step(state, actions, None, duration, params), None)]
    if isinstance(op, Store):
        return [
            Successor(apply_step(state, actions, None, duration, params, evict=victim), None, victim)
            for victim in eviction_choices(state, op.symbol, duration, params)
        ]
    return [Successor(apply_step(state, actions, None, duration, params), None)]


def step_limit(scenario: Scenario) -> int:
    if scenario.horizon is not None:
        return scenario.horizon
    prog = scenario.program
    cap = 10 * prog.length + max(prog.block_until, 0)
    return max(cap, scenario.last_scheduled_step + 1)


class _Node(NamedTuple):
    records: tuple[StepRecord, ...]
    state: StmState
    progress: int


class _Runner:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.schemas = scenario.schema_table
        self.limit = step_limit(scenario)

    def step_duration(self, actions: Sequence[Action]) -> int:
        default = self.scenario.params.default_duration
        prog = self.scenario.program
        timed = [
            prog.skill.duration_for(a.term, default) if prog is not None else default
            for a in actions
            if isinstance(a, External)
        ]
        return max(timed, default=default)

    def expand(self, node: _Node, step: int) -> Union[Trajectory, list[_Node]]:
        records, state, progress = node
        prog = self.scenario.program
        status = None
        if prog is not None:
            if progress == 0 and recall_task(state, self.schemas, 1) is not None:
                progress = 1
            status = task_status(state, self.schemas, progress, prog, step)
            if is_terminal(status):
                return Trajectory(records, state, status)
        if step >= self.limit:
            return Trajectory(records, state, status)

        actions = set(self.scenario.actions_at(step))
        advanced = progress
        if prog is not None:
            chosen = next_action(status, state, self.schemas, prog, step, self.scenario.params.default_duration)
            if chosen is not None:
                actions.add(chosen[0])
            current_op = recall_task(state, self.schemas, progress) if progress >= 1 else None
            if current_op is not None and External(current_op) in actions:
                advanced = progress + 1
        ordered = tuple(sorted(actions, key=action_sort_key))
        duration = self.step_duration(ordered)
        try:
            nexts = successors(state, ordered, duration, self.scenario)
        except StmError as e:
            raise SimulationError(step, str(e)) from e
        return [
            _Node(records + (StepRecord(step, state, ordered, s.detected, duration, status, s.evicted),),
                  s.state, advanced)
            for s in nexts
        ]


def run(scenario: Scenario, workers: int = 1, max_trajectories: int = DEFAULT_MAX_TRAJECTORIES) -> list[Trajectory]:
    """All trajectories of ``scenario`` in canonical order.

    With ``workers > 1`` each frontier is expanded on a thread pool; the
    merged result is sorted, so output does not depend on scheduling.
    """
    runner = _Runner(scenario)
    frontier = [_Node((), EMPTY_STATE, 0)]
    done: list[Trajectory] = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        step = 0
        while frontier:
            if pool is not None and len(frontier) > 1:
                results = list(pool.map(lambda n: runner.expand(n, step), frontier))
            else:
                results = [runner.expand(n, step) for n in frontier]
            frontier = []
            for res in results:
                if isinstance(res, Trajectory):
                    done.append(res)
                else:
                    frontier.extend(res)
            if len(done) + len(frontier) > max_trajectories:
                raise BranchLimitExceeded(
                    f"more than {max_trajectories} trajectories by step {step}; raise the limit or use lex tie-break"
                )
            step += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return sorted(done, key=lambda t: t.sort_key)
