"""Simulator for short-term memory with decay, capacity-bounded eviction and chunking."""

from pathlib import Path

from stmsim.chunking import ChunkInstance, ChunkSchema, detectable, infer, inferable, instantiate
from stmsim.core import (
    EMPTY_STATE,
    External,
    Params,
    StmState,
    Store,
    Symbol,
    Term,
    TieBreak,
    Use,
    apply_step,
    expiring_symbols,
    oldest_symbol,
    term,
)
from stmsim.engine import StepRecord, Trajectory, run, state_at, successors
from stmsim.scenario import Scenario, ScenarioError, load, parse, parse_symbol, parse_term, render
from stmsim.taskexec import (
    Completed,
    Forgotten,
    InProgress,
    SkillProfile,
    TaskProgram,
    Waiting,
    next_action,
    recall_task,
    task_status,
)

CORPUS = Path(__file__).parent / "corpus"

__all__ = [
    "CORPUS", "EMPTY_STATE", "ChunkInstance", "ChunkSchema", "Completed", "External", "Forgotten", "InProgress",
    "Params", "Scenario", "ScenarioError", "SkillProfile", "StepRecord", "StmState", "Store", "Symbol",
    "TaskProgram", "Term", "TieBreak", "Trajectory", "Use", "Waiting", "apply_step", "detectable",
    "expiring_symbols", "infer", "inferable", "instantiate", "load", "next_action", "oldest_symbol", "parse",
    "parse_symbol", "parse_term", "recall_task", "render", "run", "state_at", "successors", "task_status", "term",
]

__version__ = "0.1.0"
