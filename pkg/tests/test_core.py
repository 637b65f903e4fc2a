import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stmsim.chunking import ChunkSchema, instantiate
from stmsim.core import (
    ConstraintViolation,
    External,
    InvalidDetection,
    Params,
    StmState,
    Store,
    Symbol,
    Term,
    TieBreak,
    Use,
    apply_step,
    eviction_choices,
    expiring_symbols,
    oldest_symbol,
    term,
)

from oracles import rule_step
from strategies import small_terms, states


def sym(i, v):
    return Symbol(i, Term(v))


a, b, c = sym(1, "a"), sym(1, "b"), sym(1, "c")


class TestTerm:
    def test_rendering(self):
        assert str(term("click", term("m", "tools"))) == "click(m(tools))"
        assert str(Symbol(3, Term(5))) == "3:5"

    def test_structural_equality(self):
        assert term("f", 1, "x") == Term("f", (Term(1), Term("x")))
        assert term("f", 1) != term("f", "1")

    def test_integers_order_numerically_before_identifiers(self):
        assert sorted([Term("a"), Term(10), Term(9)]) == [Term(9), Term(10), Term("a")]

    def test_symbol_index_must_be_positive(self):
        with pytest.raises(ValueError):
            Symbol(0, Term(1))


class TestParams:
    def test_defaults(self):
        p = Params()
        assert (p.capacity, p.epsilon, p.default_duration, p.tie_break) == (4, 30, 1, TieBreak.LEXICOGRAPHIC)

    @pytest.mark.parametrize("field", ["capacity", "epsilon", "default_duration"])
    def test_rejects_non_positive(self, field):
        with pytest.raises(ValueError):
            Params(**{field: 0})


class TestOldestSymbol:
    def test_empty(self):
        assert oldest_symbol(StmState()) is None

    def test_strict_minimum(self):
        assert oldest_symbol(StmState({a: 5, b: 3})) == b

    def test_tie_is_lexicographic(self):
        assert oldest_symbol(StmState({a: 3, b: 3})) == a
        assert oldest_symbol(StmState({b: 3, a: 3}), TieBreak.BRANCH) == a


class TestExpiring:
    def test_empty(self):
        assert expiring_symbols(StmState(), 1) == frozenset()

    def test_threshold(self):
        s = StmState({a: 1, b: 2})
        assert expiring_symbols(s, 1) == {a}
        assert expiring_symbols(s, 2) == {a, b}

    def test_duration_must_be_positive(self):
        with pytest.raises(ValueError):
            expiring_symbols(StmState(), 0)


class TestApplyStep:
    def test_store_sets_epsilon(self):
        assert apply_step(StmState(), [Store(sym(1, 2))], None, 1, Params()) == StmState({Symbol(1, Term(2)): 30})

    def test_nothing_to_do(self):
        assert apply_step(StmState(), [], None, 1, Params()) == StmState()

    def test_eviction_of_oldest(self):
        out = apply_step(StmState({a: 5, b: 3}), [Store(c)], None, 1, Params(capacity=2))
        assert out == StmState({a: 4, c: 30})

    def test_forgetting(self):
        assert apply_step(StmState({a: 1}), [], None, 1, Params()) == StmState()

    def test_span_of_four(self):
        s = StmState()
        for digit in (2, 4, 5, 7):
            s = apply_step(s, [Store(Symbol(len(s) + 1, Term(digit)))], None, 1, Params())
        assert s == StmState({Symbol(1, Term(2)): 27, Symbol(2, Term(4)): 28,
                              Symbol(3, Term(5)): 29, Symbol(4, Term(7)): 30})

    def test_no_eviction_when_something_expires(self):
        out = apply_step(StmState({a: 1, b: 3}), [Store(c)], None, 1, Params(capacity=2))
        assert out == StmState({b: 2, c: 30})

    def test_use_resets(self):
        assert apply_step(StmState({a: 4, b: 9}), [Use(a)], None, 2, Params()) == StmState({a: 30, b: 7})

    def test_use_of_absent_symbol_is_noop(self):
        assert apply_step(StmState({a: 4}), [Use(b)], None, 1, Params()) == StmState({a: 3})

    def test_use_rescues_expiring_symbol(self):
        assert apply_step(StmState({a: 1}), [Use(a)], None, 1, Params()) == StmState({a: 30})

    def test_restore_of_present_symbol_at_capacity_evicts_oldest(self):
        # literal eviction rule: size drops below capacity
        out = apply_step(StmState({a: 5, b: 3}), [Store(a)], None, 1, Params(capacity=2))
        assert out == StmState({a: 30})

    def test_restore_of_oldest_symbol_evicts_nothing(self):
        out = apply_step(StmState({a: 5, b: 3}), [Store(b)], None, 1, Params(capacity=2))
        assert out == StmState({a: 4, b: 30})

    def test_external_action_only_decays(self):
        out = apply_step(StmState({a: 9}), [External(Term("click"))], None, 7, Params())
        assert out == StmState({a: 2})

    def test_chunk_replacement(self):
        roc = ChunkSchema.contiguous("ac_roc", [Term(5), Term(8), Term(5)])
        inst = instantiate(roc, 1)
        s = StmState({Symbol(1, Term(5)): 28, Symbol(2, Term(8)): 29, Symbol(3, Term(5)): 30})
        assert apply_step(s, [], inst, 1, Params()) == StmState({Symbol(1, Term("ac_roc")): 30})

    def test_two_stm_ops_rejected(self):
        with pytest.raises(ConstraintViolation):
            apply_step(StmState(), [Store(a), Use(b)], None, 1, Params())

    def test_detection_while_storing_rejected(self):
        inst = instantiate(ChunkSchema.contiguous("k", [Term("a")]), 1)
        with pytest.raises(ConstraintViolation):
            apply_step(StmState({a: 3}), [Store(b)], inst, 1, Params())

    def test_detection_of_absent_elements_rejected(self):
        inst = instantiate(ChunkSchema.contiguous("k", [Term("a"), Term("b")]), 1)
        with pytest.raises(InvalidDetection):
            apply_step(StmState({a: 3}), [], inst, 1, Params())

    def test_branch_mode_offers_every_tied_victim(self):
        s = StmState({a: 3, b: 3})
        assert eviction_choices(s, c, 1, Params(capacity=2, tie_break=TieBreak.BRANCH)) == [a, b]
        assert eviction_choices(s, c, 1, Params(capacity=2)) == [a]
        assert apply_step(s, [Store(c)], None, 1, Params(capacity=2, tie_break="branch"), evict=b) == \
            StmState({a: 2, c: 30})


# --------------------------------------------------------------------------
# properties

ops = st.one_of(
    st.none(),
    st.builds(Store, st.builds(Symbol, st.integers(1, 8), small_terms)),
    st.builds(Use, st.builds(Symbol, st.integers(1, 8), small_terms)),
)


def _capped(state, capacity):
    return StmState(dict(list(state.items())[:capacity]))


@given(states(), ops, st.integers(1, 7), st.integers(1, 6))
def test_matches_rule_oracle(state, op, dur, capacity):
    state = _capped(state, capacity)
    actions = [op] if op else []
    got = apply_step(state, actions, None, dur, Params(capacity=capacity))
    expected = rule_step(dict(state), store=op.symbol if isinstance(op, Store) else None,
                         use=op.symbol if isinstance(op, Use) else None, dur=dur, capacity=capacity)
    assert got == StmState(expected)


@given(states(), ops, st.integers(1, 40), st.integers(1, 6))
def test_decay_and_reset_exactness(state, op, dur, capacity):
    state = _capped(state, capacity)
    params = Params(capacity=capacity)
    out = apply_step(state, [op] if op else [], None, dur, params)
    touched = {op.symbol} if isinstance(op, Store) or (isinstance(op, Use) and op.symbol in state) else set()
    for s in touched:
        assert out[s] == params.epsilon
    evicted = [s for s in state if s not in touched and state[s] > dur and s not in out]
    assert len(evicted) <= 1
    for s, r in state.items():
        if s in touched or s in evicted:
            continue
        if r > dur:
            assert out[s] == r - dur
        else:
            assert s not in out
    if evicted:
        assert isinstance(op, Store) and len(state) == capacity
        assert not expiring_symbols(state, dur)
        assert evicted[0] == oldest_symbol(state)


@given(states(max_size=6), st.integers(1, 3))
def test_chunk_replacement_never_grows(state, k):
    by_index = {}
    for s in state:
        by_index.setdefault(s.index, s)
    elems = sorted(by_index.values())[:k]
    if not elems:
        return
    base = elems[0].index
    schema = ChunkSchema("k", tuple((e.index - base, e.value) for e in elems))
    out = apply_step(state, [], instantiate(schema, base), 1, Params())
    assert len(out) <= len(state)


@given(states(), ops, st.integers(1, 5))
def test_pure(state, op, dur):
    actions = [op] if op else []
    assert apply_step(state, actions, None, dur, Params(capacity=7)) == \
        apply_step(state, actions, None, dur, Params(capacity=7))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_capacity_bound_random_walk(seed):
    rng = random.Random(seed)
    capacity = rng.randint(1, 6)
    params = Params(capacity=capacity, epsilon=rng.randint(1, 40))
    state = StmState()
    for _ in range(200):
        r = rng.random()
        s = Symbol(rng.randint(1, 9), Term(rng.randint(0, 4)))
        actions = [Store(s)] if r < 0.6 else [Use(s)] if r < 0.8 else []
        state = apply_step(state, actions, None, rng.randint(1, 5), params)
        assert len(state) <= capacity
