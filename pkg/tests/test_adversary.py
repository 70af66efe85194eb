import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mqka.adversary import (
    CoalitionMemory,
    CoalitionSpec,
    InterceptResendEve,
    LiuCollusion,
    coalition_observe,
    execute_strategy,
    flip_feasibility,
    known_final_key_period,
    liu_distance_set,
)
from mqka.errors import ConfigurationError, StrategyError
from mqka.protocol import ProtocolConfig, Strategy, build_topology, init_session, run_period, run_session, xor_keys


def liu(members, n=8, expected=None):
    key = np.zeros(n, dtype=np.uint8) if expected is None else expected
    return CoalitionSpec(frozenset(members), "liu_collusion", key)


def brute_known_period(N, t, members):
    """Walk the schedule period by period, closing known key-index sets under XOR."""
    topo = build_topology(N, t)
    full = frozenset(range(N))
    known = {frozenset(), *(frozenset({m}) for m in members)}

    def close(sets):
        sets = set(sets)
        while True:
            new = {a ^ b for a in sets for b in sets} - sets
            if not new:
                return sets
            sets |= new

    known = close(known)
    if full in known:
        return 1
    for k in range(2, topo.completion_period + 1):
        for owner in members:
            for j in range(t):
                enc = topo.encoders(owner, j)
                if k - 2 < len(enc) and enc[k - 2] in members:
                    known.add(frozenset(enc[: k - 2]))
        known = close(known)
        if full in known:
            return k
        if k == topo.completion_period:
            for owner in members:
                for j in range(t):
                    known.add(frozenset(topo.encoders(owner, j)))
            known = close(known)
            if full in known:
                return k
    return None


@pytest.mark.parametrize("N, expected", [(6, {3}), (5, {2, 3}), (2, {1}), (9, {4, 5}), (10, {5})])
def test_liu_distance_set(N, expected):
    assert liu_distance_set(N) == expected


def test_liu_distance_set_rejects_tiny():
    with pytest.raises(ConfigurationError):
        liu_distance_set(1)


def test_coalition_spec_validation():
    with pytest.raises(ConfigurationError):
        CoalitionSpec(frozenset(), "liu_collusion", np.zeros(4))
    with pytest.raises(ConfigurationError):
        CoalitionSpec(frozenset({1}), "liu_collusion")
    with pytest.raises(ConfigurationError):
        CoalitionSpec(frozenset({1}), "bribery")
    with pytest.raises(ConfigurationError):
        CoalitionSpec(frozenset(), "honest", channels=frozenset({(0, 1)}))
    with pytest.raises(ConfigurationError):
        liu({5}).validate(4)
    with pytest.raises(ConfigurationError):
        liu({1}, n=4).validate(4, key_length=8)


# --------------------------------------------------------------------------
# schedule-walk oracle


def test_known_period_baseline_half_ring():
    assert known_final_key_period(build_topology(6, 1), liu({0, 3})) == 4


def test_known_period_resistant():
    topo = build_topology(6, 3)
    assert known_final_key_period(topo, liu({0, 3})) == 3 == topo.completion_period


def test_known_period_everyone():
    assert known_final_key_period(build_topology(5, 2), liu(range(5))) == 1


def test_known_period_empty_coalition():
    assert known_final_key_period(build_topology(5, 2), CoalitionSpec()) is None


def test_known_period_matches_brute_force():
    for N in range(2, 8):
        for t in range(1, N):
            topo = build_topology(N, t)
            for size in range(1, min(N, 3) + 1):
                for combo in itertools.combinations(range(N), size):
                    assert known_final_key_period(topo, liu(combo)) == brute_known_period(N, t, combo), (N, t, combo)


@pytest.mark.parametrize("N", range(2, 13))
def test_any_single_participant_knows_at_completion(N):
    for t in range(1, N):
        topo = build_topology(N, t)
        for i in range(N):
            assert known_final_key_period(topo, liu({i})) == topo.completion_period


def test_flip_feasible_baseline():
    report = flip_feasibility(build_topology(6, 1), liu({0, 3}))
    assert report.overall and report.known_at == 4
    assert set(report.flip_possible) == {1, 2, 4, 5}
    # one designated turn per honest owner, none before the key is known
    assert all(turn.period >= 4 for turn in report.flip_turns.values())


def test_flip_infeasible_resistant():
    report = flip_feasibility(build_topology(6, 3), liu({0, 3}))
    assert not report.overall
    assert not any(report.flip_possible.values())


def test_flip_infeasible_n4_t2_every_pair():
    topo = build_topology(4, 2)
    for pair in itertools.combinations(range(4), 2):
        assert not flip_feasibility(topo, liu(pair)).overall


def test_flip_requires_known_period():
    report = flip_feasibility(build_topology(5, 2), CoalitionSpec())
    assert report.known_at is None and not report.overall


@pytest.mark.parametrize("N", range(3, 13))
def test_liu_distances_are_exactly_the_winning_pairs(N):
    topo = build_topology(N, 1)
    winners = {d for d in range(1, N) if flip_feasibility(topo, liu({0, d})).overall}
    assert winners == liu_distance_set(N)


@pytest.mark.parametrize("N", range(3, 11))
def test_no_small_coalition_can_flip_resistant_protocol(N):
    for t in range(2, N // 2 + 1):
        topo = build_topology(N, t)
        for size in range(1, t + 1):
            for combo in itertools.combinations(range(N), size):
                assert not flip_feasibility(topo, liu(combo)).overall, (N, t, combo)


def test_degenerate_regime_is_safe_for_pairs():
    # floor(N/t) == 1: the complete-graph limit
    for N in range(4, 10):
        topo = build_topology(N, N - 1)
        for pair in itertools.combinations(range(N), 2):
            assert not flip_feasibility(topo, liu(pair)).overall


# --------------------------------------------------------------------------
# quantum-level observation


def _keys(*strings):
    return [np.array([int(c) for c in s], dtype=np.uint8) for s in strings]


def test_observe_learns_prefix_xor():
    keys = _keys("00", "10", "11", "00")
    strategy = LiuCollusion(liu({0, 3}, n=2))
    s = init_session(ProtocolConfig(4, 1, 2, 2, seed=4), keys)
    while s.period < 4:
        run_period(s, strategy)
    value = strategy.memory.learned_segments[(0, 0)][0]
    assert list(value[1]) == [0, 1] and value[2] == 4


def test_baseline_member_three_learns_k1_xor_k2():
    rng = np.random.default_rng(8)
    keys = list(rng.integers(0, 2, (6, 16), dtype=np.uint8))
    strategy = LiuCollusion(liu({0, 3}, n=16))
    s = init_session(ProtocolConfig(6, 1, 16, 4, seed=1), keys)
    while s.period < 4:
        run_period(s, strategy)
    mask, value, period = strategy.memory.learned_segments[(0, 0)][0]
    assert mask == 0b110 and period == 4
    np.testing.assert_array_equal(value, keys[1] ^ keys[2])
    assert strategy.memory.final_key_known_at == 4
    np.testing.assert_array_equal(strategy.memory.final_key, xor_keys(keys))


def test_observe_own_returned_arc_matches_finalize():
    rng = np.random.default_rng(9)
    keys = list(rng.integers(0, 2, (4, 8), dtype=np.uint8))
    strategy = LiuCollusion(liu({2}))
    s = run_session(ProtocolConfig(4, 1, 8, 2, seed=3), keys, strategy)
    _, value, period = strategy.memory.learned_segments[(2, 0)][-1]
    np.testing.assert_array_equal(value, xor_keys(keys) ^ keys[2])
    np.testing.assert_array_equal(value ^ keys[2], s.participants[2].final_key)
    assert period == 4


def test_observe_non_member_sequence_is_refused():
    s = init_session(ProtocolConfig(4, 1, 2), _keys("00", "01", "10", "11"))
    mem = CoalitionMemory.pool(s, frozenset({1}))
    with pytest.raises(StrategyError):
        coalition_observe(mem, 1, s.messages[(0, 0)], s.rng, 2)
    with pytest.raises(StrategyError):
        coalition_observe(mem, 3, s.messages[(1, 0)], s.rng, 2)


def test_observe_requires_holding():
    s = init_session(ProtocolConfig(4, 1, 2), _keys("00", "01", "10", "11"))
    mem = CoalitionMemory.pool(s, frozenset({0, 2}))
    with pytest.raises(StrategyError):
        coalition_observe(mem, 2, s.messages[(0, 0)], s.rng, 2)


# --------------------------------------------------------------------------
# full attacks


def honest_outputs(s, members):
    return [p.final_key for p in s.participants if p.index not in members]


@pytest.mark.parametrize("N", [4, 6, 8])
def test_baseline_attack_forces_expected_key(N):
    rng = np.random.default_rng(N)
    members = {0, N // 2}
    for rep in range(5):
        keys = rng.integers(0, 2, (N, 32), dtype=np.uint8)
        expected = rng.integers(0, 2, 32, dtype=np.uint8)
        strategy = execute_strategy(liu(members, 32, expected))
        s = run_session(ProtocolConfig(N, 1, 32, 8, seed=rep), keys, strategy)
        assert all(np.array_equal(k, expected) for k in honest_outputs(s, members))
        assert s.transcript.count("Abort") == 0
        assert all(e.mismatches == 0 for e in s.transcript.events if e.kind == "Detect")
        assert len(strategy.flips) == N - 2
        assert all(np.array_equal(strategy.reported_key(m, k), expected)
                   for m, k in ((m, s.participants[m].final_key) for m in members))


def test_resistant_attack_leaves_true_key():
    rng = np.random.default_rng(0)
    keys = rng.integers(0, 2, (6, 32), dtype=np.uint8)
    expected = rng.integers(0, 2, 32, dtype=np.uint8)
    strategy = execute_strategy(liu({0, 3}, 32, expected))
    s = run_session(ProtocolConfig(6, 3, 32, 8, seed=1), keys, strategy)
    assert not strategy.flips
    assert all(np.array_equal(k, xor_keys(keys)) for k in honest_outputs(s, {0, 3}))


def test_expected_equal_to_true_key_needs_no_flip():
    rng = np.random.default_rng(1)
    keys = rng.integers(0, 2, (6, 16), dtype=np.uint8)
    strategy = execute_strategy(liu({0, 3}, 16, xor_keys(keys)))
    s = run_session(ProtocolConfig(6, 1, 16, 4), keys, strategy)
    assert strategy.flips == {}
    assert all(np.array_equal(k, xor_keys(keys)) for k in honest_outputs(s, {0, 3}))


@settings(max_examples=25, deadline=None)
@given(
    st.integers(3, 7).flatmap(
        lambda N: st.tuples(
            st.just(N),
            st.integers(1, N // 2),
            st.sets(st.integers(0, N - 1), min_size=1, max_size=N // 2),
        )
    ),
    st.integers(0, 2**32),
)
def test_simulation_agrees_with_oracle(point, seed):
    N, t, members = point
    rng = np.random.default_rng(seed)
    keys = rng.integers(0, 2, (N, 24), dtype=np.uint8)
    expected = rng.integers(0, 2, 24, dtype=np.uint8)
    coalition = liu(members, 24, expected)
    strategy = execute_strategy(coalition)
    s = run_session(ProtocolConfig(N, t, 24, 4, seed=seed), keys, strategy)
    report = flip_feasibility(build_topology(N, t), coalition)
    forced = all(np.array_equal(k, expected) for k in honest_outputs(s, members))
    if not np.array_equal(expected, xor_keys(keys)):
        assert forced == report.overall
    assert strategy.memory.final_key_known_at == report.known_at
    assert {o: turn[1] for o, turn in strategy.flips.items()} == (
        {o: turn.period for o, turn in report.flip_turns.items()}
    )


def test_execute_strategy_dispatch():
    assert type(execute_strategy(CoalitionSpec())) is Strategy
    assert isinstance(execute_strategy(liu({1})), LiuCollusion)
    eve = execute_strategy(CoalitionSpec(strategy="intercept_resend_eve", channels=frozenset({(0, 1)})))
    assert isinstance(eve, InterceptResendEve) and eve.channels == {(0, 1)}


def test_eavesdropper_on_one_hop_is_caught():
    rng = np.random.default_rng(4)
    caught = 0
    for rep in range(200):
        eve = InterceptResendEve(frozenset({(0, 1)}))
        s = run_session(ProtocolConfig(4, 1, 8, 16, seed=rep), rng.integers(0, 2, (4, 8)), eve)
        # the 0 -> 1 link carries three of the four sequences
        assert eve.attacked_hops >= 1
        caught += s.aborted
    assert caught >= 190  # at least 1 - (3/4)**16 ~ 0.99


def test_eavesdropper_elsewhere_is_harmless():
    eve = InterceptResendEve(frozenset({(7, 8)}))
    s = run_session(ProtocolConfig(4, 1, 8, 16), np.ones((4, 8), dtype=int), eve)
    assert s.complete and eve.attacked_hops == 0
