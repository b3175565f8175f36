import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from nashchannel.errors import BudgetExceeded, InputError
from nashchannel.maskin import (
    Message,
    enumerate_equilibrium_outcomes,
    enumeration_size,
    is_nash_equilibrium,
    message_space,
    outcome_g,
)
from nashchannel.prefs import CardinalUtility
from strategies import env_and_rule


def M(a, t, z=0):
    return Message(a, t, z)


@pytest.mark.parametrize(
    "profile, expected",
    [
        ([M("a1", "t1")] * 3, ("a1", 1)),
        ([M("a2", "t2")] * 3, ("a2", 1)),
        # a2 is not chosen at t1, so unanimity falls through to the integer game
        ([M("a2", "t1")] * 3, ("a2", 3)),
        # Cindy ranks a1 over a3 at t1: her alternative goes through
        ([M("a1", "t1"), M("a1", "t1"), M("a3", "t1")], ("a3", 2)),
        # Apple ranks a3 over a1 at t1: the agreed outcome stands
        ([M("a3", "t1"), M("a1", "t1"), M("a1", "t1")], ("a1", 2)),
        ([M("a1", "t1", 1), M("a2", "t2", 2), M("a3", "t1", 2)], ("a2", 3)),
        ([M("a4", "t1", 3), M("a1", "t1"), M("a1", "t1")], ("a4", 2)),
    ],
)
def test_outcome_examples(env, scr, profile, expected):
    assert outcome_g(env, scr, profile) == expected


def test_rule2_ignores_integer_of_dissenter(env, scr):
    # a dissenter with a big integer still faces rule 2
    out, rule = outcome_g(env, scr, [M("a1", "t1"), M("a4", "t2", 9), M("a1", "t1")])
    assert rule == 2 and out == "a4"


def test_profile_validation(env, scr):
    with pytest.raises(InputError, match="3 agents"):
        outcome_g(env, scr, [M("a1", "t1")] * 2)
    with pytest.raises(InputError, match="unknown outcome"):
        outcome_g(env, scr, [M("zz", "t1")] * 3)
    with pytest.raises(InputError):
        Message("a1", "t1", -1)


def test_message_ordering_and_unpacking():
    a, t, z = M("a1", "t2", 4)
    assert (a, t, z) == ("a1", "t2", 4)
    assert M("a1", "t1") < M("a1", "t1", 1)


@st.composite
def env_rule_profile(draw):
    env, F = draw(env_and_rule(max_outcomes=3, max_states=2))
    msg = st.builds(Message, st.sampled_from(env.outcomes), st.sampled_from(env.states), st.integers(0, 2))
    profile = draw(st.lists(msg, min_size=env.n, max_size=env.n))
    return env, F, profile


@settings(max_examples=300, deadline=None)
@given(env_rule_profile())
def test_outcome_matches_oracle_and_rules_are_exclusive(case):
    env, F, m = case
    out, rule = outcome_g(env, F, m)
    assert out == oracles.g(env, F, [tuple(x) for x in m])
    counts = {x: m.count(x) for x in m}
    canonical = [x for x, c in counts.items() if x.integer == 0 and x.outcome in F(x.state)]
    if any(counts[x] == env.n for x in canonical):
        assert rule == 1
    elif any(counts[x] == env.n - 1 for x in canonical):
        assert rule == 2
    else:
        assert rule == 3


@settings(max_examples=200, deadline=None)
@given(env_and_rule(max_outcomes=3, max_states=2), st.data())
def test_single_dissent_from_unanimity_never_beats_the_agreed_outcome(pair, data):
    env, F = pair
    t = data.draw(st.sampled_from(env.states))
    a = data.draw(st.sampled_from(sorted(F(t))))
    k = data.draw(st.integers(0, env.n - 1))
    dev = data.draw(st.sampled_from(message_space(env, 2)))
    if dev == M(a, t):
        return
    m = [M(a, t)] * env.n
    m[k] = dev
    out, rule = outcome_g(env, F, m)
    assert rule == 2
    assert out in (a, dev.outcome)
    assert env.weakly_prefers(t, env.agents[k], a, out)


def test_nash_examples(env, scr, table1):
    u = table1.utilities
    assert is_nash_equilibrium(env, scr, "t2", [M("a2", "t2")] * 3, u, 1)
    res = is_nash_equilibrium(env, scr, "t2", [M("a1", "t1")] * 3, u, 1)
    assert not res
    assert res.witness.agent == "Apple" and res.witness.outcome == "a4"
    assert res.witness.gain == pytest.approx(2.0)


def test_nash_cap_must_allow_outbidding(env, scr, table1):
    with pytest.raises(InputError, match="too small"):
        is_nash_equilibrium(env, scr, "t2", [M("a1", "t1", 2)] * 3, table1.utilities, 2)


@pytest.mark.parametrize("state, expected", [("t1", {"a1"}), ("t2", {"a2"})])
def test_enumeration_on_table1(env, scr, table1, state, expected):
    assert enumerate_equilibrium_outcomes(env, scr, state, table1.utilities, z_cap=1) == expected


def test_enumeration_budget(env, scr, table1):
    assert enumeration_size(env, 1) == 16 ** 3
    with pytest.raises(BudgetExceeded) as info:
        enumerate_equilibrium_outcomes(env, scr, "t2", table1.utilities, z_cap=1, budget=100)
    assert info.value.size == 4096 and info.value.budget == 100


@settings(max_examples=25, deadline=None)
@given(env_and_rule(max_agents=3, max_outcomes=3, max_states=2), st.data())
def test_enumeration_matches_brute_force(pair, data):
    env, F = pair
    u = CardinalUtility.from_ranks(env)
    t = data.draw(st.sampled_from(env.states))
    assert enumerate_equilibrium_outcomes(env, F, t, u, z_cap=0) == oracles.equilibrium_outcomes(env, F, t, u, 0)


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_truthful_unanimity_is_nash_under_any_order_consistent_utilities(env, scr, data):
    values = {}
    for t in env.states:
        for j in env.agents:
            levels = sorted(data.draw(st.lists(st.floats(-50, 50), min_size=4, max_size=4, unique=True)), reverse=True)
            for a, v in zip(env.ranking(t, j), levels):
                values[(t, j, a)] = v
    u = CardinalUtility(values)
    m = [M("a2", "t2")] * 3
    assert is_nash_equilibrium(env, scr, "t2", m, u, 1)
    assert oracles.is_nash(env, scr, "t2", [tuple(x) for x in m], u, 1)
