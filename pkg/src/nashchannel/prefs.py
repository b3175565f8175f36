"""Finite social-choice model.

An :class:`Environment` fixes agents, outcomes, states and, for every
(state, agent) pair, a strict ranking of the outcomes from best to worst.
A :class:`SocialChoiceRule` maps each state to a nonempty set of outcomes.
The checkers in this module return a :class:`CheckResult` that carries the
violating tuple whenever the answer is negative.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Mapping

from .errors import InputError

Agent = Hashable
Outcome = Hashable
State = Hashable


class Ordering(enum.IntEnum):
    WORSE = -1
    EQUAL = 0
    BETTER = 1


@dataclass(frozen=True)
class CheckResult:
    """Boolean verdict plus the witness that explains a failure (or success)."""

    ok: bool
    witness: Any = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class Environment:
    agents: tuple
    outcomes: tuple
    states: tuple
    rankings: Mapping[tuple, tuple]
    _rank: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.agents) < 3:
            raise InputError(f"need at least 3 agents, got {len(self.agents)}")
        for name, seq in (("agents", self.agents), ("outcomes", self.outcomes), ("states", self.states)):
            if not seq:
                raise InputError(f"{name} must be nonempty")
            if len(set(seq)) != len(seq):
                raise InputError(f"duplicate identifiers in {name}")
        outcome_set = set(self.outcomes)
        frozen = {}
        rank = {}
        for t in self.states:
            for j in self.agents:
                if (t, j) not in self.rankings:
                    raise InputError(f"missing ranking for state {t!r}, agent {j!r}")
                ranked = tuple(self.rankings[(t, j)])
                if len(ranked) != len(self.outcomes) or set(ranked) != outcome_set:
                    raise InputError(
                        f"ranking for state {t!r}, agent {j!r} is not a permutation of the outcomes"
                    )
                frozen[(t, j)] = ranked
                rank[(t, j)] = {a: i for i, a in enumerate(ranked)}
        extra = set(self.rankings) - set(frozen)
        if extra:
            raise InputError(f"rankings for unknown (state, agent) pairs: {sorted(map(repr, extra))}")
        object.__setattr__(self, "rankings", frozen)
        object.__setattr__(self, "_rank", rank)

    @classmethod
    def from_nested(cls, agents, outcomes, states, rankings: Mapping[Any, Mapping[Any, Iterable]]):
        """Build from ``rankings[state][agent] = [best, ..., worst]``."""
        flat = {}
        for t, per_agent in rankings.items():
            for j, ranked in per_agent.items():
                flat[(t, j)] = tuple(ranked)
        return cls(agents, outcomes, states, flat)

    @property
    def n(self) -> int:
        return len(self.agents)

    def agent_index(self, agent) -> int:
        try:
            return self.agents.index(agent)
        except ValueError:
            raise InputError(f"unknown agent {agent!r}") from None

    def rank(self, state, agent, outcome) -> int:
        """Position of ``outcome`` in the ranking, 0 being the best."""
        try:
            return self._rank[(state, agent)][outcome]
        except KeyError:
            self._validate(state=state, agent=agent, outcome=outcome)
            raise

    def ranking(self, state, agent) -> tuple:
        self._validate(state=state, agent=agent)
        return self.rankings[(state, agent)]

    def top(self, state, agent):
        return self.ranking(state, agent)[0]

    def _validate(self, state=None, agent=None, outcome=None):
        if state is not None and state not in self.states:
            raise InputError(f"unknown state {state!r}")
        if agent is not None and agent not in self.agents:
            raise InputError(f"unknown agent {agent!r}")
        if outcome is not None and outcome not in self.outcomes:
            raise InputError(f"unknown outcome {outcome!r}")

    def prefers(self, state, agent, a, b) -> Ordering:
        self._validate(state, agent, a)
        self._validate(outcome=b)
        ra, rb = self.rank(state, agent, a), self.rank(state, agent, b)
        if ra < rb:
            return Ordering.BETTER
        if ra > rb:
            return Ordering.WORSE
        return Ordering.EQUAL

    def weakly_prefers(self, state, agent, a, b) -> bool:
        return self.rank(state, agent, a) <= self.rank(state, agent, b)

    def strictly_prefers(self, state, agent, a, b) -> bool:
        return self.rank(state, agent, a) < self.rank(state, agent, b)

    def lower_contour(self, state, agent, a) -> frozenset:
        """Outcomes ``b`` with ``a`` weakly preferred to ``b``."""
        ranked = self.ranking(state, agent)
        return frozenset(ranked[self.rank(state, agent, a):])


@dataclass(frozen=True)
class SocialChoiceRule:
    choice: Mapping[Any, frozenset]

    def __post_init__(self):
        frozen = {}
        for t, chosen in self.choice.items():
            chosen = frozenset(chosen)
            if not chosen:
                raise InputError(f"social choice rule selects nothing in state {t!r}")
            frozen[t] = chosen
        object.__setattr__(self, "choice", frozen)

    def __call__(self, state) -> frozenset:
        try:
            return self.choice[state]
        except KeyError:
            raise InputError(f"social choice rule is not defined on state {state!r}") from None

    def validate(self, env: Environment) -> None:
        for t in env.states:
            if t not in self.choice:
                raise InputError(f"social choice rule is not defined on state {t!r}")
        for t, chosen in self.choice.items():
            if t not in env.states:
                raise InputError(f"social choice rule names unknown state {t!r}")
            unknown = chosen - set(env.outcomes)
            if unknown:
                raise InputError(f"social choice rule picks unknown outcomes {sorted(map(str, unknown))} in {t!r}")


@dataclass(frozen=True)
class CardinalUtility:
    """Real payoffs ``values[(state, agent, outcome)]`` consistent with the rankings."""

    values: Mapping[tuple, float]

    def __post_init__(self):
        object.__setattr__(self, "values", {k: float(v) for k, v in self.values.items()})

    def __call__(self, state, agent, outcome) -> float:
        try:
            return self.values[(state, agent, outcome)]
        except KeyError:
            raise InputError(f"no utility for state {state!r}, agent {agent!r}, outcome {outcome!r}") from None

    @classmethod
    def from_nested(cls, nested: Mapping[Any, Mapping[Any, Mapping[Any, float]]]):
        return cls({(t, j, a): v for t, per in nested.items() for j, row in per.items() for a, v in row.items()})

    @classmethod
    def from_ranks(cls, env: Environment):
        """Borda-style utilities: best outcome gets ``|A|-1``, worst gets 0."""
        m = len(env.outcomes)
        return cls({
            (t, j, a): float(m - 1 - env.rank(t, j, a))
            for t in env.states for j in env.agents for a in env.outcomes
        })

    def validate(self, env: Environment) -> None:
        for t in env.states:
            for j in env.agents:
                for a in env.outcomes:
                    if (t, j, a) not in self.values:
                        raise InputError(f"missing utility for state {t!r}, agent {j!r}, outcome {a!r}")
                by_utility = sorted(env.outcomes, key=lambda a: -self.values[(t, j, a)])
                ranked = env.ranking(t, j)
                values = [self.values[(t, j, a)] for a in ranked]
                if any(x <= y for x, y in zip(values, values[1:])) or tuple(by_utility) != ranked:
                    raise InputError(
                        f"utilities for state {t!r}, agent {j!r} are not strictly decreasing along the ranking"
                    )

    def affine(self, scale: float, shift: float) -> "CardinalUtility":
        if scale <= 0:
            raise InputError("affine transform needs a positive scale")
        return CardinalUtility({k: scale * v + shift for k, v in self.values.items()})


def prefers(env: Environment, state, agent, a, b) -> Ordering:
    return env.prefers(state, agent, a, b)


def check_monotonic(env: Environment, F: SocialChoiceRule) -> CheckResult:
    """Maskin monotonicity.

    Fails with witness ``(t, t_prime, a)`` when ``a`` is chosen at ``t``, no
    agent's lower-contour set of ``a`` shrinks going to ``t_prime``, yet ``a``
    is not chosen at ``t_prime``.
    """
    F.validate(env)
    for t, t_prime in itertools.product(env.states, repeat=2):
        for a in sorted(F(t), key=env.outcomes.index):
            if a in F(t_prime):
                continue
            if all(
                env.lower_contour(t, j, a) <= env.lower_contour(t_prime, j, a)
                for j in env.agents
            ):
                return CheckResult(False, (t, t_prime, a))
    return CheckResult(True)


def check_no_veto(env: Environment, F: SocialChoiceRule) -> CheckResult:
    """An outcome top-ranked by at least n-1 agents must be chosen.

    Witness on failure is ``(t, a)``.
    """
    F.validate(env)
    for t in env.states:
        for a in env.outcomes:
            tops = sum(1 for j in env.agents if env.top(t, j) == a)
            if tops >= env.n - 1 and a not in F(t):
                return CheckResult(False, (t, a))
    return CheckResult(True)


def pareto_dominated(env: Environment, F: SocialChoiceRule, state) -> set[tuple]:
    """Pairs ``(chosen, dominating, all_strict)`` for outcomes chosen at ``state``.

    ``dominating`` is weakly preferred to ``chosen`` by every agent and strictly
    by at least one. ``all_strict`` flags domination that is strict for everyone.
    """
    env._validate(state=state)
    found = set()
    for chosen in F(state):
        for other in env.outcomes:
            if other == chosen:
                continue
            weak = all(env.weakly_prefers(state, j, other, chosen) for j in env.agents)
            strict = [env.strictly_prefers(state, j, other, chosen) for j in env.agents]
            if weak and any(strict):
                found.add((chosen, other, all(strict)))
    return found
