"""The canonical Maskin mechanism and its pure-strategy Nash equilibria.

Every agent announces ``(outcome, state, integer)``. The outcome function
resolves a profile by one of three rules:

1. unanimity on ``(a, t, 0)`` with ``a`` in ``F(t)`` returns ``a``;
2. all but one agent ``k`` agree on such a message: ``k`` gets the outcome
   she named unless she strictly prefers it to ``a`` in the announced state
   ``t``, in which case ``a`` is returned;
3. otherwise the lowest-indexed agent among those announcing the highest
   integer picks the outcome.

Integer caps
------------
The integer game is unbounded, so the equilibrium scans work with a cap.
A deviation that wins rule 3 never needs more than ``max(z) + 1``, and rules
1 and 2 only distinguish ``z == 0`` from ``z > 0``. :func:`is_nash_equilibrium`
therefore demands ``z_cap >= max(z) + 1`` and
:func:`enumerate_equilibrium_outcomes` scans profiles with integers up to
``z_cap`` against deviations up to ``z_cap + 1``. A profile at the cap could
otherwise never be outbid, which would invent rule-3 equilibria.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import BudgetExceeded, InputError
from .prefs import CardinalUtility, CheckResult, Environment, SocialChoiceRule

DEFAULT_Z_CAP = 2
DEFAULT_ENUMERATION_BUDGET = 2_000_000


@dataclass(frozen=True, order=True)
class Message:
    outcome: object
    state: object
    integer: int = 0

    def __post_init__(self):
        if isinstance(self.integer, bool) or not isinstance(self.integer, int) or self.integer < 0:
            raise InputError(f"message integer must be a non-negative int, got {self.integer!r}")

    def __iter__(self):
        return iter((self.outcome, self.state, self.integer))


@dataclass(frozen=True)
class Deviation:
    agent: object
    message: Message
    outcome: object
    gain: float


def _check_profile(env: Environment, m: Sequence[Message]) -> None:
    if len(m) != env.n:
        raise InputError(f"message profile has {len(m)} entries, environment has {env.n} agents")
    for msg in m:
        env._validate(state=msg.state, outcome=msg.outcome)


def outcome_g(env: Environment, F: SocialChoiceRule, m: Sequence[Message], *, validate: bool = True):
    """Return ``(outcome, rule)`` with ``rule`` in ``{1, 2, 3}``."""
    if validate:
        _check_profile(env, m)
    n = env.n
    counts = Counter(m)
    common, freq = counts.most_common(1)[0]
    a, t, z = common
    canonical = z == 0 and a in F(t)
    if canonical and freq == n:
        return a, 1
    if canonical and freq == n - 1:
        k = next(i for i, msg in enumerate(m) if msg != common)
        a_k = m[k].outcome
        if env.strictly_prefers(t, env.agents[k], a_k, a):
            return a, 2
        return a_k, 2
    top = max(msg.integer for msg in m)
    winner = next(msg for msg in m if msg.integer == top)
    return winner.outcome, 3


def message_space(env: Environment, z_cap: int):
    return [Message(a, t, z) for a in env.outcomes for t in env.states for z in range(z_cap + 1)]


def is_nash_equilibrium(
    env: Environment,
    F: SocialChoiceRule,
    true_state,
    m: Sequence[Message],
    u: CardinalUtility,
    z_cap: int,
) -> CheckResult:
    """Pure Nash check in ``true_state`` against deviations with integers up to ``z_cap``.

    The witness is the most profitable unilateral :class:`Deviation` (ties go
    to the lowest agent index, then message-space order), or ``None``.
    """
    _check_profile(env, m)
    env._validate(state=true_state)
    if z_cap < max(msg.integer for msg in m) + 1:
        raise InputError(f"z_cap={z_cap} too small: need at least max announced integer + 1")
    return _nash(env, F, true_state, tuple(m), u, message_space(env, z_cap), first_only=False)


def _nash(env, F, true_state, m, u, deviations, first_only):
    base, _ = outcome_g(env, F, m, validate=False)
    best = None
    for j, agent in enumerate(env.agents):
        current = u(true_state, agent, base)
        for dev in deviations:
            if dev == m[j]:
                continue
            trial = m[:j] + (dev,) + m[j + 1:]
            outcome, _ = outcome_g(env, F, trial, validate=False)
            gain = u(true_state, agent, outcome) - current
            if gain > 0 and (best is None or gain > best.gain):
                best = Deviation(agent, dev, outcome, gain)
                if first_only:
                    return CheckResult(False, best)
    return CheckResult(best is None, best)


def enumeration_size(env: Environment, z_cap: int) -> int:
    return (len(env.outcomes) * len(env.states) * (z_cap + 1)) ** env.n


def enumerate_equilibrium_outcomes(
    env: Environment,
    F: SocialChoiceRule,
    true_state,
    u: CardinalUtility,
    z_cap: int = DEFAULT_Z_CAP,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> set:
    """Outcomes of all pure equilibria whose announced integers are at most ``z_cap``."""
    env._validate(state=true_state)
    size = enumeration_size(env, z_cap)
    if size > budget:
        raise BudgetExceeded(
            f"{size} message profiles exceed the enumeration budget of {budget}", size, budget
        )
    space = message_space(env, z_cap)
    deviations = message_space(env, z_cap + 1)
    found = set()
    for profile in itertools.product(space, repeat=env.n):
        outcome, _ = outcome_g(env, F, profile, validate=False)
        if outcome in found:
            continue
        if _nash(env, F, true_state, profile, u, deviations, first_only=True):
            found.add(outcome)
    return found
