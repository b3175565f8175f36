"""Structural and payoff conditions that make the channel agreement bite.

The structural part looks for a pair of states ``t_hat != t_bar`` with
outcomes ``a_hat in F(t_hat)`` and ``a_bar in F(t_bar)`` such that every
agent weakly prefers ``a_hat`` to ``a_bar`` at ``t_bar`` (someone strictly),
and at least two agents see a reversal in ``a_hat``'s pairwise comparisons
when going from ``t_hat`` to ``t_bar``. The payoff part compares per-agent
payoff records indexed by basis labels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import InputError
from .prefs import CheckResult, Environment, SocialChoiceRule


@dataclass(frozen=True)
class LambdaWitness:
    t_hat: object
    t_bar: object
    a_hat: object
    a_bar: object
    n_hat: frozenset

    @property
    def l(self) -> int:
        return len(self.n_hat)

    def validate(self, env: Environment, F: SocialChoiceRule) -> None:
        if self.t_hat == self.t_bar:
            raise InputError("witness states must differ")
        if self.a_hat not in F(self.t_hat) or self.a_bar not in F(self.t_bar):
            raise InputError("witness outcomes must be chosen in their states")
        if self.l < 2:
            raise InputError("witness needs at least two agents with a preference change")
        if not self.n_hat <= set(env.agents):
            raise InputError("witness names unknown agents")

    def ordered_n_hat(self, env: Environment) -> tuple:
        return tuple(j for j in env.agents if j in self.n_hat)


@dataclass(frozen=True)
class PayoffRecord:
    """Payoffs to one agent, placed last, per chosen basis vector.

    ``ccd`` and ``ddc`` may be left out for agents whose conditions do not
    reference them.
    """

    ccc: float
    ddd: float
    ccd: Optional[float] = None
    ddc: Optional[float] = None

    def __post_init__(self):
        for name in ("ccc", "ddd", "ccd", "ddc"):
            value = getattr(self, name)
            if value is None:
                continue
            value = float(value)
            if not math.isfinite(value):
                raise InputError(f"payoff {name} must be finite")
            object.__setattr__(self, name, value)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("ccc", "ccd", "ddc", "ddd") if getattr(self, k) is not None}

    def replace(self, **changes) -> "PayoffRecord":
        values = {k: getattr(self, k) for k in ("ccc", "ccd", "ddc", "ddd")}
        values.update(changes)
        return PayoffRecord(**values)


def preference_change_set(env: Environment, t_hat, t_bar, a_hat) -> frozenset:
    """Agents for whom some comparison involving ``a_hat`` flips between the two states."""
    env._validate(state=t_hat, outcome=a_hat)
    env._validate(state=t_bar)
    changed = set()
    for j in env.agents:
        for b in env.outcomes:
            if b == a_hat:
                continue
            if env.strictly_prefers(t_hat, j, a_hat, b) != env.strictly_prefers(t_bar, j, a_hat, b):
                changed.add(j)
                break
    return frozenset(changed)


def _dominates(env: Environment, state, a, b) -> bool:
    """``a`` weakly preferred to ``b`` by all agents at ``state``, strictly by one."""
    return all(env.weakly_prefers(state, j, a, b) for j in env.agents) and any(
        env.strictly_prefers(state, j, a, b) for j in env.agents
    )


def _ordered(env: Environment, outcomes) -> list:
    return sorted(outcomes, key=env.outcomes.index)


def check_lambda1(env: Environment, F: SocialChoiceRule) -> list[LambdaWitness]:
    """All structural witnesses in (t_hat, t_bar, a_hat, a_bar) iteration order."""
    F.validate(env)
    found = []
    for t_hat in env.states:
        for t_bar in env.states:
            if t_hat == t_bar:
                continue
            for a_hat in _ordered(env, F(t_hat)):
                n_hat = None
                for a_bar in _ordered(env, F(t_bar)):
                    if not _dominates(env, t_bar, a_hat, a_bar):
                        continue
                    if n_hat is None:
                        n_hat = preference_change_set(env, t_hat, t_bar, a_hat)
                    if len(n_hat) >= 2:
                        found.append(LambdaWitness(t_hat, t_bar, a_hat, a_bar, n_hat))
    return found


def check_lambda2(env: Environment, F: SocialChoiceRule, witness: LambdaWitness) -> CheckResult:
    """``a_hat`` must dominate at ``t_bar`` the outcome of every rival witness for the same ``t_bar``.

    Witness on failure is the rival :class:`LambdaWitness`.
    """
    for rival in check_lambda1(env, F):
        if rival.t_bar != witness.t_bar or rival.t_hat == witness.t_hat:
            continue
        if not _dominates(env, witness.t_bar, witness.a_hat, rival.a_hat):
            return CheckResult(False, rival)
    return CheckResult(True)


def check_lambda3(env: Environment, witness: LambdaWitness) -> CheckResult:
    """``a_hat`` is top-ranked in every state by every agent outside ``n_hat``.

    Witness on failure is ``(state, agent)``.
    """
    for t in env.states:
        for j in env.agents:
            if j in witness.n_hat:
                continue
            if env.top(t, j) != witness.a_hat:
                return CheckResult(False, (t, j))
    return CheckResult(True)


def _record(payoffs: Mapping, agent) -> PayoffRecord:
    try:
        return payoffs[agent]
    except KeyError:
        raise InputError(f"no payoff record for agent {agent!r}") from None


def check_lambda4(payoffs: Mapping, agents=None) -> CheckResult:
    """``ccc > ddd`` for every agent; witness is the first violating agent."""
    for j in payoffs if agents is None else agents:
        rec = _record(payoffs, j)
        if not rec.ccc > rec.ddd:
            return CheckResult(False, j)
    return CheckResult(True)


def lambda5_bound(rec: PayoffRecord, l: int) -> float:
    if rec.ccd is None or rec.ddc is None:
        raise InputError("payoff record lacks ccd/ddc needed for the l-weighted comparison")
    return rec.ccd * math.cos(math.pi / l) ** 2 + rec.ddc * math.sin(math.pi / l) ** 2


def check_lambda5(payoffs: Mapping, n_hat, l: int | None = None) -> CheckResult:
    """``ccc > ccd cos^2(pi/l) + ddc sin^2(pi/l)`` for every agent in ``n_hat``."""
    if l is None:
        l = len(n_hat)
    if l < 2:
        raise InputError(f"l must be at least 2, got {l}")
    for j in n_hat:
        rec = _record(payoffs, j)
        if not rec.ccc > lambda5_bound(rec, l):
            return CheckResult(False, j)
    return CheckResult(True)


@dataclass(frozen=True)
class LambdaVerdict:
    """Per-part outcome for one structural witness."""

    witness: LambdaWitness
    lambda2: CheckResult
    lambda3: CheckResult
    lambda4: CheckResult
    lambda5: CheckResult

    @property
    def ok(self) -> bool:
        return bool(self.lambda2 and self.lambda3 and self.lambda4 and self.lambda5)


def evaluate_witness(env, F, witness: LambdaWitness, payoffs: Mapping) -> LambdaVerdict:
    return LambdaVerdict(
        witness,
        check_lambda2(env, F, witness),
        check_lambda3(env, witness),
        check_lambda4(payoffs, env.agents),
        check_lambda5(payoffs, witness.ordered_n_hat(env), witness.l),
    )


def check_condition_lambda(env: Environment, F: SocialChoiceRule, payoffs: Mapping, t_bar=None) -> CheckResult:
    """First structural witness that passes every part, optionally restricted to ``t_bar``.

    On failure the witness is the list of :class:`LambdaVerdict` for all
    candidates, empty when no structural witness exists.
    """
    verdicts = []
    for witness in check_lambda1(env, F):
        if t_bar is not None and witness.t_bar != t_bar:
            continue
        verdict = evaluate_witness(env, F, witness, payoffs)
        if verdict.ok:
            return CheckResult(True, witness)
        verdicts.append(verdict)
    return CheckResult(False, verdicts)
