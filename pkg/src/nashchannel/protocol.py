"""Channel agreement between the agents and the designer.

Each agent either leaves her channel to a shared message-computing device
(``S0``) or takes it back and reports directly (``S1``). The device reads a
local operator ``w(theta, phi)`` from every agent, draws a basis vector from
the resulting distribution and sends, per agent, the canonical message
``(a_hat, t_hat, 0)`` on a C letter or the agent's own fallback message on a
D letter. Taking back one channel is observed by everybody, and then every
agent reports her fallback directly.

Payoff valuation in :func:`verify_lemma1`
-----------------------------------------
Deviation payoffs are sums over basis vectors of probability times value.
The value of a basis vector for agent ``j`` comes from, in order:

* ``j``'s payoff record entry for that label (``ccc``/``ccd``/``ddc``/``ddd``
  with ``j`` placed last), provided ``j``'s fallback is the agreed one
  whenever her letter is D;
* otherwise the utility of the outcome of ``g`` in the true state, unless
  ``g`` falls through to the integer game, which is valued at ``j``'s
  ``ddd`` entry since nobody can be sure to win an unbounded integer race.
"""
from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import engine
from .conditions import (
    LambdaWitness,
    PayoffRecord,
    check_condition_lambda,
    check_lambda1,
)
from .errors import BudgetExceeded, InputError
from .maskin import DEFAULT_Z_CAP, Message, is_nash_equilibrium, message_space, outcome_g
from .prefs import CardinalUtility, Environment, SocialChoiceRule, check_monotonic, check_no_veto

log = logging.getLogger(__name__)

LABELS = ("ccc", "ccd", "ddc", "ddd")
DEFAULT_GRID = (181, 91)
DEFAULT_GRID_BUDGET = 20_000_000
GAIN_TOL = 1e-9


class Channel(str, enum.Enum):
    S0 = "S0"
    S1 = "S1"


@dataclass(frozen=True)
class AgentPlan:
    fallback: Message
    theta: float = 0.0
    phi: float = 0.0
    channel: Channel = Channel.S0

    def __post_init__(self):
        op = engine.LocalOperator(self.theta, self.phi)
        object.__setattr__(self, "theta", op.theta)
        object.__setattr__(self, "phi", op.phi)
        object.__setattr__(self, "channel", Channel(self.channel))
        if not isinstance(self.fallback, Message):
            object.__setattr__(self, "fallback", Message(*self.fallback))

    @property
    def operator(self) -> engine.LocalOperator:
        return engine.LocalOperator(self.theta, self.phi)

    def with_(self, **changes) -> "AgentPlan":
        values = dict(fallback=self.fallback, theta=self.theta, phi=self.phi, channel=self.channel)
        values.update(changes)
        return AgentPlan(**values)


@dataclass(frozen=True)
class ProtocolRun:
    chosen_basis: Optional[int]
    label: Optional[str]
    messages: tuple
    outcome: object
    rule: int
    utilities: Optional[dict]
    seed: object
    cascade: bool = False


def _check_plans(env: Environment, plans: Sequence[AgentPlan], require_s0: bool = True) -> None:
    if len(plans) != env.n:
        raise InputError(f"{len(plans)} plans for {env.n} agents")
    for agent, plan in zip(env.agents, plans):
        env._validate(state=plan.fallback.state, outcome=plan.fallback.outcome)
        if require_s0 and plan.channel is not Channel.S0:
            raise InputError(f"agent {agent!r} took back her channel; message computing needs S0 everywhere")


def canonical_message(witness: LambdaWitness) -> Message:
    return Message(witness.a_hat, witness.t_hat, 0)


def step5_messages(witness: LambdaWitness, plans: Sequence[AgentPlan], index: int) -> tuple:
    """Messages sent for basis vector ``index``: canonical on C, fallback on D."""
    n = len(plans)
    canon = canonical_message(witness)
    return tuple(
        plan.fallback if (index >> (n - 1 - k)) & 1 else canon for k, plan in enumerate(plans)
    )


def plan_distribution(plans: Sequence[AgentPlan], max_agents: int = engine.MAX_AGENTS) -> np.ndarray:
    return engine.pipeline([p.operator for p in plans], max_agents=max_agents)


def _utilities(env, u, true_state, outcome):
    if u is None:
        return None
    return {j: u(true_state, j, outcome) for j in env.agents}


def _run_at(env, F, witness, plans, index, seed, u, true_state) -> ProtocolRun:
    messages = step5_messages(witness, plans, index)
    outcome, rule = outcome_g(env, F, messages)
    return ProtocolRun(
        chosen_basis=index,
        label=engine.letters(index, env.n),
        messages=messages,
        outcome=outcome,
        rule=rule,
        utilities=_utilities(env, u, true_state, outcome),
        seed=seed,
    )


def message_computing(
    env: Environment,
    F: SocialChoiceRule,
    witness: LambdaWitness,
    plans: Sequence[AgentPlan],
    seed,
    u: CardinalUtility | None = None,
    true_state=None,
    max_agents: int = engine.MAX_AGENTS,
) -> ProtocolRun:
    _check_plans(env, plans)
    true_state = witness.t_bar if true_state is None else true_state
    index = engine.sample_basis(plan_distribution(plans, max_agents), seed, overwrite=True)
    return _run_at(env, F, witness, plans, index, seed, u, true_state)


def message_computing_many(env, F, witness, plans, seeds, u=None, true_state=None,
                           max_agents: int = engine.MAX_AGENTS) -> list[ProtocolRun]:
    """Same as calling :func:`message_computing` once per seed, sharing the distribution."""
    _check_plans(env, plans)
    true_state = witness.t_bar if true_state is None else true_state
    dist = plan_distribution(plans, max_agents)
    cache = {}
    runs = []
    for seed in seeds:
        index = engine.sample_basis(dist, seed)
        if index not in cache:
            cache[index] = _run_at(env, F, witness, plans, index, None, u, true_state)
        base = cache[index]
        runs.append(ProtocolRun(base.chosen_basis, base.label, base.messages, base.outcome,
                                base.rule, base.utilities, seed))
    return runs


def expected_payoffs(env, F, witness, plans, u: CardinalUtility, true_state=None,
                     max_agents: int = engine.MAX_AGENTS) -> dict:
    """Exact expected utility per agent, summing over every basis vector with positive weight."""
    _check_plans(env, plans)
    true_state = witness.t_bar if true_state is None else true_state
    dist = plan_distribution(plans, max_agents)
    totals = dict.fromkeys(env.agents, 0.0)
    for index in np.flatnonzero(dist > 0):
        outcome, _ = outcome_g(env, F, step5_messages(witness, plans, int(index)), validate=False)
        for j in env.agents:
            totals[j] += dist[index] * u(true_state, j, outcome)
    return totals


def simulate_times(env, F, witness, plans, u: CardinalUtility | None = None, true_state=None, seed=0,
                   max_agents: int = engine.MAX_AGENTS) -> ProtocolRun:
    """Channel choices, message computation or direct reports, then the designer's outcome.

    If any agent picks S1 every agent reports her fallback directly.
    """
    _check_plans(env, plans, require_s0=False)
    true_state = witness.t_bar if true_state is None else true_state
    if all(p.channel is Channel.S0 for p in plans):
        return message_computing(env, F, witness, plans, seed, u, true_state, max_agents)
    messages = tuple(p.fallback for p in plans)
    outcome, rule = outcome_g(env, F, messages)
    return ProtocolRun(None, None, messages, outcome, rule,
                       _utilities(env, u, true_state, outcome), seed, cascade=True)


def lemma1_plans(env: Environment, witness: LambdaWitness) -> list[AgentPlan]:
    """Equilibrium profile: ``w(0, pi/l)`` inside ``n_hat``, identity with the canonical fallback outside.

    Members of ``n_hat`` fall back on their top outcome in ``t_bar``, announced
    with ``t_hat`` and integer 0.
    """
    plans = []
    for j in env.agents:
        if j in witness.n_hat:
            fallback = Message(env.top(witness.t_bar, j), witness.t_hat, 0)
            plans.append(AgentPlan(fallback, 0.0, math.pi / witness.l))
        else:
            plans.append(AgentPlan(canonical_message(witness), 0.0, 0.0))
    return plans


def label_indices(n: int, k: int) -> dict:
    """Basis indices of the four labels with agent ``k`` moved to the last slot."""
    full = (1 << n) - 1
    bit = 1 << (n - 1 - k)
    return {"ccc": 0, "ccd": bit, "ddc": full ^ bit, "ddd": full}


def derive_payoff_record(env, F, witness, plans, u, true_state, agent) -> dict:
    """Label values implied by ``u`` and ``g``; ``None`` where ``g`` resolves by the integer game."""
    k = env.agent_index(agent)
    out = {}
    for label, index in label_indices(env.n, k).items():
        outcome, rule = outcome_g(env, F, step5_messages(witness, plans, index))
        out[label] = None if rule == 3 else u(true_state, agent, outcome)
    return out


def payoff_mismatches(env, F, witness, plans, u, true_state, payoffs: Mapping) -> list[tuple]:
    """``(agent, label, supplied, derived)`` wherever a supplied record disagrees with ``u`` and ``g``."""
    found = []
    for j in env.agents:
        rec = payoffs.get(j)
        if rec is None:
            continue
        derived = derive_payoff_record(env, F, witness, plans, u, true_state, j)
        for label in LABELS:
            given = getattr(rec, label)
            if given is not None and derived[label] is not None and not math.isclose(given, derived[label]):
                found.append((j, label, given, derived[label]))
    for j, label, given, derived in found:
        log.warning("payoff record %s[%s]=%s disagrees with utilities (%s)", j, label, given, derived)
    return found


class _Valuation:
    def __init__(self, env, F, witness, plans, u, true_state, payoffs):
        self.env, self.F, self.u, self.true_state = env, F, u, true_state
        self.witness, self.plans = witness, plans
        self.payoffs = payoffs or {}

    def record(self, agent) -> Optional[PayoffRecord]:
        return self.payoffs.get(agent)

    def integer_game_value(self, agent) -> float:
        rec = self.record(agent)
        if rec is None:
            raise InputError(f"agent {agent!r} needs a ddd payoff to value the integer game")
        return rec.ddd

    def value(self, agent, messages, label=None, agreed=True) -> float:
        rec = self.record(agent)
        if rec is not None and label is not None and agreed:
            given = getattr(rec, label)
            if given is not None:
                return given
        outcome, rule = outcome_g(self.env, self.F, messages, validate=False)
        if rule == 3:
            return self.integer_game_value(agent)
        return self.u(self.true_state, agent, outcome)


@dataclass(frozen=True)
class Deviation:
    kind: str  # "operator", "fallback" or "channel"
    agent: object
    payoff: float
    gain: float
    theta: Optional[float] = None
    phi: Optional[float] = None
    fallback: Optional[Message] = None


@dataclass(frozen=True)
class AgentScan:
    agent: object
    structure: str
    incumbent: float
    best_operator: Deviation
    best_fallback: Deviation
    best_channel: Deviation
    argmax_points: tuple
    closed_form_gap: float
    analytic_ok: bool

    @property
    def best(self) -> Deviation:
        return max((self.best_operator, self.best_fallback, self.best_channel), key=lambda d: d.gain)


@dataclass(frozen=True)
class Lemma1Report:
    witness: LambdaWitness
    plans: tuple
    grid: tuple
    tol: float
    scans: tuple
    mismatches: tuple = field(default=())

    @property
    def max_gain(self) -> float:
        return max(s.best.gain for s in self.scans)

    @property
    def confirmed(self) -> bool:
        return self.max_gain <= self.tol

    @property
    def worst(self) -> Deviation:
        return max((s.best for s in self.scans), key=lambda d: d.gain)


def _fallback_values(val: _Valuation, k: int, plans, fallbacks) -> np.ndarray:
    """Matrix ``[f, label]`` of values when agent ``k`` reports fallback ``f``."""
    env, witness = val.env, val.witness
    agent = env.agents[k]
    idx = label_indices(env.n, k)
    agreed_fb = plans[k].fallback
    out = np.empty((len(fallbacks), 4))
    fixed = {
        label: val.value(agent, step5_messages(witness, plans, idx[label]), label)
        for label in ("ccc", "ddc")
    }
    for i, f in enumerate(fallbacks):
        trial = list(plans)
        trial[k] = plans[k].with_(fallback=f)
        agreed = f == agreed_fb
        out[i, 0] = fixed["ccc"]
        out[i, 1] = val.value(agent, step5_messages(witness, trial, idx["ccd"]), "ccd", agreed)
        out[i, 2] = fixed["ddc"]
        out[i, 3] = val.value(agent, step5_messages(witness, trial, idx["ddd"]), "ddd", agreed)
    return out


def _label_probs(plans, k, theta, phi, max_agents) -> tuple[np.ndarray, float]:
    ops = [p.operator for p in plans]
    ops[k] = engine.LocalOperator(theta, phi)
    dist = engine.pipeline(ops, max_agents=max_agents)
    idx = label_indices(len(plans), k)
    probs = np.array([dist[idx[label]] for label in LABELS])
    return probs, max(0.0, 1.0 - probs.sum())


def _pick(payoffs: np.ndarray, prefer: int) -> int:
    """Column of the row maximum, preferring ``prefer`` on ties."""
    best = int(np.argmax(payoffs))
    if payoffs[prefer] >= payoffs[best] - 1e-12:
        return prefer
    return best


def verify_lemma1(
    env: Environment,
    F: SocialChoiceRule,
    witness: LambdaWitness,
    u: CardinalUtility,
    true_state=None,
    payoffs: Mapping | None = None,
    grid: tuple = DEFAULT_GRID,
    z_cap: int = DEFAULT_Z_CAP,
    tol: float = GAIN_TOL,
    budget: int = DEFAULT_GRID_BUDGET,
    max_agents: int = engine.MAX_AGENTS,
) -> Lemma1Report:
    """Scan every unilateral deviation from :func:`lemma1_plans` in ``true_state``.

    For each agent the scan covers operator choices on a ``grid`` of
    ``(theta, phi)`` points jointly with every fallback message, fallback
    changes at the equilibrium operator, and taking back the channel with
    any direct report. The profile is confirmed when no deviation gains
    more than ``tol``.
    """
    true_state = witness.t_bar if true_state is None else true_state
    witness.validate(env, F)
    n_theta, n_phi = grid
    if n_theta < 2 or n_phi < 2:
        raise InputError("grid needs at least two points per axis")
    fallbacks = message_space(env, z_cap)
    size = env.n * n_theta * n_phi * len(fallbacks)
    if size > budget:
        raise BudgetExceeded(f"deviation scan of {size} points exceeds budget {budget}", size, budget)
    plans = lemma1_plans(env, witness)
    mismatches = payoff_mismatches(env, F, witness, plans, u, true_state, payoffs or {})
    val = _Valuation(env, F, witness, plans, u, true_state, payoffs)
    thetas = np.linspace(0.0, math.pi, n_theta)
    phis = np.linspace(0.0, math.pi / 2, n_phi)
    l = witness.l
    scans = []
    for k, agent in enumerate(env.agents):
        values = _fallback_values(val, k, plans, fallbacks)
        agreed = fallbacks.index(plans[k].fallback)
        in_n_hat = agent in witness.n_hat
        structure = "part1" if in_n_hat else "part2"
        closed = engine.closed_form_part1 if in_n_hat else engine.closed_form_part2

        here, _ = _label_probs(plans, k, plans[k].theta, plans[k].phi, max_agents)
        incumbent = float(here @ values[agreed])
        row = here @ values.T
        col = _pick(row, agreed)
        best_fallback = Deviation("fallback", agent, float(row[col]), float(row[col] - incumbent),
                                  plans[k].theta, plans[k].phi, fallbacks[col])

        probs = np.empty((n_theta * n_phi, 4))
        gap = leak = 0.0
        for i, theta in enumerate(thetas):
            for jj, phi in enumerate(phis):
                p, rest = _label_probs(plans, k, theta, phi, max_agents)
                probs[i * n_phi + jj] = p
                leak = max(leak, rest)
                gap = max(gap, float(np.max(np.abs(p - np.array(closed(env.n, l, theta, phi))))))
        if leak > 1e-9:
            raise InputError(f"deviation by {agent!r} leaks probability {leak} outside the four labels")
        table = probs @ values.T
        per_point = table.max(axis=1)
        point = int(np.argmax(per_point))
        col = _pick(table[point], agreed)
        theta, phi = float(thetas[point // n_phi]), float(phis[point % n_phi])
        best_operator = Deviation("operator", agent, float(table[point, col]),
                                  float(table[point, col] - incumbent), theta, phi, fallbacks[col])
        top = per_point[point]
        argmax_points = tuple(
            (float(thetas[p // n_phi]), float(phis[p % n_phi]))
            for p in np.flatnonzero(per_point >= top - 1e-12)
        )

        direct = values[:, 3]
        col = _pick(direct, agreed)
        best_channel = Deviation("channel", agent, float(direct[col]), float(direct[col] - incumbent),
                                 fallback=fallbacks[col])

        v = values[agreed]
        if in_n_hat:
            analytic_ok = v[0] > v[3] and v[0] > v[1] * math.cos(math.pi / l) ** 2 + v[2] * math.sin(math.pi / l) ** 2
        else:
            analytic_ok = v[0] > v[3] and v[0] >= v[1]
        scans.append(AgentScan(agent, structure, incumbent, best_operator, best_fallback, best_channel,
                               argmax_points, gap, bool(analytic_ok)))
    return Lemma1Report(witness, tuple(plans), (n_theta, n_phi), tol, tuple(scans), tuple(mismatches))


@dataclass(frozen=True)
class Stage:
    name: str
    ok: bool
    detail: dict


@dataclass(frozen=True)
class Proposition1Report:
    true_state: object
    stages: tuple
    witness: Optional[LambdaWitness] = None
    lemma1: Optional[Lemma1Report] = None
    run: Optional[ProtocolRun] = None

    @property
    def passed(self) -> bool:
        return bool(self.stages) and all(s.ok for s in self.stages) and self.stages[-1].name == "verdict"

    @property
    def failed_stage(self) -> Optional[str]:
        return next((s.name for s in self.stages if not s.ok), None)


def proposition1_report(
    env: Environment,
    F: SocialChoiceRule,
    u: CardinalUtility,
    payoffs: Mapping,
    true_state,
    seed=0,
    grid: tuple = DEFAULT_GRID,
    z_cap: int = DEFAULT_Z_CAP,
    tol: float = GAIN_TOL,
    max_agents: int = engine.MAX_AGENTS,
) -> Proposition1Report:
    """Staged end-to-end check; stops at the first failing stage."""
    env._validate(state=true_state)
    stages = []

    mono, veto = check_monotonic(env, F), check_no_veto(env, F)
    stages.append(Stage("axioms", bool(mono and veto), {
        "monotonic": mono.ok, "monotonic_witness": mono.witness,
        "no_veto": veto.ok, "no_veto_witness": veto.witness,
    }))
    if not stages[-1].ok:
        return Proposition1Report(true_state, tuple(stages))

    lam = check_condition_lambda(env, F, payoffs, t_bar=true_state)
    if not lam:
        structural = check_lambda1(env, F)
        detail = {
            "reason": "no structural witness ends in this true state" if not lam.witness
            else "every candidate witness fails a condition",
            "candidates": [
                {"witness": v.witness, "lambda2": v.lambda2.ok, "lambda3": v.lambda3.ok,
                 "lambda4": v.lambda4.ok, "lambda5": v.lambda5.ok}
                for v in lam.witness
            ],
            "structural_witnesses_other_states": [w for w in structural if w.t_bar != true_state],
        }
        stages.append(Stage("lambda", False, detail))
        return Proposition1Report(true_state, tuple(stages))
    witness = lam.witness
    stages.append(Stage("lambda", True, {"witness": witness, "l": witness.l}))

    report = verify_lemma1(env, F, witness, u, true_state, payoffs, grid, z_cap, tol, max_agents=max_agents)
    worst = report.worst
    stages.append(Stage("lemma1", report.confirmed, {
        "max_gain": report.max_gain, "grid": list(report.grid), "worst_deviation": worst,
        "payoff_mismatches": list(report.mismatches),
    }))
    if not report.confirmed:
        return Proposition1Report(true_state, tuple(stages), witness, report)

    plans = list(report.plans)
    run = message_computing(env, F, witness, plans, seed, u, true_state, max_agents)
    stages.append(Stage("run", True, {"run": run}))

    chosen = F(true_state)
    direct = tuple(Message(witness.a_bar, true_state, 0) for _ in env.agents)
    direct_eq = is_nash_equilibrium(env, F, true_state, direct, u, max(z_cap, 1))
    ok = run.outcome == witness.a_hat and run.outcome not in chosen
    stages.append(Stage("verdict", ok, {
        "outcome": run.outcome,
        "chosen_by_rule": sorted(chosen, key=env.outcomes.index),
        "implemented": not ok,
        "direct_play_equilibrium": direct_eq.ok,
    }))
    return Proposition1Report(true_state, tuple(stages), witness, report, run)


def certified_witness(env, F, payoffs, t_bar=None) -> LambdaWitness:
    lam = check_condition_lambda(env, F, payoffs, t_bar=t_bar)
    if not lam:
        raise InputError("condition lambda is not certified")
    return lam.witness


def frequency_table(runs: Sequence[ProtocolRun]) -> Counter:
    return Counter((r.label, r.outcome) for r in runs)

