"""YAML experiment configuration.

A config document has five top-level sections::

    environment:   agents, outcomes, states, rankings[state][agent] = [best, ..., worst]
    scr:           state -> [chosen outcomes]
    utilities:     utilities[state][agent][outcome] = number   (optional, Borda if absent)
    payoffs:       payoffs[agent] = {ccc, ccd, ddc, ddd}        (ccd/ddc optional)
    run:           true_state, seed, z_cap, grid, enumeration_budget, max_agents, plans

``run.plans`` optionally overrides the equilibrium profile for sampling runs:
``plans[agent] = {theta, phi, fallback: [outcome, state, integer], channel: S0|S1}``.
Angles accept numbers or strings such as ``pi/2`` or ``2*pi/3``.
All identifiers are read as strings.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from . import engine
from .conditions import PayoffRecord
from .errors import InputError
from .maskin import DEFAULT_ENUMERATION_BUDGET, DEFAULT_Z_CAP, Message
from .prefs import CardinalUtility, Environment, SocialChoiceRule
from .protocol import DEFAULT_GRID, AgentPlan

SECTIONS = ("environment", "scr", "utilities", "payoffs", "run")
_ANGLE = re.compile(r"^\s*(?:(\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


class ConfigError(InputError):
    def __init__(self, message: str, path: tuple = (), line: Optional[int] = None):
        where = ".".join(str(p) for p in path) or "<document>"
        prefix = f"line {line}: " if line else ""
        super().__init__(f"{prefix}{where}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class RunSettings:
    true_state: str
    seed: int = 0
    z_cap: int = DEFAULT_Z_CAP
    grid: tuple = DEFAULT_GRID
    enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET
    max_agents: int = engine.MAX_AGENTS
    plans: Optional[dict] = None


@dataclass(frozen=True)
class ExperimentConfig:
    env: Environment
    scr: SocialChoiceRule
    utilities: CardinalUtility
    payoffs: dict
    run: RunSettings
    source: Optional[str] = field(default=None, compare=False)

    def to_dict(self) -> dict:
        env = self.env
        out = {
            "environment": {
                "agents": list(env.agents),
                "outcomes": list(env.outcomes),
                "states": list(env.states),
                "rankings": {t: {j: list(env.ranking(t, j)) for j in env.agents} for t in env.states},
            },
            "scr": {t: sorted(self.scr(t), key=env.outcomes.index) for t in env.states},
            "utilities": {
                t: {j: {a: self.utilities(t, j, a) for a in env.ranking(t, j)} for j in env.agents}
                for t in env.states
            },
            "payoffs": {j: rec.as_dict() for j, rec in self.payoffs.items()},
            "run": {
                "true_state": self.run.true_state,
                "seed": self.run.seed,
                "z_cap": self.run.z_cap,
                "grid": list(self.run.grid),
                "enumeration_budget": self.run.enumeration_budget,
                "max_agents": self.run.max_agents,
            },
        }
        if self.run.plans:
            out["run"]["plans"] = {
                j: {"theta": p.theta, "phi": p.phi, "fallback": list(p.fallback), "channel": p.channel.value}
                for j, p in self.run.plans.items()
            }
        return out


def _str_keys(mapping: dict) -> dict:
    return {str(k): v for k, v in mapping.items()}


def _line_index(text: str) -> dict:
    """Map key paths to 1-based source lines."""
    lines = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                walk(value, path + (str(key.value),))
                lines.setdefault(path + (str(key.value),), key.start_mark.line + 1)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                walk(item, path + (i,))

    if root is not None:
        walk(root, ())
    return lines


class _Reader:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, message, path):
        line = None
        for cut in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:cut]))
            if line:
                break
        raise ConfigError(message, tuple(path), line)

    def get(self, mapping, key, path, kind=None, required=True, default=None):
        if not isinstance(mapping, dict):
            self.fail("expected a mapping", path)
        if key not in mapping or mapping[key] is None:
            if required:
                self.fail(f"missing required field {key!r}", path)
            return default
        value = mapping[key]
        if kind is not None and not isinstance(value, kind):
            self.fail(f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}", path + (key,))
        return value


def parse_angle(value, path=(), reader: Optional[_Reader] = None) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        m = _ANGLE.match(value)
        if m:
            coef = float(m.group(1)) if m.group(1) else 1.0
            den = float(m.group(2)) if m.group(2) else 1.0
            return coef * math.pi / den
        try:
            return float(value)
        except ValueError:
            pass
    message = f"cannot read angle {value!r}"
    if reader:
        reader.fail(message, path)
    raise ConfigError(message, tuple(path))


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    r = _Reader(_line_index(text))
    if not isinstance(data, dict):
        r.fail("config must be a mapping with sections " + ", ".join(SECTIONS), ())
    unknown = set(data) - set(SECTIONS)
    if unknown:
        r.fail(f"unknown sections {sorted(unknown)}", ())

    e = r.get(data, "environment", (), dict)
    agents = [str(a) for a in r.get(e, "agents", ("environment",), list)]
    outcomes = [str(a) for a in r.get(e, "outcomes", ("environment",), list)]
    states = [str(t) for t in r.get(e, "states", ("environment",), list)]
    raw_rankings = _str_keys(r.get(e, "rankings", ("environment",), dict))
    rankings = {}
    for t in states:
        per = raw_rankings.get(t)
        if not isinstance(per, dict):
            r.fail(f"missing rankings for state {t!r}", ("environment", "rankings"))
        per = _str_keys(per)
        for j in agents:
            ranked = per.get(j)
            if ranked is None:
                r.fail(f"missing ranking for agent {j!r} in state {t!r}", ("environment", "rankings", t))
            if not isinstance(ranked, list):
                r.fail("ranking must be a list", ("environment", "rankings", t, j))
            rankings[(t, j)] = tuple(str(a) for a in ranked)
    for t, per in raw_rankings.items():
        if str(t) not in states:
            r.fail(f"ranking for unknown state {t!r}", ("environment", "rankings", str(t)))
        for j in per or {}:
            if str(j) not in agents:
                r.fail(f"ranking for unknown agent {j!r}", ("environment", "rankings", str(t), str(j)))
    try:
        env = Environment(agents, outcomes, states, rankings)
    except InputError as exc:
        r.fail(str(exc), ("environment",))

    raw_scr = _str_keys(r.get(data, "scr", (), dict))
    choice = {}
    for t in states:
        chosen = raw_scr.get(t)
        if not isinstance(chosen, list) or not chosen:
            r.fail(f"rule must choose a nonempty list of outcomes in state {t!r}", ("scr",))
        choice[t] = {str(a) for a in chosen}
    try:
        scr = SocialChoiceRule(choice)
        scr.validate(env)
    except InputError as exc:
        r.fail(str(exc), ("scr",))

    raw_u = r.get(data, "utilities", (), dict, required=False)
    try:
        if raw_u is None:
            utilities = CardinalUtility.from_ranks(env)
        else:
            for t, per in raw_u.items():
                for j, row in (per or {}).items():
                    if not isinstance(row, dict):
                        r.fail("expected outcome -> number mapping", ("utilities", str(t), str(j)))
                    for a, v in row.items():
                        if isinstance(v, bool) or not isinstance(v, (int, float)):
                            r.fail("utility must be a number", ("utilities", str(t), str(j), str(a)))
            utilities = CardinalUtility({
                (str(t), str(j), str(a)): v
                for t, per in raw_u.items() for j, row in (per or {}).items() for a, v in row.items()
            })
        utilities.validate(env)
    except ConfigError:
        raise
    except InputError as exc:
        r.fail(str(exc), ("utilities",))

    raw_pay = r.get(data, "payoffs", (), dict, required=False, default={})
    payoffs = {}
    for j, rec in raw_pay.items():
        path = ("payoffs", str(j))
        if str(j) not in agents:
            r.fail(f"payoff record for unknown agent {j!r}", path)
        if not isinstance(rec, dict):
            r.fail("expected a mapping with ccc, ccd, ddc, ddd", path)
        extra = set(rec) - {"ccc", "ccd", "ddc", "ddd"}
        if extra:
            r.fail(f"unknown payoff labels {sorted(extra)}", path)
        for label, v in rec.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                r.fail("payoff must be a number", path + (label,))
        try:
            payoffs[str(j)] = PayoffRecord(
                ccc=r.get(rec, "ccc", path), ddd=r.get(rec, "ddd", path),
                ccd=rec.get("ccd"), ddc=rec.get("ddc"),
            )
        except ConfigError:
            raise
        except InputError as exc:
            r.fail(str(exc), path)

    run = _parse_run(r, r.get(data, "run", (), dict), env)
    return ExperimentConfig(env, scr, utilities, payoffs, run, source)


def _int(r: _Reader, mapping, key, path, default, minimum=0):
    value = r.get(mapping, key, path, required=False, default=default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        r.fail(f"expected an integer >= {minimum}", path + (key,))
    return value


def _parse_run(r: _Reader, raw: dict, env: Environment) -> RunSettings:
    path = ("run",)
    true_state = str(r.get(raw, "true_state", path))
    if true_state not in env.states:
        r.fail(f"true_state {true_state!r} is not a declared state", path + ("true_state",))
    grid = r.get(raw, "grid", path, list, required=False, default=list(DEFAULT_GRID))
    if len(grid) != 2 or not all(isinstance(g, int) and not isinstance(g, bool) and g >= 2 for g in grid):
        r.fail("grid must be two integers >= 2 (theta steps, phi steps)", path + ("grid",))
    plans = None
    raw_plans = r.get(raw, "plans", path, dict, required=False)
    if raw_plans:
        plans = {}
        for j, spec in raw_plans.items():
            ppath = path + ("plans", str(j))
            if str(j) not in env.agents:
                r.fail(f"plan for unknown agent {j!r}", ppath)
            if not isinstance(spec, dict):
                r.fail("expected a mapping with theta, phi, fallback, channel", ppath)
            fb = r.get(spec, "fallback", ppath, list)
            if len(fb) != 3:
                r.fail("fallback must be [outcome, state, integer]", ppath + ("fallback",))
            try:
                plans[str(j)] = AgentPlan(
                    fallback=Message(str(fb[0]), str(fb[1]), fb[2]),
                    theta=parse_angle(spec.get("theta", 0.0), ppath + ("theta",), r),
                    phi=parse_angle(spec.get("phi", 0.0), ppath + ("phi",), r),
                    channel=spec.get("channel", "S0"),
                )
                env._validate(outcome=str(fb[0]), state=str(fb[1]))
            except ConfigError:
                raise
            except (InputError, ValueError) as exc:
                r.fail(str(exc), ppath)
    return RunSettings(
        true_state=true_state,
        seed=_int(r, raw, "seed", path, 0),
        z_cap=_int(r, raw, "z_cap", path, DEFAULT_Z_CAP),
        grid=tuple(grid),
        enumeration_budget=_int(r, raw, "enumeration_budget", path, DEFAULT_ENUMERATION_BUDGET, 1),
        max_agents=_int(r, raw, "max_agents", path, engine.MAX_AGENTS, 2),
        plans=plans,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, allow_unicode=True)


def fixture_path(name: str = "table1") -> Path:
    return Path(str(resources.files("nashchannel") / "fixtures" / f"{name}.yaml"))


def load_fixture(name: str = "table1") -> ExperimentConfig:
    return load_config(fixture_path(name))
