"""Command-line front end.

Subcommands: ``check``, ``run``, ``equilibria`` and ``bench``. Reports go to
stdout as text or as one JSON object per line (``--format jsonl``);
diagnostics go to stderr.

Exit codes: 0 success, 1 a check failed, 2 input error, 3 budget exceeded.
"""
from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import logging
import sys
from typing import Callable, Sequence

from . import bench, engine
from .conditions import LambdaWitness, check_condition_lambda
from .config import ConfigError, ExperimentConfig, fixture_path, load_config
from .errors import BudgetExceeded, InputError, NumericalIntegrityError
from .maskin import Message, enumerate_equilibrium_outcomes, enumeration_size
from .prefs import check_monotonic, check_no_veto
from .protocol import (
    frequency_table,
    lemma1_plans,
    message_computing_many,
    plan_distribution,
    proposition1_report,
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3

log = logging.getLogger("nashchannel")


def _plain(obj):
    """JSON-friendly view of report objects."""
    if isinstance(obj, LambdaWitness):
        return {"t_hat": obj.t_hat, "t_bar": obj.t_bar, "a_hat": obj.a_hat, "a_bar": obj.a_bar,
                "n_hat": sorted(obj.n_hat), "l": obj.l}
    if isinstance(obj, Message):
        return [obj.outcome, obj.state, obj.integer]
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(_plain(v) for v in obj)
    if hasattr(obj, "item"):
        return obj.item()
    return obj


class Output:
    def __init__(self, fmt: str, stream=None):
        self.fmt = fmt
        self.stream = stream or sys.stdout

    def record(self, kind: str, text: str, **fields) -> None:
        if self.fmt == "jsonl":
            self.stream.write(json.dumps({"record": kind, **_plain(fields)}, sort_keys=False) + "\n")
        else:
            self.stream.write(text + "\n")


def _mark(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _witness_text(w: LambdaWitness) -> str:
    return f"(t_hat={w.t_hat}, t_bar={w.t_bar}, a_hat={w.a_hat}, a_bar={w.a_bar}, n_hat={{{', '.join(sorted(w.n_hat))}}}, l={w.l})"


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config or fixture_path("table1"))
    run = cfg.run
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "z_cap", None) is not None:
        changes["z_cap"] = args.z_cap
    if getattr(args, "grid", None) is not None:
        changes["grid"] = args.grid
    if getattr(args, "true_state", None) is not None:
        if args.true_state not in cfg.env.states:
            raise InputError(f"unknown true state {args.true_state!r}")
        changes["true_state"] = args.true_state
    if changes:
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(run, **changes))
    return cfg


def cmd_check(args, out: Output) -> int:
    cfg = _load(args)
    mono = check_monotonic(cfg.env, cfg.scr)
    veto = check_no_veto(cfg.env, cfg.scr)
    lam = check_condition_lambda(cfg.env, cfg.scr, cfg.payoffs)
    out.record("axiom", f"monotonic: {_mark(mono.ok)}" + ("" if mono else f" violated by (t, t', a)={mono.witness}"),
               name="monotonic", ok=mono.ok, witness=mono.witness)
    out.record("axiom", f"no-veto:   {_mark(veto.ok)}" + ("" if veto else f" violated by (t, a)={veto.witness}"),
               name="no_veto", ok=veto.ok, witness=veto.witness)
    if lam:
        out.record("lambda", f"lambda:    PASS witness {_witness_text(lam.witness)}", ok=True, witness=lam.witness)
    else:
        failures = [
            {"witness": v.witness, **{p: getattr(v, p).ok for p in ("lambda2", "lambda3", "lambda4", "lambda5")}}
            for v in lam.witness
        ]
        text = "lambda:    FAIL " + ("no structural witness" if not failures else "; ".join(
            f"{_witness_text(f['witness'])} fails "
            + ",".join(p for p in ("lambda2", "lambda3", "lambda4", "lambda5") if not f[p])
            for f in failures))
        out.record("lambda", text, ok=False, candidates=failures)
    return EXIT_OK if (mono and veto and lam) else EXIT_CHECK_FAILED


def _run_plans(cfg: ExperimentConfig, witness):
    plans = lemma1_plans(cfg.env, witness)
    for k, j in enumerate(cfg.env.agents):
        if cfg.run.plans and j in cfg.run.plans:
            plans[k] = cfg.run.plans[j]
    return plans


def cmd_run(args, out: Output) -> int:
    cfg = _load(args)
    run = cfg.run
    report = proposition1_report(cfg.env, cfg.scr, cfg.utilities, cfg.payoffs, run.true_state,
                                 seed=run.seed, grid=run.grid, z_cap=run.z_cap, max_agents=run.max_agents)
    for stage in report.stages:
        out.record("stage", f"[{_mark(stage.ok)}] {stage.name}: " + _stage_text(stage), name=stage.name,
                   ok=stage.ok, detail=stage.detail)
    if report.run is not None:
        r = report.run
        out.record("run", f"chosen basis {r.label}, messages {[list(m) for m in r.messages]}, "
                          f"rule {r.rule}, outcome {r.outcome}, utilities {r.utilities}", run=r)
    verdict = ("F(t_bar) not implemented: equilibrium outcome lies outside the rule's choice"
               if report.passed else f"stopped at stage {report.failed_stage}")
    out.record("verdict", verdict, passed=report.passed, failed_stage=report.failed_stage,
               true_state=run.true_state)

    if args.seed_count > 1 or run.plans:
        if report.witness is None:
            out.record("sampling", "sampling skipped: no certified witness", skipped=True)
        else:
            plans = _run_plans(cfg, report.witness)
            dist = plan_distribution(plans, run.max_agents)
            seeds = range(run.seed, run.seed + args.seed_count)
            runs = message_computing_many(cfg.env, cfg.scr, report.witness, plans, seeds,
                                          cfg.utilities, run.true_state, run.max_agents)
            for (label, outcome), count in sorted(frequency_table(runs).items()):
                p = float(dist[engine.index_of(label)])
                out.record("frequency", f"{label} -> {outcome}: {count}/{len(runs)} (expected {p:.6f})",
                           label=label, outcome=outcome, count=count, runs=len(runs), probability=p)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _stage_text(stage) -> str:
    d = stage.detail
    if stage.name == "axioms":
        return f"monotonic={d['monotonic']} no_veto={d['no_veto']}"
    if stage.name == "lambda":
        return _witness_text(d["witness"]) if stage.ok else d["reason"]
    if stage.name == "lemma1":
        w = d["worst_deviation"]
        return f"max deviation gain {d['max_gain']:.3e} ({w.kind} by {w.agent}) on grid {d['grid']}"
    if stage.name == "run":
        return f"outcome {d['run'].outcome} via rule {d['run'].rule}"
    if stage.name == "verdict":
        return (f"outcome {d['outcome']} vs chosen {d['chosen_by_rule']}; "
                f"direct truthful play is still an equilibrium of the plain mechanism: {d['direct_play_equilibrium']}")
    return str(d)


def cmd_equilibria(args, out: Output) -> int:
    cfg = _load(args)
    run = cfg.run
    budget = args.budget or run.enumeration_budget
    found = enumerate_equilibrium_outcomes(cfg.env, cfg.scr, run.true_state, cfg.utilities, run.z_cap, budget)
    ordered = sorted(found, key=cfg.env.outcomes.index)
    out.record("equilibria", f"equilibrium outcomes in {run.true_state} (z_cap={run.z_cap}): {{{', '.join(ordered)}}}",
               true_state=run.true_state, z_cap=run.z_cap, outcomes=ordered,
               profiles=enumeration_size(cfg.env, run.z_cap))
    return EXIT_OK


def cmd_bench(args, out: Output) -> int:
    lo, hi = args.n_range
    rows = bench.run_bench(range(lo, hi + 1), args.repetitions, max_agents=max(hi, engine.MAX_AGENTS))
    for row in rows:
        ratio = "-" if row.ratio is None else f"{row.ratio:.2f}"
        out.record("bench", f"n={row.n:>2}  mean {row.mean * 1e3:9.3f} ms  best {row.best * 1e3:9.3f} ms  ratio {ratio}",
                   **dataclasses.asdict(row))
    return EXIT_OK


def _grid(text: str) -> tuple:
    try:
        a, b = text.lower().split("x")
        grid = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 181x91") from None
    if min(grid) < 2:
        raise argparse.ArgumentTypeError("grid needs at least 2 points per axis")
    return grid


def _n_range(text: str) -> tuple:
    try:
        lo, hi = (int(x) for x in text.replace("-", ":").split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("n-range must look like 15:20") from None
    if not 2 <= lo <= hi:
        raise argparse.ArgumentTypeError("n-range needs 2 <= low <= high")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nashchannel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, run_flags=False):
        p.add_argument("--config", help="YAML config (default: bundled table1 fixture)")
        p.add_argument("--format", choices=("text", "jsonl"), default="text")
        if run_flags:
            p.add_argument("--seed", type=int)
            p.add_argument("--z-cap", type=int, dest="z_cap")
            p.add_argument("--true-state", dest="true_state")

    p = sub.add_parser("check", help="monotonicity, no-veto and condition lambda")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="staged end-to-end report at the configured true state")
    common(p, run_flags=True)
    p.add_argument("--seed-count", type=int, default=1, dest="seed_count",
                   help="repeat message computing over consecutive seeds and tabulate outcomes")
    p.add_argument("--grid", type=_grid, help="deviation grid, e.g. 181x91")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("equilibria", help="pure equilibrium outcomes of the plain mechanism")
    common(p, run_flags=True)
    p.add_argument("--budget", type=int, help="maximum number of message profiles to scan")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("bench", help="time the message-computing core")
    p.add_argument("--n-range", type=_n_range, default=(15, 20), dest="n_range")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--format", choices=("text", "jsonl"), default="text")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Output(args.format)
    func: Callable = args.func
    try:
        return func(args, out)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, NumericalIntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
