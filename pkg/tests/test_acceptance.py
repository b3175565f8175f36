"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` to see the lines alongside the
test results; they are printed even when output capture is on.
"""
import math
import time

import numpy as np
import pytest

import oracles
from nashchannel import bench, engine
from nashchannel.conditions import LambdaWitness, check_condition_lambda
from nashchannel.engine import LocalOperator
from nashchannel.maskin import enumerate_equilibrium_outcomes
from nashchannel.prefs import check_monotonic, check_no_veto
from nashchannel.protocol import proposition1_report, verify_lemma1

PI = math.pi
WITNESS = LambdaWitness("t1", "t2", "a1", "a2", frozenset({"Apple", "Lily"}))


@pytest.fixture
def verdict(request):
    def emit(label, ok, detail):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'} {detail}"
        with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
            print("\n" + line)
        assert ok, line

    return emit


def test_c01_table1_axioms(table1, verdict):
    start = time.perf_counter()
    mono = check_monotonic(table1.env, table1.scr)
    veto = check_no_veto(table1.env, table1.scr)
    elapsed = time.perf_counter() - start
    verdict("1 (table axioms)", bool(mono and veto) and elapsed < 1.0,
            f"monotonic={mono.ok} no_veto={veto.ok} in {elapsed:.3f}s")


def test_c02_lambda_certified(table1, verdict):
    start = time.perf_counter()
    res = check_condition_lambda(table1.env, table1.scr, table1.payoffs)
    elapsed = time.perf_counter() - start
    ok = bool(res) and res.witness == WITNESS and res.witness.l == 2 and elapsed < 1.0
    verdict("2 (condition lambda)", ok, f"witness={res.witness if res else None} in {elapsed:.3f}s")


def test_c03_end_to_end(table1, verdict):
    start = time.perf_counter()
    rep = proposition1_report(table1.env, table1.scr, table1.utilities, table1.payoffs, "t2",
                              seed=table1.run.seed, grid=(181, 91))
    elapsed = time.perf_counter() - start
    gain = rep.lemma1.max_gain if rep.lemma1 else math.inf
    outcome = rep.run.outcome if rep.run else None
    ok = (rep.passed and rep.lemma1.confirmed and gain <= 1e-9 and outcome == "a1"
          and outcome not in table1.scr("t2") and elapsed < 30)
    verdict("3 (end to end)", ok, f"max gain {gain:.2e}, outcome {outcome}, {elapsed:.1f}s")


def test_c04_maskin_baseline(table1, verdict):
    start = time.perf_counter()
    found = {t: enumerate_equilibrium_outcomes(table1.env, table1.scr, t, table1.utilities, z_cap=1)
             for t in ("t1", "t2")}
    elapsed = time.perf_counter() - start
    ok = found == {"t1": {"a1"}, "t2": {"a2"}} and elapsed < 300
    verdict("4 (plain mechanism)", ok, f"{found} in {elapsed:.1f}s")


def test_c05_closed_forms(verdict):
    start = time.perf_counter()
    worst = worst_rest = worst_sum = 0.0
    thetas = np.linspace(0, PI, 9)
    phis = np.linspace(0, PI / 2, 9)
    for n, l in [(3, 2), (4, 2), (4, 3), (5, 3)]:
        idx = list(engine.corner_indices(n))
        rest = np.ones(2 ** n, dtype=bool)
        rest[idx] = False
        for theta in thetas:
            for phi in phis:
                for ops, form in ((engine.part1_ops, engine.closed_form_part1),
                                  (engine.part2_ops, engine.closed_form_part2)):
                    dist = engine.pipeline(ops(n, l, theta, phi))
                    expected = np.array(form(n, l, theta, phi))
                    worst = max(worst, float(np.max(np.abs(dist[idx] - expected))))
                    worst_rest = max(worst_rest, float(np.max(dist[rest], initial=0.0)))
                worst_sum = max(worst_sum, abs(sum(engine.closed_form_part1(n, l, theta, phi)) - 1))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and worst_rest <= 1e-12 and worst_sum <= 1e-12 and elapsed < 10
    verdict("5 (closed forms)", ok,
            f"max error {worst:.1e}, off-corner mass {worst_rest:.1e}, sum error {worst_sum:.1e}, {elapsed:.2f}s")


def test_c06_dense_oracle(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for n in range(2, 9):
        for _ in range(50):
            angles = [(rng.uniform(0, PI), rng.uniform(0, PI / 2)) for _ in range(n)]
            dist = engine.pipeline([LocalOperator(t, p) for t, p in angles])
            worst = max(worst, float(np.max(np.abs(dist - oracles.dense_distribution(angles)))))
    elapsed = time.perf_counter() - start
    verdict("6 (dense oracle)", worst <= 1e-12 and elapsed < 30, f"max error {worst:.1e}, {elapsed:.2f}s")


def test_c07_normalization(verdict):
    rng = np.random.default_rng(16)
    n = 16
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        ops = [LocalOperator(rng.uniform(0, PI), rng.uniform(0, PI / 2)) for _ in range(n)]
        psi1 = engine.psi1(n)
        psi2 = engine.apply_local_ops(ops, psi1)
        psi3 = engine.apply_j_dagger(psi2)
        for v in (psi1, psi2, psi3):
            worst = max(worst, abs(np.linalg.norm(v) - 1))
        worst = max(worst, abs(engine.distribution(psi3).sum() - 1))
    elapsed = time.perf_counter() - start
    verdict("7 (normalization)", worst <= 1e-9 and elapsed < 60, f"max deviation {worst:.1e}, {elapsed:.2f}s")


def test_c08_performance(verdict):
    rows = bench.run_bench(range(15, 21), repetitions=5, min_time=0.3)
    best = {r.n: r.best for r in rows}
    # consecutive pairs inside 16..20; n = 15 only carries the absolute bound
    ratios = [r.ratio for r in rows if r.n >= 17]
    ok = best[15] < 0.5 and best[20] < 12 and all(1.6 <= x <= 2.6 for x in ratios)
    verdict("8 (performance)", ok,
            f"n=15 {best[15]:.4f}s, n=20 {best[20]:.4f}s, ratios {[round(x, 2) for x in ratios]}")


def test_c09_sampling(verdict):
    n, size = 3, 100_000
    theta, phi = PI / 2, PI / 4
    dist = engine.pipeline(engine.part1_ops(n, 2, theta, phi))
    counts = np.bincount(engine.sample_many(dist, 20240601, size), minlength=2 ** n)
    expected = np.array(engine.closed_form_part1(n, 2, theta, phi))
    idx = list(engine.corner_indices(n))
    sigma = np.sqrt(size * expected * (1 - expected))
    z = np.abs(counts[idx] - size * expected)
    ok = bool(np.all(z <= 3 * sigma)) and counts.sum() == counts[idx].sum()
    verdict("9 (sampling)", ok, f"counts {counts[idx].tolist()} vs expected {(size * expected).round(1).tolist()}")


def _lemma1(table1, payoffs):
    return verify_lemma1(table1.env, table1.scr, WITNESS, table1.utilities, "t2", payoffs,
                         grid=(181, 91))


def test_c10a_negative_control_ddd(table1, verdict):
    start = time.perf_counter()
    payoffs = {j: r.replace(ddd=5) for j, r in table1.payoffs.items()}
    rep = _lemma1(table1, payoffs)
    w = rep.worst
    incumbent = rep.plans[table1.env.agent_index(w.agent)]
    phi_shift = w.kind == "operator" and not math.isclose(w.phi, incumbent.phi)
    ok = not rep.confirmed and (w.kind == "channel" or phi_shift) and time.perf_counter() - start < 30
    verdict("10a (ddd = 5)", ok, f"confirmed={rep.confirmed}, worst {w.kind} by {w.agent}, gain {w.gain:.3f}")


def test_c10b_negative_control_ccd(table1, verdict):
    start = time.perf_counter()
    payoffs = dict(table1.payoffs)
    for j in WITNESS.n_hat:
        payoffs[j] = payoffs[j].replace(ccd=100)
    rep = _lemma1(table1, payoffs)
    w = rep.worst
    ok = (not rep.confirmed and w.kind == "operator" and math.isclose(w.theta, PI)
          and time.perf_counter() - start < 30)
    verdict("10b (ccd = 100)", ok, f"confirmed={rep.confirmed}, worst {w.kind} by {w.agent}, "
                                   f"theta={w.theta}, gain {w.gain:.2e}")


def test_c10_supplement_negative_control_ddc(table1, verdict):
    payoffs = dict(table1.payoffs)
    for j in WITNESS.n_hat:
        payoffs[j] = payoffs[j].replace(ddc=100)
    rep = _lemma1(table1, payoffs)
    w = rep.worst
    ok = not rep.confirmed and w.kind == "operator" and math.isclose(w.theta, PI)
    verdict("10 supplement (ddc = 100)", ok, f"confirmed={rep.confirmed}, worst {w.kind} by {w.agent}, "
                                             f"theta={w.theta}, gain {w.gain:.2f}")
