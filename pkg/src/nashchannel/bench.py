"""Wall-clock timing of the message-computing core.

The timed region is one call of the numeric core for an ``n``-agent
profile: both column products, the disentangling map, the squared
magnitudes and one inverse-CDF draw. Profile construction and report
formatting stay outside the timer.
"""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import engine


@dataclass(frozen=True)
class BenchRow:
    n: int
    repetitions: int
    mean: float
    best: float
    median: float
    ratio: Optional[float]  # best time over best time at n - 1


def synthetic_profile(n: int, seed: int = 0) -> list[engine.LocalOperator]:
    """Equilibrium-shaped profile: half the agents on ``w(0, pi/l)``, the rest identity,
    and the last agent on a random operator."""
    rng = np.random.default_rng(seed)
    l = max(2, n // 2)
    ops = [engine.IDENTITY] * (n - l) + [engine.LocalOperator.phase(l)] * (l - 1)
    ops.append(engine.LocalOperator(rng.uniform(0, math.pi), rng.uniform(0, math.pi / 2)))
    return ops


def numeric_core(ops, seed=0, max_agents: int = engine.MAX_AGENTS) -> int:
    dist = engine.pipeline(ops, max_agents=max_agents)
    return engine.sample_basis(dist, seed, overwrite=True)


def _time_once(ops, seed, max_agents) -> float:
    start = time.perf_counter()
    numeric_core(ops, seed, max_agents)
    return time.perf_counter() - start


def time_core(n: int, repetitions: int = 3, seed: int = 0, max_agents: int = engine.MAX_AGENTS,
              min_time: float = 0.0) -> list[float]:
    """At least ``repetitions`` timings, more until their total reaches ``min_time`` seconds."""
    ops = synthetic_profile(n, seed)
    numeric_core(ops, seed, max_agents)  # warm-up
    times = []
    while len(times) < repetitions or sum(times) < min_time:
        times.append(_time_once(ops, seed + len(times), max_agents))
    return times


def run_bench(ns: Iterable[int], repetitions: int = 3, seed: int = 0,
              max_agents: int = engine.MAX_AGENTS, min_time: float = 0.2) -> list[BenchRow]:
    """Time every ``n`` in round-robin passes so slow drifts in machine state hit all sizes alike.

    Each size gets at least ``repetitions`` timings and keeps being timed until
    its total reaches ``min_time`` seconds.
    """
    ns = list(ns)
    profiles = {n: synthetic_profile(n, seed) for n in ns}
    for n in ns:
        numeric_core(profiles[n], seed, max_agents)  # warm-up
    times = {n: [] for n in ns}
    pending = list(ns)
    while pending:
        for n in pending:
            times[n].append(_time_once(profiles[n], seed + len(times[n]), max_agents))
        pending = [n for n in ns if len(times[n]) < repetitions or sum(times[n]) < min_time]
    rows = []
    prev = None
    for n in ns:
        best = min(times[n])
        ratio = best / prev.best if prev is not None and prev.n == n - 1 and prev.best > 0 else None
        row = BenchRow(n, len(times[n]), statistics.fmean(times[n]), best, statistics.median(times[n]), ratio)
        rows.append(row)
        prev = row
    return rows
