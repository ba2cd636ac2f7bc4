"""Experiment driver: traffic generation, routing, and per-level metrics.

An experiment injects S messages per node, routes them with A(levels) over
the whole machine and summarises, per level,

* ``max_rounds``: the most rounds any single instance on that level needed
  (recursive calls excluded),
* ``avg_rounds``: rounds a message spent on that level, summed over every
  instance it took part in, averaged over messages,
* ``max_avg_load``: the largest per-node message count of any instance,
* ``avg_hops``: level-l link traversals per message.

Latency columns add the request/acknowledge handshake on top of the payload
rounds. Because one message usually takes part in several level-1
instances, ``avg_rounds`` may exceed ``max_rounds`` on level 1.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from clexsim.clique_router import balancing_phases
from clexsim.hierarchical_router import (
    Router,
    RouterConfig,
    RoutingStats,
    parse_valiant_mode,
    route_arrays,
    valiant_redistribute,
)
from clexsim.topology import ClexTopology

log = logging.getLogger(__name__)

PATTERNS = ("uniform_permutation", "uir", "custom")
DEFAULT_SAMPLE_LIMIT = 10**6

# bytes per message: traffic (16), positions (8), per-level hops/rounds (3 per
# level) and the gather temporaries of the top-level instance; calibrated on
# peak RSS of full-size runs
_BYTES_PER_MESSAGE = 115
_BYTES_PER_LEVEL = 3
_FIXED_BYTES = 200 * 2**20


class MemoryBudgetError(MemoryError):
    """The requested experiment would not fit the memory budget."""


@dataclass(frozen=True)
class TrafficSpec:
    per_node: int
    pattern: str = "uniform_permutation"
    seed: int = 0
    pairs: tuple[tuple[int, int], ...] | None = None  # custom (src, dst) node indices

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown traffic pattern {self.pattern!r}; expected one of {PATTERNS}")
        if self.per_node < 0:
            raise ValueError("per_node must be >= 0")
        if self.pattern == "custom" and self.pairs is None:
            raise ValueError("custom traffic needs explicit pairs")


@dataclass
class Traffic:
    src: np.ndarray
    dst: np.ndarray

    def __len__(self):
        return int(self.src.size)

    def in_counts(self, n: int) -> np.ndarray:
        return np.bincount(self.dst, minlength=n)

    def out_counts(self, n: int) -> np.ndarray:
        return np.bincount(self.src, minlength=n)


def available_memory() -> int:
    import psutil

    return int(psutil.virtual_memory().available)


def estimate_memory(t: ClexTopology, per_node: int) -> int:
    m = t.n * per_node
    return _FIXED_BYTES + m * (_BYTES_PER_MESSAGE + _BYTES_PER_LEVEL * t.levels)


def check_memory(t: ClexTopology, per_node: int, budget: int | None = None):
    need = estimate_memory(t, per_node)
    if budget is None:
        budget = int(0.85 * available_memory())
    if need > budget:
        raise MemoryBudgetError(
            f"C(base={t.base}, levels={t.levels}) with S={per_node} needs about "
            f"{need / 2**30:.1f} GiB, budget is {budget / 2**30:.1f} GiB"
        )
    return need


def generate_traffic(spec: TrafficSpec, n: int, budget: int | None = None) -> Traffic:
    """Source/destination node indices of every message, grouped by source."""
    m = spec.per_node * n if spec.pattern != "custom" else len(spec.pairs)
    if budget is not None and 16 * m > budget:
        raise MemoryBudgetError(f"{m} messages need {16 * m} bytes, budget is {budget}")
    rng = np.random.default_rng([spec.seed, 0x7AF])
    if spec.pattern == "custom":
        pairs = np.asarray(spec.pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise ValueError(f"custom pairs must use node indices 0..{n - 1}")
        return Traffic(pairs[:, 0].copy(), pairs[:, 1].copy())
    src = np.repeat(np.arange(n, dtype=np.int64), spec.per_node)
    if spec.pattern == "uniform_permutation":
        dst = rng.permutation(src)
    else:
        dst = rng.integers(0, n, size=m, dtype=np.int64)
    return Traffic(src, dst)


@dataclass
class LevelMetrics:
    level: int
    max_rounds: int
    avg_rounds: float
    max_avg_load: float
    avg_hops: float
    avg_latency: float = 0.0
    max_latency: int = 0


CSV_HEADER = ("level", "max_rounds", "avg_rounds", "max_avg_load", "avg_hops")


@dataclass
class ExperimentReport:
    base: int
    levels: int
    n: int
    n_messages: int
    seed: int
    level_metrics: list[LevelMetrics]
    phase_counts: np.ndarray  # loop iterations per A(1) instance
    balancing: np.ndarray  # copy-and-forward phases per A(1) instance
    phase_curves: list[np.ndarray]  # remaining messages after each phase, per instance
    samples: dict[str, np.ndarray]
    checks: dict[str, bool]
    config: dict = field(default_factory=dict)
    elapsed: float = 0.0
    max_deal_spread: int = 0

    def level(self, level: int) -> LevelMetrics:
        return self.level_metrics[level - 1]

    def fraction_within(self, phases: int) -> float:
        if self.balancing.size == 0:
            return 1.0
        return float((self.balancing <= phases).mean())

    def phase_histogram(self) -> dict[int, int]:
        counts = np.bincount(self.balancing) if self.balancing.size else np.zeros(0, dtype=int)
        return {int(k): int(v) for k, v in enumerate(counts) if v}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.level_metrics:
            w.writerow([r.level, f"{r.max_rounds:.2f}", f"{r.avg_rounds:.2f}", f"{r.max_avg_load:.2f}", f"{r.avg_hops:.2f}"])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"{'lvl':>3} | {'max rds':>7} | {'avg rds':>7} | {'max avg load':>12} | {'avg hops':>8}"]
        lines.append("-" * len(lines[0]))
        for r in self.level_metrics:
            lines.append(f"{r.level:>3} | {r.max_rounds:>7d} | {r.avg_rounds:>7.2f} | {r.max_avg_load:>12.2f} | {r.avg_hops:>8.2f}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "base": self.base,
            "levels": self.levels,
            "n": self.n,
            "n_messages": self.n_messages,
            "seed": self.seed,
            "config": self.config,
            "level_metrics": [asdict(r) for r in self.level_metrics],
            "phase_histogram": self.phase_histogram(),
            "fraction_within_3_phases": self.fraction_within(3),
            "max_deal_spread": self.max_deal_spread,
            "checks": self.checks,
            "elapsed_seconds": round(self.elapsed, 3),
        }


def _pass_config(cfg: RouterConfig, pass_no: int) -> RouterConfig:
    if pass_no == 0:
        return cfg
    seed = int(np.random.SeedSequence([cfg.seed, pass_no]).generate_state(1)[0])
    return replace(cfg, seed=seed)


def run_experiment(
    t: ClexTopology,
    traffic: Traffic,
    cfg: RouterConfig = RouterConfig(),
    valiant_mode="off",
    sample_limit: int = DEFAULT_SAMPLE_LIMIT,
    config_echo: dict | None = None,
) -> ExperimentReport:
    """Route ``traffic`` over the full machine and collect a report."""
    name, vlevel = parse_valiant_mode(valiant_mode)
    src, dst = traffic.src, traffic.dst
    m = src.size
    L = t.levels
    start = time.perf_counter()
    stats = RoutingStats(t, m, record_phases=cfg.record_phases)
    ids = np.arange(m, dtype=np.int64)
    if name == "off":
        route_arrays(t, L, src, dst, cfg, stats=stats, ids=ids)
    else:
        rng = np.random.default_rng([cfg.seed, 0xA1])
        mid = valiant_redistribute(dst, t, valiant_mode, rng)
        route_arrays(t, L, src, mid, cfg, stats=stats, ids=ids)
        second = Router(t, _pass_config(cfg, 1), stats)
        second.route_copies(vlevel if name == "cluster" else L, ids, mid, dst, (0xB2,))
    elapsed = time.perf_counter() - start
    log.info("routed %d messages in %.1f s", m, elapsed)
    return summarize(t, stats, traffic, cfg, sample_limit, config_echo, elapsed)


def summarize(t, stats: RoutingStats, traffic: Traffic, cfg: RouterConfig, sample_limit, config_echo, elapsed) -> ExperimentReport:
    m = stats.n_messages
    rows = []
    bal = cfg.balancer
    for level in range(1, t.levels + 1):
        tally = stats.levels[level - 1]
        rounds_total = int(stats.rounds[:, level - 1].sum(dtype=np.int64))
        hops_total = int(stats.hops[:, level - 1].sum(dtype=np.int64))
        denom = max(m, 1)
        rows.append(
            LevelMetrics(
                level=level,
                max_rounds=int(tally.max_rounds),
                avg_rounds=rounds_total / denom,
                max_avg_load=float(tally.max_avg_load),
                avg_hops=hops_total / denom,
                avg_latency=(rounds_total + tally.handshake_rounds) / denom,
                max_latency=int(tally.max_latency),
            )
        )
    n = t.n
    counted = sum(r.avg_rounds for r in rows) * m
    checks = {
        "delivered": bool(np.array_equal(stats.position, traffic.dst)),
        "delivered_multiset": bool(np.array_equal(np.bincount(stats.position[stats.position >= 0], minlength=n), traffic.in_counts(n))),
        "round_conservation": abs(counted - stats.round_ledger) < 1e-6 * max(1.0, counted),
    }
    out = traffic.out_counts(n)
    if m and (out == out[0]).all():
        checks["in_counts_equal_send_counts"] = bool((np.bincount(stats.position, minlength=n) == out[0]).all())
    phases = stats.all_phase_counts()
    sample = np.arange(m)
    if m > sample_limit:
        rng = np.random.default_rng([cfg.seed, 0x5A])
        sample = np.sort(rng.choice(m, size=sample_limit, replace=False))
    return ExperimentReport(
        base=t.base,
        levels=t.levels,
        n=n,
        n_messages=m,
        seed=cfg.seed,
        level_metrics=rows,
        phase_counts=phases,
        balancing=balancing_phases(phases, bal.direct_first),
        phase_curves=stats.phase_curves,
        samples={"hops": stats.hops[sample].copy(), "rounds": stats.rounds[sample].copy(), "ids": sample},
        checks=checks,
        config=config_echo or {},
        elapsed=elapsed,
        max_deal_spread=stats.max_deal_spread,
    )
