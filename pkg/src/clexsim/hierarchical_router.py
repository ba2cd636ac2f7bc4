"""Recursive point-to-point routing A(l) on C(s, l).

A(l) on one copy of C(s, l) with sub-copies 0..base-1 (digit l of a label):

1. A(l-1) moves every message to a relay inside its own sub-copy i whose
   level-l edges lead to the destination's sub-copy j. Relays are the nodes
   of sub-copy i with digit l-1 equal to j; one is picked uniformly at random.
2. Relays push their messages over their level-l links, ``base`` messages per
   round. In the uniform-edge variant the messages are spread over the
   ``base`` parallel edges and the edges that get one extra message are
   picked at random; with aggregated links all messages land on the single
   endpoint.
3. A(l-1) delivers the messages inside sub-copy j.

Sub-instances run one after another. Every A(2) instance batches its level-1
cliques and draws from its own RNG stream derived from (seed, copy path), so
results do not depend on the order in which instances execute.

By default messages whose destination lies in their own sub-copy still take
steps 1-2 (their relay's level-l link leads back into the same sub-copy).
``same_copy_bypass`` skips straight to step 3 for such messages.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from clexsim.clique_router import BalancerConfig, handshake_rounds, solve_cliques
from clexsim.topology import ClexTopology


class RoutingError(ValueError):
    pass


@dataclass
class Message:
    """A routed payload. Labels are 1-based digit tuples."""

    id: int
    src: tuple[int, ...]
    dst: tuple[int, ...]
    hops_per_level: list[int] = field(default_factory=list)
    rounds_per_level: list[int] = field(default_factory=list)
    holder: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.holder is None:
            self.holder = self.src


@dataclass(frozen=True)
class RouterConfig:
    balancer: BalancerConfig = BalancerConfig()
    same_copy_bypass: bool = False
    seed: int = 0
    threads: int | None = None  # None: CLEXSIM_THREADS or 1
    record_phases: bool = True

    @property
    def workers(self) -> int:
        if self.threads is not None:
            return max(1, self.threads)
        return max(1, int(os.environ.get("CLEXSIM_THREADS", "1") or 1))


@dataclass
class LevelTally:
    """Running per-level aggregates of one routing run."""

    max_rounds: int = 0
    max_avg_load: float = 0.0
    max_latency: int = 0
    instances: int = 0
    handshake_rounds: int = 0  # extra latency rounds from request/ack


class RoutingStats:
    """Per-message accumulators and per-level/per-instance aggregates."""

    def __init__(self, t: ClexTopology, n_messages: int, record_phases: bool = True):
        self.topology = t
        self.n_messages = n_messages
        L = t.levels
        self.hops = np.zeros((n_messages, L), dtype=np.uint8)
        self.rounds = np.zeros((n_messages, L), dtype=np.uint16)
        self.levels = [LevelTally() for _ in range(L)]
        self.record_phases = record_phases
        self.phase_counts: list[np.ndarray] = []
        self.phase_curves: list[np.ndarray] = []
        self.max_deal_spread = 0
        self.max_node_load = np.zeros(L, dtype=np.int64)
        self.round_ledger = 0
        self.position = np.full(n_messages, -1, dtype=np.int64)
        self._lock = threading.Lock()

    def add(self, ids, level: int, hops=None, rounds=None):
        if hops is not None:
            self.hops[ids, level - 1] += hops.astype(np.uint8)
        if rounds is not None:
            self.rounds[ids, level - 1] += rounds.astype(np.uint16)
            with self._lock:
                self.round_ledger += int(rounds.sum())

    def instance(self, level: int, avg_load: float, max_rounds: int, node_load: int = 0, count: int = 1):
        with self._lock:
            tally = self.levels[level - 1]
            tally.instances += count
            tally.max_avg_load = max(tally.max_avg_load, avg_load)
            tally.max_rounds = max(tally.max_rounds, max_rounds)
            tally.max_latency = max(tally.max_latency, max_rounds)
            self.max_node_load[level - 1] = max(self.max_node_load[level - 1], node_load)

    def cliques(self, res, size: int, cfg: BalancerConfig):
        active = res.messages > 0
        if not active.any():
            return
        extra = handshake_rounds(res.phases[active], cfg.direct_first, cfg.request_ack)
        with self._lock:
            tally = self.levels[0]
            tally.instances += int(active.sum())
            tally.max_avg_load = max(tally.max_avg_load, float(res.messages.max()) / size)
            tally.max_rounds = max(tally.max_rounds, int(res.rounds.max()))
            tally.max_latency = max(tally.max_latency, int((res.rounds[active] + extra).max()))
            if cfg.request_ack:
                tally.handshake_rounds += 2 * int(res.msg_late.sum())
            self.max_deal_spread = max(self.max_deal_spread, res.max_deal_spread)
            self.phase_counts.append(res.phases[active].copy())
            if self.record_phases:
                self.phase_curves.append(res.remaining[active].copy())

    def all_phase_counts(self) -> np.ndarray:
        if not self.phase_counts:
            return np.zeros(0, dtype=np.int32)
        return np.concatenate(self.phase_counts)


def relay_candidates(t: ClexTopology, copy_i: int, copy_j: int, level: int, parent: int = 0) -> np.ndarray:
    """Nodes of sub-copy ``copy_i`` whose level-``level`` links enter sub-copy ``copy_j``.

    Sub-copies are 0-based digits at position ``level``; ``parent`` selects the
    enclosing copy of C(s, level).
    """
    if not 2 <= level <= t.levels:
        raise RoutingError(f"relay level must be in 2..{t.levels}, got {level}")
    b = t.base
    if not (0 <= copy_i < b and 0 <= copy_j < b):
        raise RoutingError(f"copy indices must be in 0..{b - 1}")
    if copy_i == copy_j:
        raise RoutingError("source and destination copy coincide; no relay needed")
    lo = b ** (level - 2)
    base_idx = parent * b**level + copy_i * b ** (level - 1) + copy_j * lo
    return base_idx + np.arange(lo, dtype=np.int64)


def _pick_relays(t: ClexTopology, holder, target, level: int, rng) -> np.ndarray:
    b = t.base
    lo = b ** (level - 2)
    stem = holder - holder % (lo * b)  # keeps digit l and above of the holder
    j = t.digit(target, level)
    return stem + j * lo + rng.integers(0, lo, size=holder.size)


def _cross(t: ClexTopology, stats: RoutingStats, ids, relay, level: int, rng):
    """Step 2: push messages over level-``level`` links; returns new holders."""
    b = t.base
    order = np.lexsort((rng.random(relay.size), relay))
    relay_s = relay[order]
    starts_mask = np.ones(relay_s.size, dtype=bool)
    starts_mask[1:] = relay_s[1:] != relay_s[:-1]
    first = np.flatnonzero(starts_mask)
    del starts_mask
    counts = np.diff(np.append(first, relay_s.size))
    pos = np.arange(relay_s.size) - np.repeat(first, counts)
    if t.aggregated:
        landing = t.aggregated_neighbor(relay_s, level)
    else:
        # spread over the base parallel edges; extra messages hit a random subset
        edge_order = np.argsort(rng.random((first.size, b)), axis=1).astype(np.int64)
        group = np.repeat(np.arange(first.size), counts)
        lo = b ** (level - 2)
        landing = relay_s - relay_s % (lo * b * b) + relay_s % lo
        landing += t.digit(relay_s, level - 1) * (lo * b)
        landing += edge_order[group, pos % b] * lo
        del edge_order, group
    del relay_s
    ids_s = ids[order]
    stats.add(ids_s, level, hops=np.ones(ids_s.size, dtype=np.uint8), rounds=pos // b + 1)
    stats.position[ids_s] = landing
    del ids_s, pos
    new_holder = np.empty_like(landing)
    new_holder[order] = landing
    return new_holder, int(-(-counts.max() // b)), int(counts.max())


def _group_by(keys: np.ndarray):
    """Stable grouping: (order, group starts incl. end, group labels)."""
    order = np.argsort(keys, kind="stable")
    keys_s = keys[order]
    starts = np.flatnonzero(keys_s[1:] != keys_s[:-1]) + 1
    starts = np.concatenate([[0], starts, [keys_s.size]])
    return order, starts, keys_s[starts[:-1]]


class Router:
    """Executes A(levels) over a topology, collecting :class:`RoutingStats`."""

    def __init__(self, t: ClexTopology, cfg: RouterConfig, stats: RoutingStats):
        self.t = t
        self.cfg = cfg
        self.stats = stats
        self._local = threading.local()

    def rng(self, path: tuple[int, ...]) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, *path])

    def route(self, level: int, copy: int, ids, holder, target, path: tuple[int, ...] = ()):
        """Deliver messages inside copy ``copy`` of C(s, level); holders are updated implicitly."""
        if ids.size == 0:
            return
        if level == 1:
            self._clique_batch(ids, holder, target, path)
            return
        t = self.t
        size = t.copy_size(level)
        self.stats.instance(level, ids.size / size, 0)
        keep = holder != target
        if not keep.all():
            ids, holder, target = ids[keep], holder[keep], target[keep]
        if ids.size == 0:
            return
        # steps 1-2 run per source sub-copy: relays never span sub-copies, and
        # only per-sub-copy temporaries are alive at any time
        new_holder = holder.copy()
        if level > 2:
            order, starts, labels = _group_by(t.copy_of(holder, level - 1))
        else:
            # level-1 sub-instances are batched; one group for the whole copy
            order, starts, labels = np.arange(ids.size), np.array([0, ids.size]), np.array([-1])
        tallies = []

        def job(k: int):
            g = order[starts[k] : starts[k + 1]]
            sub = int(labels[k])
            rng = self.rng((level, copy, *path, sub)) if sub >= 0 else self.rng((level, copy, *path))
            if self.cfg.same_copy_bypass:
                g = g[t.digit(target[g], level) != t.digit(holder[g], level)]
                if g.size == 0:
                    return
            g_ids, g_holder = ids[g], holder[g]
            relay = _pick_relays(t, g_holder, target[g], level, rng)
            # step 1: to the relays, inside the source sub-copy
            self.route_copies(level - 1, g_ids, g_holder, relay, path + (copy, 1))
            # step 2: over the level links
            landing, rounds, load = _cross(t, self.stats, g_ids, relay, level, rng)
            new_holder[g] = landing
            tallies.append((rounds, load))

        self._run(job, labels.size)
        del order, starts, labels
        for rounds, load in tallies:
            self.stats.instance(level, 0.0, rounds, node_load=load, count=0)
        # step 3: inside the destination sub-copy
        self.route_copies(level - 1, ids, new_holder, target, path + (copy, 3))

    def _run(self, job, count: int):
        """Run independent sub-instances; only the outermost fan-out uses threads."""
        workers = self.cfg.workers
        if workers > 1 and count > 1 and not getattr(self._local, "busy", False):

            def wrapped(k):
                self._local.busy = True
                job(k)

            with ThreadPoolExecutor(workers) as pool:
                list(pool.map(wrapped, range(count)))
        else:
            for k in range(count):
                job(k)

    def route_copies(self, level: int, ids, holder, target, path: tuple[int, ...] = ()):
        """Run A(level) independently on every copy of C(s, level) touched by the messages."""
        if ids.size == 0:
            return
        t = self.t
        if level == 1:
            self._clique_batch(ids, holder, target, path)
            return
        order, starts, labels = _group_by(t.copy_of(holder, level))

        def job(k: int):
            g = order[starts[k] : starts[k + 1]]
            self.route(level, int(labels[k]), ids[g], holder[g], target[g], path)

        self._run(job, labels.size)

    def _clique_batch(self, ids, holder, target, path):
        t = self.t
        b = t.base
        clique = t.copy_of(holder, 1)
        uniq, local = np.unique(clique, return_inverse=True)
        rng = self.rng((1, *path))
        res = solve_cliques(local, holder % b, target % b, uniq.size, b, self.cfg.balancer, rng)
        self.stats.add(ids, 1, hops=res.msg_hops, rounds=res.msg_rounds)
        arrived = (res.msg_rounds > 0) | (holder == target)
        self.stats.position[ids] = np.where(arrived, target, holder)
        self.stats.cliques(res, b, self.cfg.balancer)


def route_arrays(t: ClexTopology, level: int, src, dst, cfg: RouterConfig = RouterConfig(), stats: RoutingStats | None = None, ids=None) -> RoutingStats:
    """Vectorised entry point: route ``src[i] -> dst[i]`` (node indices)."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if not 1 <= level <= t.levels:
        raise RoutingError(f"level must be in 1..{t.levels}")
    if src.size:
        copies = t.copy_of(src, level)
        if (copies != copies[0]).any() or (t.copy_of(dst, level) != copies[0]).any():
            raise RoutingError(f"messages leave the copy of C(s,{level}) they start in")
    if stats is None:
        stats = RoutingStats(t, src.size, record_phases=cfg.record_phases)
    if ids is None:
        ids = np.arange(src.size, dtype=np.int64)
    stats.position[ids] = src
    router = Router(t, cfg, stats)
    if src.size:
        router.route(level, int(t.copy_of(src[0], level)), ids, src, dst)
    return stats


def route(t: ClexTopology, level: int, messages: list[Message], cfg: RouterConfig = RouterConfig()) -> RoutingStats:
    """Route :class:`Message` objects and write per-level hops, rounds and the final holder back."""
    src = np.array([t.index(m.src) for m in messages], dtype=np.int64)
    dst = np.array([t.index(m.dst) for m in messages], dtype=np.int64)
    stats = route_arrays(t, level, src, dst, cfg)
    for k, m in enumerate(messages):
        m.hops_per_level = [int(x) for x in stats.hops[k]]
        m.rounds_per_level = [int(x) for x in stats.rounds[k]]
        m.holder = m.dst
    return stats


VALIANT_MODES = ("off", "full", "cluster")


def parse_valiant_mode(mode) -> tuple[str, int | None]:
    """Accept ``"off"``, ``"full"``, ``"cluster:L"`` or ``("cluster", L)``."""
    if isinstance(mode, tuple):
        name, level = mode
    elif isinstance(mode, str) and mode.startswith("cluster"):
        name, _, rest = mode.partition(":")
        if not rest.strip().isdigit():
            raise RoutingError(f"cluster mode needs a level, e.g. 'cluster:2', got {mode!r}")
        level = int(rest)
    else:
        name, level = mode, None
    if name not in VALIANT_MODES:
        raise RoutingError(f"unknown Valiant mode {mode!r}; expected off, full or cluster:L")
    return name, level


def valiant_redistribute(dst, t: ClexTopology, mode, rng: np.random.Generator) -> np.ndarray | None:
    """Intermediate destinations for Valiant-style two-pass routing.

    ``off`` returns None (route directly). ``full`` picks a uniform node of
    the whole machine; ``cluster:L`` a uniform node of the destination's copy
    of C(s, L).
    """
    name, level = parse_valiant_mode(mode)
    dst = np.asarray(dst, dtype=np.int64)
    if name == "off":
        return None
    if name == "full":
        return rng.integers(0, t.n, size=dst.size)
    if not 1 <= level <= t.levels:
        raise RoutingError(f"cluster level must be in 1..{t.levels}, got {level}")
    size = t.copy_size(level)
    return t.copy_of(dst, level) * size + rng.integers(0, size, size=dst.size)
