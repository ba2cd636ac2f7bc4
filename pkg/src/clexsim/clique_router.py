"""Randomised load balancing on a clique (algorithm A(1)).

Each phase makes floor(k) copies of every undelivered message and deals them
to the clique's nodes so that every node receives the same number of copies
up to one. Every node then forwards, per destination, one of the copies it
holds for that destination. Delivered messages and all copies are dropped;
k grows as k * exp(floor(k) / 5) up to a cap of sqrt(log n_clique).

Deal procedure: the copies of a clique are shuffled and dealt round-robin to
the nodes in a random node order. That gives exact +-1 balance with uniform
marginals. Since floor(k) <= sqrt(log n) copies are made of each pending
message and the deal is balanced, no node ever holds more than
ceil(floor(k) * pending / size) copies; no further clamping is applied.

Simulation variants:

* ``direct_first``: phase 1 sends along each clique link one message (if
  available) straight to its destination and costs one round. Later phases
  cost two rounds (deal, forward).
* ``request_ack``: copies are replaced by small forwarding requests; a relay
  that is granted a message gets it after an acknowledgement, so a message
  costs at most two hops. Without it, full copies are dealt and every copy
  sent to another node, and every forward by a relay, counts as a hop. The handshake
  costs two extra rounds once an instance needs any balancing phase. These
  rounds carry only control bits, so they are reported separately as
  latency (``latency``, ``latency_rounds``) and are not part of the payload
  round counts (``msg_rounds``, ``rounds``).

``phases`` counts every loop iteration including the direct round;
``balancing_phases`` counts only the copy-and-forward phases after it.

A message whose holder already is its destination is delivered through the
self-loop at zero cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BalancerConfig:
    direct_first: bool = True
    request_ack: bool = False
    copy_cap: float | None = None
    log_base: float = math.e
    rng_seed: int = 0

    def cap_for(self, n_clique: int) -> float:
        if self.copy_cap is not None:
            return self.copy_cap
        return default_cap(n_clique, self.log_base)


def default_cap(n_clique: int, log_base: float = math.e) -> float:
    return max(1.0, math.sqrt(math.log(n_clique, log_base)))


def k_update(k: float, n_clique: int, cap: float | None = None, log_base: float = math.e) -> float:
    """Next copy count min(k * e^(floor(k)/5), cap)."""
    if k < 1:
        raise ValueError(f"copy count must be >= 1, got {k}")
    if cap is None:
        cap = default_cap(n_clique, log_base)
    return min(k * math.exp(math.floor(k) / 5), cap)


def schedule_rounds(phases: int, direct_first: bool) -> int:
    """Payload rounds an instance needs to finish after ``phases`` phases."""
    if phases <= 0:
        return 0
    return 1 + 2 * (phases - 1) if direct_first else 2 * phases


def balancing_phases(phases, direct_first: bool):
    return np.maximum(np.asarray(phases) - (1 if direct_first else 0), 0)


def handshake_rounds(phases, direct_first: bool, request_ack: bool):
    """Extra latency rounds of the request/acknowledge handshake."""
    if not request_ack:
        return np.zeros_like(np.asarray(phases))
    return np.where(balancing_phases(phases, direct_first) > 0, 2, 0)


@dataclass
class CliqueBatchResult:
    """Outcome of a batch of independent A(1) instances on equal-size cliques.

    Per-message arrays are aligned with the input; per-instance arrays have
    one entry per clique.
    """

    msg_hops: np.ndarray
    msg_rounds: np.ndarray
    msg_late: np.ndarray  # delivered in a dealing phase
    phases: np.ndarray
    rounds: np.ndarray
    remaining: np.ndarray  # (n_cliques, max_phases + 1); column 0 = initial
    messages: np.ndarray
    max_deal_spread: int = 0


def solve_cliques(
    clique: np.ndarray,
    holder: np.ndarray,
    target: np.ndarray,
    n_cliques: int,
    size: int,
    cfg: BalancerConfig,
    rng: np.random.Generator,
) -> CliqueBatchResult:
    """Run one A(1) instance per clique, all cliques in lock step.

    ``holder`` and ``target`` are local node numbers 0..size-1 and ``clique``
    the instance each message belongs to.
    """
    m = len(holder)
    clique = np.asarray(clique, dtype=np.int64)
    holder = np.asarray(holder, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    hops = np.zeros(m, dtype=np.int8)
    msg_rounds = np.zeros(m, dtype=np.int16)
    late = np.zeros(m, dtype=bool)
    phases = np.zeros(n_cliques, dtype=np.int32)
    counts = np.bincount(clique, minlength=n_cliques)

    pending = np.flatnonzero(holder != target)
    history = [np.bincount(clique[pending], minlength=n_cliques)]
    cap = cfg.cap_for(size)
    k = 1.0
    phase = 0
    elapsed = 0
    spread = 0
    while pending.size:
        phase += 1
        phases[np.unique(clique[pending])] = phase
        if phase == 1 and cfg.direct_first:
            elapsed += 1
            # one message per (node, destination) link, picked at random
            order = pending[rng.permutation(pending.size)]
            key = (clique[order] * size + holder[order]) * size + target[order]
            _, first = np.unique(key, return_index=True)
            done = order[first]
            hops[done] = 1
            msg_rounds[done] = elapsed
        else:
            elapsed += 2
            copies = math.floor(k)
            cm = np.repeat(pending, copies) if copies > 1 else pending
            g = clique[cm]
            order = np.lexsort((rng.random(cm.size), g))
            cm = cm[order]
            g = g[order]
            starts = np.zeros(n_cliques + 1, dtype=np.int64)
            np.cumsum(np.bincount(g, minlength=n_cliques), out=starts[1:])
            rank = np.arange(cm.size) - starts[g]
            node_order = np.argsort(rng.random((n_cliques, size)), axis=1)
            relay = node_order[g, rank % size]
            dealt = np.bincount(g * size + relay, minlength=n_cliques * size).reshape(n_cliques, size)
            active = np.flatnonzero(np.bincount(g, minlength=n_cliques))
            spread = max(spread, int((dealt[active].max(axis=1) - dealt[active].min(axis=1)).max()))
            # each relay forwards one copy per destination; copies are in random order
            key = (g * size + relay) * size + target[cm]
            _, first = np.unique(key, return_index=True)
            won = cm[first]
            won_relay = relay[first]
            if cfg.request_ack:
                # requests are free; the granted message travels holder -> relay -> target
                direct = (won_relay == holder[won]) | (won_relay == target[won])
                h = np.where(direct, 1, 2).astype(np.int8)
                # a message may be granted by several relays; it takes the cheapest
                sel = np.lexsort((h, won))
                won, h = won[sel], h[sel]
                uniq = np.ones(won.size, dtype=bool)
                uniq[1:] = won[1:] != won[:-1]
                done = won[uniq]
                hops[done] = h[uniq]
            else:
                # full copies: every copy sent to another node and every forward is a traversal
                dealt_away = relay != holder[cm]
                hops += np.bincount(cm[dealt_away], minlength=m).astype(np.int8)
                fwd = won_relay != target[won]
                hops += np.bincount(won[fwd], minlength=m).astype(np.int8)
                done = np.unique(won)
            late[done] = True
            msg_rounds[done] = elapsed
        left = np.ones(m, dtype=bool)
        left[done] = False
        pending = pending[left[pending]]
        history.append(np.bincount(clique[pending], minlength=n_cliques))
        k = k_update(k, size, cap)

    remaining = np.stack(history, axis=1) if history else np.zeros((n_cliques, 1), dtype=np.int64)
    rounds = np.array([schedule_rounds(int(p), cfg.direct_first) for p in phases], dtype=np.int32)
    return CliqueBatchResult(
        msg_hops=hops,
        msg_rounds=msg_rounds,
        msg_late=late,
        phases=phases,
        rounds=rounds,
        remaining=remaining,
        messages=counts,
        max_deal_spread=spread,
    )


@dataclass
class CliqueStats:
    """Result of a single A(1) instance."""

    instance_id: int
    rounds: int
    phases: int
    balancing_phases: int
    latency_rounds: int
    remaining_per_phase: list[int]
    send_loads: list[int]
    receive_loads: list[int]
    hops: np.ndarray
    msg_rounds: np.ndarray
    latency: np.ndarray
    max_deal_spread: int = 0

    @property
    def loads(self) -> list[int]:
        return [s + r for s, r in zip(self.send_loads, self.receive_loads)]

    def to_record(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "rounds": self.rounds,
            "phases": self.phases,
            "loads": self.loads,
            "remaining_per_phase": self.remaining_per_phase,
        }


def run_clique_instance(src, dst, size: int, cfg: BalancerConfig = BalancerConfig(), instance_id: int = 0) -> CliqueStats:
    """Deliver messages ``src[i] -> dst[i]`` inside a clique of ``size`` nodes."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if size < 2:
        raise ValueError(f"clique size must be >= 2, got {size}")
    if src.shape != dst.shape:
        raise ValueError("src and dst must have the same length")
    for name, arr in (("source", src), ("destination", dst)):
        bad = (arr < 0) | (arr >= size)
        if bad.any():
            raise ValueError(f"{name} {int(arr[bad][0])} outside clique of size {size}")
    rng = np.random.default_rng([cfg.rng_seed, instance_id])
    res = solve_cliques(np.zeros(src.size, dtype=np.int64), src, dst, 1, size, cfg, rng)
    latency = res.msg_rounds.astype(np.int32) + np.where(res.msg_late & cfg.request_ack, 2, 0)
    return CliqueStats(
        instance_id=instance_id,
        rounds=int(res.rounds[0]),
        phases=int(res.phases[0]),
        balancing_phases=int(balancing_phases(res.phases[0], cfg.direct_first)),
        latency_rounds=int(res.rounds[0] + handshake_rounds(res.phases[0], cfg.direct_first, cfg.request_ack)),
        remaining_per_phase=[int(x) for x in res.remaining[0][: res.phases[0] + 1]],
        send_loads=np.bincount(src, minlength=size).tolist(),
        receive_loads=np.bincount(dst, minlength=size).tolist(),
        hops=res.msg_hops,
        msg_rounds=res.msg_rounds,
        latency=latency,
        max_deal_spread=res.max_deal_spread,
    )
