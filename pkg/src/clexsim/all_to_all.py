"""All-to-all broadcast (every node's message reaches every node).

Torus: each message is flooded along x, then y, then z, over shortest paths
in each ring. CLEX: each message is flooded top level first; on level l a
holder reaches one node in every other sub-copy through the level-l links
that end at it, and level 1 finishes inside the cliques. Every message then
crosses at most one link per level and lower (shorter) links carry most of
the load.

Large instances are evaluated in counting mode: per-link traversal tallies
and tree depths follow from the flood schedule. For n <= ``MATERIALIZE_LIMIT``
the flood can also be executed message by message to check completeness and
the tree property.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from clexsim.topology import ClexTopology, Embedding, TorusTopology, embed

MATERIALIZE_LIMIT = 4096


@dataclass
class FloodTree:
    """Expansion schedule of one message: (group, fanout) per step.

    For the torus a group is a dimension (0, 1, 2); for CLEX a level.
    """

    root: int
    schedule: list[tuple[int, int]]

    @property
    def size(self) -> int:
        total = 1
        for _, fanout in self.schedule:
            total *= fanout + 1
        return total


@dataclass
class AtaStats:
    kind: str
    n: int
    avg_hops: float  # mean over messages of the flood-tree depth
    max_hops: int
    mean_distance: float  # mean hops over all (message, node) pairs
    total_traversals: int
    traffic_by_group: dict[int, int]
    max_link_load: float
    link_load_ratio: float
    max_propagation: float
    max_physical_path: float | None = None
    complete: bool | None = None
    tree: bool | None = None
    extra: dict = field(default_factory=dict)

    @property
    def lower_bound(self) -> int:
        return self.n * (self.n - 1)

    @property
    def traffic_ratio(self) -> float:
        return self.total_traversals / self.lower_bound if self.n > 1 else 1.0

    @property
    def traffic_shares(self) -> dict[int, float]:
        total = sum(self.traffic_by_group.values())
        return {g: (v / total if total else 0.0) for g, v in self.traffic_by_group.items()}

    def to_record(self) -> dict:
        return {
            "topology": self.kind,
            "n": self.n,
            "avg_hops": self.avg_hops,
            "max_hops": self.max_hops,
            "mean_distance": self.mean_distance,
            "total_traversals": self.total_traversals,
            "traffic_ratio": self.traffic_ratio,
            "max_link_load": self.max_link_load,
            "link_load_ratio": self.link_load_ratio,
            "max_propagation": self.max_propagation,
            "max_physical_path": self.max_physical_path,
            "complete": self.complete,
            "tree": self.tree,
            "traffic_by_group": {str(k): v for k, v in self.traffic_by_group.items()},
        }


def _ring_offsets(k: int, source: int) -> list[int]:
    """Signed ring offsets reached from ``source``; the antipode (even k) alternates sides."""
    half = (k - 1) // 2
    offs = list(range(1, half + 1)) + [-o for o in range(1, half + 1)]
    if k % 2 == 0 and k > 1:
        offs.append(k // 2 if source % 2 == 0 else -(k // 2))
    return offs


def _ring_traversal_loads(k: int) -> tuple[np.ndarray, np.ndarray]:
    plus = np.zeros(k, dtype=np.int64)
    minus = np.zeros(k, dtype=np.int64)
    for src in range(k):
        offs = _ring_offsets(k, src)
        far_plus = max([o for o in offs if o > 0], default=0)
        far_minus = max([-o for o in offs if o < 0], default=0)
        for e in range(far_plus):
            plus[(src + e) % k] += 1
        for e in range(far_minus):
            minus[(src - e) % k] += 1
    return plus, minus


def torus_flood_tree(t: TorusTopology, root: int = 0) -> FloodTree:
    return FloodTree(root, [(d, k - 1) for d, k in enumerate(t.dims)])


def torus_all_to_all(t: TorusTopology, materialize: bool | None = None) -> AtaStats:
    n = t.n
    depth = sum(k // 2 for k in t.dims)
    mult = 1
    traffic = {}
    max_load = 0
    links = 0
    mean_distance = 0.0
    for d, k in enumerate(t.dims):
        plus, minus = _ring_traversal_loads(k)
        traffic[d] = n * (k - 1) * mult
        if k >= 2:
            max_load = max(max_load, int(max(plus.max(), minus.max())) * mult)
            links += 2 * n
        mean_distance += sum(abs(o) for o in _ring_offsets(k, 0)) / k
        mult *= k
    total = sum(traffic.values())
    lower_link = n * (n - 1) / links if links else 0.0
    stats = AtaStats(
        kind="torus",
        n=n,
        avg_hops=float(depth),
        max_hops=depth,
        mean_distance=mean_distance,
        total_traversals=total,
        traffic_by_group=traffic,
        max_link_load=float(max_load),
        link_load_ratio=max_load / lower_link if lower_link else 0.0,
        max_propagation=float(depth),
    )
    if materialize is None:
        materialize = n <= MATERIALIZE_LIMIT
    if materialize:
        _materialize_torus(t, stats)
    return stats


def _materialize_torus(t: TorusTopology, stats: AtaStats):
    n = t.n
    if n > MATERIALIZE_LIMIT:
        raise ValueError(f"materialised flood limited to n <= {MATERIALIZE_LIMIT}")
    idx = np.arange(n)
    coords = np.stack([idx % t.k1, (idx // t.k1) % t.k2, idx // (t.k1 * t.k2)], axis=1)
    holds = np.eye(n, dtype=np.uint8)  # holds[node, message]
    received = np.zeros((n, n), dtype=np.int32)
    depth = np.zeros((n, n), dtype=np.int32)
    for d, k in enumerate(t.dims):
        start = holds.copy()
        start_depth = depth.copy()
        for src_pos in range(k):
            rows = np.flatnonzero(coords[:, d] == src_pos)
            for o in _ring_offsets(k, src_pos):
                shifted = coords[rows].copy()
                shifted[:, d] = (shifted[:, d] + o) % k
                dst_rows = shifted[:, 0] + t.k1 * (shifted[:, 1] + t.k2 * shifted[:, 2])
                got = start[rows]
                received[dst_rows] += got
                holds[dst_rows] |= got
                depth[dst_rows] = np.where(got > 0, start_depth[rows] + abs(o), depth[dst_rows])
    off_diag = ~np.eye(n, dtype=bool)
    stats.complete = bool(holds.all())
    stats.tree = bool((received[off_diag] == 1).all() and (np.diag(received) == 0).all())
    stats.extra["materialized_traversals"] = int(received.sum())
    stats.extra["materialized_depth"] = int(depth.max())


def clex_flood_tree(t: ClexTopology, root: int = 0) -> FloodTree:
    return FloodTree(root, [(level, t.base - 1) for level in range(t.levels, 0, -1)])


def clex_all_to_all(t: ClexTopology, e: Embedding | None = None, materialize: bool | None = None) -> AtaStats:
    if e is None:
        e = embed(t)
    b, L, n = t.base, t.levels, t.n
    traffic = {level: n * (b - 1) * b ** (L - level) for level in range(1, L + 1)}
    links = {level: n * (b - 1) if level == 1 else n * b for level in range(1, L + 1)}
    per_link = {level: traffic[level] / links[level] for level in traffic}
    max_load = max(per_link.values())
    lower_link = n * (n - 1) / sum(links.values())
    # deepest root-to-leaf path crosses one link on every level
    max_prop = 0.0
    for level in range(L, 0, -1):
        max_prop += e.link_length[level]
    stats = AtaStats(
        kind="clex",
        n=n,
        avg_hops=float(L),
        max_hops=L,
        mean_distance=L * (b - 1) / b,
        total_traversals=sum(traffic.values()),
        traffic_by_group=traffic,
        max_link_load=max_load,
        link_load_ratio=max_load / lower_link if n > 1 else 0.0,
        max_propagation=max_prop,
    )
    stats.extra["link_load_by_level"] = per_link
    if materialize is None:
        materialize = n <= MATERIALIZE_LIMIT
    if materialize:
        _materialize_clex(t, e, stats)
    return stats


def flood_from(t: ClexTopology, roots) -> list[tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
    """Flood the messages of ``roots`` top level first.

    Returns one (level, message, sender, receiver) block per level; senders
    of a block are the root or receivers of earlier blocks.
    """
    b = t.base
    msg = np.asarray(roots, dtype=np.int64).ravel()
    holder = msg.copy()
    blocks = []
    for level in range(t.levels, 0, -1):
        if level == 1:
            first = holder - holder % b
            cand = first[:, None] + np.arange(b, dtype=np.int64)
        else:
            lo = b ** (level - 2)
            cur = t.digit(holder, level)
            stem = holder - holder % (lo * b * b) + holder % lo + cur * lo
            cand = stem[:, None] + np.arange(b, dtype=np.int64) * lo * b
        keep = t.digit(cand, level) != t.digit(holder, level)[:, None]
        rows, _ = np.nonzero(keep)
        recv = cand[keep]
        blocks.append((level, msg[rows], holder[rows], recv))
        msg = np.concatenate([msg, msg[rows]])
        holder = np.concatenate([holder, recv])
    return blocks


def _materialize_clex(t: ClexTopology, e: Embedding, stats: AtaStats):
    n = t.n
    if n > MATERIALIZE_LIMIT:
        raise ValueError(f"materialised flood limited to n <= {MATERIALIZE_LIMIT}")
    complete = True
    tree = True
    traversals = {level: 0 for level in range(1, t.levels + 1)}
    max_prop = max_phys = 0.0
    max_depth = 0
    chunk = max(1, 2**20 // n)
    for lo in range(0, n, chunk):
        roots = np.arange(lo, min(lo + chunk, n))
        width = roots.size
        model = np.zeros((width, n))
        phys = np.zeros((width, n))
        depth = np.zeros((width, n), dtype=np.int64)
        counts = np.zeros((width, n), dtype=np.int64)
        counts[np.arange(width), roots] = 1
        for level, msg, send, recv in flood_from(t, roots):
            row = msg - lo
            traversals[level] += recv.size
            np.add.at(counts, (row, recv), 1)
            dist = np.linalg.norm(e.positions[recv] - e.positions[send], axis=1)
            model[row, recv] = model[row, send] + e.link_length[level]
            phys[row, recv] = phys[row, send] + dist
            depth[row, recv] = depth[row, send] + 1
        complete &= bool((counts >= 1).all())
        tree &= bool((counts == 1).all())
        max_prop = max(max_prop, float(model.max()))
        max_phys = max(max_phys, float(phys.max()))
        max_depth = max(max_depth, int(depth.max()))
    stats.complete = complete
    stats.tree = tree
    stats.max_propagation = max_prop
    stats.max_physical_path = max_phys
    stats.extra["materialized_traffic"] = traversals
    stats.extra["materialized_depth"] = max_depth
