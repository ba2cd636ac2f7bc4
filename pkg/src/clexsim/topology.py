"""CLEX and 3D-torus topologies.

Nodes of a CLEX graph C(s, l) are numbered 0..n-1 internally. The external
label of a node is the 1-based digit tuple (v_1, ..., v_l), where v_1 indexes
the node inside its innermost clique and v_l the top-level copy. Internally a
node index is the mixed-radix number sum((v_k - 1) * base**(k - 1)).

Edges are never materialised; they are computed from labels on demand.
For level l >= 2 the out-edges of a node are

    (v_1, ..., v_{l-1}, i, ...) -> (v_1, ..., v_{l-2}, j, v_{l-1}, ...)   for all j,

so a node's level-l edges all lead into the sub-copy numbered v_{l-1}.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

_MAX_NODES = 2**62


class TopologyError(ValueError):
    """Invalid topology parameters or queries."""


@dataclass(frozen=True)
class ClexTopology:
    """The CLEX graph C(s, levels) with cliques of ``base`` nodes.

    ``max_levels`` is 1/s; it defaults to ``levels``, i.e. the full machine
    C(s, 1/s). With ``aggregated=True`` the ``base`` parallel level-l edges
    of a node are modelled as one link of capacity ``base`` to a single
    endpoint (digits l-1 and l swapped), so every node gets exactly one
    outgoing and one incoming link per higher level.
    """

    base: int
    levels: int
    max_levels: int | None = None
    aggregated: bool = True

    def __post_init__(self):
        if self.base < 2:
            raise TopologyError(f"base must be >= 2, got {self.base}")
        if self.levels < 1:
            raise TopologyError(f"levels must be >= 1, got {self.levels}")
        if self.max_levels is None:
            object.__setattr__(self, "max_levels", self.levels)
        if self.levels > self.max_levels:
            raise TopologyError(f"levels={self.levels} exceeds 1/s={self.max_levels}")
        if self.base**self.levels > _MAX_NODES:
            raise TopologyError(f"{self.base}**{self.levels} nodes overflow a machine word")

    @property
    def n(self) -> int:
        return self.base**self.levels

    @property
    def s(self) -> float:
        return 1.0 / self.max_levels

    def copy_size(self, level: int) -> int:
        """Number of nodes in one copy of C(s, level)."""
        return self.base**level

    # -- labels -----------------------------------------------------------

    def label(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.n:
            raise TopologyError(f"node index {index} out of range")
        digits = []
        for _ in range(self.levels):
            index, d = divmod(index, self.base)
            digits.append(d + 1)
        return tuple(digits)

    def index(self, label: Sequence[int]) -> int:
        if len(label) != self.levels:
            raise TopologyError(f"label {tuple(label)} must have {self.levels} digits")
        idx = 0
        for k, v in enumerate(label):
            if not 1 <= v <= self.base:
                raise TopologyError(f"digit {v} of {tuple(label)} outside 1..{self.base}")
            idx += (v - 1) * self.base**k
        return idx

    def digit(self, index, level: int):
        """0-based digit ``level`` (1-based position) of node index(es)."""
        return (index // self.base ** (level - 1)) % self.base

    def copy_of(self, index, level: int):
        """Index of the copy of C(s, level) that contains the node(s)."""
        return index // self.base**level

    # -- edges ------------------------------------------------------------

    def _check_level(self, level: int):
        if not 1 <= level <= self.levels:
            raise TopologyError(f"level must be in 1..{self.levels}, got {level}")

    def out_neighbors(self, index: int, level: int) -> np.ndarray:
        """Node indices reached by the level-``level`` out-edges of ``index``.

        Level 1 excludes the self-loop. Higher levels return all ``base``
        endpoints, which may include the node itself.
        """
        self._check_level(level)
        b = self.base
        if level == 1:
            first = index - index % b
            others = np.arange(first, first + b, dtype=np.int64)
            return others[others != index]
        lo = b ** (level - 2)
        prev = self.digit(index, level - 1)
        stem = index - index % (lo * b * b)  # digits above `level` kept
        low = index % lo
        return stem + low + prev * lo * b + np.arange(b, dtype=np.int64) * lo

    def in_neighbors(self, index: int, level: int) -> np.ndarray:
        """Sources of the level-``level`` edges that end in ``index``."""
        self._check_level(level)
        if level == 1:
            return self.out_neighbors(index, 1)
        b = self.base
        lo = b ** (level - 2)
        cur = self.digit(index, level)
        stem = index - index % (lo * b * b)
        low = index % lo
        return stem + low + cur * lo + np.arange(b, dtype=np.int64) * lo * b

    def aggregated_neighbor(self, index, level: int):
        """Endpoint of the single capacity-``base`` link on ``level`` >= 2."""
        self._check_level(level)
        if level == 1:
            raise TopologyError("level 1 has no aggregated link")
        lo = self.base ** (level - 2)
        hi = lo * self.base
        a = self.digit(index, level - 1)
        c = self.digit(index, level)
        return index + (c - a) * lo + (a - c) * hi

    def edges(self) -> Iterator[tuple[int, int, int]]:
        """Yield every directed edge (src, dst, level); level-1 self-loops omitted."""
        for v in range(self.n):
            for level in range(1, self.levels + 1):
                for w in self.out_neighbors(v, level):
                    yield v, int(w), level

    def edge_count(self) -> int:
        b, L = self.base, self.levels
        return self.n * (b - 1 + (L - 1) * b)

    def degree(self) -> int:
        """Uniform out-degree: base - 1 clique links plus base per higher level."""
        return self.base * self.levels - 1

    def format_label(self, index: int) -> str:
        return ".".join(str(d) for d in self.label(index))

    def write_edge_list(self, fh: TextIO):
        """Write ``src<TAB>dst<TAB>level`` lines in lexicographic label order.

        Lines are sorted by source label, then level, then destination label;
        labels compare digit by digit starting from v_1.
        """
        order = sorted(range(self.n), key=self.label)
        for v in order:
            for level in range(1, self.levels + 1):
                targets = sorted((int(w) for w in self.out_neighbors(v, level)), key=self.label)
                src = self.format_label(v)
                for w in targets:
                    fh.write(f"{src}\t{self.format_label(w)}\t{level}\n")


def build_clex(base: int, levels: int, max_levels: int | None = None, aggregated: bool = True) -> ClexTopology:
    return ClexTopology(base, levels, max_levels=max_levels, aggregated=aggregated)


def level_out_neighbors(t: ClexTopology, v: Sequence[int], level: int) -> list[tuple[int, ...]]:
    """Out-neighbour labels of label ``v`` on ``level`` (1-based labels)."""
    return [t.label(int(w)) for w in t.out_neighbors(t.index(v), level)]


def diameter_bound(levels: int) -> int:
    return 2**levels - 1


def diameter(t: ClexTopology, limit: int = 10**5) -> int:
    """Exact hop diameter with higher-level links usable in both directions."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import shortest_path

    if t.n > limit:
        raise TopologyError(f"n={t.n} exceeds the BFS guard {limit}; use diameter_bound({t.levels})")
    if t.n == 1:
        return 0
    src, dst = [], []
    for v, w, _ in t.edges():
        if v != w:
            src.append(v)
            dst.append(w)
    adj = coo_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(t.n, t.n)).tocsr()
    adj = ((adj + adj.T) > 0).astype(np.int8)
    best = 0
    chunk = max(1, 2**22 // t.n)
    for lo in range(0, t.n, chunk):
        dist = shortest_path(adj, unweighted=True, directed=False, indices=np.arange(lo, min(lo + chunk, t.n)))
        if np.isinf(dist).any():
            raise TopologyError("graph is disconnected")
        best = max(best, int(dist.max()))
    return best


@dataclass(frozen=True)
class TorusTopology:
    """A k1 x k2 x k3 grid with wraparound links in every dimension."""

    k1: int
    k2: int
    k3: int

    def __post_init__(self):
        if min(self.dims) < 1:
            raise TopologyError(f"torus dimensions must be >= 1, got {self.dims}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.k1, self.k2, self.k3)

    @property
    def n(self) -> int:
        return self.k1 * self.k2 * self.k3

    def coords(self, index: int) -> tuple[int, int, int]:
        x = index % self.k1
        y = (index // self.k1) % self.k2
        z = index // (self.k1 * self.k2)
        return x, y, z

    def index(self, x: int, y: int, z: int) -> int:
        return (x % self.k1) + self.k1 * ((y % self.k2) + self.k2 * (z % self.k3))

    def neighbors(self, index: int) -> list[int]:
        """The six wraparound neighbours (+x, -x, +y, -y, +z, -z); may repeat for k<=2."""
        x, y, z = self.coords(index)
        return [
            self.index(x + 1, y, z), self.index(x - 1, y, z),
            self.index(x, y + 1, z), self.index(x, y - 1, z),
            self.index(x, y, z + 1), self.index(x, y, z - 1),
        ]


def torus_bisection_edges(t: TorusTopology) -> int:
    """Edges cut by the cheapest plane orthogonal to one axis (two cuts per ring)."""
    cuts = [2 * (t.n // k) for k in t.dims if k >= 2]
    return min(cuts) if cuts else 0


@dataclass(frozen=True)
class Embedding:
    """Physical node positions (unit = minimal processor spacing).

    ``link_length[l]`` is the maximal physical length of a level-l link; the
    torus uses the single key 1.
    """

    positions: np.ndarray
    link_length: dict[int, float] = field(default_factory=dict)

    def distance(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.positions[a] - self.positions[b]))


def cuboid_dims(base: int) -> tuple[int, int, int]:
    """Most cube-like (a, b, c) with a*b*c == base, largest side first."""
    best = None
    for a in range(1, base + 1):
        if base % a:
            continue
        for b in range(1, base // a + 1):
            if (base // a) % b:
                continue
            dims = tuple(sorted((a, b, base // a // b), reverse=True))
            if best is None or (dims[0], -dims[2]) < (best[0], -best[2]):
                best = dims
    return best


def clex_link_length(t: ClexTopology, level: int) -> float:
    return math.sqrt(3) * t.base ** (level / 3) / 2


def embed(t: ClexTopology | TorusTopology) -> Embedding:
    """Hierarchical cube packing for CLEX, unit grid for the torus.

    Each CLEX level arranges ``base`` copies of the previous block in an
    a x b x c block (a perfect cube when base is a cube). For non-cube bases
    the block axes are rotated from level to level so the machine stays close
    to cubic.
    """
    if isinstance(t, TorusTopology):
        idx = np.arange(t.n)
        pos = np.stack([idx % t.k1, (idx // t.k1) % t.k2, idx // (t.k1 * t.k2)], axis=1).astype(float)
        return Embedding(pos, {1: 1.0})
    dims = cuboid_dims(t.base)
    idx = np.arange(t.n, dtype=np.int64)
    pos = np.zeros((t.n, 3))
    scale = np.ones(3)
    for level in range(1, t.levels + 1):
        shift = (level - 1) % 3
        block = np.roll(np.array(dims), shift)
        d = t.digit(idx, level)
        sub = np.stack([d % block[0], (d // block[0]) % block[1], d // (block[0] * block[1])], axis=1)
        pos += sub * scale
        scale = scale * block
    lengths = {level: clex_link_length(t, level) for level in range(1, t.levels + 1)}
    return Embedding(pos, lengths)


def enumerate_labels(base: int, levels: int) -> Iterable[tuple[int, ...]]:
    """All 1-based labels in index order."""
    for digits in itertools.product(range(1, base + 1), repeat=levels):
        yield tuple(reversed(digits))
