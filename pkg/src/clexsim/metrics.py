"""Delay and bandwidth models, and CLEX-versus-torus comparison ratios.

The ratio functions take per-level rows (anything with ``level``,
``avg_rounds`` and ``avg_hops`` attributes, e.g. :class:`LevelMetrics`).
The torus reference point for all of them is its bisection: a torus of
n = k^3 nodes needs on average 3 n^(1/3) / 2 hops and offers at most
2B / (3 n^(1/3)) bandwidth per node for uniform traffic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from clexsim.topology import TorusTopology, torus_bisection_edges


@dataclass(frozen=True)
class DelayModel:
    """Linear delay d = c_h * hops + c_p * distance.

    Defaults assume a few nanoseconds per relay and a signal speed of about
    one foot per nanosecond.
    """

    c_h: float = 3.0
    c_p: float = 1.0

    def __post_init__(self):
        if self.c_h <= 0 or self.c_p <= 0:
            raise ValueError("delay constants must be positive")


def delay(h: float, p: float, m: DelayModel = DelayModel()) -> float:
    if h < 0 or p < 0:
        raise ValueError("hops and distance must be non-negative")
    return m.c_h * h + m.c_p * p


@dataclass(frozen=True)
class BandwidthModel:
    """Per-node bandwidth ``B`` split over levels in proportion to measured hops."""

    B: float
    shares: tuple[float, ...]

    def __post_init__(self):
        if abs(sum(self.shares) - 1.0) > 1e-9:
            raise ValueError("level shares must sum to 1")

    @classmethod
    def from_level_metrics(cls, rows, B: float = 1.0) -> "BandwidthModel":
        rows = sorted(rows, key=lambda r: r.level)
        total = sum(r.avg_hops for r in rows)
        if total <= 0:
            raise ValueError("no hops recorded")
        return cls(B, tuple(r.avg_hops / total for r in rows))

    def level_bandwidth(self, level: int) -> float:
        return self.B * self.shares[level - 1]


def _check(rows):
    if not rows:
        raise ValueError("empty level metrics")
    return sorted(rows, key=lambda r: r.level)


def torus_scale(n: int) -> float:
    """Average torus hop count 3 n^(1/3) / 2 for n = k^3 nodes."""
    return 3 * n ** (1 / 3) / 2


def torus_effective_bandwidth(t: TorusTopology | int, B: float = 1.0) -> float:
    """Upper bound on per-node bandwidth for uniform traffic.

    Each of the six links gets B/6 and half of all messages cross the
    cheapest axis-orthogonal cut; for n = k^3 this is 2B / (3 k). A plain
    node count is treated as an idealised cube of side n^(1/3).
    """
    if not isinstance(t, TorusTopology):
        return B if t <= 1 else min(B, 2 * B / (3 * t ** (1 / 3)))
    cut = torus_bisection_edges(t)
    if t.n == 1 or cut == 0:
        return B
    return min(B, cut * B / (3 * t.n))


def bandwidth_gain(level_metrics: Sequence, n: int) -> float:
    rows = _check(level_metrics)
    return torus_scale(n) / sum(r.avg_hops for r in rows)


def hop_ratio(level_metrics: Sequence, n: int) -> float:
    rows = _check(level_metrics)
    return torus_scale(n) / sum(r.avg_rounds for r in rows)


def propagation_ratio(level_metrics: Sequence, growth: float) -> float:
    """Average propagation relative to one top-level link.

    Link lengths shrink by ``growth`` (= base^(1/3)) per level going down.
    """
    rows = _check(level_metrics)
    top = rows[-1].level
    return sum(r.avg_rounds / growth ** (top - r.level) for r in rows)


def growth_factor(base: int) -> float:
    return base ** (1 / 3)


def compare(level_metrics: Sequence, n: int, base: int, B: float = 1.0) -> dict:
    """All comparison figures for one report, keyed by name."""
    rows = _check(level_metrics)
    return {
        "bandwidth_gain": bandwidth_gain(rows, n),
        "hop_ratio": hop_ratio(rows, n),
        "propagation_ratio": propagation_ratio(rows, growth_factor(base)),
        "torus_effective_bandwidth": torus_effective_bandwidth(n, B),
    }


def log_star(x: float, base: float = math.e) -> int:
    """Iterated logarithm: 1 for x <= 2, else 1 + log*(log x)."""
    count = 1
    while x > 2:
        x = math.log(x, base)
        count += 1
    return count
