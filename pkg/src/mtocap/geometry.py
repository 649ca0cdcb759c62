"""Points, path loss, SIR margin and the pairwise link-compatibility test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional


class Point2D(NamedTuple):
    x: float
    y: float

    def dist(self, other: "Point2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def delta_margin(sir_threshold: float, path_loss_exp: float) -> float:
    """Distance margin Δ such that an interferer must be (1+Δ) times farther
    away than the intended transmitter to keep SIR above `sir_threshold`."""
    if sir_threshold < 1:
        raise ValueError(f"sir_threshold must be >= 1, got {sir_threshold}")
    if path_loss_exp <= 0:
        raise ValueError(f"path_loss_exp must be > 0, got {path_loss_exp}")
    return sir_threshold ** (1.0 / path_loss_exp) - 1.0


def received_power(tx_power: float, d: float, path_loss_exp: float) -> float:
    if d <= 0:
        raise ValueError(f"distance must be > 0, got {d}")
    return tx_power / d ** path_loss_exp


@dataclass(frozen=True)
class RadioConfig:
    """Homogeneous radio parameters shared by every node.

    `delta` defaults to the value implied by `sir_threshold` and
    `path_loss_exp` (0.7783 for 10 dB and exponent 4).
    """

    tx_range: float = 250.0
    cs_range: float = 675.0
    path_loss_exp: float = 4.0
    sir_threshold: float = 10.0
    delta: Optional[float] = None
    capture_ratio: float = 10.0
    rs_mode: bool = True
    tx_power: float = 1.0
    link_capacity: float = 1.0

    def __post_init__(self):
        if self.delta is None:
            object.__setattr__(
                self, "delta", delta_margin(self.sir_threshold, self.path_loss_exp))
        if not self.tx_range > 0:
            raise ValueError("tx_range must be > 0")
        if self.cs_range < self.tx_range:
            raise ValueError(
                f"cs_range ({self.cs_range}) must be >= tx_range ({self.tx_range})")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if not self.sir_threshold > 1:
            raise ValueError("sir_threshold must be > 1")
        if not 2 <= self.path_loss_exp <= 6:
            raise ValueError("path_loss_exp must lie in [2, 6]")

    def with_cs(self, cs_range: float) -> "RadioConfig":
        return RadioConfig(
            tx_range=self.tx_range, cs_range=cs_range,
            path_loss_exp=self.path_loss_exp, sir_threshold=self.sir_threshold,
            delta=self.delta, capture_ratio=self.capture_ratio,
            rs_mode=self.rs_mode, tx_power=self.tx_power,
            link_capacity=self.link_capacity)


@dataclass(frozen=True, order=True)
class DirectedLink:
    tx: int
    rx: int
    length: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.tx == self.rx:
            raise ValueError(f"link endpoints must differ (node {self.tx})")

    @property
    def key(self) -> tuple[int, int]:
        return (self.tx, self.rx)

    def __str__(self):
        return f"{self.tx}->{self.rx}"


def make_link(tx: int, rx: int, positions: Mapping[int, Point2D]) -> DirectedLink:
    return DirectedLink(tx, rx, positions[tx].dist(positions[rx]))


def violated_inequalities(a: DirectedLink, b: DirectedLink,
                          positions: Mapping[int, Point2D], delta: float) -> list[int]:
    """1-based indices of the eight interference inequalities that fail.

    Indices 1-4 guard link `a` (interferer endpoint vs. a's receiver and
    transmitter), 5-8 guard link `b`.
    """
    t1, r1 = positions[a.tx], positions[a.rx]
    t2, r2 = positions[b.tx], positions[b.rx]
    m1 = (1.0 + delta) * t1.dist(r1)
    m2 = (1.0 + delta) * t2.dist(r2)
    lhs = (
        (t2.dist(r1), m1), (r2.dist(r1), m1), (t2.dist(t1), m1), (r2.dist(t1), m1),
        (t1.dist(r2), m2), (r1.dist(r2), m2), (t1.dist(t2), m2), (r1.dist(t2), m2),
    )
    return [i + 1 for i, (d, m) in enumerate(lhs) if not d > m]


def pairwise_compatible(a: DirectedLink, b: DirectedLink,
                        positions: Mapping[int, Point2D], delta: float) -> bool:
    """True iff the two links can be active together without DATA/ACK collisions.

    All comparisons are strict: a distance exactly on the (1+Δ) boundary
    counts as a collision.
    """
    return not violated_inequalities(a, b, positions, delta)


def within_cs(t1: Point2D, t2: Point2D, cs_range: float) -> bool:
    return t1.dist(t2) <= cs_range
