"""Overlapping time windows and their fixed-size edge reservoirs.

Window ``i >= 1`` covers the closed interval ``[t_i - tau, t_i]`` with
``t_i = tau + lam * (i - 1)``. Each window owns an independent reservoir
(Vitter's algorithm R), so every edge offered to a window is kept with
probability ``k / max(k, m)`` when the window closes.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from streamcorr.edges import TimedEdge


@dataclass(frozen=True)
class WindowConfig:
    tau: float = 60.0
    lam: float = 30.0
    k: int = 400

    def __post_init__(self):
        if not 0 < self.lam < self.tau:
            raise ValueError("need 0 < lambda < tau")
        if self.k < 1:
            raise ValueError("reservoir capacity k must be >= 1")

    @property
    def concurrent(self) -> int:
        """Number of simultaneously open windows."""
        return math.ceil(self.tau / self.lam)

    def end(self, i: int) -> float:
        return self.tau + self.lam * (i - 1)

    def start(self, i: int) -> float:
        return self.end(i) - self.tau

    def overlap(self) -> float:
        """Fraction of a window shared with the next one."""
        return 1.0 - self.lam / self.tau


def windows_for(timestamp: float, cfg: WindowConfig) -> range:
    """Indices of every window whose closed interval contains ``timestamp``."""
    if timestamp < 0:
        raise ValueError("timestamp must be non-negative")
    hi = math.floor(timestamp / cfg.lam) + 1
    lo = max(1, math.ceil((timestamp - cfg.tau) / cfg.lam) + 1)
    # float division can land one off at exact boundaries
    while hi >= 1 and cfg.start(hi) > timestamp:
        hi -= 1
    while cfg.start(hi + 1) <= timestamp:
        hi += 1
    while lo > 1 and cfg.end(lo - 1) >= timestamp:
        lo -= 1
    while lo <= hi and cfg.end(lo) < timestamp:
        lo += 1
    return range(lo, hi + 1)


class ReservoirClosed(RuntimeError):
    pass


class WindowReservoir:
    """Uniform sample of at most ``k`` edges from one window."""

    __slots__ = ("index", "start", "end", "k", "m", "samples", "closed", "_rng")

    def __init__(self, index: int, cfg: WindowConfig, seed=None):
        self.index = index
        self.start = cfg.start(index)
        self.end = cfg.end(index)
        self.k = cfg.k
        self.m = 0
        self.samples: list[TimedEdge] = []
        self.closed = False
        self._rng = seed if isinstance(seed, random.Random) else random.Random(seed)

    def __repr__(self):
        return f"WindowReservoir(i={self.index}, [{self.start}, {self.end}], m={self.m}, k={self.k})"

    def offer(self, edge: TimedEdge) -> None:
        if self.closed:
            raise ReservoirClosed(f"window {self.index} is closed")
        if not self.start <= edge.timestamp <= self.end:
            raise ValueError(f"edge at {edge.timestamp} outside window [{self.start}, {self.end}]")
        self.m += 1
        if self.m <= self.k:
            self.samples.append(edge)
            return
        slot = self._rng.randrange(self.m)
        if slot < self.k:
            self.samples[slot] = edge

    def close(self) -> tuple[tuple[TimedEdge, ...], int]:
        """Freeze the reservoir and return ``(samples, m)``."""
        if self.closed:
            raise ReservoirClosed(f"window {self.index} already closed")
        self.closed = True
        self.samples = tuple(self.samples)
        return self.samples, self.m
