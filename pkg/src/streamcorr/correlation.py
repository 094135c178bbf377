"""Online content correlation between streams.

Each stream accumulates the node set of every cluster it has stored. The
correlation of two streams at time ``t`` is the Jaccard index of their
accumulated sets, maintained incrementally per window close and carried as
an exact fraction.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np


def jaccard(a: Iterable, b: Iterable) -> Fraction:
    """|A & B| / |A | B|, with the empty/empty case defined as 0."""
    a, b = set(a), set(b)
    union = len(a | b)
    return Fraction(len(a & b), union) if union else Fraction(0)


def canonical_pair(a: str, b: str) -> tuple[str, str]:
    if a == b:
        raise ValueError("a correlation pair needs two distinct streams")
    return (a, b) if a < b else (b, a)


@dataclass
class CorrelationState:
    pair: tuple[str, str]
    c1: set = field(default_factory=set)
    c2: set = field(default_factory=set)
    inter: int = 0
    union: int = 0
    rho: Fraction = Fraction(0)
    history: list[tuple[float, Fraction]] = field(default_factory=list)

    def check(self) -> None:
        assert self.inter == len(self.c1 & self.c2)
        assert self.union == len(self.c1 | self.c2)
        assert self.rho == jaccard(self.c1, self.c2)


def rho_step(state: CorrelationState, new1: Iterable, new2: Iterable, t: float | None = None) -> CorrelationState:
    """Fold one window's cluster nodes into ``state`` (mutated and returned).

    The update is the additive form
    rho + (U d' - I dU) / (U (U + dU)), with d' the growth of the
    intersection and dU the growth of the union. ``dU`` is the net union
    growth rather than the raw sum of both set growths, which would count a
    node entering both sets twice.
    """
    added1 = set(new1) - state.c1
    added2 = set(new2) - state.c2
    d1, d2 = len(added1), len(added2)
    d_inter = len(added1 & state.c2) + len(added2 & state.c1) + len(added1 & added2)
    d_union = d1 + d2 - d_inter
    inter, union = state.inter, state.union
    if union == 0:
        state.rho = Fraction(d_inter, d_union) if d_union else Fraction(0)
    else:
        state.rho += Fraction(union * d_inter - inter * d_union, union * (union + d_union))
    state.c1 |= added1
    state.c2 |= added2
    state.inter = inter + d_inter
    state.union = union + d_union
    if t is not None:
        state.history.append((t, state.rho))
    return state


def rho_averaged(series: Sequence[float]) -> list[float]:
    """Centered 3-point moving average; the two endpoints are dropped."""
    values = [float(x) for x in series]
    return [(values[i - 1] + values[i] + values[i + 1]) / 3 for i in range(1, len(values) - 1)]


class CorrelationAggregator:
    """Owns the pairwise states of a fixed set of streams."""

    def __init__(self, streams: Iterable[str]):
        self.streams = sorted(set(streams))
        self.states = {
            (a, b): CorrelationState((a, b)) for a, b in itertools.combinations(self.streams, 2)
        }

    def update(self, t: float, new_nodes: Mapping[str, Iterable]) -> dict[tuple[str, str], Fraction]:
        """Advance every pair with the clusters stored at window close ``t``."""
        batch = {s: frozenset(new_nodes.get(s, ())) for s in self.streams}
        for (a, b), state in self.states.items():
            rho_step(state, batch[a], batch[b], t)
        return {pair: state.rho for pair, state in self.states.items()}

    def state(self, a: str, b: str) -> CorrelationState:
        return self.states[canonical_pair(a, b)]

    def series(self, a: str, b: str) -> list[tuple[float, Fraction]]:
        return list(self.state(a, b).history)

    def matrix(self, t: float | None = None) -> tuple[list[str], np.ndarray]:
        values = {}
        for pair, state in self.states.items():
            values[pair] = _value_at(state.history, t) if t is not None else state.rho
        return correlation_matrix(self.streams, values)


def _value_at(history: Sequence[tuple[float, Fraction]], t: float) -> Fraction:
    value = Fraction(0)
    for ts, rho in history:
        if ts > t:
            break
        value = rho
    return value


def correlation_matrix(streams: Sequence[str], values: Mapping[tuple[str, str], float]) -> tuple[list[str], np.ndarray]:
    """Symmetric matrix with unit diagonal; every pair must be present."""
    tags = list(streams)
    size = len(tags)
    out = np.eye(size)
    for i, j in itertools.combinations(range(size), 2):
        pair = canonical_pair(tags[i], tags[j])
        if pair not in values:
            raise KeyError(f"missing correlation for pair {pair}")
        out[i, j] = out[j, i] = float(values[pair])
    return tags, out


def format_matrix(tags: Sequence[str], matrix: np.ndarray) -> str:
    """Tab-separated matrix with a header row of stream tags."""
    lines = ["\t".join(["", *tags])]
    for tag, row in zip(tags, matrix):
        lines.append("\t".join([tag, *(f"{x:.6g}" for x in row)]))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> tuple[list[str], np.ndarray]:
    rows = [line.split("\t") for line in text.splitlines() if line.strip()]
    tags = rows[0][1:]
    matrix = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
    if matrix.shape != (len(tags), len(tags)):
        raise ValueError("matrix is not square")
    if [row[0] for row in rows[1:]] != tags:
        raise ValueError("row labels differ from the header")
    return tags, matrix


def read_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    return parse_matrix(Path(path).read_text())
