"""The stream event type and its tab-separated line format."""

from __future__ import annotations

import math
from typing import NamedTuple


class TimedEdge(NamedTuple):
    """One undirected edge event. Self-loops and repeats are allowed."""

    timestamp: float
    src: str
    dst: str


def parse_edge_line(line: str) -> TimedEdge:
    """Parse ``<timestamp>\\t<src>\\t<dst>``.

    Raises ValueError on a wrong field count, an empty tag, or a timestamp
    that is negative or not a finite decimal.
    """
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != 3:
        raise ValueError(f"expected 3 tab-separated fields, got {len(fields)}")
    ts = float(fields[0])
    if not math.isfinite(ts) or ts < 0:
        raise ValueError(f"bad timestamp {fields[0]!r}")
    src, dst = fields[1].strip(), fields[2].strip()
    if not src or not dst:
        raise ValueError("empty tag")
    return TimedEdge(ts, src, dst)


def format_edge_line(edge: TimedEdge) -> str:
    ts = edge.timestamp
    text = str(int(ts)) if float(ts).is_integer() else repr(float(ts))
    return f"{text}\t{edge.src}\t{edge.dst}\n"
