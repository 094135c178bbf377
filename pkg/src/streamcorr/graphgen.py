"""Static and dynamic Configuration-Model graphs.

Degrees are drawn from a truncated Zipf law (or an explicit table), stubs
are paired by a uniform random matching, and the dynamic variants rewire
``q`` uniformly chosen edges per tick. The rewired edges are emitted as a
timestamped edge stream, which is what the window/reservoir layer consumes.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from streamcorr.edges import TimedEdge

MODES = ("uniform", "concentrated", "step")


@dataclass(frozen=True)
class DegreeDistribution:
    """Distribution of node degrees for ``n`` nodes.

    Use :meth:`zipfian` or :meth:`explicit` rather than the raw constructor.
    """

    kind: str
    n: int
    support: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("zipfian", "explicit"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if len(self.support) != len(self.probs) or not self.support:
            raise ValueError("support and probs must be non-empty and aligned")
        if min(self.support) < 1:
            raise ValueError("all degrees must be >= 1")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative probability")
        if abs(math.fsum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @classmethod
    def zipfian(cls, n: int) -> DegreeDistribution:
        """P[d = j] = c / j**2 for 1 <= j <= floor(sqrt(n)), c normalizing."""
        d_max = math.isqrt(n)
        if d_max < 1:
            raise ValueError("n must be positive")
        weights = [1.0 / (j * j) for j in range(1, d_max + 1)]
        total = math.fsum(weights)
        return cls("zipfian", n, tuple(range(1, d_max + 1)), tuple(w / total for w in weights))

    @classmethod
    def explicit(cls, n: int, probs: Mapping[int, float]) -> DegreeDistribution:
        items = sorted(probs.items())
        return cls("explicit", n, tuple(int(d) for d, _ in items), tuple(float(p) for _, p in items))

    @property
    def d_max(self) -> int:
        return max(self.support)

    @property
    def c(self) -> float:
        """Normalization constant of the Zipf law (probability of degree 1)."""
        if self.kind != "zipfian":
            raise AttributeError("c is only defined for zipfian distributions")
        return self.probs[0]

    def moment(self, order: int) -> float:
        return math.fsum(p * d**order for d, p in zip(self.support, self.probs))

    def pmf(self, degree: int) -> float:
        try:
            return self.probs[self.support.index(degree)]
        except ValueError:
            return 0.0


def sample_degrees(dist: DegreeDistribution, rng=None, size: int | None = None) -> np.ndarray:
    """Draw ``dist.n`` (or ``size``) i.i.d. degrees with an even sum.

    An odd total is repaired by adding 1 to one uniformly chosen node.
    """
    rng = np.random.default_rng(rng)
    n = dist.n if size is None else size
    degrees = rng.choice(np.asarray(dist.support), size=n, p=np.asarray(dist.probs))
    if degrees.sum() % 2:
        degrees[rng.integers(n)] += 1
    return degrees.astype(np.int64)


def giant_component_criterion(dist: DegreeDistribution) -> bool:
    """Molloy-Reed condition E[D^2] - 2 E[D] > 0."""
    return dist.moment(2) - 2 * dist.moment(1) > 0


def plant_top_degrees(degrees: np.ndarray, nodes: Iterable[int]) -> np.ndarray:
    """Permute ``degrees`` so that ``nodes`` hold the largest values.

    Planted nodes, taken in increasing id, receive the top degrees in
    decreasing order; the other nodes keep their relative assignment.
    """
    planted = sorted(set(nodes))
    if not planted:
        return degrees.copy()
    order = np.argsort(-degrees, kind="stable")
    top, rest = order[: len(planted)], order[len(planted):]
    out = np.empty_like(degrees)
    mask = np.ones(len(degrees), dtype=bool)
    mask[planted] = False
    out[planted] = degrees[top]
    out[np.flatnonzero(mask)] = degrees[np.sort(rest)]
    return out


@dataclass
class StubGraph:
    """A multigraph realized by matching half-edges.

    ``edges`` is an ``(E, 2)`` integer array of node indices; a row ``(u, u)``
    is a self-loop. ``degrees[u]`` is the stub count of node ``u``.
    """

    nodes: list[str]
    degrees: np.ndarray
    edges: np.ndarray

    def __len__(self) -> int:
        return len(self.edges)

    def realized_degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=len(self.nodes))

    def check(self) -> None:
        if int(self.degrees.sum()) != 2 * len(self.edges):
            raise AssertionError("degree sum differs from twice the edge count")
        if not np.array_equal(self.realized_degrees(), self.degrees):
            raise AssertionError("matching does not realize the degree sequence")

    def internal_edge_count(self, nodes: Iterable[int]) -> int:
        mask = np.zeros(len(self.nodes), dtype=bool)
        mask[list(nodes)] = True
        return int((mask[self.edges[:, 0]] & mask[self.edges[:, 1]]).sum())

    def edge_tags(self) -> list[tuple[str, str]]:
        names = self.nodes
        return [(names[u], names[v]) for u, v in self.edges.tolist()]


def node_tags(n: int, prefix: str = "u") -> list[str]:
    width = len(str(max(n - 1, 0)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def configuration_graph(degrees: Sequence[int], rng=None, tags: Sequence[str] | None = None) -> StubGraph:
    """Uniform random perfect matching of the stubs of ``degrees``.

    A stub is never matched to itself, but two stubs of the same node may
    pair up (self-loop) and parallel edges are kept.
    """
    rng = np.random.default_rng(rng)
    degrees = np.asarray(degrees, dtype=np.int64)
    if (degrees < 0).any():
        raise ValueError("negative degree")
    if int(degrees.sum()) % 2:
        raise ValueError("degree sum is odd; no perfect matching of stubs exists")
    stubs = np.repeat(np.arange(len(degrees)), degrees)
    rng.shuffle(stubs)
    names = list(tags) if tags is not None else node_tags(len(degrees))
    if len(names) != len(degrees):
        raise ValueError("tags and degrees differ in length")
    return StubGraph(names, degrees.copy(), stubs.reshape(-1, 2).copy())


@dataclass(frozen=True)
class DynamicsConfig:
    mode: str = "uniform"
    S: frozenset[int] = field(default_factory=frozenset)
    q: int = 2
    p_in: float = 0.8
    step_start: int = 0
    step_length: int = 0
    tick_interval: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.q < 2:
            raise ValueError("q must be >= 2")
        if not 0.0 <= self.p_in <= 1.0:
            raise ValueError("p_in must lie in [0, 1]")
        if self.mode != "uniform" and not self.S:
            raise ValueError(f"{self.mode} dynamics needs a non-empty planted set S")
        if self.mode == "step" and self.step_length <= 0:
            raise ValueError("step_length must be positive in step mode")
        if self.tick_interval <= 0:
            raise ValueError("tick_interval must be positive")
        object.__setattr__(self, "S", frozenset(int(u) for u in self.S))

    def concentrated_at(self, tick: int) -> bool:
        if self.mode == "uniform":
            return False
        if self.mode == "concentrated":
            return True
        return self.step_start <= tick < self.step_start + self.step_length


@dataclass(frozen=True)
class ValidationConfig:
    epsilon: float = 0.15
    delta: float = 0.1
    trials: int = 30

    def __post_init__(self):
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ValueError("epsilon and delta must lie in (0, 1)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def _pair_concentrated(freed: np.ndarray, in_s: np.ndarray, p_in: float, rng) -> np.ndarray:
    inside = freed[in_s[freed]]
    outside = freed[~in_s[freed]]
    rng.shuffle(inside)
    rng.shuffle(outside)
    pairs = []
    a = b = 0
    coins = rng.random(len(inside))
    while a < len(inside):
        stub = inside[a]
        a += 1
        more_inside = a < len(inside)
        more_outside = b < len(outside)
        if more_inside and (not more_outside or coins[a - 1] < p_in):
            pairs.append((stub, inside[a]))
            a += 1
        else:
            # the total is even, so an S-stub with no S partner always finds an outside one
            pairs.append((stub, outside[b]))
            b += 1
    rest = outside[b:]
    matched = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return np.concatenate([matched, rest.reshape(-1, 2)])


def advance(graph: StubGraph, cfg: DynamicsConfig, tick: int, rng=None) -> tuple[StubGraph, list[TimedEdge]]:
    """Rewire ``cfg.q`` uniformly chosen edges of ``graph`` in place.

    Returns the graph and the ``q`` new edges stamped ``tick * tick_interval``.
    """
    rng = np.random.default_rng(rng)
    q = cfg.q
    if q > len(graph.edges):
        raise ValueError(f"cannot remove q={q} edges from a graph with {len(graph.edges)}")
    chosen = rng.choice(len(graph.edges), size=q, replace=False)
    freed = graph.edges[chosen].ravel().copy()
    if cfg.concentrated_at(tick):
        in_s = np.zeros(len(graph.nodes), dtype=bool)
        in_s[list(cfg.S)] = True
        new = _pair_concentrated(freed, in_s, cfg.p_in, rng)
    else:
        rng.shuffle(freed)
        new = freed.reshape(-1, 2)
    graph.edges[chosen] = new
    ts = tick * cfg.tick_interval
    names = graph.nodes
    return graph, [TimedEdge(ts, names[u], names[v]) for u, v in new.tolist()]


def stream_from_dynamics(
    cfg: DynamicsConfig,
    dist: DegreeDistribution,
    ticks: int,
    rng=None,
    *,
    tags: Sequence[str] | None = None,
    emit_initial: bool = True,
) -> Iterator[TimedEdge]:
    """Lazily yield the initial graph at t=0, then ticks 0..ticks-1.

    Planted nodes ``cfg.S`` are given the highest sampled degrees.
    """
    rng = np.random.default_rng(rng)
    degrees = sample_degrees(dist, rng)
    if cfg.S:
        if max(cfg.S) >= dist.n:
            raise ValueError("planted node index out of range")
        degrees = plant_top_degrees(degrees, cfg.S)
    graph = configuration_graph(degrees, rng, tags)
    if emit_initial:
        for u, v in graph.edge_tags():
            yield TimedEdge(0.0, u, v)
    for tick in range(ticks):
        _, new = advance(graph, cfg, tick, rng)
        yield from new


def top_degree_nodes(degrees: np.ndarray, size: int) -> frozenset[int]:
    order = np.argsort(-np.asarray(degrees), kind="stable")
    return frozenset(int(u) for u in order[:size])


def read_kv_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def _parse_nodes(text: str) -> frozenset[int]:
    nodes: set[int] = set()
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            nodes.update(range(int(lo), int(hi) + 1))
        else:
            nodes.add(int(part))
    return frozenset(nodes)


def dynamics_from_mapping(values: Mapping[str, str]) -> DynamicsConfig:
    """Build a DynamicsConfig from string values.

    ``S`` accepts ``a-b`` ranges and comma lists of node indices;
    ``planted = N`` is shorthand for ``S = 0-(N-1)``.
    """
    known = {"mode", "s", "planted", "q", "p_in", "step_start", "step_length", "tick_interval"}
    extra = set(values) - known - {"n", "ticks", "seed", "prefix"}
    if extra:
        raise ValueError(f"unknown dynamics keys: {sorted(extra)}")
    S = frozenset()
    if "s" in values:
        S = _parse_nodes(values["s"])
    elif "planted" in values:
        S = frozenset(range(int(values["planted"])))
    return DynamicsConfig(
        mode=values.get("mode", "uniform"),
        S=S,
        q=int(values.get("q", 2)),
        p_in=float(values.get("p_in", 0.8)),
        step_start=int(values.get("step_start", 0)),
        step_length=int(values.get("step_length", 0)),
        tick_interval=float(values.get("tick_interval", 1.0)),
    )
