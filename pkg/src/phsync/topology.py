"""Benchmark interaction graphs and the masks they induce.

Four generators: complete, Erdos-Renyi G(n, p), square lattice with
4-neighborhoods, and Watts-Strogatz ring rewiring. Graphs are undirected
and simple. The same graph usually serves both as the physical coupling
topology (adjacency matrix) and as the controller communication topology
(block mask with forced diagonal), but callers may pass different graphs
for the two roles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, StructureError
from .numerics import BlockMask, SeededRng

__all__ = [
    "Complete",
    "ErdosRenyi",
    "Graph",
    "SquareLattice",
    "TopologyKind",
    "WattsStrogatz",
    "adjacency",
    "comm_mask",
    "from_edge_list_text",
    "generate",
    "to_edge_list_text",
]


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes 0..n-1; edges stored as (i, j) with i < j."""

    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n <= 0:
            raise ConfigError("graph needs at least one node")
        for i, j in self.edges:
            if i == j:
                raise StructureError(f"self-loop at node {i}")
            if not (0 <= i < j < self.n):
                raise StructureError(f"edge ({i}, {j}) out of range or unordered")

    @staticmethod
    def from_edges(n: int, edges) -> "Graph":
        normalized = frozenset((min(i, j), max(i, j)) for i, j in edges)
        return Graph(n, normalized)


@dataclass(frozen=True)
class Complete:
    pass


@dataclass(frozen=True)
class ErdosRenyi:
    p: float


@dataclass(frozen=True)
class SquareLattice:
    rows: int
    cols: int


@dataclass(frozen=True)
class WattsStrogatz:
    k: int
    p_rewire: float


TopologyKind = Union[Complete, ErdosRenyi, SquareLattice, WattsStrogatz]


def generate(kind: TopologyKind, n: int, rng: SeededRng) -> Graph:
    """Generate one of the four benchmark graphs on n nodes."""
    if n <= 0:
        raise ConfigError(f"node count must be positive, got {n}")
    if isinstance(kind, Complete):
        return Graph.from_edges(n, ((i, j) for i in range(n) for j in range(i + 1, n)))
    if isinstance(kind, ErdosRenyi):
        return _erdos_renyi(n, kind.p, rng)
    if isinstance(kind, SquareLattice):
        return _square_lattice(n, kind.rows, kind.cols)
    if isinstance(kind, WattsStrogatz):
        return _watts_strogatz(n, kind.k, kind.p_rewire, rng)
    raise ConfigError(f"unknown topology kind {kind!r}")


def _erdos_renyi(n: int, p: float, rng: SeededRng) -> Graph:
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"edge probability must be in [0, 1], got {p}")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    draws = rng.uniform(size=len(pairs))
    return Graph.from_edges(n, (pair for pair, d in zip(pairs, draws) if d < p))


def _square_lattice(n: int, rows: int, cols: int) -> Graph:
    if rows <= 0 or cols <= 0 or rows * cols != n:
        raise ConfigError(f"lattice {rows}x{cols} does not tile {n} nodes")
    edges = []
    for r in range(rows):
        for c in range(cols):
            node = r * cols + c
            if c + 1 < cols:
                edges.append((node, node + 1))
            if r + 1 < rows:
                edges.append((node, node + cols))
    return Graph.from_edges(n, edges)


def _watts_strogatz(n: int, k: int, p_rewire: float, rng: SeededRng) -> Graph:
    if not 0 < k < n:
        raise ConfigError(f"ring degree must satisfy 0 < k < n, got k={k}, n={n}")
    if not 0.0 <= p_rewire <= 1.0:
        raise ConfigError(f"rewiring probability must be in [0, 1], got {p_rewire}")
    # Ring lattice over offsets 1..ceil(k/2); for odd k the deduplicated
    # undirected ring has degree 2*ceil(k/2) even though each node owns
    # floor(k/2) + ceil(k/2) = k stubs.
    half_up = math.ceil(k / 2)
    neighbors = {i: set() for i in range(n)}

    def _add(a, b):
        neighbors[a].add(b)
        neighbors[b].add(a)

    def _remove(a, b):
        neighbors[a].discard(b)
        neighbors[b].discard(a)

    for i in range(n):
        for o in range(1, half_up + 1):
            j = (i + o) % n
            if j != i:
                _add(i, j)

    # Rewire original lattice edges in (node, offset) lexicographic order,
    # redirecting the far endpoint to a uniformly random non-neighbor.
    for i in range(n):
        for o in range(1, half_up + 1):
            j = (i + o) % n
            if j == i or j not in neighbors[i]:
                continue  # duplicate wrap edge already handled, or rewired away
            if float(rng.uniform()) >= p_rewire:
                continue
            candidates = sorted(set(range(n)) - {i} - neighbors[i])
            if not candidates:
                continue
            new_j = candidates[int(rng.integers(0, len(candidates)))]
            _remove(i, j)
            _add(i, new_j)

    return Graph.from_edges(n, ((i, j) for i in neighbors for j in neighbors[i] if i < j))


def adjacency(g: Graph) -> np.ndarray:
    """Symmetric 0/1 adjacency matrix with zero diagonal."""
    p = np.zeros((g.n, g.n))
    for i, j in g.edges:
        p[i, j] = 1.0
        p[j, i] = 1.0
    return p


def comm_mask(g: Graph) -> BlockMask:
    """Communication block mask: adjacency pattern with every diagonal entry forced to 1.

    Returned with unit block dimensions; callers re-dimension per node via
    BlockMask.with_dims.
    """
    pattern = adjacency(g).astype(np.int8)
    np.fill_diagonal(pattern, 1)
    return BlockMask(pattern, (1,) * g.n, (1,) * g.n)


def to_edge_list_text(g: Graph) -> str:
    """Serialize as 'n <count>' followed by one ascending 'i j' pair per line."""
    lines = [f"n {g.n}"]
    lines.extend(f"{i} {j}" for i, j in sorted(g.edges))
    return "\n".join(lines) + "\n"


def from_edge_list_text(text: str) -> Graph:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n "):
        raise ConfigError("edge list must start with a 'n <count>' line")
    n = int(lines[0].split()[1])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ConfigError(f"malformed edge line: {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return Graph.from_edges(n, edges)
