import numpy as np
import pytest

from phsync.errors import ConfigError, StructureError
from phsync.numerics import SeededRng
from phsync.topology import (
    Complete,
    ErdosRenyi,
    Graph,
    SquareLattice,
    WattsStrogatz,
    adjacency,
    comm_mask,
    from_edge_list_text,
    generate,
    to_edge_list_text,
)


def test_complete_graph_n3():
    g = generate(Complete(), 3, SeededRng(0, 1))
    assert g.edges == frozenset({(0, 1), (0, 2), (1, 2)})


def test_complete_graph_edge_count():
    g = generate(Complete(), 10, SeededRng(0, 1))
    assert len(g.edges) == 45


def test_square_lattice_2x2():
    g = generate(SquareLattice(2, 2), 4, SeededRng(0, 1))
    assert g.edges == frozenset({(0, 1), (2, 3), (0, 2), (1, 3)})


def test_erdos_renyi_p1_is_complete():
    g = generate(ErdosRenyi(1.0), 4, SeededRng(0, 1))
    assert len(g.edges) == 6


def test_erdos_renyi_p0_is_empty():
    g = generate(ErdosRenyi(0.0), 6, SeededRng(0, 1))
    assert len(g.edges) == 0


def test_erdos_renyi_mean_edge_count():
    # Empirical mean over many seeds close to p * n(n-1)/2 for n=64, p=0.3.
    n, p = 64, 0.3
    counts = [
        len(generate(ErdosRenyi(p), n, SeededRng(seed, 1)).edges) for seed in range(1000)
    ]
    expected = p * n * (n - 1) / 2.0
    assert abs(np.mean(counts) - expected) < 0.05 * expected


def test_watts_strogatz_no_rewire_is_ring_lattice():
    n, k = 12, 5
    g = generate(WattsStrogatz(k, 0.0), n, SeededRng(3, 1))
    expected = set()
    for i in range(n):
        for o in (1, 2, 3):  # offsets 1..ceil(k/2)
            expected.add((min(i, (i + o) % n), max(i, (i + o) % n)))
    assert g.edges == frozenset(expected)


def test_watts_strogatz_rewire_keeps_simple_graph_and_edge_count():
    n, k = 20, 5
    base = generate(WattsStrogatz(k, 0.0), n, SeededRng(5, 1))
    for seed in range(20):
        g = generate(WattsStrogatz(k, 0.3), n, SeededRng(seed, 1))
        assert len(g.edges) == len(base.edges)  # rewiring replaces, never drops
        for i, j in g.edges:
            assert i != j


def test_watts_strogatz_full_rewire_changes_graph():
    n, k = 30, 4
    ring = generate(WattsStrogatz(k, 0.0), n, SeededRng(9, 1))
    rewired = generate(WattsStrogatz(k, 1.0), n, SeededRng(9, 1))
    assert rewired.edges != ring.edges


def test_generate_parameter_validation():
    rng = SeededRng(0, 1)
    with pytest.raises(ConfigError):
        generate(ErdosRenyi(1.5), 4, rng)
    with pytest.raises(ConfigError):
        generate(SquareLattice(3, 3), 8, rng)
    with pytest.raises(ConfigError):
        generate(WattsStrogatz(0, 0.1), 4, rng)
    with pytest.raises(ConfigError):
        generate(WattsStrogatz(4, 0.1), 4, rng)
    with pytest.raises(ConfigError):
        generate(Complete(), 0, rng)


def test_adjacency_examples():
    g2 = generate(Complete(), 2, SeededRng(0, 1))
    assert np.array_equal(adjacency(g2), [[0.0, 1.0], [1.0, 0.0]])
    empty = Graph.from_edges(2, [])
    assert np.array_equal(adjacency(empty), np.zeros((2, 2)))
    path = Graph.from_edges(3, [(0, 1), (1, 2)])
    assert np.array_equal(adjacency(path), [[0, 1, 0], [1, 0, 1], [0, 1, 0]])


def test_adjacency_symmetric_zero_diagonal_for_generated_graphs():
    kinds = [Complete(), ErdosRenyi(0.4), SquareLattice(3, 4), WattsStrogatz(3, 0.2)]
    for seed, kind in enumerate(kinds):
        g = generate(kind, 12, SeededRng(seed, 1))
        p = adjacency(g)
        assert np.array_equal(p, p.T)
        assert not np.diag(p).any()


def test_comm_mask_examples():
    empty = Graph.from_edges(3, [])
    assert np.array_equal(comm_mask(empty).pattern, np.eye(3, dtype=int))
    g2 = generate(Complete(), 2, SeededRng(0, 1))
    assert np.array_equal(comm_mask(g2).pattern, np.ones((2, 2), dtype=int))
    path = Graph.from_edges(3, [(0, 1), (1, 2)])
    assert np.array_equal(comm_mask(path).pattern, [[1, 1, 0], [1, 1, 1], [0, 1, 1]])


def test_comm_mask_equals_adjacency_plus_identity():
    for seed in range(10):
        g = generate(ErdosRenyi(0.35), 15, SeededRng(seed, 1))
        diff = comm_mask(g).pattern - np.eye(g.n, dtype=int)
        assert np.array_equal(diff, adjacency(g).astype(int))


def test_graph_rejects_self_loops_and_bad_indices():
    with pytest.raises(StructureError):
        Graph.from_edges(3, [(1, 1)])
    with pytest.raises(StructureError):
        Graph.from_edges(3, [(0, 3)])


def test_edge_list_round_trip():
    g = generate(ErdosRenyi(0.5), 9, SeededRng(21, 1))
    text = to_edge_list_text(g)
    assert text.splitlines()[0] == "n 9"
    back = from_edge_list_text(text)
    assert back.n == g.n and back.edges == g.edges


def test_generation_is_deterministic():
    a = generate(WattsStrogatz(5, 0.3), 40, SeededRng(77, 1))
    b = generate(WattsStrogatz(5, 0.3), 40, SeededRng(77, 1))
    assert a.edges == b.edges
