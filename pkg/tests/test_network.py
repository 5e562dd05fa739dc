import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastpca import network
from fastpca.errors import ValidationError


def _connected_oracle(topo):
    # (I + A)^(M-1) has no zero entry iff the graph is connected
    R = np.minimum(np.eye(topo.M, dtype=np.int64) + topo.adjacency, 1)
    reach = R.copy()
    for _ in range(topo.M):
        reach = np.minimum(reach @ R, 1)
    return bool(np.all(reach > 0))


def test_er_p_one_is_complete():
    for M in (2, 5, 9):
        assert network.erdos_renyi(M, 1.0, 3).edges == network.complete(M).edges


def test_er_twenty_nodes_connected():
    t = network.erdos_renyi(20, 0.5, 123)
    assert t.M == 20 and t.is_connected() and _connected_oracle(t)


def test_er_single_node():
    t = network.erdos_renyi(1, 0.3, 0)
    assert t.M == 1 and not t.edges and t.is_connected()


def test_er_zero_p_rejected():
    with pytest.raises(ValidationError):
        network.erdos_renyi(4, 0.0, 0)


def test_er_deterministic():
    assert network.erdos_renyi(15, 0.3, 9).edges == network.erdos_renyi(15, 0.3, 9).edges


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 25), st.floats(0.15, 1.0), st.integers(0, 2**32 - 1))
def test_er_always_connected(M, p, seed):
    t = network.erdos_renyi(M, p, seed)
    assert _connected_oracle(t)


def test_cycle_shapes():
    assert len(network.cycle(3).edges) == 3
    c = network.cycle(20)
    assert len(c.edges) == 20 and np.all(c.degrees == 2)
    with pytest.raises(ValidationError):
        network.cycle(2)


def test_star_degrees():
    s = network.star(4)
    assert s.degrees.tolist() == [3, 1, 1, 1]


def test_is_connected_detects_split():
    t = network.Topology.from_edges(4, [(0, 1), (2, 3)])
    assert not t.is_connected() and not _connected_oracle(t)
    with pytest.raises(ValidationError):
        network.metropolis_weights(t)


def test_edgelist_roundtrip():
    t = network.erdos_renyi(12, 0.4, 5)
    text = t.to_edgelist()
    assert text.splitlines()[0] == "12"
    assert network.Topology.from_edgelist(text) == t


def test_metropolis_two_node_path():
    m = network.metropolis_weights(network.path(2))
    np.testing.assert_allclose(m.W, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    assert m.beta == pytest.approx(0.0, abs=1e-15)


def test_metropolis_complete_is_averaging():
    for M in (3, 6):
        m = network.metropolis_weights(network.complete(M))
        np.testing.assert_allclose(m.W, np.full((M, M), 1.0 / M), atol=1e-15)
        assert m.beta == pytest.approx(0.0, abs=1e-12)


def test_metropolis_star_by_hand():
    # hub degree 3, leaves degree 1: w_0j = 1/4, leaves keep 3/4, hub keeps 1/4
    W = network.metropolis_weights(network.star(4)).W
    expected = np.array([
        [0.25, 0.25, 0.25, 0.25],
        [0.25, 0.75, 0, 0],
        [0.25, 0, 0.75, 0],
        [0.25, 0, 0, 0.75],
    ])
    np.testing.assert_allclose(W, expected, atol=1e-15)


def test_beta_examples():
    assert network.beta_of(np.full((4, 4), 0.25)) == pytest.approx(0.0, abs=1e-12)
    assert network.beta_of(np.eye(4)) == 1.0
    with pytest.raises(ValidationError):
        network.beta_of(np.array([[0.5, 0.5], [0.4, 0.6]]))


def test_beta_cycle_matches_eig():
    W = network.metropolis_weights(network.cycle(20)).W
    # Metropolis on a cycle: w = 1/3 everywhere, eigenvalues (1 + 2 cos(2 pi j / 20)) / 3
    ev = (1 + 2 * np.cos(2 * np.pi * np.arange(20) / 20)) / 3
    expected = np.sort(np.abs(ev))[::-1][1]
    b = network.beta_of(W)
    assert 0 < b < 1
    assert b == pytest.approx(expected, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.floats(0.2, 1.0), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_mixing_invariants(M, p, seed, xseed):
    topo = network.erdos_renyi(M, p, seed)
    mix = network.metropolis_weights(topo)
    W = mix.W
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=0), 1.0, atol=1e-12)
    off = (W > 0) & ~np.eye(M, dtype=bool)
    assert not np.any(off & ~topo.adjacency)
    assert np.all(W >= 0)
    assert mix.beta < 1
    x = np.random.default_rng(xseed).standard_normal((M, 3))
    x -= x.mean(axis=0)
    assert np.linalg.norm(W @ x) <= mix.beta * np.linalg.norm(x) + 1e-12


@pytest.mark.parametrize("topo", [network.cycle(7), network.star(6), network.path(5), network.complete(4)])
def test_named_topologies_mix(topo):
    mix = network.metropolis_weights(topo)
    assert mix.beta < 1
    np.testing.assert_allclose(mix.lazy, 0.5 * (np.eye(topo.M) + mix.W))


def test_build_topology_dispatch():
    assert network.build_topology("cycle", 5).edges == network.cycle(5).edges
    assert network.build_topology("Erdos-Renyi", 6, 0.5, 1).edges == network.erdos_renyi(6, 0.5, 1).edges
    with pytest.raises(ValidationError):
        network.build_topology("torus", 4)
