import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from h22cascade.graining import reduced_weights
from h22cascade.hier_graph import (HierParams, InvalidGraphError, WeightedGraph, block_swap,
                                   build_level_graph, dyadic_index, dyadic_path, hier_distance,
                                   hier_distance_matrix, hier_weight, is_indistinguishable,
                                   sibling_pairs, tail_weight_partial_sum, wired_boundary_weight)


@pytest.mark.parametrize("i,j,d", [(1, 1, 0), (1, 3, 2), (1, 9, 4), (2, 7, 3), (1, 2, 1)])
def test_distance_examples(i, j, d):
    assert hier_distance(i, j) == d
    assert hier_distance(j, i) == d


def test_distance_rejects_nonpositive():
    with pytest.raises(ValueError):
        hier_distance(0, 3)


def test_distance_matrix_matches_scalar():
    D = hier_distance_matrix(64)
    for i in range(1, 65, 7):
        for j in range(1, 65, 5):
            assert D[i - 1, j - 1] == hier_distance(i, j)


@pytest.mark.parametrize("i,j,wbar,expected", [(2, 7, 1.0, 1 / 64), (1, 2, 1.0, 1 / 4),
                                                (1, 3, 2.0, 1 / 8)])
def test_weight_examples(i, j, wbar, expected):
    assert hier_weight(i, j, HierParams(wbar, 2.0)) == pytest.approx(expected, rel=1e-15)


def test_weight_same_vertex_is_error():
    with pytest.raises(ValueError, match="invalid pair"):
        hier_weight(3, 3, HierParams())


@pytest.mark.parametrize("bad", [dict(wbar=0.0), dict(wbar=-1.0), dict(rho=1.0), dict(rho=0.5),
                                 dict(level=-1)])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        HierParams(**bad)


def test_spectral_dimension():
    assert HierParams(rho=2.0).spectral_dimension == pytest.approx(2.0)
    assert HierParams(rho=4.0).spectral_dimension == pytest.approx(1.0)


def test_wired_examples():
    assert wired_boundary_weight(1, HierParams(1.0, 2.0, 0)) == pytest.approx(0.5)
    assert wired_boundary_weight(3, HierParams(1.0, 2.0, 2)) == pytest.approx(1 / 8)
    with pytest.raises(ValueError):
        wired_boundary_weight(5, HierParams(1.0, 2.0, 2))


@pytest.mark.parametrize("wbar,rho,n", [(1.0, 2.0, 0), (1.0, 2.0, 3), (0.7, 1.5, 2), (2.0, 4.0, 1)])
def test_wired_weight_against_tail_sum(wbar, rho, n):
    p = HierParams(wbar, rho, n)
    exact = wired_boundary_weight(1, p)
    prev = 0.0
    for m in (1, 5, 10, 20):
        partial = tail_weight_partial_sum(1, p, m)
        assert partial >= prev
        remainder = wbar * rho ** (-n - m) / (2 * (rho - 1))
        assert exact - partial == pytest.approx(remainder, rel=1e-9, abs=1e-15)
        prev = partial


def test_tail_sum_brute_force():
    # direct sum over j in (2^n, 2^(n+m)], i.e. up to distance n + m
    p = HierParams(1.0, 2.0, 2)
    m = 18
    j = np.arange(2 ** p.level + 1, 2 ** (p.level + m) + 1)
    d = np.frexp((j - 1).astype(float))[1]  # bit length of (j-1) xor (1-1)
    assert all(d[k] == hier_distance(1, int(j[k])) for k in range(0, len(j), 9973))
    direct = np.sum(p.wbar * (2 * p.rho) ** (-d.astype(float)))
    assert direct == pytest.approx(tail_weight_partial_sum(1, p, m), rel=1e-12)
    bound = p.wbar * p.rho ** (-p.level - m) / (2 * (p.rho - 1))
    assert 0 < wired_boundary_weight(1, p) - direct <= bound * (1 + 1e-9)


def test_level_graph_examples():
    g0 = build_level_graph(HierParams(1.0, 2.0, 0))
    assert g0.n_vertices == 2 and g0.weights[0, 1] == pytest.approx(0.5)
    assert g0.pinning == 1 and g0.labels[-1] == "delta"
    g1 = build_level_graph(HierParams(1.0, 2.0, 1))
    assert np.allclose(g1.weights, [[0, .25, .25], [.25, 0, .25], [.25, .25, 0]])
    g2 = build_level_graph(HierParams(1.0, 2.0, 2))
    W = g2.weights
    assert W[0, 1] == W[2, 3] == pytest.approx(1 / 4)
    assert W[0, 2] == W[0, 3] == pytest.approx(1 / 16)
    assert np.allclose(W[:4, 4], 1 / 8)


def test_indistinguishable_examples(level1, level2):
    assert is_indistinguishable(level1, [0, 1])
    assert not is_indistinguishable(level2, [0, 2])
    for pair in sibling_pairs(2):
        assert is_indistinguishable(level2, pair)
    with pytest.raises(ValueError):
        is_indistinguishable(level2, [])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_every_sibling_pair_indistinguishable(n):
    g = build_level_graph(HierParams(1.3, 1.7, n))
    assert all(is_indistinguishable(g, p) for p in sibling_pairs(n))


@pytest.mark.parametrize("rho", [2.0, 1.5, 3.0])
def test_reducing_all_siblings_gives_previous_level(rho):
    wbar = 0.8
    fine = build_level_graph(HierParams(wbar * rho / 2, rho, 3))
    g = fine
    # merge pairs from the right so earlier indices stay put
    for a, b in reversed(sibling_pairs(3)):
        g = reduced_weights(g, [a, b])
    coarse = build_level_graph(HierParams(wbar, rho, 2))
    np.testing.assert_allclose(g.weights, coarse.weights, rtol=1e-12, atol=0)


def test_graph_validation():
    with pytest.raises(InvalidGraphError):
        WeightedGraph(np.array([[0, 1], [2, 0]]))
    with pytest.raises(InvalidGraphError):
        WeightedGraph(np.array([[1, 1], [1, 0]]))
    with pytest.raises(InvalidGraphError):
        WeightedGraph(np.array([[0, -1], [-1, 0]]))
    with pytest.raises(InvalidGraphError):
        WeightedGraph(np.zeros((2, 2)), boundary=[1.0, -1.0])
    g = WeightedGraph(np.zeros((2, 2)))
    assert not g.is_connected()
    assert WeightedGraph(np.zeros((2, 2)), boundary=[1.0, 1.0]).is_connected()


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 2 ** 20), st.integers(1, 2 ** 20), st.integers(1, 2 ** 20))
def test_ultrametric(i, j, k):
    assert hier_distance(i, k) <= max(hier_distance(i, j), hier_distance(j, k))


def test_ultrametric_bulk(rng):
    t = rng.integers(1, 2 ** 20 + 1, size=(10_000, 3))
    for i, j, k in t:
        assert hier_distance(i, k) <= max(hier_distance(i, j), hier_distance(j, k))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 8), st.integers(1, 2 ** 10), st.integers(1, 2 ** 10))
def test_block_swap_is_automorphism(n, i, j):
    p = HierParams(1.0, 2.0)
    if i == j:
        return
    assert hier_weight(block_swap(i, n), block_swap(j, n), p) == hier_weight(i, j, p)


def test_dyadic():
    assert dyadic_index(0.0, 5) == 1
    assert dyadic_index(0.5, 1) == 2
    assert dyadic_path(0.0, 6) == [1] * 7
    with pytest.raises(ValueError):
        dyadic_index(1.0, 2)
