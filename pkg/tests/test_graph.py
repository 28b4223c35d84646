import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetbeam.channel import Scenario, gen_dataset
from hetbeam.graph import build_graph, collate, interleave, neighbors


def graph_for(sc, seed=0):
    s = gen_dataset(sc, 1, np.random.default_rng(seed)).samples[0]
    return s, build_graph(s, sc)


def test_single_link():
    _, g = graph_for(Scenario(K=1, I=(1,), P=(1.0,)))
    assert (g.n_bs, g.n_ue) == (1, 1)
    assert g.edge_desired.sum() == 1 and (~g.edge_desired).sum() == 0


def test_two_cells():
    sc = Scenario()
    _, g = graph_for(sc)
    assert (g.n_bs, g.n_ue, g.n_edges) == (2, 4, 8)
    assert g.edge_desired.sum() == 4
    assert g.bs_feat[:, 0].tolist() == list(sc.P)


def test_features():
    sc = Scenario(P=(0.5, 2.0), sigma2=0.3)
    s, g = graph_for(sc)
    assert g.ue_feat.shape == (4, 1 + 2 * sc.N_s)
    assert g.edge_feat.shape == (8, 2 * sc.N_bar)
    np.testing.assert_array_equal(g.ue_feat[:, 0], 0.3)
    np.testing.assert_array_equal(g.ue_feat[2, 2::2], s.sub6[2].imag)
    e = np.flatnonzero((g.edge_bs == 1) & (g.edge_ue == 0))[0]
    np.testing.assert_array_equal(g.edge_feat[e, 0::2], s.mm_partial[0, 1].real)


def test_interleave():
    assert interleave(np.array([1 + 2j, 3 - 4j])).tolist() == [1, 2, 3, -4]


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4))
@settings(max_examples=30, deadline=None)
def test_neighbourhood_sizes(I):
    K = len(I)
    sc = Scenario(K=K, I=tuple(I), P=(1.0,) * K)
    _, g = graph_for(sc)
    I_sum = sum(I)
    for k in range(K):
        d = neighbors(g, ("bs", k), "ue", "desired")
        i = neighbors(g, ("bs", k), "ue", "interfering")
        assert len(d) == I[k] and len(i) == I_sum - I[k]
        assert [n for n, _ in d] == sorted(n for n, _ in d)
        assert all(sc.serving[n] == k for n, _ in d)
    for u in range(I_sum):
        d = neighbors(g, ("ue", u), "bs", "desired")
        assert d[0][0] == sc.serving[u] and len(d) == 1
        assert len(neighbors(g, ("ue", u), "bs", "interfering")) == K - 1


def test_neighbour_features_match_edges():
    s, g = graph_for(Scenario())
    for u, feat in neighbors(g, ("bs", 1), "ue", "interfering"):
        np.testing.assert_array_equal(feat, interleave(s.mm_partial[u, 1]))


def test_unknown_node():
    _, g = graph_for(Scenario())
    with pytest.raises(KeyError):
        neighbors(g, ("bs", 5), "ue", "desired")
    with pytest.raises(KeyError):
        neighbors(g, ("relay", 0), "ue", "desired")


def test_pure():
    sc = Scenario()
    s = gen_dataset(sc, 1).samples[0]
    a, b = build_graph(s, sc), build_graph(s, sc)
    for f in ("bs_feat", "ue_feat", "edge_bs", "edge_ue", "edge_desired", "edge_feat"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_dimension_mismatch():
    s = gen_dataset(Scenario(), 1).samples[0]
    with pytest.raises(ValueError):
        build_graph(s, Scenario(N_s=4))


def test_collate_offsets():
    sc = Scenario()
    ds = gen_dataset(sc, 3)
    b = collate([build_graph(s, sc) for s in ds.samples])
    assert (b.n_bs, b.n_ue) == (6, 12)
    assert b.serving.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
    assert b.edge_bs.max() == 5 and b.edge_ue.max() == 11
    with pytest.raises(ValueError):
        collate([build_graph(ds.samples[0], sc),
                 build_graph(gen_dataset(Scenario(K=1, I=(2,), P=(1.0,)), 1).samples[0],
                             Scenario(K=1, I=(2,), P=(1.0,)))])
