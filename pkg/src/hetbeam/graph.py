"""Heterogeneous BS/UE graph of one network realisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSample, Scenario

BS, UE = "bs", "ue"
DESIRED, INTERFERING = "desired", "interfering"


def interleave(z):
    """Complex ``(..., n)`` -> real ``(..., 2n)`` as (re, im) pairs."""
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1).reshape(*z.shape[:-1], 2 * z.shape[-1])


@dataclass(frozen=True)
class HeteroGraph:
    """Complete bipartite BS-UE graph.

    Edges run over every (BS, UE) pair in ascending ``(bs, ue)`` order; an edge
    is *desired* iff the BS serves the UE.
    """

    bs_feat: np.ndarray      # (K, 1): max power
    ue_feat: np.ndarray      # (I_sum, 1 + 2 N_s): noise power, sub-6GHz CSI
    edge_bs: np.ndarray      # (E,)
    edge_ue: np.ndarray      # (E,)
    edge_desired: np.ndarray  # (E,) bool
    edge_feat: np.ndarray    # (E, 2 N_bar): partial mmWave CSI
    serving: np.ndarray      # (I_sum,)
    slot: np.ndarray         # (I_sum,) index of the UE within its cell
    n_rf: np.ndarray         # (K,)

    @property
    def n_bs(self):
        return self.bs_feat.shape[0]

    @property
    def n_ue(self):
        return self.ue_feat.shape[0]

    @property
    def n_edges(self):
        return self.edge_bs.shape[0]


def build_graph(sample: ChannelSample, scenario: Scenario) -> HeteroGraph:
    sc = scenario
    U, K = sc.I_sum, sc.K
    if sample.sub6.shape != (U, sc.N_s):
        raise ValueError(f"sub-6GHz CSI shape {sample.sub6.shape} != {(U, sc.N_s)}")
    if sample.mm_partial.shape != (U, K, sc.N_bar):
        raise ValueError(f"partial mmWave CSI shape {sample.mm_partial.shape} != {(U, K, sc.N_bar)}")
    serving = sc.serving
    bs_feat = np.asarray(sc.P, dtype=np.float64).reshape(K, 1)
    ue_feat = np.concatenate([np.full((U, 1), sc.sigma2), interleave(sample.sub6)], axis=1)
    edge_bs = np.repeat(np.arange(K), U)
    edge_ue = np.tile(np.arange(U), K)
    edge_desired = serving[edge_ue] == edge_bs
    edge_feat = interleave(sample.mm_partial[edge_ue, edge_bs])
    return HeteroGraph(bs_feat, ue_feat, edge_bs, edge_ue, edge_desired, edge_feat,
                       serving, sc.slot, np.asarray(sc.N_rf, dtype=np.int64))


def neighbors(graph: HeteroGraph, node, node_type, edge_kind):
    """Neighbours of ``node`` of type ``node_type`` over ``edge_kind`` edges.

    ``node`` is ``("bs", k)`` or ``("ue", u)``. Returns ``[(index, edge_feature)]``
    in ascending neighbour order.
    """
    kind, i = node
    if kind == BS:
        if not 0 <= i < graph.n_bs:
            raise KeyError(f"no BS node {i}")
        centre, other = graph.edge_bs, graph.edge_ue
    elif kind == UE:
        if not 0 <= i < graph.n_ue:
            raise KeyError(f"no UE node {i}")
        centre, other = graph.edge_ue, graph.edge_bs
    else:
        raise KeyError(f"unknown node type {kind!r}")
    if edge_kind not in (DESIRED, INTERFERING):
        raise KeyError(f"unknown edge kind {edge_kind!r}")
    if node_type == kind:
        return []
    want = graph.edge_desired if edge_kind == DESIRED else ~graph.edge_desired
    sel = np.flatnonzero((centre == i) & want)
    sel = sel[np.argsort(other[sel], kind="stable")]
    return [(int(other[e]), graph.edge_feat[e]) for e in sel]


@dataclass(frozen=True)
class GraphBatch:
    """Disjoint union of ``n_graphs`` graphs sharing one layout.

    Node ``k`` of graph ``g`` becomes BS ``g*K + k``; UEs likewise with ``U``.
    """

    n_graphs: int
    K: int
    U: int
    bs_feat: np.ndarray
    ue_feat: np.ndarray
    edge_bs: np.ndarray
    edge_ue: np.ndarray
    edge_desired: np.ndarray
    edge_feat: np.ndarray
    serving: np.ndarray   # global BS id per UE
    slot: np.ndarray
    n_rf: np.ndarray      # per global BS

    @property
    def n_bs(self):
        return self.bs_feat.shape[0]

    @property
    def n_ue(self):
        return self.ue_feat.shape[0]


def collate(graphs) -> GraphBatch:
    graphs = list(graphs)
    g0 = graphs[0]
    K, U = g0.n_bs, g0.n_ue
    for g in graphs:
        if g.n_bs != K or g.n_ue != U or g.edge_feat.shape[1] != g0.edge_feat.shape[1]:
            raise ValueError("all graphs in a batch must share the same layout")
    B = len(graphs)
    bo = (np.arange(B) * K)[:, None]
    uo = (np.arange(B) * U)[:, None]
    return GraphBatch(
        n_graphs=B, K=K, U=U,
        bs_feat=np.concatenate([g.bs_feat for g in graphs]),
        ue_feat=np.concatenate([g.ue_feat for g in graphs]),
        edge_bs=(np.stack([g.edge_bs for g in graphs]) + bo).ravel(),
        edge_ue=(np.stack([g.edge_ue for g in graphs]) + uo).ravel(),
        edge_desired=np.concatenate([g.edge_desired for g in graphs]),
        edge_feat=np.concatenate([g.edge_feat for g in graphs]),
        serving=(np.stack([g.serving for g in graphs]) + bo).ravel(),
        slot=np.concatenate([g.slot for g in graphs]),
        n_rf=np.concatenate([g.n_rf for g in graphs]),
    )
