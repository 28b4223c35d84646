"""Flat MLP baseline: every feature of the graph concatenated into one vector.

The input width is tied to the training layout (K, I_k, N_s, N_bar), which is
exactly what stops it from transferring to other network sizes.
"""

from __future__ import annotations

import numpy as np

from .. import precoding
from ..graph import GraphBatch, collate
from ..nn import autograd as ag
from ..nn.layers import DenseNet, DimensionError

HIDDEN = (200, 300, 500)
# one-hot type tags appended after the raw features
BS_TAG, UE_TAG = (1.0, 0.0), (0.0, 1.0)
DESIRED_TAG, INTERFERING_TAG = (1.0, 0.0), (0.0, 1.0)


class FlatMLP:
    """Maps a flattened graph to all analog and baseband outputs of every BS.

    Parameters
    ----------
    scenario : Scenario
        Fixes the layout; other layouts raise ``DimensionError``.
    structure : {"fully", "partially"}
    hidden : widths of the hidden layers
    dropout : float
    rng : numpy.random.Generator
    """

    def __init__(self, scenario, structure="fully", hidden=HIDDEN, dropout=0.3, rng=None):
        sc = scenario
        self.K, self.U = sc.K, sc.I_sum
        self.I = tuple(sc.I)
        self.N_s, self.N_bar, self.N_m = sc.N_s, sc.N_bar, sc.N_m
        self.structure = structure
        self.R = max(sc.N_rf)
        self.rf_width = 2 * self.N_m * self.R if structure == "fully" else 2 * self.N_m
        self.bb_width = 2 * self.R
        out = self.K * self.rf_width + self.U * self.bb_width
        self.net = DenseNet([self.in_width, *hidden, out], dropout,
                            np.random.default_rng(0) if rng is None else rng, name="mlp")

    @property
    def in_width(self):
        E = self.K * self.U
        return (self.K * (1 + 2) + self.U * (1 + 2 * self.N_s + 2)
                + E * (2 * self.N_bar + 2))

    @property
    def training(self):
        return self.net.training

    def train(self):
        self.net.train()
        return self

    def eval(self):
        self.net.eval()
        return self

    def parameters(self):
        return self.net.parameters()

    def state(self):
        return self.net.state()

    def load_state(self, state):
        self.net.load_state(state)

    def flatten(self, batch: GraphBatch):
        """One row per graph: BS features, UE features, edge features, each with type tags."""
        if batch.K != self.K or batch.U != self.U or batch.edge_feat.shape[1] != 2 * self.N_bar \
                or batch.ue_feat.shape[1] != 1 + 2 * self.N_s:
            raise DimensionError(
                f"MLP trained for K={self.K}, I_sum={self.U}, N_bar={self.N_bar}; "
                f"got K={batch.K}, I_sum={batch.U}, N_bar={batch.edge_feat.shape[1] // 2}")
        B = batch.n_graphs
        bs = np.concatenate([batch.bs_feat, np.tile(BS_TAG, (batch.n_bs, 1))], axis=1)
        ue = np.concatenate([batch.ue_feat, np.tile(UE_TAG, (batch.n_ue, 1))], axis=1)
        tags = np.where(batch.edge_desired[:, None], DESIRED_TAG, INTERFERING_TAG)
        edge = np.concatenate([batch.edge_feat, tags], axis=1)
        # edges of a graph are already in ascending (bs, ue) order
        return np.concatenate([bs.reshape(B, -1), ue.reshape(B, -1), edge.reshape(B, -1)], axis=1)

    def forward(self, batch: GraphBatch):
        raw = self.net(ag.Tensor(self.flatten(batch)))
        B, K, U = batch.n_graphs, self.K, self.U
        split = K * self.rf_width
        rf_raw = ag.reshape(raw[:, :split], (B * K, self.rf_width))
        bb_raw = ag.reshape(raw[:, split:], (B * U, self.bb_width))
        # streams ordered by (global bs, slot), matching the UE ordering
        bb_bs = batch.serving
        n_ue = np.bincount(batch.serving, minlength=batch.n_bs)
        return precoding.hybrid_from_raw(
            rf_raw, bb_raw, structure=self.structure, N_m=self.N_m, n_rf=batch.n_rf,
            bb_bs=bb_bs, bb_slot=batch.slot, n_ue=n_ue, P=batch.bs_feat[:, 0])

    def solve(self, graphs):
        batch = collate(graphs)
        with ag.no_grad():
            out = self.forward(batch)
        n_ue = np.bincount(batch.serving, minlength=batch.n_bs)
        return precoding.to_solutions(out, batch.n_graphs, batch.K, batch.n_rf, n_ue, self.structure)
