"""Heterogeneous GNN producing hybrid precoders.

Message passing alternates between the two node types. In every layer both
updates read the previous layer's features:

* BS nodes aggregate messages from served UEs (desired edges) and from the
  other cells' UEs (interfering edges);
* UE nodes aggregate from their serving BS and from the interfering BSs.

A message is ``p_{t,w}([v_neighbour || e])``. With attention the messages of
one edge kind are weighted by a softmax over
``ReLU(att_{t,w} . [v_centre || v_neighbour || e])``; without it they are
summed. The desired- and interfering-edge aggregates are summed and fused
with the node's own state by ``q_type``, optionally with a residual skip.
"""

from __future__ import annotations

import numpy as np

from .. import precoding
from ..graph import GraphBatch, collate
from ..nn import autograd as ag
from ..nn.autograd import Tensor
from ..nn.layers import DenseNet
from .config import HgnnConfig

# (centre type, edge kind) -> message net key; the key names the *neighbour* type
PAIRS = {
    ("bs", "desired"): "p_ud",
    ("bs", "interfering"): "p_ui",
    ("ue", "desired"): "p_bd",
    ("ue", "interfering"): "p_bi",
}


class HGNN:
    """Trainable parameters and forward pass.

    Parameters
    ----------
    config : HgnnConfig
    N_s, N_bar, N_m : int
        Scenario dimensions that fix input and output widths.
    n_rf : int
        RF chains the output heads are sized for (``config.max_rf`` wins if set).
    rng : numpy.random.Generator
    """

    def __init__(self, config: HgnnConfig, N_s, N_bar, N_m, n_rf, rng=None):
        self.config = config
        self.N_s, self.N_bar, self.N_m = int(N_s), int(N_bar), int(N_m)
        self.max_rf = int(config.max_rf or n_rf)
        self.rng = np.random.default_rng(0) if rng is None else rng
        c, D, E = config, config.D, 2 * self.N_bar
        drop = c.dropout
        r = self.rng
        self.embed_bs = DenseNet([1, D], 0.0, r, out_relu=True, name="embed_bs")
        self.embed_ue = DenseNet([1 + 2 * self.N_s, D], 0.0, r, out_relu=True, name="embed_ue")
        self.layers = []
        for l in range(c.L):
            layer = {"p": {}, "att": {}, "q": {}}
            for key in PAIRS.values():
                layer["p"][key] = DenseNet([D + E, *c.p_hidden, D], drop, r, name=f"l{l}.{key}")
                w = 2 * D + E
                bound = np.sqrt(6.0 / (w + 1))
                layer["att"][key] = Tensor(r.uniform(-bound, bound, size=(w, 1)), True, f"l{l}.att_{key[2:]}")
            for t in ("bs", "ue"):
                layer["q"][t] = DenseNet([2 * D, *c.q_hidden, D], drop, r, name=f"l{l}.q_{t}")
            self.layers.append(layer)
        rf_out = 2 * self.N_m * self.max_rf if c.structure == "fully" else 2 * self.N_m
        self.rf_head = DenseNet([D, *c.rf_hidden, rf_out], drop, r, name="mlp_rf")
        self.bb_head = DenseNet([2 * D + E, *c.bb_hidden, 2 * self.max_rf], drop, r, name="mlp_bb")

    # bookkeeping

    def nets(self):
        out = {"embed_bs": self.embed_bs, "embed_ue": self.embed_ue,
               "mlp_rf": self.rf_head, "mlp_bb": self.bb_head}
        for l, layer in enumerate(self.layers):
            for key, net in layer["p"].items():
                out[f"l{l}.{key}"] = net
            for t, net in layer["q"].items():
                out[f"l{l}.q_{t}"] = net
        return out

    def attention_vectors(self):
        return {f"l{l}.att_{key}": layer["att"][key]
                for l, layer in enumerate(self.layers) for key in PAIRS.values()}

    def parameters(self):
        params = []
        for net in self.nets().values():
            params.extend(net.parameters())
        if self.config.attention:
            params.extend(self.attention_vectors().values())
        return params

    def train(self):
        for net in self.nets().values():
            net.train()
        return self

    def eval(self):
        for net in self.nets().values():
            net.eval()
        return self

    @property
    def training(self):
        return self.rf_head.training

    def state(self):
        out = {}
        for name, net in self.nets().items():
            for k, v in net.state().items():
                out[f"{name}.{k}"] = v
        for name, t in self.attention_vectors().items():
            out[name] = t.data
        return out

    def load_state(self, state):
        for name, net in self.nets().items():
            prefix = name + "."
            net.load_state({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})
        for name, t in self.attention_vectors().items():
            t.data[...] = np.asarray(state[name], dtype=np.float64).reshape(t.shape)

    # the three stages

    def embed(self, batch: GraphBatch):
        """Layer-0 features: one embedding net per node type."""
        return self.embed_bs(batch.bs_feat), self.embed_ue(batch.ue_feat)

    def aggregate(self, layer, centre, kind, vb, vu, batch: GraphBatch, attention=None):
        """Aggregate of every ``centre``-type node over ``kind`` edges, shape (n_centre, D)."""
        attention = self.config.attention if attention is None else attention
        key = PAIRS[(centre, kind)]
        sel = np.flatnonzero(batch.edge_desired if kind == "desired" else ~batch.edge_desired)
        if centre == "bs":
            cid, nid, vc, vn, n_centre = batch.edge_bs[sel], batch.edge_ue[sel], vb, vu, batch.n_bs
        else:
            cid, nid, vc, vn, n_centre = batch.edge_ue[sel], batch.edge_bs[sel], vu, vb, batch.n_ue
        D = self.config.D
        if sel.size == 0:
            return Tensor(np.zeros((n_centre, D)))
        e = batch.edge_feat[sel]
        v_nbr = vn[nid]
        msg = self.layers[layer]["p"][key](ag.concat([v_nbr, e], axis=1))
        # a UE's serving link is its only desired neighbour: nothing to weigh
        if attention and not (centre == "ue" and kind == "desired"):
            z = ag.concat([vc[cid], v_nbr, e], axis=1) @ self.layers[layer]["att"][key]
            score = ag.relu(ag.reshape(z, (-1,)))
            alpha = ag.segment_softmax(score, cid, n_centre)
            msg = msg * ag.reshape(alpha, (-1, 1))
        return ag.segment_sum(msg, cid, n_centre)

    def combine(self, layer, node_type, v_prev, aggregates, residual=None):
        residual = self.config.residual if residual is None else residual
        a = aggregates[0]
        for extra in aggregates[1:]:
            a = a + extra
        out = self.layers[layer]["q"][node_type](ag.concat([v_prev, a], axis=1))
        return v_prev + out if residual else out

    def propagate(self, batch: GraphBatch):
        vb, vu = self.embed(batch)
        for l in range(self.config.L):
            ab = [self.aggregate(l, "bs", k, vb, vu, batch) for k in ("desired", "interfering")]
            au = [self.aggregate(l, "ue", k, vb, vu, batch) for k in ("desired", "interfering")]
            vb, vu = self.combine(l, "bs", vb, ab), self.combine(l, "ue", vu, au)
        return vb, vu

    def heads(self, batch: GraphBatch, vb, vu):
        """Analog and baseband heads with their feasibility projections."""
        rf_raw = self.rf_head(vb)
        d = np.flatnonzero(batch.edge_desired)
        order = np.lexsort((batch.slot[batch.edge_ue[d]], batch.edge_bs[d]))
        d = d[order]
        bs_id, ue_id = batch.edge_bs[d], batch.edge_ue[d]
        bb_in = ag.concat([vb[bs_id], vu[ue_id], batch.edge_feat[d]], axis=1)
        bb_raw = self.bb_head(bb_in)
        n_ue = np.bincount(batch.serving, minlength=batch.n_bs)
        return precoding.hybrid_from_raw(
            rf_raw, bb_raw, structure=self.config.structure, N_m=self.N_m,
            n_rf=batch.n_rf, bb_bs=bs_id, bb_slot=batch.slot[ue_id], n_ue=n_ue,
            P=batch.bs_feat[:, 0])

    def forward(self, batch: GraphBatch):
        """Tape outputs ``F``, ``F_RF``, ``F_BB`` padded per BS (see ``precoding``)."""
        vb, vu = self.propagate(batch)
        return self.heads(batch, vb, vu)

    def solve(self, graphs):
        """Precoder solutions for a list of graphs (current train/eval mode)."""
        batch = collate(graphs)
        with ag.no_grad():
            out = self.forward(batch)
        n_ue = np.bincount(batch.serving, minlength=batch.n_bs)
        return precoding.to_solutions(out, batch.n_graphs, batch.K, batch.n_rf, n_ue,
                                      self.config.structure)


def batch_rates(out, batch: GraphBatch, H, sigma2):
    """Per-UE rates ``(B, U)`` on the tape from a forward output."""
    f_re, f_im = out["F"]
    B, K = batch.n_graphs, batch.K
    shape = (B, K) + f_re.shape[1:]
    F = (ag.reshape(f_re, shape), ag.reshape(f_im, shape))
    serving = batch.serving[:batch.U] % K
    slot = batch.slot[:batch.U]
    return precoding.rates_tape(F, H, serving, slot, sigma2)


def loss(out, batch: GraphBatch, H, sigma2):
    """Negative sum rate averaged over the graphs of the batch."""
    rates = batch_rates(out, batch, H, sigma2)
    return ag.mul(ag.sum(rates), -1.0 / batch.n_graphs)
