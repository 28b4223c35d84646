"""Minibatch training on the negative sum rate, evaluation, and checkpoints.

The loop works for any model exposing ``forward(GraphBatch)`` (returning the
padded precoder tensors of ``precoding.hybrid_from_raw``), ``parameters()``,
``train()``, ``eval()``, ``state()`` and ``load_state()``; the flat MLP
baseline reuses it unchanged.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..channel import Dataset, stack
from ..graph import build_graph, collate
from ..nn import autograd as ag
from ..nn.optim import Adam, StepSchedule, TrainingError
from ..tensorio import load_tensors, save_tensors
from .config import HgnnConfig, TrainParams
from .model import HGNN, batch_rates, loss


@dataclass
class Prepared:
    """Graphs and full channels of a dataset, ready for batching."""

    graphs: list
    H: np.ndarray  # (n, U, K, N_m)
    sigma2: float

    def __len__(self):
        return len(self.graphs)


def prepare(dataset: Dataset, edge_transform=None):
    """Build graphs for every sample.

    ``edge_transform(sample) -> sample`` may perturb what the model sees
    (e.g. phase errors); ``H`` always holds the true full CSI.
    """
    sc = dataset.scenario
    samples = dataset.samples
    seen = samples if edge_transform is None else [edge_transform(s) for s in samples]
    graphs = [build_graph(s, sc) for s in seen]
    return Prepared(graphs, stack(samples)[1], sc.sigma2)


def sum_se(model, data: Prepared, batch_size=200):
    """Per-sample sum spectral efficiency in the model's current mode."""
    out = []
    with ag.no_grad():
        for a in range(0, len(data), batch_size):
            b = collate(data.graphs[a:a + batch_size])
            o = model.forward(b)
            r = batch_rates(o, b, data.H[a:a + batch_size], data.sigma2)
            out.append(r.data.sum(axis=1))
    return np.concatenate(out)


def evaluate(model, data: Prepared, batch_size=200):
    """Mean test sum-SE in eval mode; restores the previous mode."""
    was_training = model.training
    model.eval()
    try:
        return float(np.mean(sum_se(model, data, batch_size)))
    finally:
        if was_training:
            model.train()


@dataclass
class TrainResult:
    model: object
    optimizer: Adam
    initial_test_se: float
    curve: list = field(default_factory=list)  # dicts: epoch, lr, train_se, test_se, seconds

    @property
    def final_test_se(self):
        return self.curve[-1]["test_se"] if self.curve else self.initial_test_se


def fit(model, train: Prepared, test: Prepared, params: TrainParams, log=None):
    """Adam on the negative sum rate, one learning-curve entry per epoch."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng([params.seed, 1])
    opt = Adam(model.parameters(), StepSchedule(params.lr, params.lr_decay, params.lr_interval))
    initial = evaluate(model, test, params.eval_batch)
    result = TrainResult(model, opt, initial)
    model.train()
    n = len(train)
    for epoch in range(params.epochs):
        opt.epoch = epoch
        t0 = time.perf_counter()
        order = rng.permutation(n)
        se_sum = 0.0
        for a in range(0, n, params.batch_size):
            idx = order[a:a + params.batch_size]
            b = collate([train.graphs[i] for i in idx])
            out = model.forward(b)
            lv = loss(out, b, train.H[idx], train.sigma2)
            value = float(lv.data)
            if not math.isfinite(value):
                raise TrainingError(f"loss became {value} at epoch {epoch}, step {opt.t + 1}")
            opt.zero_grad()
            lv.backward()
            opt.step()
            se_sum += -value * len(idx)
        test_se = evaluate(model, test, params.eval_batch)
        entry = {"epoch": epoch, "lr": opt.lr, "train_se": se_sum / n, "test_se": test_se,
                 "seconds": time.perf_counter() - t0}
        result.curve.append(entry)
        if log:
            log(entry)
    model.eval()
    return result


def build_model(config: HgnnConfig, scenario, seed=0):
    return HGNN(config, scenario.N_s, scenario.N_bar, scenario.N_m, max(scenario.N_rf),
                np.random.default_rng([seed, 0]))


def train(train_ds: Dataset, test_ds: Dataset, config: HgnnConfig, params: TrainParams, log=None):
    """Train a fresh HGNN for ``train_ds.scenario``."""
    model = build_model(config, train_ds.scenario, params.seed)
    return fit(model, prepare(train_ds), prepare(test_ds), params, log)


def save_checkpoint(stem, model, optimizer=None, meta=None):
    tensors = {f"model.{k}": v for k, v in model.state().items()}
    if optimizer is not None:
        tensors.update({f"adam.{k}": v for k, v in optimizer.state().items()})
    return save_tensors(stem, tensors, meta or {})


def load_checkpoint(stem, optimizer=None):
    """Rebuild an HGNN from a checkpoint written by ``save_checkpoint``.

    Returns ``(model, meta)``. The checkpoint meta must carry ``config`` and
    the scenario dimensions (``N_s``, ``N_bar``, ``N_m``, ``max_rf``).
    """
    tensors, meta = load_tensors(stem)
    if meta.get("kind", "hgnn") != "hgnn":
        raise ValueError(f"{stem}: not an HGNN checkpoint (kind={meta.get('kind')!r})")
    cfg = HgnnConfig(**meta["config"])
    model = HGNN(cfg, meta["N_s"], meta["N_bar"], meta["N_m"], meta["max_rf"])
    restore(model, tensors, optimizer)
    model.eval()
    return model, meta


def restore(model, tensors, optimizer=None):
    model.load_state({k[6:]: v for k, v in tensors.items() if k.startswith("model.")})
    if optimizer is not None:
        optimizer.load_state({k[5:]: v for k, v in tensors.items() if k.startswith("adam.")})


def checkpoint_meta(model: HGNN, scenario, extra=None):
    meta = {"kind": "hgnn", "config": model.config.to_dict(), "N_s": model.N_s,
            "N_bar": model.N_bar, "N_m": model.N_m, "max_rf": model.max_rf,
            "scenario": scenario.to_dict()}
    meta.update(extra or {})
    return meta
