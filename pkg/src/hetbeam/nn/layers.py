"""Dense networks built from BatchNorm -> affine -> ReLU -> dropout blocks."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class DimensionError(ValueError):
    pass


class DenseNet:
    """Multi-layer perceptron with input BatchNorm on every layer.

    Each layer computes ``BN(x) -> x W + b -> ReLU -> dropout``. The ReLU and
    dropout are applied on hidden layers only; the last layer is linear unless
    ``out_relu`` is set.

    Parameters
    ----------
    sizes : sequence of int
        Widths ``(in, hidden..., out)``.
    dropout : float
        Inverted-dropout rate for hidden activations, in ``[0, 1)``.
    rng : numpy.random.Generator
        Used for weight initialisation and, later, dropout masks.
    """

    momentum = 0.1
    eps = 1e-5

    def __init__(self, sizes, dropout=0.0, rng=None, out_relu=False, name="net"):
        if len(sizes) < 2:
            raise ValueError("need at least input and output width")
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        rng = np.random.default_rng() if rng is None else rng
        self.sizes = tuple(int(s) for s in sizes)
        self.dropout = float(dropout)
        self.out_relu = out_relu
        self.name = name
        self.rng = rng
        self.training = True
        self.layers = []
        for i, (fi, fo) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = np.sqrt(6.0 / (fi + fo))
            self.layers.append({
                "W": Tensor(rng.uniform(-bound, bound, size=(fi, fo)), True, f"{name}.{i}.W"),
                "b": Tensor(np.zeros(fo), True, f"{name}.{i}.b"),
                "gamma": Tensor(np.ones(fi), True, f"{name}.{i}.gamma"),
                "beta": Tensor(np.zeros(fi), True, f"{name}.{i}.beta"),
                "running_mean": np.zeros(fi),
                "running_var": np.ones(fi),
            })
        self._tape = None

    @property
    def in_width(self):
        return self.sizes[0]

    @property
    def out_width(self):
        return self.sizes[-1]

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def parameters(self):
        return [layer[k] for layer in self.layers for k in ("W", "b", "gamma", "beta")]

    def state(self):
        """Named arrays: trainable tensors and BatchNorm running statistics."""
        out = {}
        for i, layer in enumerate(self.layers):
            for k in ("W", "b", "gamma", "beta"):
                out[f"{i}.{k}"] = layer[k].data
            out[f"{i}.running_mean"] = layer["running_mean"]
            out[f"{i}.running_var"] = layer["running_var"]
        return out

    def load_state(self, state):
        for i, layer in enumerate(self.layers):
            for k in ("W", "b", "gamma", "beta"):
                arr = np.asarray(state[f"{i}.{k}"], dtype=np.float64)
                if arr.shape != layer[k].shape:
                    raise DimensionError(f"{self.name}.{i}.{k}: shape {arr.shape} != {layer[k].shape}")
                layer[k].data[...] = arr
            layer["running_mean"] = np.asarray(state[f"{i}.running_mean"], dtype=np.float64).copy()
            layer["running_var"] = np.asarray(state[f"{i}.running_var"], dtype=np.float64).copy()

    def __call__(self, x):
        """Differentiable forward on a ``Tensor`` batch (rows are samples)."""
        x = ag.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.in_width:
            raise DimensionError(f"{self.name}: expected (*, {self.in_width}) input, got {x.shape}")
        if x.shape[0] == 0:
            return Tensor(np.zeros((0, self.out_width)))
        n_layers = len(self.layers)
        for i, layer in enumerate(self.layers):
            if self.training:
                x, mu, var = ag.batchnorm(x, layer["gamma"], layer["beta"], self.eps)
                m = self.momentum
                n = x.shape[0]
                unbiased = var * n / (n - 1) if n > 1 else var
                layer["running_mean"] = (1 - m) * layer["running_mean"] + m * mu
                layer["running_var"] = (1 - m) * layer["running_var"] + m * unbiased
            else:
                scale = layer["gamma"] * (1.0 / np.sqrt(layer["running_var"] + self.eps))
                x = (x - layer["running_mean"]) * scale + layer["beta"]
            x = ag.linear(x, layer["W"], layer["b"])
            hidden = i < n_layers - 1
            if hidden or self.out_relu:
                x = ag.relu(x)
            if hidden and self.training and self.dropout > 0.0:
                keep = self.rng.random(x.shape) >= self.dropout
                x = x * (keep / (1.0 - self.dropout))
        return x

    # array-level interface

    def forward(self, batch):
        """Forward a numpy batch, recording the computation for ``backward``."""
        inp = Tensor(np.asarray(batch, dtype=np.float64), requires_grad=True)
        out = self(inp)
        self._tape = (inp, out)
        return out.data.copy()

    def backward(self, upstream):
        """Gradients of ``sum(upstream * output)`` for the last ``forward`` call.

        Returns ``(param_grads, input_grad)`` where ``param_grads`` maps the
        parameter name to its gradient array.
        """
        if self._tape is None:
            raise RuntimeError(f"{self.name}: backward() called without a recorded forward()")
        inp, out = self._tape
        params = self.parameters()
        for p in params:
            p.zero_grad()
        inp.zero_grad()
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != out.shape:
            raise DimensionError(f"upstream gradient shape {upstream.shape} != output {out.shape}")
        if out.requires_grad:
            out.backward(upstream)
        grads = {p.name: (np.zeros_like(p.data) if p.grad is None else p.grad) for p in params}
        gin = np.zeros_like(inp.data) if inp.grad is None else inp.grad
        for p in params:
            p.zero_grad()
        self._tape = None
        return grads, gin
