from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TrainingError(RuntimeError):
    pass


@dataclass
class StepSchedule:
    """Learning rate ``base * decay ** (epoch // interval)``."""

    base: float = 1e-3
    decay: float = 0.9
    interval: int = 5

    def __call__(self, epoch):
        return self.base * self.decay ** (epoch // self.interval)


class Adam:
    """Adam with bias-corrected moments (beta1=0.9, beta2=0.999, eps=1e-8).

    Parameter arrays are re-pointed into one flat buffer so a step is a few
    vector operations regardless of how many tensors the model has. Code that
    overwrites parameters must therefore assign in place (``p.data[...] = x``).
    """

    def __init__(self, params, schedule=None, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.schedule = schedule or StepSchedule()
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        sizes = [p.data.size for p in self.params]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.flat = np.concatenate([p.data.ravel() for p in self.params]) if self.params else np.zeros(0)
        for p, a, b in zip(self.params, self._offsets[:-1], self._offsets[1:]):
            p.data = self.flat[a:b].reshape(p.data.shape)
        self.m = np.zeros_like(self.flat)
        self.v = np.zeros_like(self.flat)
        self.t = 0
        self.epoch = 0

    @property
    def lr(self):
        return self.schedule(self.epoch)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def flat_grad(self, grads=None):
        if grads is None:
            grads = [p.grad for p in self.params]
        g = np.zeros_like(self.flat)
        for gi, a, b in zip(grads, self._offsets[:-1], self._offsets[1:]):
            if gi is not None:
                g[a:b] = np.ravel(gi)
        return g

    def step(self, grads=None):
        """Apply one update. ``grads`` defaults to each parameter's ``.grad``."""
        g = self.flat_grad(grads)
        if not np.isfinite(g.sum()):
            bad = [p.name or str(i) for i, (p, a, b) in
                   enumerate(zip(self.params, self._offsets[:-1], self._offsets[1:]))
                   if not np.all(np.isfinite(g[a:b]))]
            raise TrainingError(f"non-finite gradient at step {self.t + 1} in {', '.join(bad)}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1 - b1) * g
        self.v *= b2
        np.multiply(g, g, out=g)
        g *= 1 - b2
        self.v += g
        # g is reused as the denominator buffer
        np.sqrt(self.v, out=g)
        g *= 1.0 / np.sqrt(1.0 - b2 ** self.t)
        g += self.eps
        np.divide(self.m, g, out=g)
        g *= self.lr / (1.0 - b1 ** self.t)
        self.flat -= g

    def state(self):
        return {"t": np.array([self.t], dtype=np.float64), "epoch": np.array([self.epoch], dtype=np.float64),
                "m": self.m.copy(), "v": self.v.copy()}

    def load_state(self, state):
        self.t = int(state["t"][0])
        self.epoch = int(state["epoch"][0])
        self.m[:] = state["m"]
        self.v[:] = state["v"]
