"""Weighted-MMSE fully digital precoding for the multi-cell downlink."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..precoding import rates


@dataclass
class DigitalPrecoder:
    """Per-BS fully digital precoders ``V[k]`` of shape ``(N_m, I_k)``."""

    V: list
    trace: list = field(default_factory=list)  # sum rate after every iteration
    iterations: int = 0

    def sum_rate(self, H, sigma2):
        return float(rates(self.V, H, sigma2).sum())


def _power_at(mu, lam, phi):
    return float(np.sum(phi / (lam + mu) ** 2))


def solve_multiplier(A, B, P, tol=1e-12, max_bisect=200):
    """Return ``V = (A + mu I)^-1 B`` with the smallest ``mu >= 0`` meeting ``||V||_F^2 <= P``.

    ``A`` is Hermitian PSD. The power is monotone in ``mu``, so ``mu`` is
    bracketed by doubling and then bisected; the feasible end is returned.
    """
    lam, Q = np.linalg.eigh(A)
    lam = np.maximum(lam, 0.0)
    phi = np.sum(np.abs(Q.conj().T @ B) ** 2, axis=1)
    scale = max(float(lam.max()), 1e-300)
    singular = lam <= 1e-12 * scale
    if not np.any(singular & (phi > 0)) and _power_at(0.0, lam, phi) <= P:
        mu = 0.0
    else:
        lo, hi = 0.0, max(scale, 1.0) * 1e-6
        while _power_at(hi, lam, phi) > P:
            lo, hi = hi, hi * 2.0
        for _ in range(max_bisect):
            if hi - lo <= tol * hi:
                break
            mid = 0.5 * (lo + hi)
            if _power_at(mid, lam, phi) > P:
                lo = mid
            else:
                hi = mid
        mu = hi
    V = Q @ ((Q.conj().T @ B) / (lam + mu)[:, None])
    return V, mu


def mrt(H, I, P):
    """Matched-filter start: each served UE gets an equal share of the BS power."""
    serving = np.repeat(np.arange(len(I)), I)
    V = []
    for k, n in enumerate(I):
        h = H[serving == k, k, :].T  # (N_m, I_k)
        norms = np.linalg.norm(h, axis=0)
        norms[norms == 0] = 1.0
        V.append(np.sqrt(P[k] / n) * h / norms)
    return V


def wmmse(H, I, P, sigma2, max_iter=100, tol=1e-8, init=None):
    """Sum-rate maximising digital precoders by weighted-MMSE iterations.

    Parameters
    ----------
    H : complex array (U, K, N_m)
        Full mmWave channels, UEs ordered by (cell, index in cell).
    I : sequence of int
        UEs served by each BS.
    P : sequence of float
        Power budget per BS.
    sigma2 : float
    max_iter, tol
        Stop after ``max_iter`` iterations or once the sum rate improves by
        less than ``tol``.
    init : list of arrays, optional
        Starting precoders; matched filtering by default.
    """
    H = np.asarray(H)
    if not np.all(np.isfinite(H)):
        raise ValueError("channel contains non-finite entries")
    I = [int(i) for i in I]
    K = len(I)
    U, K_h, N_m = H.shape
    if K_h != K or U != sum(I):
        raise ValueError(f"channel shape {H.shape} does not match I={I}")
    serving = np.repeat(np.arange(K), I)
    slot = np.concatenate([np.arange(i) for i in I])
    V = [v.copy() for v in (init if init is not None else mrt(H, I, P))]
    trace = [float(rates(V, H, sigma2).sum())]
    it = 0
    for it in range(1, max_iter + 1):
        # receive scalars and MSE weights
        g = np.stack([H[:, k, :].conj() @ np.pad(V[k], ((0, 0), (0, max(I) - I[k])))
                      for k in range(K)], axis=1)  # (U, K, M): h_{u,k}^H v_{k,l}
        total = np.sum(np.abs(g) ** 2, axis=(1, 2)) + sigma2
        gd = g[np.arange(U), serving, slot]
        u = gd / total
        e = 1.0 - np.real(np.conj(u) * gd)
        w = 1.0 / np.maximum(e, 1e-300)
        # transmit update per BS
        c = np.abs(u) ** 2 * w
        for k in range(K):
            Hk = H[:, k, :]  # (U, N_m)
            A = (Hk.T * c) @ Hk.conj()
            mine = serving == k
            B = Hk[mine].T * (u[mine] * w[mine])
            V[k], _ = solve_multiplier(A, B, P[k])
        trace.append(float(rates(V, H, sigma2).sum()))
        if trace[-1] - trace[-2] < tol:
            break
    return DigitalPrecoder(V, trace, it)
