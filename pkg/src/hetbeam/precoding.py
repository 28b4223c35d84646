"""Hybrid precoders: feasibility projections and the differentiable sum rate.

Learned models emit raw real vectors. The helpers here turn them into
constant-modulus analog precoders and power-projected baseband precoders on
the autograd tape, and evaluate per-UE rates against full mmWave CSI so the
negative sum rate can be back-propagated.

Complex tensors on the tape are carried as ``(re, im)`` pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import autograd as ag

TINY_MODULUS = 1e-12
LN2 = np.log(2.0)


@dataclass
class PrecoderSolution:
    """Per-BS analog ``F_RF[k]`` (N_m x N_rf) and baseband ``F_BB[k]`` (N_rf x I_k)."""

    F_RF: list
    F_BB: list
    structure: str = "fully"

    @property
    def K(self):
        return len(self.F_RF)

    def precoders(self):
        return [rf @ bb for rf, bb in zip(self.F_RF, self.F_BB)]


def block_owner(N_m, n_rf):
    """RF chain owning each antenna in the sub-array layout."""
    return np.arange(N_m) // (N_m // n_rf)


def constraint_violations(sol: PrecoderSolution, P, tol=1e-9):
    """Return a list of human-readable constraint violations (empty if feasible)."""
    out = []
    for k, (rf, bb) in enumerate(zip(sol.F_RF, sol.F_BB)):
        N_m, n_rf = rf.shape
        power = np.linalg.norm(rf @ bb) ** 2
        if power > P[k] + tol:
            out.append(f"BS {k}: power {power} > {P[k]}")
        target = 1.0 / np.sqrt(N_m)
        if sol.structure == "fully":
            dev = np.max(np.abs(np.abs(rf) - target))
            if dev > tol:
                out.append(f"BS {k}: analog modulus off by {dev}")
        else:
            mask = np.zeros(rf.shape, dtype=bool)
            mask[np.arange(N_m), block_owner(N_m, n_rf)] = True
            if np.any(rf[~mask] != 0):
                out.append(f"BS {k}: nonzero entry outside the sub-array blocks")
            dev = np.max(np.abs(np.abs(rf[mask]) - target))
            if dev > tol:
                out.append(f"BS {k}: analog modulus off by {dev}")
    return out


def normalize_unit_modulus(re, im, N_m):
    """Scale complex entries to modulus ``1/sqrt(N_m)``; ~zero entries become ``1+0j`` first."""
    small = (re.data ** 2 + im.data ** 2) < TINY_MODULUS ** 2
    if small.any():
        keep = (~small).astype(np.float64)
        re = re * keep + small.astype(np.float64)
        im = im * keep
    r = ag.sqrt(ag.square(re) + ag.square(im))
    scale = 1.0 / (np.sqrt(N_m) * r)
    return re * scale, im * scale


def cmatmul(ar, ai, br, bi):
    return ar @ br - ai @ bi, ar @ bi + ai @ br


def hybrid_from_raw(rf_raw, bb_raw, *, structure, N_m, n_rf, bb_bs, bb_slot, n_ue, P):
    """Assemble feasible hybrid precoders from raw network outputs.

    Parameters
    ----------
    rf_raw : Tensor
        ``(n_bs, 2*N_m*R)`` for fully-connected (``R`` analog columns, re/im
        interleaved, antenna-major) or ``(n_bs, 2*N_m)`` for partially-connected.
    bb_raw : Tensor
        ``(n_streams, 2*R)``: one baseband column per served UE.
    n_rf, n_ue : int arrays ``(n_bs,)``
        RF chains and served UEs of every BS (equal here, but kept apart).
    bb_bs, bb_slot : int arrays ``(n_streams,)``
        Owning BS and in-cell slot of each baseband column.
    P : array ``(n_bs,)``

    Returns
    -------
    dict of ``(re, im)`` tensors ``F`` (n_bs, N_m, M), ``F_RF`` (n_bs, N_m, M),
    ``F_BB`` (n_bs, M, M) zero-padded to ``M = max(n_rf)``.
    """
    n_bs = len(n_rf)
    M = int(max(n_rf.max(), n_ue.max()))
    chain_mask = (np.arange(M)[None, :] < n_rf[:, None]).astype(np.float64)  # (n_bs, M)

    if structure == "fully":
        R = rf_raw.shape[1] // (2 * N_m)
        if R < n_rf.max():
            raise ValueError(f"analog head provides {R} columns, need {n_rf.max()}")
        raw = ag.reshape(rf_raw, (n_bs, N_m, R, 2))
        re = raw[:, :, :M, 0]
        im = raw[:, :, :M, 1]
        re, im = normalize_unit_modulus(re, im, N_m)
        cm = chain_mask[:, None, :]
        rf_re, rf_im = re * cm, im * cm
    else:
        raw = ag.reshape(rf_raw, (n_bs, N_m, 2))
        re, im = normalize_unit_modulus(raw[:, :, 0], raw[:, :, 1], N_m)
        block = N_m // n_rf
        cols = np.arange(N_m)[None, :] // block[:, None]
        idx = (np.repeat(np.arange(n_bs), N_m), np.tile(np.arange(N_m), n_bs), cols.ravel())
        rf_re = ag.scatter(ag.reshape(re, (-1,)), idx, (n_bs, N_m, M))
        rf_im = ag.scatter(ag.reshape(im, (-1,)), idx, (n_bs, N_m, M))

    R_bb = bb_raw.shape[1] // 2
    if R_bb < n_rf.max():
        raise ValueError(f"baseband head provides {R_bb} chains, need {n_rf.max()}")
    nd = bb_raw.shape[0]
    braw = ag.reshape(bb_raw, (nd, R_bb, 2))
    cmask = chain_mask[bb_bs]
    b_re = braw[:, :M, 0] * cmask
    b_im = braw[:, :M, 1] * cmask
    idx = (bb_bs[:, None], np.arange(M)[None, :], bb_slot[:, None])
    bb_re = ag.scatter(b_re, idx, (n_bs, M, M))
    bb_im = ag.scatter(b_im, idx, (n_bs, M, M))

    f_re, f_im = cmatmul(rf_re, rf_im, bb_re, bb_im)
    power = ag.sum(ag.sum(ag.square(f_re) + ag.square(f_im), axis=2), axis=1)
    s = ag.reshape(ag.power_scale(power, np.asarray(P, dtype=np.float64)), (n_bs, 1, 1))
    return {
        "F": (f_re * s, f_im * s),
        "F_RF": (rf_re, rf_im),
        "F_BB": (bb_re * s, bb_im * s),
    }


def rates_tape(F, H, serving, slot, sigma2):
    """Per-UE rates (bits/s/Hz) on the tape.

    ``F`` is a ``(re, im)`` pair of shape ``(B, K, N_m, M)``; ``H`` complex
    ``(B, U, K, N_m)`` full channels; ``serving``/``slot`` are per-UE (local).
    Returns a ``(B, U)`` tensor.
    """
    f_re, f_im = F
    Hc = np.transpose(H, (0, 2, 1, 3))  # (B, K, U, N_m)
    hr, hi = Hc.real, Hc.imag
    # h^H f = (hr - j hi)(fr + j fi)
    g_re = hr @ f_re + hi @ f_im
    g_im = hr @ f_im - hi @ f_re
    pw = ag.square(g_re) + ag.square(g_im)  # (B, K, U, M)
    total = ag.sum(ag.sum(pw, axis=3), axis=1)  # (B, U)
    U = len(serving)
    desired = pw[:, serving, np.arange(U), slot]
    num = ag.log(total + sigma2)
    den = ag.log(total - desired + sigma2)
    return (num - den) * (1.0 / LN2)


def to_solutions(out, n_graphs, K, n_rf, n_ue, structure):
    """Split padded tape outputs into one ``PrecoderSolution`` per graph."""
    rf = out["F_RF"][0].data + 1j * out["F_RF"][1].data
    bb = out["F_BB"][0].data + 1j * out["F_BB"][1].data
    sols = []
    for g in range(n_graphs):
        rfs, bbs = [], []
        for k in range(K):
            j = g * K + k
            rfs.append(rf[j, :, :n_rf[j]].copy())
            bbs.append(bb[j, :n_rf[j], :n_ue[j]].copy())
        sols.append(PrecoderSolution(rfs, bbs, structure))
    return sols


def rates(precoders, H, sigma2):
    """Per-UE rates from per-BS digital precoders.

    ``precoders[k]`` is ``(N_m, I_k)``; ``H`` is ``(U, K, N_m)`` with UEs
    ordered by (cell, index in cell). Rate of UE ``u`` served by ``k`` in
    column ``i`` is ``log2(1 + |h_uk^H f_k[i]|^2 / (interference + sigma2))``.
    """
    I = [p.shape[1] for p in precoders]
    serving = np.repeat(np.arange(len(I)), I)
    slot = np.concatenate([np.arange(i) for i in I])
    U = len(serving)
    # gain[u, k, l] = |h_{u,k}^H f_k[l]|^2, columns padded to max(I)
    M = max(I)
    gain = np.zeros((U, len(I), M))
    for k, f in enumerate(precoders):
        gain[:, k, :I[k]] = np.abs(H[:, k, :].conj() @ f) ** 2
    desired = gain[np.arange(U), serving, slot]
    interference = gain.sum(axis=(1, 2)) - desired
    return np.log2(1.0 + desired / (interference + sigma2))
