"""Rates, FLOP counts and signalling overhead."""

from __future__ import annotations

import numpy as np

from ..precoding import PrecoderSolution, rates

METHODS = ("HGNN", "MLP", "AltMin")


def rate_per_ue(solution, H, sigma2):
    """Per-UE rates (bits/s/Hz) of one solution against full mmWave CSI ``H`` (U, K, N_m).

    ``solution`` is a ``PrecoderSolution`` or a list of per-BS digital
    precoders ``(N_m, I_k)``.
    """
    precoders = solution.precoders() if isinstance(solution, PrecoderSolution) else list(solution)
    return rates(precoders, H, sigma2)


def sum_se(solution, H, sigma2):
    return float(rate_per_ue(solution, H, sigma2).sum())


def mean_sum_se(solutions, H, sigma2):
    """Mean over samples; ``H`` stacks the per-sample channels."""
    return float(np.mean([sum_se(s, h, sigma2) for s, h in zip(solutions, H)]))


def mlp_flops(sizes, out_relu=False):
    """FLOPs of one ``DenseNet`` forward pass for a single input row.

    Affine layers cost ``2 * in * out``; every BatchNorm and every ReLU
    costs ``4 * width``.
    """
    total = 0
    n = len(sizes) - 1
    for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        total += 4 * fi + 2 * fi * fo
        if i < n - 1 or out_relu:
            total += 4 * fo
    return total


def attention_flops(width):
    """Score ``ReLU(att . x)`` plus its share of the softmax and the weighting."""
    return 2 * width + 4


def component_flops(config, scenario):
    """FLOPs of every network component of an HGNN for ``scenario``."""
    D, E = config.D, 2 * scenario.N_bar
    R = max(scenario.N_rf)
    rf_out = 2 * scenario.N_m * R if config.structure == "fully" else 2 * scenario.N_m
    p = mlp_flops([D + E, *config.p_hidden, D])
    att = attention_flops(2 * D + E) if config.attention else 0
    return {
        "p": p,
        "att": att,
        # a UE's serving link bypasses attention
        "att_ue_desired": 0,
        "q": mlp_flops([2 * D, *config.q_hidden, D]),
        "rf": mlp_flops([D, *config.rf_hidden, rf_out]),
        "bb": mlp_flops([2 * D + E, *config.bb_hidden, 2 * R]),
    }


def flops_estimate(config, scenario):
    """Total inference FLOPs of the HGNN for one network realisation.

    ``L * (sum_k [I_k (C_p + C_att) + (I_sum - I_k)(C_p + C_att) + C_q]
    + I_sum [(C_p + C_att_ud) + (K - 1)(C_p + C_att) + C_q]) + K C_RF + I_sum C_BB``.
    The input embeddings are not counted.
    """
    c = component_flops(config, scenario)
    K, I_sum = scenario.K, scenario.I_sum
    bs_side = sum(i * (c["p"] + c["att"]) + (I_sum - i) * (c["p"] + c["att"]) + c["q"]
                  for i in scenario.I)
    ue_side = I_sum * ((c["p"] + c["att_ue_desired"]) + (K - 1) * (c["p"] + c["att"]) + c["q"])
    return int(config.L * (bs_side + ue_side) + K * c["rf"] + I_sum * c["bb"])


def pilots(n):
    """One orthogonal pilot per active antenna."""
    return int(n)


def overhead_report(scenario, method, structure=None):
    """Pilot and backhaul counts of ``method`` in ``scenario``.

    Returns ``{"pilot": int, "backhaul": int}``.
    """
    key = {m.lower(): m for m in METHODS}.get(str(method).lower())
    if key is None:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    structure = structure or scenario.structure
    if structure not in ("fully", "partially"):
        raise ValueError(f"unknown structure {structure!r}")
    K, I_sum = scenario.K, scenario.I_sum
    n = scenario.N_m if key == "AltMin" else scenario.N_bar
    pilot = K * I_sum * pilots(n)
    if key == "MLP":
        backhaul = 0
    elif structure == "fully":
        backhaul = K * I_sum * n + sum(scenario.N_m * i + i * i for i in scenario.I)
    else:
        backhaul = K * I_sum * n + sum(scenario.N_m + i * i for i in scenario.I)
    return {"pilot": int(pilot), "backhaul": int(backhaul)}
