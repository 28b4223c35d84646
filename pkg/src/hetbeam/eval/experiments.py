"""Experiment drivers producing CSV rows.

Every driver returns a list of dicts with the columns of ``COLUMNS``. Trained
models are cached per (method, structure, scenario, model config, seed) so
drivers sharing a ``Runner`` never train the same thing twice.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..baselines import FlatMLP, hybrid_from_digital, wmmse
from ..channel import Dataset, Scenario, apply_phase_error, gen_dataset, stack, with_active, ChannelSample
from ..hgnn import HgnnConfig, TrainParams, build_model, evaluate, fit, prepare
from .metrics import flops_estimate, mean_sum_se, overhead_report

COLUMNS = ("experiment", "method", "structure", "K", "I_sum", "N_bar", "snr_db", "seed",
           "mean_sum_se", "wallclock_s", "flops", "pilot_overhead", "backhaul_overhead")
KINDS = ("snr_sweep", "ablation", "nbar_sweep", "phase_robustness", "scalability", "timing")
ABLATIONS = {
    "HGNN": (True, True),
    "HGNN-noatt": (False, True),
    "HGNN-nores": (True, False),
    "HGNN-noatt-nores": (False, False),
}
PC_LABEL = "PC-AltMin (LS)"


def snr_db(scenario):
    """SNR as ``P_k / sigma2`` in dB (first BS)."""
    return float(10 * np.log10(scenario.P[0] / scenario.sigma2))


def sigma2_for(snr, P=1.0):
    return float(P / 10 ** (snr / 10))


@dataclass
class Protocol:
    n_train: int = 2000
    n_test: int = 200
    seeds: tuple = (0, 1, 2)
    train: TrainParams = field(default_factory=TrainParams)
    altmin_samples: int = 50  # classical baselines are slow; evaluated on a test prefix


def datasets(scenario: Scenario, protocol: Protocol, seed):
    """Train/test channels for ``seed``; independent of sigma2 and N_bar."""
    sc = scenario.replace(seed=seed)
    tr = gen_dataset(sc, protocol.n_train, np.random.default_rng([seed, 10]), "train")
    te = gen_dataset(sc, protocol.n_test, np.random.default_rng([seed, 11]), "test")
    return tr, te


def _key(*parts):
    return repr(parts)


class Runner:
    """Holds the protocol and caches trained models and datasets."""

    def __init__(self, protocol: Protocol | None = None, log=None):
        self.protocol = protocol or Protocol()
        self.log = log
        self._models = {}
        self._data = {}

    def data(self, scenario, seed):
        base = scenario.replace(seed=seed, N_bar=scenario.N_m, sigma2=1.0, structure="fully")
        k = _key(base)
        if k not in self._data:
            self._data[k] = datasets(base, self.protocol, seed)
        tr, te = self._data[k]

        def view(ds):
            v = with_active(ds, scenario.N_bar)
            return Dataset(v.scenario.replace(sigma2=scenario.sigma2, structure=scenario.structure),
                           v.samples, ds.split)

        return view(tr), view(te)

    def hgnn(self, scenario, config: HgnnConfig, seed):
        k = _key("hgnn", scenario, config, seed)
        if k not in self._models:
            tr, te = self.data(scenario, seed)
            params = replace(self.protocol.train, seed=seed)
            model = build_model(config, scenario, seed)
            t0 = time.perf_counter()
            res = fit(model, prepare(tr), prepare(te), params)
            if self.log:
                self.log(f"trained HGNN {config.structure} att={config.attention} res={config.residual} "
                         f"N_bar={scenario.N_bar} seed={seed}: {res.initial_test_se:.3f} -> "
                         f"{res.final_test_se:.3f} ({time.perf_counter() - t0:.0f}s)")
            self._models[k] = res
        return self._models[k]

    def mlp(self, scenario, structure, seed):
        k = _key("mlp", scenario, structure, seed)
        if k not in self._models:
            tr, te = self.data(scenario, seed)
            params = replace(self.protocol.train, seed=seed)
            model = FlatMLP(scenario, structure, rng=np.random.default_rng([seed, 0]))
            res = fit(model, prepare(tr), prepare(te), params)
            if self.log:
                self.log(f"trained MLP {structure} seed={seed}: {res.initial_test_se:.3f} -> "
                         f"{res.final_test_se:.3f}")
            self._models[k] = res
        return self._models[k]

    # rows

    def row(self, experiment, method, structure, scenario, seed, se, wall=float("nan"), flops=None):
        family = "HGNN" if method.startswith("HGNN") else "MLP" if method.startswith("MLP") else "AltMin"
        ov = overhead_report(scenario, family, structure) if method != "WMMSE" else \
            {"pilot": scenario.K * scenario.I_sum * scenario.N_m, "backhaul": 0}
        return {"experiment": experiment, "method": method, "structure": structure, "K": scenario.K,
                "I_sum": scenario.I_sum, "N_bar": scenario.N_bar, "snr_db": round(snr_db(scenario), 6),
                "seed": seed, "mean_sum_se": se, "wallclock_s": wall,
                "flops": "" if flops is None else flops,
                "pilot_overhead": ov["pilot"], "backhaul_overhead": ov["backhaul"]}

    def hgnn_rows(self, experiment, scenario, structure, seed, config=None, method="HGNN"):
        cfg = (config or HgnnConfig()).replace(structure=structure)
        sc = scenario.replace(structure=structure)
        res = self.hgnn(sc, cfg, seed)
        return [self.row(experiment, method, structure, sc, seed, res.final_test_se,
                         flops=flops_estimate(cfg, sc))]

    def classical_rows(self, experiment, scenario, seed, methods=("WMMSE", "MO-AltMin", PC_LABEL)):
        _, te = self.data(scenario, seed)
        n = min(self.protocol.altmin_samples, len(te))
        H = stack(te.samples[:n])[1]
        sc = te.scenario
        rng = np.random.default_rng([seed, 20])
        digital, hybrid = [], {"fully": [], "partially": []}
        t_dig = t_fc = t_pc = 0.0
        for h in H:
            t0 = time.perf_counter()
            dp = wmmse(h, sc.I, sc.P, sc.sigma2)
            t1 = time.perf_counter()
            digital.append(dp.V)
            t_dig += t1 - t0
            if "MO-AltMin" in methods:
                hybrid["fully"].append(hybrid_from_digital(dp.V, sc.P, "fully", rng)[0])
            t2 = time.perf_counter()
            if PC_LABEL in methods and all(sc.N_m % i == 0 for i in sc.I):
                hybrid["partially"].append(hybrid_from_digital(dp.V, sc.P, "partially", rng)[0])
            t3 = time.perf_counter()
            t_fc += t2 - t1
            t_pc += t3 - t2
        rows = []
        if "WMMSE" in methods:
            rows.append(self.row(experiment, "WMMSE", "digital", sc, seed,
                                 mean_sum_se(digital, H, sc.sigma2), t_dig / n))
        if hybrid["fully"]:
            rows.append(self.row(experiment, "MO-AltMin", "fully", sc, seed,
                                 mean_sum_se(hybrid["fully"], H, sc.sigma2), (t_dig + t_fc) / n))
        if hybrid["partially"]:
            rows.append(self.row(experiment, PC_LABEL, "partially", sc, seed,
                                 mean_sum_se(hybrid["partially"], H, sc.sigma2), (t_dig + t_pc) / n))
        return rows


# drivers


def snr_sweep(runner: Runner, scenario: Scenario, snrs=(0.0, 5.0, 10.0, 15.0, 20.0),
              structures=("fully", "partially"), classical=True):
    rows = []
    for seed in runner.protocol.seeds:
        for snr in snrs:
            sc = scenario.replace(sigma2=sigma2_for(snr, scenario.P[0]))
            for st in structures:
                rows += runner.hgnn_rows("snr_sweep", sc, st, seed)
                res = runner.mlp(sc.replace(structure=st), st, seed)
                rows.append(runner.row("snr_sweep", "MLP", st, sc.replace(structure=st), seed,
                                       res.final_test_se))
            if classical:
                rows += runner.classical_rows("snr_sweep", sc, seed)
    return rows


def ablation(runner: Runner, scenario: Scenario, structures=("fully", "partially"), config=None):
    rows = []
    base = config or HgnnConfig()
    for seed in runner.protocol.seeds:
        for st in structures:
            for name, (att, res) in ABLATIONS.items():
                cfg = base.replace(attention=att, residual=res)
                rows += runner.hgnn_rows("ablation", scenario, st, seed, cfg, method=name)
    return rows


def nbar_sweep(runner: Runner, scenario: Scenario, grid=(0, 2, 4, 8, 16), structures=("fully", "partially")):
    rows = []
    for seed in runner.protocol.seeds:
        for nb in grid:
            sc = scenario.replace(N_bar=nb)
            for st in structures:
                rows += runner.hgnn_rows("nbar_sweep", sc, st, seed)
    return rows


def perturb_edges(sample: ChannelSample, sigma_deg, rng):
    """Partial CSI rotated by one random phase per (UE, BS) link."""
    part = np.array([[apply_phase_error(v, sigma_deg, rng) for v in row] for row in sample.mm_partial])
    part = part.reshape(sample.mm_partial.shape)
    return ChannelSample(sample.sub6, sample.mm_full, sample.active_idx, part)


def phase_se(model, test: Dataset, sigma_deg, seed, batch=200):
    """Mean test sum-SE with phase errors on the edge features the model sees."""
    rng = np.random.default_rng([seed, 30])
    data = prepare(test, edge_transform=lambda s: perturb_edges(s, sigma_deg, rng))
    return evaluate(model, data, batch)


def phase_robustness(runner: Runner, scenario: Scenario, sigmas=(0.0, 5.0), structures=("fully", "partially")):
    rows = []
    for seed in runner.protocol.seeds:
        for st in structures:
            sc = scenario.replace(structure=st)
            cfg = HgnnConfig(structure=st)
            res = runner.hgnn(sc, cfg, seed)
            _, te = runner.data(sc, seed)
            for sd in sigmas:
                se = phase_se(res.model, te, sd, seed)
                rows.append(runner.row("phase_robustness", f"HGNN (phase error {sd:g}deg)", st, sc, seed, se,
                                       flops=flops_estimate(cfg, sc)))
    return rows


def transfer_se(model, scenario: Scenario, n, seed):
    """Mean sum-SE of a trained model on fresh samples of another layout, plus solutions."""
    ds = gen_dataset(scenario.replace(seed=seed), n, np.random.default_rng([seed, 40]), "test")
    data = prepare(ds)
    model.eval()
    sols = model.solve(data.graphs)
    return evaluate(model, data), sols, data


def scalability(runner: Runner, scenario: Scenario, targets=((3, 2), (2, 4)), structures=("fully",),
                retrain=True):
    """Train at ``scenario``; evaluate the same weights at other (K, I_k) layouts.

    With ``retrain`` the HGNN and MLP are also trained directly at each target.
    """
    rows = []
    max_rf = max([*scenario.I] + [i for _, i in targets])
    for seed in runner.protocol.seeds:
        for st in structures:
            sc = scenario.replace(structure=st)
            # heads sized for the largest cell so the weights can serve it
            cfg = HgnnConfig(structure=st, max_rf=max_rf)
            res = runner.hgnn(sc, cfg, seed)
            for K, I_k in targets:
                tgt = sc.replace(K=K, I=(I_k,) * K, P=(sc.P[0],) * K)
                se, _, _ = transfer_se(res.model, tgt, runner.protocol.n_test, seed)
                rows.append(runner.row("scalability", "HGNN (transferred)", st, tgt, seed, se,
                                       flops=flops_estimate(cfg, tgt)))
                if retrain:
                    rows += runner.hgnn_rows("scalability", tgt, st, seed)
                    m = runner.mlp(tgt, st, seed)
                    rows.append(runner.row("scalability", "MLP", st, tgt, seed, m.final_test_se))
    return rows


def timing(runner: Runner, scenario: Scenario, structures=("fully", "partially"), repeats=3):
    """Per-sample inference wall-clock of the learned models and the classical pipeline."""
    rows = []
    for seed in runner.protocol.seeds:
        _, te = runner.data(scenario, seed)
        for st in structures:
            sc = scenario.replace(structure=st)
            cfg = HgnnConfig(structure=st)
            for method, res in (("HGNN", runner.hgnn(sc, cfg, seed)), ("MLP", runner.mlp(sc, st, seed))):
                data = prepare(Dataset(sc, te.samples, "test"))
                res.model.eval()
                best = np.inf
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    se = evaluate(res.model, data)
                    best = min(best, time.perf_counter() - t0)
                rows.append(runner.row("timing", method, st, sc, seed, se, best / len(data),
                                       flops=flops_estimate(cfg, sc) if method == "HGNN" else None))
        rows += runner.classical_rows("timing", scenario, seed)
    return rows


DRIVERS = {"snr_sweep": snr_sweep, "ablation": ablation, "nbar_sweep": nbar_sweep,
           "phase_robustness": phase_robustness, "scalability": scalability, "timing": timing}


def run_experiment(kind, scenario: Scenario, runner: Runner | None = None, **kw):
    if kind not in DRIVERS:
        raise ValueError(f"unknown experiment {kind!r}; expected one of {KINDS}")
    return DRIVERS[kind](runner or Runner(), scenario, **kw)


def write_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def read_csv(path):
    with Path(path).open(newline="") as f:
        return list(csv.DictReader(f))
