"""Synthetic dual-band multi-cell channels.

Each (UE, BS) link gets a set of geometric paths. The same paths drive the
mmWave channel of the link and, for the serving link, the UE's sub-6GHz
channel, so the two bands share angles of departure and delays while their
bandwidths and array sizes differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .tensorio import load_tensors, save_tensors

MAX_DELAY = 100e-9
SECONDARY_PATH_POWER = 0.1
STRUCTURES = ("fully", "partially")


class ScenarioError(ValueError):
    """Raised with every violated scenario invariant listed."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario: " + "; ".join(self.problems))


@dataclass(frozen=True)
class Scenario:
    K: int = 2
    I: tuple = (2, 2)
    N_m: int = 16
    N_s: int = 8
    N_bar: int = 4
    N_c: int = 5
    P: tuple = (1.0, 1.0)
    sigma2: float = 0.1
    B_mm: float = 100e6
    B_sub: float = 10e6
    seed: int = 0
    structure: str = "fully"

    def __post_init__(self):
        object.__setattr__(self, "I", tuple(int(i) for i in self.I))
        object.__setattr__(self, "P", tuple(float(p) for p in self.P))
        problems = self.problems()
        if problems:
            raise ScenarioError(problems)

    def problems(self):
        out = []
        if self.K < 1:
            out.append(f"K must be >= 1 (got {self.K})")
        if len(self.I) != self.K:
            out.append(f"I must list one UE count per BS (len {len(self.I)} != K={self.K})")
        if any(i < 1 for i in self.I):
            out.append("every BS must serve at least one UE")
        if len(self.P) != self.K:
            out.append(f"P must list one power per BS (len {len(self.P)} != K={self.K})")
        if any(p <= 0 for p in self.P):
            out.append("all powers must be > 0")
        if self.sigma2 <= 0:
            out.append("sigma2 must be > 0")
        if self.N_m < 1 or self.N_s < 1:
            out.append("antenna counts must be >= 1")
        if not 0 <= self.N_bar <= self.N_m:
            out.append(f"N_bar must lie in [0, N_m] (got {self.N_bar})")
        if self.N_c < 1:
            out.append("N_c must be >= 1")
        if self.structure not in STRUCTURES:
            out.append(f"structure must be one of {STRUCTURES} (got {self.structure!r})")
        if self.structure == "partially":
            bad = [i for i in self.I if i >= 1 and self.N_m % i]
            if bad:
                out.append(f"partially-connected needs N_m divisible by every N_rf (N_m={self.N_m}, N_rf={bad})")
        return out

    @property
    def N_rf(self):
        return self.I

    @property
    def I_sum(self):
        return int(sum(self.I))

    @property
    def serving(self):
        """Serving BS of each UE, UEs ordered by (cell, index in cell)."""
        return np.repeat(np.arange(self.K), self.I)

    @property
    def slot(self):
        """Index of each UE within its own cell."""
        return np.concatenate([np.arange(i) for i in self.I])

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return Scenario(**d)

    def to_dict(self):
        d = asdict(self)
        d["I"] = list(self.I)
        d["P"] = list(self.P)
        return d


@dataclass(frozen=True)
class PathSet:
    aods: np.ndarray
    gains: np.ndarray
    phases: np.ndarray
    delays: np.ndarray

    def __len__(self):
        return len(self.aods)

    def __add__(self, other):
        return PathSet(*(np.concatenate([a, b]) for a, b in zip(
            (self.aods, self.gains, self.phases, self.delays),
            (other.aods, other.gains, other.phases, other.delays))))


@dataclass
class ChannelSample:
    """One network realisation; UE axis ordered by (cell, index in cell).

    ``sub6`` has shape ``(I_sum, N_s)``, ``mm_full`` ``(I_sum, K, N_m)`` and
    ``mm_partial`` ``(I_sum, K, N_bar)``.
    """

    sub6: np.ndarray
    mm_full: np.ndarray
    active_idx: np.ndarray
    mm_partial: np.ndarray = None

    def __post_init__(self):
        self.active_idx = np.asarray(self.active_idx, dtype=np.int64)
        if self.mm_partial is None:
            self.mm_partial = extract_partial(self.mm_full, self.active_idx)


@dataclass
class Dataset:
    scenario: Scenario
    samples: list = field(default_factory=list)
    split: str = "train"

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def check(self):
        sc = self.scenario
        for n, s in enumerate(self.samples):
            if s.sub6.shape != (sc.I_sum, sc.N_s) or s.mm_full.shape != (sc.I_sum, sc.K, sc.N_m) \
                    or s.mm_partial.shape != (sc.I_sum, sc.K, sc.N_bar):
                raise ValueError(f"sample {n} does not match scenario dimensions")


def array_response(phi, N):
    """Half-wavelength ULA steering vector ``(1/sqrt(N)) exp(j*pi*n*sin(phi))``."""
    n = np.arange(N)
    return np.exp(1j * np.pi * n * np.sin(phi)) / np.sqrt(N)


def gen_paths(scenario: Scenario, link=(0, 0), rng=None) -> PathSet:
    """Draw the geometric paths of one link.

    Without ``rng`` the generator is derived from ``(scenario.seed, *link)``,
    so the same link always yields the same paths.
    """
    if rng is None:
        rng = np.random.default_rng([scenario.seed, *link])
    nc = scenario.N_c
    aods = rng.uniform(-np.pi / 2, np.pi / 2, nc)
    # keep strictly inside the open interval
    aods = np.clip(aods, -np.pi / 2 + 1e-12, np.pi / 2 - 1e-12)
    delays = rng.uniform(0.0, MAX_DELAY, nc)
    phases = rng.uniform(0.0, 2 * np.pi, nc)
    gains = np.ones(nc)
    if nc > 1:
        cn = rng.standard_normal(nc - 1) + 1j * rng.standard_normal(nc - 1)
        gains[1:] = np.abs(np.sqrt(SECONDARY_PATH_POWER / 2) * cn)
    return PathSet(aods, gains, phases, delays)


def synth_channel(paths: PathSet, N, B):
    coeff = paths.gains * np.exp(1j * (paths.phases + 2 * np.pi * paths.delays * B))
    n = np.arange(N)
    steer = np.exp(1j * np.pi * np.outer(np.sin(paths.aods), n)) / np.sqrt(N)
    return np.sqrt(N / len(paths)) * (coeff @ steer)


def extract_partial(h_full, active_idx):
    """Gather the active-antenna entries along the last axis."""
    h_full = np.asarray(h_full)
    idx = np.asarray(active_idx, dtype=np.int64)
    n = h_full.shape[-1]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"active antenna index out of range for {n} antennas: {idx.tolist()}")
    return h_full[..., idx]


def apply_phase_error(h, sigma_deg, rng):
    """Rotate the whole vector by one random phase ``theta ~ N(0, sigma_deg^2)``."""
    if sigma_deg < 0:
        raise ValueError("sigma_deg must be >= 0")
    theta = rng.normal(0.0, np.deg2rad(sigma_deg)) if sigma_deg > 0 else 0.0
    return np.asarray(h) * np.exp(1j * theta)


def active_antennas(N_m, N_bar):
    return np.array([(t * N_m) // N_bar for t in range(N_bar)], dtype=np.int64)


def gen_sample(scenario: Scenario, rng) -> ChannelSample:
    sc = scenario
    serving = sc.serving
    mm = np.empty((sc.I_sum, sc.K, sc.N_m), dtype=np.complex128)
    sub6 = np.empty((sc.I_sum, sc.N_s), dtype=np.complex128)
    for u in range(sc.I_sum):
        for b in range(sc.K):
            paths = gen_paths(sc, (u, b), rng)
            mm[u, b] = synth_channel(paths, sc.N_m, sc.B_mm)
            if b == serving[u]:
                sub6[u] = synth_channel(paths, sc.N_s, sc.B_sub)
    return ChannelSample(sub6, mm, active_antennas(sc.N_m, sc.N_bar))


def gen_dataset(scenario: Scenario, n, rng=None, split="train") -> Dataset:
    """``n`` independent samples, each from its own spawned generator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    return Dataset(scenario, [gen_sample(scenario, r) for r in rng.spawn(n)], split)


def with_active(dataset: Dataset, N_bar) -> Dataset:
    """Same channels seen through a different number of active antennas."""
    sc = dataset.scenario.replace(N_bar=N_bar)
    idx = active_antennas(sc.N_m, N_bar)
    return Dataset(sc, [ChannelSample(s.sub6, s.mm_full, idx) for s in dataset.samples], dataset.split)


def save_dataset(dataset: Dataset, stem):
    samples = dataset.samples
    tensors = {
        "sub6": np.stack([s.sub6 for s in samples]),
        "mm_full": np.stack([s.mm_full for s in samples]),
        "mm_partial": np.stack([s.mm_partial for s in samples]),
        "active_idx": samples[0].active_idx.astype(np.float64),
    }
    meta = {"scenario": dataset.scenario.to_dict(), "n_samples": len(samples), "split": dataset.split}
    return save_tensors(stem, tensors, meta)


def load_dataset(stem) -> Dataset:
    t, meta = load_tensors(stem)
    sc = Scenario(**meta["scenario"])
    idx = t["active_idx"].astype(np.int64)
    samples = [ChannelSample(t["sub6"][n], t["mm_full"][n], idx, t["mm_partial"][n])
               for n in range(meta["n_samples"])]
    ds = Dataset(sc, samples, meta.get("split", "train"))
    ds.check()
    return ds


def stack(samples: Sequence[ChannelSample]):
    """Batch arrays ``(sub6, mm_full, mm_partial)`` with a leading sample axis."""
    return (np.stack([s.sub6 for s in samples]),
            np.stack([s.mm_full for s in samples]),
            np.stack([s.mm_partial for s in samples]))
