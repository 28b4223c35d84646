from __future__ import annotations

from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class HgnnConfig:
    """Architecture of the heterogeneous GNN.

    Hidden widths exclude the input/output widths, which follow from ``D``
    and the scenario (``N_s``, ``N_bar``, ``N_m``, RF chains).
    ``max_rf`` sizes the output heads; ``None`` means "RF chains of the
    training scenario".
    """

    L: int = 2
    D: int = 64
    p_hidden: tuple = (96,)
    q_hidden: tuple = (96,)
    rf_hidden: tuple = (96,)
    bb_hidden: tuple = (50,)
    dropout: float = 0.3
    attention: bool = True
    residual: bool = True
    structure: str = "fully"
    max_rf: int | None = None

    def __post_init__(self):
        for name in ("p_hidden", "q_hidden", "rf_hidden", "bb_hidden"):
            object.__setattr__(self, name, tuple(int(w) for w in getattr(self, name)))
        problems = self.problems()
        if problems:
            raise ValueError("invalid HGNN config: " + "; ".join(problems))

    def problems(self):
        out = []
        if self.L < 0:
            out.append("L must be >= 0")
        if self.D < 1:
            out.append("D must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            out.append("dropout must be in [0, 1)")
        if self.structure not in ("fully", "partially"):
            out.append(f"unknown structure {self.structure!r}")
        if self.max_rf is not None and self.max_rf < 1:
            out.append("max_rf must be >= 1")
        return out

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return HgnnConfig(**d)

    def to_dict(self):
        d = asdict(self)
        for k in ("p_hidden", "q_hidden", "rf_hidden", "bb_hidden"):
            d[k] = list(d[k])
        return d


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 30
    batch_size: int = 10
    lr: float = 1e-3
    lr_decay: float = 0.9
    lr_interval: int = 5
    seed: int = 0
    eval_batch: int = 200
