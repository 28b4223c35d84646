from .altmin import AltMinReport, hybrid_from_digital, mo_altmin, pc_altmin, scale_power
from .mlp import FlatMLP
from .wmmse import DigitalPrecoder, mrt, wmmse

__all__ = ["AltMinReport", "hybrid_from_digital", "mo_altmin", "pc_altmin", "scale_power",
           "FlatMLP", "DigitalPrecoder", "mrt", "wmmse"]
