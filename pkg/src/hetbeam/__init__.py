"""Hybrid beamforming for sub-6GHz-assisted mmWave networks with a heterogeneous GNN."""

__version__ = "0.1.0"
