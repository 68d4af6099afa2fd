"""Downlink C-RAN transmission strategy optimization.

Optimizes and compares data-sharing, fronthaul-compression (adaptive and
fixed quantization), and hybrid transmission under finite per-BS backhaul,
with WMMSE-based weighted sum rate maximization and proportional-fair
scheduling across slots.
"""

from ._backend import KERNEL_NAME
from .network import ChannelRealization, ConfigError, NetworkConfig, Topology, build_topology, draw_channel, path_loss_db
from .numerics import HermitianForm, NumericsError, QuadraticConstraint, solve_hpd, solve_qcqp
from .wmmse import BeamformerSet, ReceiverState, compute_sinr, mmse_receiver, rate

__all__ = [
    "KERNEL_NAME",
    "BeamformerSet",
    "ChannelRealization",
    "ConfigError",
    "HermitianForm",
    "NetworkConfig",
    "NumericsError",
    "QuadraticConstraint",
    "ReceiverState",
    "Topology",
    "build_topology",
    "compute_sinr",
    "draw_channel",
    "mmse_receiver",
    "path_loss_db",
    "rate",
    "solve_hpd",
    "solve_qcqp",
]

__version__ = "0.1.0"
