"""Per-slot result records and their JSON serialization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class SlotResult:
    """Outcome of one scheduling slot for one strategy.

    Rates are the achieved rates evaluated on the true channel. The backhaul
    consumption is split into the data-sharing part (user bits replicated to
    cluster members) and the compression part (fronthaul bits of the
    quantized precoded signal).
    """

    rates_bps: np.ndarray              # (K,)
    backhaul_data_bps: np.ndarray      # (L,)
    backhaul_comp_bps: np.ndarray      # (L,)
    clusters: list                     # per user: sorted list of serving BS indices
    power_violation_rel: float
    backhaul_violation_rel: float
    diagnostics: dict = field(default_factory=dict)
    modes: Optional[dict] = None       # hybrid only: {"data": [[l,k],...], ...}

    @property
    def sum_rate_bps(self) -> float:
        return float(np.sum(self.rates_bps))

    def to_json_dict(self) -> dict:
        d = {
            "rates_bps": [float(r) for r in self.rates_bps],
            "sum_rate_bps": self.sum_rate_bps,
            "backhaul_data_bps": [float(x) for x in self.backhaul_data_bps],
            "backhaul_comp_bps": [float(x) for x in self.backhaul_comp_bps],
            "clusters": [[int(l) for l in c] for c in self.clusters],
            "power_violation_rel": float(self.power_violation_rel),
            "backhaul_violation_rel": float(self.backhaul_violation_rel),
            "diagnostics": self.diagnostics,
        }
        if self.modes is not None:
            d["modes"] = self.modes
        return d


def power_violation_rel(w: np.ndarray, p_ant: np.ndarray, q: Optional[np.ndarray] = None) -> float:
    """Max relative excess of per-antenna power sum_k |w_{k,i}|^2 (+ q_i) over budget."""
    used = np.sum(np.abs(w) ** 2, axis=0)
    if q is not None:
        used = used + q
    return float(np.max((used - p_ant) / p_ant, initial=0.0))


def backhaul_violation_rel(usage_bps: np.ndarray, capacity_bps: np.ndarray) -> float:
    viol = 0.0
    for u, c in zip(usage_bps, capacity_bps):
        if not np.isfinite(c):
            continue
        viol = max(viol, (u - c) / c if c > 0 else float(u > 1e-9))
    return float(max(viol, 0.0))
