"""Reference schemes: full cooperation and strongest-BS-only service."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .data_sharing import DataSharingOptions, optimize_data_sharing
from .network import ChannelRealization, NetworkConfig


def optimize_full_coop(channel: ChannelRealization, alpha, cfg: NetworkConfig, *,
                       opts: Optional[DataSharingOptions] = None):
    """Unquantized full cooperation: WMMSE with the backhaul constraints disabled."""
    c_inf = np.full(cfg.num_bs, np.inf)
    return optimize_data_sharing(channel, alpha, cfg, opts=opts, backhaul_bps=c_inf)


def optimize_no_coop(channel: ChannelRealization, alpha, cfg: NetworkConfig, *,
                     opts: Optional[DataSharingOptions] = None):
    """No cooperation: every user is served only by its strongest BS."""
    offsets = cfg.antenna_offsets()
    counts = cfg.bs_antenna_counts()
    rx = channel.link_gain * cfg.per_bs_power_w()[None, :]
    rx = np.where(channel.csi_mask, rx, -np.inf)
    strongest = np.argmax(rx, axis=1)
    keep = np.zeros((cfg.num_users, cfg.num_bs), dtype=bool)
    keep[np.arange(cfg.num_users), strongest] = True
    extra_pins = np.repeat(~keep, counts, axis=1)
    return optimize_data_sharing(channel, alpha, cfg, opts=opts, extra_pins=extra_pins)
