"""Shared fixtures and synthetic-instance helpers."""

import math

import numpy as np
import pytest

from cranopt.network import ChannelRealization, NetworkConfig


def watt_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w) + 30.0


def synthetic_cfg(*, cells=1, picos=2, users=4, m_macro=1, m_pico=1, n_rx=1,
                  p_w=10.0, sigma2_w=1.0, gamma_m_db=0.0, gamma_q_db=4.3,
                  c_macro=8.0, c_pico=8.0, csi="full", seed=0) -> NetworkConfig:
    """Unit-bandwidth scenario: capacities in bits/s equal bits per symbol.

    noise_psd is chosen so the total noise power equals ``sigma2_w``.
    """
    return NetworkConfig(
        num_cells=cells,
        picos_per_cell=picos,
        users_per_cell=users,
        antennas_macro=m_macro,
        antennas_pico=m_pico,
        rx_antennas=n_rx,
        bandwidth_hz=1.0,
        power_macro_dbm=watt_to_dbm(p_w),
        power_pico_dbm=watt_to_dbm(p_w),
        antenna_gain_dbi=0.0,
        noise_psd_dbm_hz=watt_to_dbm(sigma2_w),
        shadowing_std_db=0.0,
        gamma_m_db=gamma_m_db,
        gamma_q_db=gamma_q_db,
        backhaul_macro_bps=c_macro,
        backhaul_pico_bps=c_pico,
        csi_cluster_size=csi,
        rng_seed=seed,
    )


def random_channel(cfg: NetworkConfig, rng: np.random.Generator,
                   gain_spread_db: float = 10.0) -> ChannelRealization:
    """Random i.i.d. channel with per-link gain diversity; full CSI."""
    K, L, N, n = cfg.num_users, cfg.num_bs, cfg.rx_antennas, cfg.total_antennas
    counts = cfg.bs_antenna_counts()
    gain_db = rng.uniform(-gain_spread_db, 0.0, size=(K, L))
    gain = 10.0 ** (gain_db / 10.0)
    amp = np.sqrt(np.repeat(gain, counts, axis=1))
    fad = (rng.standard_normal((K, N, n)) + 1j * rng.standard_normal((K, N, n))) / np.sqrt(2.0)
    H = fad * amp[:, None, :]
    return ChannelRealization(H=H, csi_mask=np.ones((K, L), dtype=bool), link_gain=gain)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
