"""Multi-cell topology and per-slot channel generation.

Hexagonal cell layouts with torus wraparound, per-tier path loss,
log-normal shadowing, Rayleigh fading, and optional clustering of the
channel state information (CSI) to each user's strongest base stations.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

TIER_MACRO = 0
TIER_PICO = 1

# path loss in dB at distance d km: a + b*log10(d)
_PATH_LOSS_COEFFS = {
    TIER_MACRO: (128.1, 37.6),
    TIER_PICO: (140.7, 36.7),
}

D_MIN_KM = 0.01  # clamp to avoid the log singularity at d = 0

# sub-stream labels for counter-based RNG splitting
_RNG_USER_DROP = 0
_RNG_SHADOWING = 1
_RNG_FADING = 2


class ConfigError(ValueError):
    """Invalid scenario configuration."""


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watt(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def _sub_rng(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    # counter-based splitting: (purpose, index) spawn keys off one master seed,
    # so every strategy sees the identical channel stream
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(purpose, index)))


@dataclass(frozen=True)
class NetworkConfig:
    """Scenario parameters for one experiment.

    Powers are per antenna in dBm, capacities in bits/s, gaps in dB.
    ``csi_cluster_size`` is either ``"full"`` or the number of strongest
    base stations whose CSI is available per user.
    """

    num_cells: int = 7
    macro_per_cell: int = 1
    picos_per_cell: int = 3
    users_per_cell: int = 30
    antennas_macro: int = 1
    antennas_pico: int = 1
    rx_antennas: int = 1
    intercell_distance_km: float = 0.8
    bandwidth_hz: float = 10e6
    power_macro_dbm: float = 43.0
    power_pico_dbm: float = 30.0
    antenna_gain_dbi: float = 15.0
    noise_psd_dbm_hz: float = -150.0
    shadowing_std_db: float = 8.0
    gamma_m_db: float = 9.0
    gamma_q_db: float = 4.3
    backhaul_macro_bps: float = 40e6
    backhaul_pico_bps: float = 20e6
    csi_cluster_size: Union[int, str] = "full"
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_cells < 1 or self.users_per_cell < 1:
            raise ConfigError("num_cells and users_per_cell must be >= 1")
        if self.macro_per_cell != 1:
            raise ConfigError("only one macro BS per cell is supported")
        if self.picos_per_cell < 0:
            raise ConfigError("picos_per_cell must be >= 0")
        if self.antennas_macro < 1 or (self.picos_per_cell > 0 and self.antennas_pico < 1):
            raise ConfigError("antenna counts must be >= 1")
        if self.rx_antennas < 1:
            raise ConfigError("rx_antennas must be >= 1")
        for name in ("intercell_distance_km", "bandwidth_hz"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("backhaul_macro_bps", "backhaul_pico_bps"):
            v = getattr(self, name)
            if not (v >= 0):
                raise ConfigError(f"{name} must be nonnegative")
        if self.gamma_m_db < 0 or self.gamma_q_db < 0:
            raise ConfigError("gamma_m_db and gamma_q_db must be >= 0 dB")
        if self.csi_cluster_size != "full":
            c = self.csi_cluster_size
            if not isinstance(c, int) or c < 1 or c > self.num_bs:
                raise ConfigError("csi_cluster_size must be 'full' or an int in [1, num_bs]")

    # --- derived layout -------------------------------------------------

    @property
    def num_bs(self) -> int:
        return self.num_cells * (1 + self.picos_per_cell)

    @property
    def num_users(self) -> int:
        return self.num_cells * self.users_per_cell

    def bs_tiers(self) -> np.ndarray:
        per_cell = [TIER_MACRO] + [TIER_PICO] * self.picos_per_cell
        return np.asarray(per_cell * self.num_cells, dtype=np.int8)

    def bs_antenna_counts(self) -> np.ndarray:
        tiers = self.bs_tiers()
        return np.where(tiers == TIER_MACRO, self.antennas_macro, self.antennas_pico).astype(int)

    def antenna_offsets(self) -> np.ndarray:
        """Start index of each BS's antenna block; length num_bs + 1."""
        return np.concatenate(([0], np.cumsum(self.bs_antenna_counts())))

    @property
    def total_antennas(self) -> int:
        return int(self.bs_antenna_counts().sum())

    def per_antenna_power_w(self) -> np.ndarray:
        """Per-antenna power budgets, flat over all BS antenna blocks."""
        tiers = self.bs_tiers()
        p_bs = np.where(tiers == TIER_MACRO, dbm_to_watt(self.power_macro_dbm),
                        dbm_to_watt(self.power_pico_dbm))
        return np.repeat(p_bs, self.bs_antenna_counts())

    def per_bs_power_w(self) -> np.ndarray:
        counts = self.bs_antenna_counts()
        return self.per_antenna_power_w()[self.antenna_offsets()[:-1]] * counts

    def per_bs_backhaul_bps(self) -> np.ndarray:
        tiers = self.bs_tiers()
        return np.where(tiers == TIER_MACRO, self.backhaul_macro_bps, self.backhaul_pico_bps).astype(float)

    @property
    def noise_power_w(self) -> float:
        return float(dbm_to_watt(self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz)))

    @property
    def gamma_m(self) -> float:
        return float(db_to_linear(self.gamma_m_db))

    @property
    def gamma_q(self) -> float:
        return float(db_to_linear(self.gamma_q_db))

    def csi_size(self) -> int:
        return self.num_bs if self.csi_cluster_size == "full" else int(self.csi_cluster_size)

    # --- config file I/O --------------------------------------------------

    @classmethod
    def from_mapping(cls, mapping: dict) -> "NetworkConfig":
        kwargs = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in mapping.items():
            if key not in fields:
                raise ConfigError(f"unknown scenario key '{key}'")
            kwargs[key] = _coerce_field(key, raw)
        return cls(**kwargs)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


_INT_FIELDS = {"num_cells", "macro_per_cell", "picos_per_cell", "users_per_cell",
               "antennas_macro", "antennas_pico", "rx_antennas", "rng_seed"}


def _coerce_field(key: str, raw):
    if isinstance(raw, str):
        raw = raw.strip()
    if key == "csi_cluster_size":
        if raw == "full":
            return "full"
        return int(raw)
    if key in _INT_FIELDS:
        return int(raw)
    return float(raw)


def parse_key_values(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment. Raises with line numbers."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = body.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        out[key] = value.strip()
    return out


# --- topology -------------------------------------------------------------


@dataclass(frozen=True)
class Topology:
    """Base-station and user positions (km) plus the torus mirror offsets."""

    bs_xy: np.ndarray        # (L, 2)
    bs_tier: np.ndarray      # (L,) TIER_*
    bs_cell: np.ndarray      # (L,)
    user_xy: np.ndarray      # (K, 2)
    user_cell: np.ndarray    # (K,)
    wrap_offsets: np.ndarray  # (W, 2), includes the zero offset
    cell_radius_km: float    # hexagon circumradius


def _lattice_basis(d: float) -> tuple[np.ndarray, np.ndarray]:
    a1 = d * np.array([math.sqrt(3.0) / 2.0, 0.5])
    a2 = d * np.array([0.0, 1.0])
    return a1, a2


# cluster parameters (i, j) with num_cells = i^2 + i*j + j^2
_CLUSTER_IJ = {1: (1, 0), 3: (1, 1), 7: (2, 1)}


def _cell_centers(num_cells: int, a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    if num_cells == 1:
        return np.zeros((1, 2))
    if num_cells == 3:
        return np.stack([np.zeros(2), a1, a2])
    if num_cells == 7:
        ring = [a1, a2, a2 - a1, -a1, -a2, a1 - a2]
        return np.stack([np.zeros(2)] + ring)
    raise ConfigError(f"no wraparound layout defined for num_cells={num_cells} "
                      f"(supported: {sorted(_CLUSTER_IJ)})")


def _wrap_offsets(num_cells: int, a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    i, j = _CLUSTER_IJ[num_cells]
    t1 = i * a1 + j * a2
    t2 = -j * a1 + (i + j) * a2
    offs = [m * t1 + n * t2 for m in (-1, 0, 1) for n in (-1, 0, 1)]
    return np.stack(offs)


def _in_hexagon(xy: np.ndarray, radius: float) -> np.ndarray:
    # flat-topped hexagon, circumradius `radius`, centered at origin
    x = np.abs(xy[..., 0])
    y = np.abs(xy[..., 1])
    s3 = math.sqrt(3.0)
    return (y <= s3 * radius / 2.0 + 1e-12) & (s3 * x + y <= s3 * radius + 1e-12)


def _sample_in_hexagon(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        cand = rng.uniform(-radius, radius, size=(2 * (n - filled) + 8, 2))
        cand[:, 1] *= math.sqrt(3.0) / 2.0
        ok = cand[_in_hexagon(cand, radius)]
        take = min(n - filled, len(ok))
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


def build_topology(cfg: NetworkConfig) -> Topology:
    """Place macro/pico BSs and drop users uniformly in each hexagonal cell."""
    if cfg.num_cells not in _CLUSTER_IJ:
        raise ConfigError(f"no wraparound layout defined for num_cells={cfg.num_cells} "
                          f"(supported: {sorted(_CLUSTER_IJ)})")
    d = cfg.intercell_distance_km
    a1, a2 = _lattice_basis(d)
    centers = _cell_centers(cfg.num_cells, a1, a2)
    radius = d / math.sqrt(3.0)

    # picos equally spaced on a ring of radius d/3
    pico_angles = np.deg2rad([90.0, 210.0, 330.0])
    if cfg.picos_per_cell not in (0, 3):
        pico_angles = np.deg2rad(90.0 + 360.0 * np.arange(cfg.picos_per_cell) / max(cfg.picos_per_cell, 1))
    pico_ring = (d / 3.0) * np.stack([np.cos(pico_angles), np.sin(pico_angles)], axis=1)

    bs_xy, bs_tier, bs_cell = [], [], []
    for c, center in enumerate(centers):
        bs_xy.append(center)
        bs_tier.append(TIER_MACRO)
        bs_cell.append(c)
        for p in range(cfg.picos_per_cell):
            bs_xy.append(center + pico_ring[p])
            bs_tier.append(TIER_PICO)
            bs_cell.append(c)

    rng = _sub_rng(cfg.rng_seed, _RNG_USER_DROP)
    user_xy, user_cell = [], []
    for c, center in enumerate(centers):
        pts = center + _sample_in_hexagon(rng, cfg.users_per_cell, radius)
        user_xy.append(pts)
        user_cell.extend([c] * cfg.users_per_cell)

    return Topology(
        bs_xy=np.asarray(bs_xy, dtype=float),
        bs_tier=np.asarray(bs_tier, dtype=np.int8),
        bs_cell=np.asarray(bs_cell, dtype=int),
        user_xy=np.concatenate(user_xy, axis=0),
        user_cell=np.asarray(user_cell, dtype=int),
        wrap_offsets=_wrap_offsets(cfg.num_cells, a1, a2),
        cell_radius_km=radius,
    )


def wrap_distance_km(a_xy: np.ndarray, b_xy: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Minimum distance between points of `a_xy` (A,2) and `b_xy` (B,2) over all mirror offsets."""
    a = np.atleast_2d(a_xy)[:, None, None, :]        # (A, 1, 1, 2)
    b = np.atleast_2d(b_xy)[None, :, None, :]        # (1, B, 1, 2)
    diff = a - (b + offsets[None, None, :, :])       # (A, B, W, 2)
    return np.sqrt((diff ** 2).sum(axis=-1)).min(axis=-1)


def path_loss_db(distance_km, tier) -> np.ndarray:
    """Deterministic path loss in dB before shadowing and antenna gain."""
    d = np.maximum(np.asarray(distance_km, dtype=float), D_MIN_KM)
    tier = np.asarray(tier)
    a = np.where(tier == TIER_MACRO, _PATH_LOSS_COEFFS[TIER_MACRO][0], _PATH_LOSS_COEFFS[TIER_PICO][0])
    b = np.where(tier == TIER_MACRO, _PATH_LOSS_COEFFS[TIER_MACRO][1], _PATH_LOSS_COEFFS[TIER_PICO][1])
    return a + b * np.log10(d)


@dataclass(frozen=True)
class ChannelRealization:
    """One slot's channel: per-user H stacked over all BS antennas.

    ``H[k]`` is (N, n_total) in linear amplitude. ``csi_mask[k, l]`` marks
    whether the optimizer may use the channel from BS ``l`` to user ``k``;
    masked entries must be treated as zero by every optimizer.
    ``link_gain[k, l]`` is the average received linear power gain of the
    link (before fast fading), kept for strongest-BS lookups.
    """

    H: np.ndarray          # (K, N, n) complex128
    csi_mask: np.ndarray   # (K, L) bool
    link_gain: np.ndarray  # (K, L) float

    def masked_H(self, offsets: np.ndarray) -> np.ndarray:
        """Copy of H with columns of CSI-masked BSs zeroed."""
        Hm = self.H.copy()
        K, L = self.csi_mask.shape
        for l in range(L):
            cols = slice(offsets[l], offsets[l + 1])
            off = ~self.csi_mask[:, l]
            if off.any():
                Hm[off, :, cols] = 0.0
        return Hm

    def strongest_bs(self) -> np.ndarray:
        return np.argmax(self.link_gain, axis=1)


def draw_channel(topology: Topology, cfg: NetworkConfig, slot: int, *,
                 unit_fading: bool = False) -> ChannelRealization:
    """Draw the slot's channel realization.

    Shadowing is drawn from a slot-independent sub-stream (static per seed,
    like the user drop); fast fading is redrawn per slot. ``unit_fading``
    replaces the fading samples by 1 for deterministic tests.
    """
    dist = wrap_distance_km(topology.user_xy, topology.bs_xy, topology.wrap_offsets)  # (K, L)
    pl_db = path_loss_db(dist, topology.bs_tier[None, :])

    rng_shadow = _sub_rng(cfg.rng_seed, _RNG_SHADOWING)
    shadow_db = rng_shadow.normal(0.0, cfg.shadowing_std_db, size=pl_db.shape) if cfg.shadowing_std_db > 0 \
        else np.zeros_like(pl_db)

    gain_db = cfg.antenna_gain_dbi - pl_db - shadow_db
    gain_lin = db_to_linear(gain_db)  # (K, L) power gain

    counts = cfg.bs_antenna_counts()
    offsets = cfg.antenna_offsets()
    n = cfg.total_antennas
    K, L, N = cfg.num_users, cfg.num_bs, cfg.rx_antennas

    if unit_fading:
        fading = np.ones((K, N, n), dtype=np.complex128)
    else:
        rng_fade = _sub_rng(cfg.rng_seed, _RNG_FADING, slot)
        re = rng_fade.standard_normal((K, N, n))
        im = rng_fade.standard_normal((K, N, n))
        fading = (re + 1j * im) / math.sqrt(2.0)

    amp = np.sqrt(np.repeat(gain_lin, counts, axis=1))  # (K, n)
    H = fading * amp[:, None, :]

    # CSI restricted to the strongest BSs by average received power
    rx_power = gain_lin * (cfg.per_antenna_power_w()[offsets[:-1]] * counts)[None, :]
    csi = cfg.csi_size()
    if csi >= L:
        mask = np.ones((K, L), dtype=bool)
    else:
        order = np.argsort(-rx_power, axis=1)
        mask = np.zeros((K, L), dtype=bool)
        np.put_along_axis(mask, order[:, :csi], True, axis=1)

    return ChannelRealization(H=H, csi_mask=mask, link_gain=gain_lin)


def save_channels(path, channels: list[ChannelRealization]) -> None:
    """Dump realizations to a .npz archive (H, csi_mask, link_gain stacked per slot)."""
    np.savez_compressed(
        path,
        H=np.stack([c.H for c in channels]),
        csi_mask=np.stack([c.csi_mask for c in channels]),
        link_gain=np.stack([c.link_gain for c in channels]),
    )


def load_channels(path) -> list[ChannelRealization]:
    data = np.load(path)
    return [ChannelRealization(H=data["H"][t], csi_mask=data["csi_mask"][t],
                               link_gain=data["link_gain"][t])
            for t in range(data["H"].shape[0])]
