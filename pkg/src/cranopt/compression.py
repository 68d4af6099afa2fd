"""Compression strategy optimizer (adaptive and fixed quantization).

The central processor precodes for all users and forwards a per-antenna
quantized signal over the fronthaul. The rate-distortion relation with a
practical-quantizer gap ties the quantization noise power q to the share of
fronthaul capacity of each antenna. In adaptive mode q is a free variable
that the convex inner step drives to its rate-distortion lower bound, which
eliminates q and leaves a QCQP in the beamformers with shrunken per-antenna
budgets and a diagonal objective surcharge. In fixed mode the codebooks are
sized for the full antenna range and q is a constant floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import wmmse
from .data_sharing import csi_pins, group_norm_sq, mrt_init, normalize_weights, _power_constraints
from .network import ChannelRealization, NetworkConfig
from .numerics import solve_qcqp
from .results import SlotResult, backhaul_violation_rel, power_violation_rel
from .wmmse import BeamformerSet

_TINY = 1e-300
_EXP2_MAX = 500.0  # beyond this 2^c overflows; treat the link as unquantized


@dataclass
class QuantizationProfile:
    """Per-antenna quantization noise powers and fronthaul shares."""

    q: np.ndarray                  # (n,) linear noise power
    c_per_antenna_bps: np.ndarray  # (n,) fronthaul share, C_l / M_l
    mode: str                      # "adaptive" | "fixed"


@dataclass
class CompressionOptions:
    max_iters: int = 100
    tol: float = 1e-5
    dual_max: int = 500
    feas_tol: float = 1e-6
    thresh_rel: float = 1e-6
    record_trace: bool = False


def per_antenna_bits(cfg: NetworkConfig, backhaul_bps: Optional[np.ndarray] = None) -> np.ndarray:
    """Uniform per-antenna fronthaul allocation in bits per complex symbol."""
    c_bps = cfg.per_bs_backhaul_bps() if backhaul_bps is None else np.asarray(backhaul_bps, float)
    counts = cfg.bs_antenna_counts()
    share = c_bps / counts / cfg.bandwidth_hz
    return np.repeat(share, counts)


def kappa_from_bits(c_bits: np.ndarray, gamma_q: float) -> np.ndarray:
    """kappa = (2^c - 1) / gamma_q, the signal-to-quantization-noise budget."""
    c = np.asarray(c_bits, dtype=float)
    with np.errstate(over="ignore"):
        kap = np.expm1(c * math.log(2.0)) / gamma_q
    kap = np.where(c > _EXP2_MAX, np.inf, kap)
    return np.maximum(kap, 0.0)


def implied_q(w: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """Quantization noise from equality in the rate-distortion relation."""
    y = np.sum(np.abs(w) ** 2, axis=0)
    return np.where(np.isfinite(kappa) & (kappa > 0), y / np.where(kappa > 0, kappa, 1.0), 0.0)


def eliminate_quantization(A: np.ndarray, t: np.ndarray, kappa: np.ndarray,
                           p_ant: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Substitute the rate-distortion equality into the inner convex program.

    Returns the reduced per-user quadratic forms (t/kappa added on the
    diagonal) and the shrunken per-antenna power bounds
    p * kappa / (1 + kappa); antennas with no fronthaul get a zero bound.
    """
    inv_kap = np.where(np.isfinite(kappa) & (kappa > 0), 1.0 / np.where(kappa > 0, kappa, 1.0), 0.0)
    surcharge = t * inv_kap
    A_red = A.copy()
    idx = np.arange(A.shape[1])
    A_red[:, idx, idx] += surcharge
    with np.errstate(invalid="ignore"):
        bounds = np.where(np.isfinite(kappa), p_ant * kappa / (1.0 + kappa), p_ant)
    bounds = np.where(kappa <= 0, 0.0, bounds)
    return A_red, bounds


def fixed_profile(cfg: NetworkConfig, backhaul_bps: Optional[np.ndarray] = None
                  ) -> tuple[np.ndarray, np.ndarray, int]:
    """Fixed-codebook noise floor and usable per-antenna budgets.

    Antennas whose fronthaul share cannot even carry the quantization floor
    (2^c - 1 <= gamma_q) are unusable: budget 0, noise capped at the antenna
    power. Returns (q_fixed, budgets, n_floor_limited).
    """
    p_ant = cfg.per_antenna_power_w()
    kap = kappa_from_bits(per_antenna_bits(cfg, backhaul_bps), cfg.gamma_q)
    with np.errstate(divide="ignore"):
        q = np.where(kap > 0, np.minimum(p_ant / np.where(kap > 0, kap, 1.0), p_ant), p_ant)
    budgets = np.maximum(p_ant - q, 0.0)
    floor_limited = int(np.sum(kap <= 1.0))  # 2^c - 1 <= gamma_q
    return q, budgets, floor_limited


def optimize_compression(channel: ChannelRealization, alpha, cfg: NetworkConfig, *,
                         mode: str = "adaptive",
                         opts: Optional[CompressionOptions] = None,
                         backhaul_bps: Optional[np.ndarray] = None
                         ) -> tuple[BeamformerSet, QuantizationProfile, SlotResult]:
    """Joint beamformer/quantization optimization for one slot."""
    if mode not in ("adaptive", "fixed"):
        raise ValueError(f"unknown compression mode {mode!r}")
    opts = opts or CompressionOptions()
    K, L = cfg.num_users, cfg.num_bs
    offsets = cfg.antenna_offsets()
    counts = cfg.bs_antenna_counts()
    p_ant = cfg.per_antenna_power_w()
    sigma2 = cfg.noise_power_w
    gamma = cfg.gamma_m
    gamma_q = cfg.gamma_q
    bw = cfg.bandwidth_hz
    c_bps = cfg.per_bs_backhaul_bps() if backhaul_bps is None else np.asarray(backhaul_bps, float)

    alpha_n = normalize_weights(alpha, K)
    Hm = channel.masked_H(offsets)
    pins = csi_pins(channel, cfg)

    c_bits = per_antenna_bits(cfg, c_bps)
    kap = kappa_from_bits(c_bits, gamma_q)

    if mode == "fixed":
        q_fixed, budgets, floor_limited = fixed_profile(cfg, c_bps)
    else:
        q_fixed, budgets, floor_limited = None, None, 0

    # initialize within the usable budgets; q starts at the fixed-mode floor
    if mode == "fixed":
        init_budget = budgets
    else:
        _, init_budget = eliminate_quantization(np.zeros((1, len(p_ant), len(p_ant)), dtype=complex),
                                                np.zeros(len(p_ant)), kap, p_ant)
    w = mrt_init(Hm, offsets, np.maximum(init_budget, 0.0), cfg.per_bs_power_w(),
                 pins, channel.link_gain)
    q = q_fixed if mode == "fixed" else implied_q(w, kap)

    diag = {"iters": 0, "dual_evals": 0, "safeguard_hits": 0, "converged": False,
            "max_stationarity": 0.0, "floor_limited_antennas": floor_limited}
    trace: list[float] = []
    warm = None
    wsr_prev = None

    for _ in range(opts.max_iters):
        st = wmmse.mmse_receivers(Hm, w, sigma2, gamma, q)
        A, b = wmmse.assemble_forms(Hm, st.u, alpha_n, st.rho, gamma)
        if mode == "adaptive":
            t = wmmse.quantization_price(Hm, st.u, alpha_n, st.rho, gamma)
            A_eff, bounds = eliminate_quantization(A, t, kap, p_ant)
        else:
            A_eff, bounds = A, budgets
        sol = solve_qcqp((A_eff, b), _power_constraints(bounds), pins=pins,
                         warm=warm, start=w, dual_max_iter=opts.dual_max,
                         feas_tol=opts.feas_tol)
        warm = sol.warm
        diag["dual_evals"] += sol.n_dual_evals
        diag["max_stationarity"] = max(diag["max_stationarity"], sol.stationarity)
        q_new = implied_q(sol.w, kap) if mode == "adaptive" else q_fixed
        g_old = wmmse.weighted_mse_objective(Hm, w, st.u, st.rho, alpha_n, sigma2, gamma, q)
        g_new = wmmse.weighted_mse_objective(Hm, sol.w, st.u, st.rho, alpha_n, sigma2, gamma, q_new)
        diag["iters"] += 1
        if g_new <= g_old * (1.0 + 1e-12):
            w, q = sol.w, q_new
        else:
            diag["safeguard_hits"] += 1
            break
        wsr = float(np.sum(alpha_n * wmmse.spectral_rates(wmmse.sinr_all(Hm, w, sigma2, q), gamma)))
        if opts.record_trace:
            trace.append(wsr)
        if wsr_prev is not None and abs(wsr - wsr_prev) <= opts.tol * max(abs(wsr_prev), _TINY):
            diag["converged"] = True
            break
        wsr_prev = wsr

    if opts.record_trace:
        diag["wsr_trace"] = trace

    rates_bps = wmmse.rate(wmmse.sinr_all(channel.H, w, sigma2, q), gamma, bw)
    usage_ant = fronthaul_bits_used(w, q, gamma_q)  # bits/symbol per antenna
    usage_bps = np.add.reduceat(usage_ant, offsets[:-1]) * bw

    gn = group_norm_sq(w, offsets)
    eps_w = opts.thresh_rel * cfg.per_bs_power_w()
    clusters = [sorted(np.flatnonzero(gn[:, k] > eps_w).tolist()) for k in range(K)]

    result = SlotResult(
        rates_bps=rates_bps,
        backhaul_data_bps=np.zeros(L),
        backhaul_comp_bps=usage_bps,
        clusters=clusters,
        power_violation_rel=power_violation_rel(w, p_ant, q),
        backhaul_violation_rel=backhaul_violation_rel(usage_bps, c_bps),
        diagnostics=diag,
    )
    profile = QuantizationProfile(q=q, c_per_antenna_bps=np.repeat(c_bps / counts, counts), mode=mode)
    return BeamformerSet(w=w), profile, result


def fronthaul_bits_used(w: np.ndarray, q: np.ndarray, gamma_q: float) -> np.ndarray:
    """Actual per-antenna fronthaul consumption log2(1 + gamma_q * sum|w|^2 / q)."""
    y = np.sum(np.abs(w) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        bits = np.log2(1.0 + gamma_q * y / q)
    return np.where(y <= 0.0, 0.0, np.where(q > 0, bits, np.inf))
