"""Data-sharing strategy optimizer.

Weighted sum rate maximization where each user's message is replicated to a
sparse cluster of serving BSs. Cluster sparsity under the per-BS backhaul
budget is induced by iteratively reweighted l2-norm surrogates of the
indicator backhaul cost; the inner loop is WMMSE block-coordinate descent
with the beamformer step solved as a QCQP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import wmmse
from .network import ChannelRealization, NetworkConfig
from .numerics import QuadraticConstraint, solve_qcqp
from .results import SlotResult, backhaul_violation_rel, power_violation_rel
from .wmmse import BeamformerSet

_TINY = 1e-300


@dataclass
class ClusterWeights:
    """Reweighted-l1 surrogate weights beta[l, k] = 1 / (||w_{l,k}||^2 + tau)."""

    beta: np.ndarray  # (L, K)
    tau: float


@dataclass
class DataSharingOptions:
    outer_max: int = 30
    inner_max: int = 100
    outer_tol: float = 1e-4
    inner_tol: float = 1e-5
    dual_max: int = 500
    feas_tol: float = 1e-6
    backhaul_margin: float = 1e-3  # inner surrogate keeps this much slack
    tau_rel: float = 1e-10       # tau = tau_rel * max per-BS power
    thresh_rel: float = 1e-6     # membership threshold = thresh_rel * per-BS power
    repair_max: int = 25
    repair_inner: int = 15
    record_trace: bool = False


def group_norm_sq(w: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-(BS, user) squared beamformer norms ||w_{l,k}||^2, shape (L, K)."""
    y = np.abs(w) ** 2  # (K, n)
    return np.add.reduceat(y, offsets[:-1], axis=1).T


def update_cluster_weights(w: np.ndarray, offsets: np.ndarray, tau: float) -> ClusterWeights:
    """Reciprocal reweighting of the group norms; tau keeps dropped links alive."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return ClusterWeights(beta=1.0 / (group_norm_sq(w, offsets) + tau), tau=tau)


def backhaul_usage_exact(w: np.ndarray, rates_bps: np.ndarray, offsets: np.ndarray,
                         eps_w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indicator-based backhaul consumption: each member BS carries the full user rate.

    Returns (usage_bps (L,), members (L, K)).
    """
    gn = group_norm_sq(w, offsets)
    members = gn > np.asarray(eps_w)[:, None]
    usage = members @ np.asarray(rates_bps, dtype=float)
    return usage, members


def csi_pins(channel: ChannelRealization, cfg: NetworkConfig) -> np.ndarray:
    """(K, n) mask of beamformer coefficients unavailable for lack of CSI."""
    offsets = cfg.antenna_offsets()
    counts = cfg.bs_antenna_counts()
    return np.repeat(~channel.csi_mask, counts, axis=1)


def normalize_weights(alpha: np.ndarray, num_users: int) -> np.ndarray:
    """Scheduler weights normalized to mean one (the argmax is scale invariant)."""
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (num_users,)).copy()
    if a.min() < 0:
        raise ValueError("scheduler weights must be nonnegative")
    m = a.mean()
    return a / m if m > 0 else np.ones(num_users)


def mrt_init(Hm: np.ndarray, offsets: np.ndarray, p_ant: np.ndarray,
             bs_power_w: np.ndarray, pins: np.ndarray,
             link_gain: np.ndarray) -> np.ndarray:
    """Initial beamformers: match each user's strongest usable BS, with the
    per-antenna budgets split equally over that BS's users."""
    K, _, n = Hm.shape
    L = len(offsets) - 1

    rx = link_gain * bs_power_w[None, :]
    usable = np.ones((K, L), dtype=bool)
    for l in range(L):
        cols = slice(offsets[l], offsets[l + 1])
        usable[:, l] = ~pins[:, cols].all(axis=1)
    rx = np.where(usable, rx, -np.inf)
    strongest = np.argmax(rx, axis=1)

    counts = np.bincount(strongest, minlength=L).astype(float)
    w = np.zeros((K, n), dtype=np.complex128)
    for k in range(K):
        l = strongest[k]
        if not usable[k, l]:
            continue
        cols = slice(offsets[l], offsets[l + 1])
        d = Hm[k][:, cols].conj().sum(axis=0)
        mag = np.abs(d)
        if mag.max() <= 0:
            continue
        share = p_ant[cols] / counts[l]
        with np.errstate(divide="ignore"):
            scale = np.sqrt(np.min(np.where(mag > 0, share / np.maximum(mag**2, _TINY), np.inf)))
        w[k, cols] = scale * d
    w[pins] = 0.0
    return w


def _power_constraints(p_ant: np.ndarray) -> list[QuadraticConstraint]:
    n = len(p_ant)
    eye = np.eye(n)
    return [QuadraticConstraint(1.0, eye[i], float(p_ant[i]), kind="power") for i in range(n)]


def optimize_data_sharing(channel: ChannelRealization, alpha, cfg: NetworkConfig, *,
                          opts: Optional[DataSharingOptions] = None,
                          extra_pins: Optional[np.ndarray] = None,
                          backhaul_bps: Optional[np.ndarray] = None,
                          finalize: bool = True
                          ) -> tuple[BeamformerSet, SlotResult]:
    """Run the full data-sharing optimization for one scheduling slot.

    `extra_pins` forces additional (user, antenna) coefficients to zero (used
    by the no-cooperation baseline); `backhaul_bps` overrides the per-BS
    capacities (np.inf disables the constraint, giving full cooperation).
    `finalize=False` skips the threshold-and-repair post-processing and
    returns the raw iterate (used to warm start the hybrid scheme).
    """
    opts = opts or DataSharingOptions()
    K, L = cfg.num_users, cfg.num_bs
    offsets = cfg.antenna_offsets()
    p_ant = cfg.per_antenna_power_w()
    p_bs = cfg.per_bs_power_w()
    sigma2 = cfg.noise_power_w
    gamma = cfg.gamma_m
    bw = cfg.bandwidth_hz

    c_bps = cfg.per_bs_backhaul_bps() if backhaul_bps is None else np.asarray(backhaul_bps, float)
    c_sym = c_bps / bw  # bits per complex symbol

    alpha_n = normalize_weights(alpha, K)
    Hm = channel.masked_H(offsets)

    pins = csi_pins(channel, cfg)
    if extra_pins is not None:
        pins = pins | extra_pins
    for l in range(L):  # a BS without backhaul cannot serve anyone
        if c_bps[l] == 0.0:
            pins[:, offsets[l]:offsets[l + 1]] = True

    tau = opts.tau_rel * float(p_bs.max())
    w = mrt_init(Hm, offsets, p_ant, p_bs, pins, channel.link_gain)
    r_hat = wmmse.spectral_rates(wmmse.sinr_all(Hm, w, sigma2), gamma)
    beta = update_cluster_weights(w, offsets, tau).beta

    power_cons = _power_constraints(p_ant)
    diag = {"outer_iters": 0, "inner_iters": 0, "dual_evals": 0,
            "safeguard_hits": 0, "repairs": 0, "converged": False,
            "max_stationarity": 0.0}
    trace: list[list[float]] = []

    def run_inner(w, beta, r_hat, max_iters):
        warm = None
        wsr_prev = None
        inner_trace = []
        c_inner = c_sym * (1.0 - opts.backhaul_margin)
        bh_cons = [
            QuadraticConstraint(beta[l] * r_hat, _bs_mask(offsets, l, len(p_ant)),
                                float(c_inner[l]), kind="backhaul")
            for l in range(L) if np.isfinite(c_sym[l])
        ]
        for it in range(max_iters):
            st = wmmse.mmse_receivers(Hm, w, sigma2, gamma)
            A, b = wmmse.assemble_forms(Hm, st.u, alpha_n, st.rho, gamma)
            sol = solve_qcqp((A, b), power_cons + bh_cons, pins=pins,
                             warm=warm, start=w, dual_max_iter=opts.dual_max,
                             feas_tol=opts.feas_tol)
            warm = sol.warm
            diag["dual_evals"] += sol.n_dual_evals
            diag["max_stationarity"] = max(diag["max_stationarity"], sol.stationarity)
            g_old = wmmse.weighted_mse_objective(Hm, w, st.u, st.rho, alpha_n, sigma2, gamma)
            g_new = wmmse.weighted_mse_objective(Hm, sol.w, st.u, st.rho, alpha_n, sigma2, gamma)
            diag["inner_iters"] += 1
            # the previous iterate can violate freshly reweighted backhaul
            # constraints; then the QCQP step restores feasibility and the
            # surrogate objective is allowed to move either way
            gn = group_norm_sq(w, offsets)
            old_feasible = all(
                float(np.sum(c.user_weights * gn[l_idx])) <= c.bound * (1.0 + opts.feas_tol)
                for l_idx, c in zip([l for l in range(L) if np.isfinite(c_sym[l])], bh_cons)
            )
            if not old_feasible or g_new <= g_old * (1.0 + 1e-12):
                w = sol.w
            else:
                # surrogate did not improve (inexact subsolve): keep the iterate
                diag["safeguard_hits"] += 1
                break
            wsr = float(np.sum(alpha_n * wmmse.spectral_rates(wmmse.sinr_all(Hm, w, sigma2), gamma)))
            inner_trace.append(wsr)
            if wsr_prev is not None and abs(wsr - wsr_prev) <= opts.inner_tol * max(abs(wsr_prev), _TINY):
                break
            wsr_prev = wsr
        return w, inner_trace

    wsr_outer = None
    for outer in range(opts.outer_max):
        diag["outer_iters"] = outer + 1
        w, inner_trace = run_inner(w, beta, r_hat, opts.inner_max)
        if opts.record_trace:
            trace.append(inner_trace)
        rates = wmmse.spectral_rates(wmmse.sinr_all(Hm, w, sigma2), gamma)
        wsr = float(np.sum(alpha_n * rates))
        if wsr_outer is not None and abs(wsr - wsr_outer) <= opts.outer_tol * max(abs(wsr_outer), _TINY):
            diag["converged"] = True
            break
        wsr_outer = wsr
        beta = update_cluster_weights(w, offsets, tau).beta
        r_hat = rates

    # exact backhaul accounting on the true channel, with threshold and repair
    eps_w = opts.thresh_rel * p_bs
    if finalize:
        w = _apply_threshold(w, offsets, eps_w)
    rates_bps = wmmse.rate(wmmse.sinr_all(channel.H, w, sigma2), gamma, bw)
    usage, members = backhaul_usage_exact(w, rates_bps, offsets, eps_w)

    repairs = 0
    while finalize and _worst_violation(usage, c_bps) > opts.feas_tol and repairs < opts.repair_max:
        repairs += 1
        l_star, k_star = _membership_to_drop(usage, c_bps, members, w, offsets, rates_bps)
        pins[k_star, offsets[l_star]:offsets[l_star + 1]] = True
        w[pins] = 0.0
        w, _ = run_inner(w, beta, r_hat, opts.repair_inner)
        w = _apply_threshold(w, offsets, eps_w)
        rates_bps = wmmse.rate(wmmse.sinr_all(channel.H, w, sigma2), gamma, bw)
        usage, members = backhaul_usage_exact(w, rates_bps, offsets, eps_w)
    while finalize and _worst_violation(usage, c_bps) > opts.feas_tol:
        # repair budget exhausted: drop memberships outright
        l_star, k_star = _membership_to_drop(usage, c_bps, members, w, offsets, rates_bps)
        w[k_star, offsets[l_star]:offsets[l_star + 1]] = 0.0
        rates_bps = wmmse.rate(wmmse.sinr_all(channel.H, w, sigma2), gamma, bw)
        usage, members = backhaul_usage_exact(w, rates_bps, offsets, eps_w)
    diag["repairs"] = repairs
    if opts.record_trace:
        diag["wsr_trace"] = trace

    result = SlotResult(
        rates_bps=rates_bps,
        backhaul_data_bps=usage,
        backhaul_comp_bps=np.zeros(L),
        clusters=[sorted(np.flatnonzero(members[:, k]).tolist()) for k in range(K)],
        power_violation_rel=power_violation_rel(w, p_ant),
        backhaul_violation_rel=backhaul_violation_rel(usage, c_bps),
        diagnostics=diag,
    )
    return BeamformerSet(w=w), result


def _bs_mask(offsets: np.ndarray, l: int, n: int) -> np.ndarray:
    m = np.zeros(n)
    m[offsets[l]:offsets[l + 1]] = 1.0
    return m


def _apply_threshold(w: np.ndarray, offsets: np.ndarray, eps_w: np.ndarray) -> np.ndarray:
    gn = group_norm_sq(w, offsets)
    w = w.copy()
    for l in range(len(eps_w)):
        weak = gn[l] <= eps_w[l]
        if weak.any():
            w[weak, offsets[l]:offsets[l + 1]] = 0.0
    return w


def _worst_violation(usage: np.ndarray, c_bps: np.ndarray) -> float:
    return backhaul_violation_rel(usage, c_bps)


def _membership_to_drop(usage, c_bps, members, w, offsets, rates_bps):
    """Pick the smallest ||w||^2 * R contribution at the worst-violating BS."""
    finite = np.isfinite(c_bps)
    rel = np.where(finite & (c_bps > 0), (usage - c_bps) / np.where(c_bps > 0, c_bps, 1.0), 0.0)
    rel = np.where(finite & (c_bps == 0), usage, rel)
    l_star = int(np.argmax(rel))
    gn = group_norm_sq(w, offsets)
    contrib = np.where(members[l_star], gn[l_star] * np.maximum(rates_bps, _TINY), np.inf)
    k_star = int(np.argmin(contrib))
    return l_star, k_star
