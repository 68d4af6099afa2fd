"""Hybrid data-sharing / compression strategy (single-antenna BSs and users).

Each BS's backhaul carries direct messages for some users plus a compressed
precoded signal combining the rest; the per-user beamformer splits as
w = w_c + w_d. The backhaul constraint couples an indicator data term with a
log-shaped compression term. Both non-convexities are handled by successive
upper bounds: the indicator through reweighting (as in data-sharing) and the
log term through its tangent at the previous iterate, which is tight there.
All backhaul algebra runs in nats internally; bits appear only at the
interfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _backend, wmmse
from .data_sharing import DataSharingOptions, csi_pins, normalize_weights, optimize_data_sharing
from .network import ChannelRealization, NetworkConfig
from .numerics import lbfgsb_nonneg
from .results import SlotResult, backhaul_violation_rel, power_violation_rel
from .wmmse import BeamformerSet

_TINY = 1e-300
LN2 = math.log(2.0)

MODE_OFF = 0
MODE_DATA = 1
MODE_COMPRESSED = 2
MODE_BOTH = 3  # exclusivity violation


@dataclass
class HybridOptions:
    outer_max: int = 20
    inner_max: int = 50
    outer_tol: float = 1e-4
    inner_tol: float = 1e-5
    dual_max: int = 600
    feas_tol: float = 1e-6
    backhaul_margin: float = 1e-3  # inner surrogate keeps this much slack
    tau_rel: float = 1e-10
    thresh_rel: float = 1e-6      # data-membership threshold, rel. to BS power
    mode_eps_rel: float = 1e-4    # mode classification threshold, rel. to BS power
    q_floor_rel: float = 1e-12
    prox_eps_rel: float = 1e-6
    prox_passes: int = 4
    repair_max: int = 25
    repair_inner: int = 10
    warmstart_outers: int = 3     # data-sharing outers used to seed w_d
    record_trace: bool = False


@dataclass
class HybridState:
    """Iterate of the hybrid optimizer; w = w_c + w_d elementwise."""

    w_c: np.ndarray    # (K, L) compression-part beamformers
    w_d: np.ndarray    # (K, L) data-sharing-part beamformers
    q: np.ndarray      # (L,) quantization noise powers
    gamma: np.ndarray  # (L,) log-term linearization weights
    beta_d: np.ndarray  # (L, K) reweighting of the data indicator
    rho: np.ndarray    # (K,) MSE weights
    r_hat: np.ndarray  # (K,) previous rates, nats per symbol
    u: np.ndarray      # (K,) scalar receivers

    @property
    def w(self) -> np.ndarray:
        return self.w_c + self.w_d


def true_log_term(w_c: np.ndarray, q: np.ndarray, gamma_q: float) -> np.ndarray:
    """ln(gamma_q * sum_k |w_c|^2 + q) per BS (nats)."""
    return np.log(gamma_q * np.sum(np.abs(w_c) ** 2, axis=0) + q)


def surrogate_log_term(w_c: np.ndarray, q: np.ndarray, gamma: np.ndarray,
                       gamma_q: float) -> np.ndarray:
    """Tangent upper bound -ln(gamma) + gamma*(gamma_q sum|w_c|^2 + q) - 1."""
    x = gamma_q * np.sum(np.abs(w_c) ** 2, axis=0) + q
    return -np.log(gamma) + gamma * x - 1.0


def linearize_backhaul(w_c: np.ndarray, q: np.ndarray, gamma_q: float,
                       c_nats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tangency weights gamma and the shifted bounds C' = C + ln(gamma) + 1."""
    gamma = 1.0 / (gamma_q * np.sum(np.abs(w_c) ** 2, axis=0) + q)
    return gamma, c_nats + np.log(gamma) + 1.0


def check_mode_exclusivity(w_c: np.ndarray, w_d: np.ndarray, p_bs: np.ndarray,
                           eps_rel: float = 1e-4) -> np.ndarray:
    """Classify every (BS, user) pair as off / data / compressed / both.

    At an exact optimum with fixed rates no pair is 'both'; small violation
    fractions are expected at numerical convergence and are reported, not
    suppressed.
    """
    eps = eps_rel * p_bs[:, None]
    d_on = (np.abs(w_d) ** 2).T > eps
    c_on = (np.abs(w_c) ** 2).T > eps
    modes = np.full(d_on.shape, MODE_OFF, dtype=np.int8)
    modes[d_on & ~c_on] = MODE_DATA
    modes[c_on & ~d_on] = MODE_COMPRESSED
    modes[c_on & d_on] = MODE_BOTH
    return modes


@dataclass
class _InnerProblem:
    """Constants of one inner convex step (fixed u, rho, gamma, beta, r_hat)."""

    A: np.ndarray        # (K, L, L) combined-beamformer quadratic forms
    b: np.ndarray        # (K, L)
    t: np.ndarray        # (L,) linear price of q in the objective
    gamma: np.ndarray    # (L,)
    bh_weight: np.ndarray  # (K, L) beta_d[l,k] * r_hat[k] on the w_d block
    p_bs: np.ndarray     # (L,)
    c_prime: np.ndarray  # (L,) shifted backhaul bounds (nats)
    gamma_q: float
    q_floor: np.ndarray  # (L,)
    pins: np.ndarray     # (K, 2L) over the stacked [w_c; w_d] variable


def _solve_inner(prob: _InnerProblem, v_start: np.ndarray, warm, opts: HybridOptions):
    """Dual quasi-Newton solve of the inner convex program over (w_c, w_d, q).

    For fixed multipliers each user reduces to a 2L x 2L Hermitian solve and
    q has a closed form; the (power, backhaul) multipliers are found with
    L-BFGS-B. A proximal term handles the flat w_c/w_d split directions.
    """
    K, L = prob.b.shape
    idx = np.arange(L)

    tr = np.einsum("kii->k", prob.A).real / L
    ref = float(tr.max())
    if ref <= 0.0:
        ref = max(float(np.abs(prob.b).max()), _TINY)
    s_obj = 1.0 / ref

    base = np.zeros((K, 2 * L, 2 * L), dtype=np.complex128)
    As = s_obj * prob.A
    base[:, :L, :L] = As
    base[:, :L, L:] = As
    base[:, L:, :L] = As
    base[:, L:, L:] = As
    eps = max(opts.prox_eps_rel, 1e-12)
    base[:, np.arange(2 * L), np.arange(2 * L)] += eps

    bhalf = np.concatenate([prob.b, prob.b], axis=1) * (0.5 * s_obj)
    pins = prob.pins
    if pins.any():
        for k in range(K):
            pk = pins[k]
            if pk.any():
                base[k][pk, :] = 0.0
                base[k][:, pk] = 0.0
                base[k][pk, pk] = 1.0
        bhalf = bhalf.copy()
        bhalf[pins] = 0.0

    t_s = s_obj * prob.t
    inv_p = 1.0 / prob.p_bs
    s_bh = np.maximum(1.0, np.abs(prob.c_prime))
    inv_s = 1.0 / s_bh
    bw_scaled = prob.bh_weight  # (K, L), applies to the w_d block diagonal

    nfev = 0
    center = np.where(pins, 0.0, v_start).astype(np.complex128)
    has_pins = bool(pins.any())
    free = (~pins).astype(float)
    idx2 = np.arange(2 * L)

    def eval_point(x, bh_eff):
        nonlocal nfev
        nfev += 1
        lt = x[:L] * inv_p
        mt = x[L:] * inv_s
        M = base.copy()
        M[:, idx, idx] += lt
        M[:, idx, idx + L] += lt
        M[:, idx + L, idx] += lt
        M[:, idx + L, idx + L] += lt
        M[:, idx, idx] += mt * prob.gamma * prob.gamma_q
        M[:, idx + L, idx + L] += mt[None, :] * bw_scaled
        if has_pins:
            # the power coupling terms must not leak into pinned coordinates
            M *= free[:, :, None]
            M *= free[:, None, :]
            M[:, idx2, idx2] += pins
        v = _backend.chol_solve_inplace(M, bh_eff)
        coef = t_s + lt + mt * prob.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(mt > 0, mt / np.maximum(coef, _TINY), prob.q_floor)
        q = np.maximum(q, prob.q_floor)

        w = v[:, :L] + v[:, L:]
        y_w = np.sum(np.abs(w) ** 2, axis=0)
        y_c = np.sum(np.abs(v[:, :L]) ** 2, axis=0)
        y_d2 = np.abs(v[:, L:]) ** 2
        power_scaled = (y_w + q) * inv_p
        bh_val = (np.sum(bw_scaled * y_d2, axis=0)
                  + prob.gamma * prob.gamma_q * y_c + prob.gamma * q - np.log(q))
        bh_scaled = bh_val * inv_s
        bound_scaled = prob.c_prime * inv_s

        f = (float(np.sum(bh_eff.conj() * v).real)
             - float(np.sum(coef * q - mt * np.log(q)))
             + float(x[:L].sum()) + float(np.sum(x[L:] * bound_scaled)))
        grad = np.concatenate([1.0 - power_scaled, bound_scaled - bh_scaled])
        return f, grad, v, q, power_scaled, bh_scaled, bound_scaled

    x = np.zeros(2 * L) if warm is None or len(warm) != 2 * L else np.maximum(warm, 0.0)
    v = center
    q = prob.q_floor.copy()
    ok = False
    for _ in range(max(opts.prox_passes, 1)):
        bh_eff = bhalf + eps * center

        def neg_dual(x):
            f, grad, *_ = eval_point(x, bh_eff)
            return f, grad

        f, grad, v, q, pw, bh, bb = eval_point(x, bh_eff)
        for _ in range(60):  # bracket the violated multipliers
            over = np.concatenate([pw - 1.0, bh - bb])
            if over.max() <= 3.0 or nfev >= opts.dual_max:
                break
            viol = over > 0.0
            x[viol] = np.minimum(np.maximum(x[viol], 1e-8)
                                 * np.clip(1.0 + over[viol], 2.0, 30.0), 1e8)
            f, grad, v, q, pw, bh, bb = eval_point(x, bh_eff)

        for _ in range(3):
            if nfev >= opts.dual_max:
                break
            x, _, _ = lbfgsb_nonneg(neg_dual, x, opts.dual_max - nfev, opts.feas_tol)
            f, grad, v, q, pw, bh, bb = eval_point(x, bh_eff)
            viol = max(float(np.max(pw - 1.0, initial=0.0)),
                       float(np.max(bh - bb, initial=0.0)))
            gap = float(np.sum(x * grad))
            ok = viol <= opts.feas_tol and abs(gap) <= 1e-5 * max(1.0, abs(f))
            if ok:
                break

        shift = np.linalg.norm(v - center)
        center = v
        if shift <= 1e-7 * max(np.linalg.norm(v), _TINY) or nfev >= opts.dual_max:
            break

    v = v.copy()
    v[pins] = 0.0
    # feasibility backstop: with q held, shrink each BS's beams into its budget
    q = np.minimum(q, prob.p_bs * (1.0 - 1e-12))
    w = v[:, :L] + v[:, L:]
    y_w = np.sum(np.abs(w) ** 2, axis=0)
    head = prob.p_bs - q
    over = y_w > head * (1.0 + opts.feas_tol)
    if over.any():
        scale = np.ones(L)
        scale[over] = np.sqrt(np.maximum(head[over], 0.0) * (1.0 - 1e-12)
                              / np.maximum(y_w[over], _TINY))
        v[:, :L] *= scale
        v[:, L:] *= scale

    return v[:, :L], v[:, L:], q, {"nfev": nfev, "ok": bool(ok)}, x


def surrogate_objective(Hm, w, q, u, rho, alpha, sigma2, gamma_m) -> float:
    """Sum of alpha*(rho*e - ln rho - 1); equals -(weighted sum rate in nats)
    whenever u and rho are matched to (w, q)."""
    e = wmmse.mse_value(Hm, w, u[:, None], sigma2, gamma_m, q)
    return float(np.sum(alpha * (rho * e - np.log(rho) - 1.0)))


def hybrid_inner_step(state: HybridState, Hm: np.ndarray, alpha: np.ndarray,
                      prob_const: dict, opts: HybridOptions, warm=None
                      ) -> tuple[HybridState, dict, np.ndarray]:
    """One pass of receiver/weight/linearization updates plus the convex step."""
    sigma2 = prob_const["sigma2"]
    gamma_m = prob_const["gamma_m"]
    gamma_q = prob_const["gamma_q"]
    c_nats = prob_const["c_nats"]
    p_bs = prob_const["p_bs"]
    q_floor = prob_const["q_floor"]
    pins = prob_const["pins"]

    st = wmmse.mmse_receivers(Hm, state.w, sigma2, gamma_m, state.q)
    u = st.u[:, 0]
    rho = st.rho
    gamma, c_prime = linearize_backhaul(state.w_c, state.q, gamma_q, c_nats)

    A, b = wmmse.assemble_forms(Hm, st.u, alpha, rho, gamma_m)
    t = wmmse.quantization_price(Hm, st.u, alpha, rho, gamma_m)
    prob = _InnerProblem(A=A, b=b, t=t, gamma=gamma,
                         bh_weight=state.beta_d.T * state.r_hat[:, None],
                         p_bs=p_bs, c_prime=c_prime, gamma_q=gamma_q,
                         q_floor=q_floor, pins=pins)
    v_start = np.concatenate([state.w_c, state.w_d], axis=1)
    w_c, w_d, q, diag, warm_out = _solve_inner(prob, v_start, warm, opts)

    new = replace(state, w_c=w_c, w_d=w_d, q=q, gamma=gamma, rho=rho, u=u)
    return new, diag, warm_out


def optimize_hybrid(channel: ChannelRealization, alpha, cfg: NetworkConfig, *,
                    opts: Optional[HybridOptions] = None,
                    backhaul_bps: Optional[np.ndarray] = None
                    ) -> tuple[BeamformerSet, HybridState, SlotResult]:
    """Run the hybrid optimization for one slot (requires M = N = 1)."""
    if cfg.antennas_macro != 1 or (cfg.picos_per_cell > 0 and cfg.antennas_pico != 1) \
            or cfg.rx_antennas != 1:
        raise ValueError("the hybrid strategy requires single-antenna BSs and users")
    opts = opts or HybridOptions()
    K, L = cfg.num_users, cfg.num_bs
    offsets = cfg.antenna_offsets()
    p_bs = cfg.per_bs_power_w()
    sigma2 = cfg.noise_power_w
    gamma_m = cfg.gamma_m
    gamma_q = cfg.gamma_q
    bw = cfg.bandwidth_hz
    c_bps = cfg.per_bs_backhaul_bps() if backhaul_bps is None else np.asarray(backhaul_bps, float)
    c_nats = c_bps / bw * LN2 * (1.0 - opts.backhaul_margin)
    q_floor = opts.q_floor_rel * p_bs
    tau = opts.tau_rel * float(p_bs.max())

    alpha_n = normalize_weights(alpha, K)
    Hm = channel.masked_H(offsets)

    pins_bs = csi_pins(channel, cfg)       # (K, L) since M = 1
    pins_bs = pins_bs | (c_bps == 0.0)[None, :]
    pins = np.concatenate([pins_bs, pins_bs], axis=1)  # stacked [w_c; w_d]

    # seed the data-sharing part from a short data-sharing run
    ds_opts = DataSharingOptions(outer_max=opts.warmstart_outers, inner_max=30)
    bf_ds, _ = optimize_data_sharing(channel, alpha_n, cfg, opts=ds_opts,
                                     backhaul_bps=c_bps, finalize=False)
    w_d = bf_ds.w.copy()
    w_d[pins_bs] = 0.0
    # users the seed switched off would stay off for the whole slot (zero
    # beamformer means zero receiver and zero linear term): re-activate them
    # with a matched-filter whisper so the optimizer may grow them back
    dead = np.sum(np.abs(w_d) ** 2, axis=1) <= 1e-12 * p_bs.max()
    for k in np.flatnonzero(dead):
        usable = ~pins_bs[k]
        if not usable.any():
            continue
        l = int(np.argmax(np.where(usable, channel.link_gain[k] * p_bs, -np.inf)))
        h_kl = Hm[k, 0, l]
        if h_kl != 0:
            w_d[k, l] = np.sqrt(1e-4 * p_bs[l] / max(int(dead.sum()), 1)) \
                * (h_kl.conj() / abs(h_kl))
    with np.errstate(over="ignore"):
        q0 = np.clip(p_bs * np.exp2(-0.5 * c_bps / bw), q_floor, 0.5 * p_bs)
    # keep the seed inside the power budget after adding q
    y_d = np.sum(np.abs(w_d) ** 2, axis=0)
    over = y_d > (p_bs - q0)
    if over.any():
        sc = np.ones(L)
        sc[over] = np.sqrt(np.maximum(p_bs[over] - q0[over], 0.0) * (1 - 1e-12)
                           / np.maximum(y_d[over], _TINY))
        w_d *= sc

    sinr0 = wmmse.sinr_all(Hm, w_d, sigma2, q0)
    state = HybridState(
        w_c=np.zeros((K, L), dtype=np.complex128),
        w_d=w_d.astype(np.complex128),
        q=q0,
        gamma=1.0 / q0,
        beta_d=1.0 / (np.abs(w_d.T) ** 2 + tau),
        rho=np.ones(K),
        r_hat=np.log1p(sinr0 / gamma_m),
        u=np.zeros(K, dtype=np.complex128),
    )

    prob_const = {"sigma2": sigma2, "gamma_m": gamma_m, "gamma_q": gamma_q,
                  "c_nats": c_nats, "p_bs": p_bs, "q_floor": q_floor, "pins": pins}

    diag = {"outer_iters": 0, "inner_iters": 0, "dual_evals": 0,
            "safeguard_hits": 0, "repairs": 0, "converged": False}
    trace: list[list[float]] = []

    def run_inner(state, max_iters, warm=None):
        psi_prev = None
        inner_trace = []
        for _ in range(max_iters):
            new, d, warm = hybrid_inner_step(state, Hm, alpha_n, prob_const, opts, warm)
            diag["inner_iters"] += 1
            diag["dual_evals"] += d["nfev"]
            psi_old = surrogate_objective(Hm, state.w, state.q, new.u, new.rho,
                                          alpha_n, sigma2, gamma_m)
            psi_new = surrogate_objective(Hm, new.w, new.q, new.u, new.rho,
                                          alpha_n, sigma2, gamma_m)
            # after an outer beta/r_hat refresh the old point may violate the
            # backhaul surrogate; the step is then a feasibility restoration
            bh_old = (np.sum(state.beta_d.T * state.r_hat[:, None]
                             * np.abs(state.w_d) ** 2, axis=0)
                      + np.log1p(gamma_q * np.sum(np.abs(state.w_c) ** 2, axis=0)
                                 / np.maximum(state.q, _TINY)))
            old_feasible = bool(np.all(bh_old <= c_nats + opts.feas_tol * np.maximum(1.0, np.abs(c_nats))))
            if not old_feasible or psi_new <= psi_old + 1e-12 * max(1.0, abs(psi_old)):
                state = new
            else:
                diag["safeguard_hits"] += 1
                state = replace(state, gamma=new.gamma, rho=new.rho, u=new.u)
                break
            inner_trace.append(psi_new)
            if psi_prev is not None and abs(psi_new - psi_prev) <= opts.inner_tol * max(abs(psi_prev), _TINY):
                break
            psi_prev = psi_new
        return state, inner_trace, warm

    wsr_outer = None
    warm = None
    for outer in range(opts.outer_max):
        diag["outer_iters"] = outer + 1
        state, inner_trace, warm = run_inner(state, opts.inner_max, warm)
        if opts.record_trace:
            trace.append(inner_trace)
        rates_n = np.log1p(wmmse.sinr_all(Hm, state.w, sigma2, state.q) / gamma_m)
        wsr = float(np.sum(alpha_n * rates_n))
        if wsr_outer is not None and abs(wsr - wsr_outer) <= opts.outer_tol * max(abs(wsr_outer), _TINY):
            diag["converged"] = True
            break
        wsr_outer = wsr
        state = replace(state,
                        beta_d=1.0 / (np.abs(state.w_d.T) ** 2 + tau),
                        r_hat=rates_n)

    # exact accounting on the true channel: threshold w_d, then repair by
    # dropping the weakest data memberships until the backhaul fits
    eps_w = opts.thresh_rel * p_bs
    w_d = state.w_d.copy()
    w_d[(np.abs(w_d) ** 2) <= eps_w[None, :]] = 0.0
    state = replace(state, w_d=w_d)

    def true_usage(state):
        rates_bps = wmmse.rate(wmmse.sinr_all(channel.H, state.w, sigma2, state.q),
                               gamma_m, bw)
        members = (np.abs(state.w_d) ** 2).T > eps_w[:, None]
        data_bps = members @ rates_bps
        comp_bits = np.log(1.0 + gamma_q * np.sum(np.abs(state.w_c) ** 2, axis=0)
                           / np.maximum(state.q, _TINY)) / LN2
        comp_bps = comp_bits * bw
        return rates_bps, members, data_bps, comp_bps

    def shrink_compression(state, l_star):
        # fit the compression term into the remaining budget by scaling w_c
        rates_bps, members, data_bps, comp_bps = true_usage(state)
        budget = max(c_bps[l_star] - data_bps[l_star], 0.0) / bw * LN2 * (1.0 - 1e-9)
        y_c = float(np.sum(np.abs(state.w_c[:, l_star]) ** 2))
        target = max(np.expm1(budget), 0.0) * state.q[l_star] / gamma_q
        w_c = state.w_c.copy()
        w_c[:, l_star] *= np.sqrt(target / y_c) if y_c > target and y_c > 0 else 1.0
        return replace(state, w_c=w_c)

    rates_bps, members, data_bps, comp_bps = true_usage(state)
    repairs = 0
    while backhaul_violation_rel(data_bps + comp_bps, c_bps) > opts.feas_tol \
            and repairs < opts.repair_max:
        repairs += 1
        l_star, k_star = _drop_candidate(data_bps + comp_bps, c_bps, members, state, rates_bps)
        if k_star is None:
            state = shrink_compression(state, l_star)
        else:
            pins[k_star, L + l_star] = True
            w_d_new = state.w_d.copy()
            w_d_new[k_star, l_star] = 0.0
            state = replace(state, w_d=w_d_new)
            state, _, warm = run_inner(state, opts.repair_inner, warm)
            w_d = state.w_d.copy()
            w_d[(np.abs(w_d) ** 2) <= eps_w[None, :]] = 0.0
            state = replace(state, w_d=w_d)
        rates_bps, members, data_bps, comp_bps = true_usage(state)
    guard = 0
    while backhaul_violation_rel(data_bps + comp_bps, c_bps) > opts.feas_tol and guard < 10 * L * K:
        guard += 1
        l_star, k_star = _drop_candidate(data_bps + comp_bps, c_bps, members, state, rates_bps)
        if k_star is None:
            state = shrink_compression(state, l_star)
        else:
            w_d = state.w_d.copy()
            w_d[k_star, l_star] = 0.0
            state = replace(state, w_d=w_d)
        rates_bps, members, data_bps, comp_bps = true_usage(state)
    diag["repairs"] = repairs
    if opts.record_trace:
        diag["surrogate_trace"] = trace

    modes = check_mode_exclusivity(state.w_c, state.w_d, p_bs, opts.mode_eps_rel)
    mode_dict = {
        "data": _pairs(modes == MODE_DATA),
        "compressed": _pairs(modes == MODE_COMPRESSED),
        "violations": _pairs(modes == MODE_BOTH),
    }

    result = SlotResult(
        rates_bps=rates_bps,
        backhaul_data_bps=data_bps,
        backhaul_comp_bps=comp_bps,
        clusters=[sorted(np.flatnonzero(members[:, k]).tolist()) for k in range(K)],
        power_violation_rel=power_violation_rel(state.w, p_bs, state.q),
        backhaul_violation_rel=backhaul_violation_rel(data_bps + comp_bps, c_bps),
        diagnostics=diag,
        modes=mode_dict,
    )
    bf = BeamformerSet(w=state.w, w_c=state.w_c, w_d=state.w_d)
    return bf, state, result


def _pairs(mask_lk: np.ndarray) -> list[list[int]]:
    ls, ks = np.nonzero(mask_lk)
    return [[int(l), int(k)] for l, k in zip(ls, ks)]


def _drop_candidate(total_bps, c_bps, members, state, rates_bps):
    """Worst-violating BS and its weakest data member (None if no member)."""
    finite = np.isfinite(c_bps)
    rel = np.where(finite & (c_bps > 0), (total_bps - c_bps) / np.where(c_bps > 0, c_bps, 1.0), 0.0)
    rel = np.where(finite & (c_bps == 0), total_bps, rel)
    l_star = int(np.argmax(rel))
    if not members[l_star].any():
        return l_star, None
    contrib = np.where(members[l_star], (np.abs(state.w_d[:, l_star]) ** 2)
                       * np.maximum(rates_bps, _TINY), np.inf)
    k_star = int(np.argmin(contrib))
    return l_star, k_star
