import numpy as np
import pytest

from cranopt import wmmse
from cranopt.baselines import optimize_full_coop
from cranopt.compression import (
    CompressionOptions,
    eliminate_quantization,
    fixed_profile,
    fronthaul_bits_used,
    implied_q,
    kappa_from_bits,
    optimize_compression,
    per_antenna_bits,
)
from cranopt.data_sharing import DataSharingOptions

from conftest import random_channel, synthetic_cfg

FAST = CompressionOptions(max_iters=60)


class TestQuantizationElimination:
    def test_unit_gap_one_bit(self, rng):
        # gamma_q = 1, one bit per symbol: kappa = 1 so implied q = sum|w|^2
        kap = kappa_from_bits(np.array([1.0]), gamma_q=1.0)
        assert kap[0] == pytest.approx(1.0)
        w = rng.standard_normal((3, 1)) + 1j * rng.standard_normal((3, 1))
        q = implied_q(w, kap)
        assert q[0] == pytest.approx(np.sum(np.abs(w) ** 2))

    def test_infinite_fronthaul_recovers_unquantized(self, rng):
        kap = kappa_from_bits(np.array([1e6]), gamma_q=2.69)
        assert np.isinf(kap[0])
        w = rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1))
        assert implied_q(w, kap)[0] == 0.0
        A = np.eye(1, dtype=complex)[None].repeat(2, axis=0)
        A_red, bounds = eliminate_quantization(A, np.array([3.0]), kap, np.array([5.0]))
        assert np.allclose(A_red, A)
        assert bounds[0] == pytest.approx(5.0)

    def test_reduced_objective_equals_unreduced(self, rng):
        # the reduced quadratic at w equals the joint objective at (w, implied q)
        K, n = 3, 4
        G = rng.standard_normal((K, n, n)) + 1j * rng.standard_normal((K, n, n))
        A = G @ G.conj().transpose(0, 2, 1)
        b = rng.standard_normal((K, n)) + 1j * rng.standard_normal((K, n))
        t = rng.uniform(0.1, 2.0, n)
        kap = kappa_from_bits(rng.uniform(0.5, 6.0, n), gamma_q=2.0)
        A_red, _ = eliminate_quantization(A, t, kap, np.full(n, 10.0))
        w = rng.standard_normal((K, n)) + 1j * rng.standard_normal((K, n))
        q = implied_q(w, kap)

        def quad(Astack):
            return np.einsum("ki,kij,kj->", w.conj(), Astack, w).real - np.sum(b.conj() * w).real

        assert quad(A_red) == pytest.approx(quad(A) + float(t @ q), rel=1e-9)

    def test_power_bound_shrink(self):
        # 2^c - 1 = 2*gamma_q: usable power P/2 and q = P/2 at full drive
        gamma_q = 2.0
        c = np.log2(1 + 2 * gamma_q)
        kap = kappa_from_bits(np.array([c]), gamma_q)
        _, bounds = eliminate_quantization(np.zeros((1, 1, 1), dtype=complex),
                                           np.zeros(1), kap, np.array([4.0]))
        assert bounds[0] == pytest.approx(4.0 * 2 / 3)  # kappa = 2 -> P*2/3
        q_fix, budgets, _ = _fixed_for(c, gamma_q, p=4.0)
        assert budgets[0] == pytest.approx(2.0)
        assert q_fix[0] == pytest.approx(2.0)

    def test_fixed_floor_unusable_antenna(self):
        # 2^c - 1 <= gamma_q: no usable power, q capped at the antenna budget
        gamma_q = 3.0
        c = np.log2(1 + gamma_q)  # exactly at the floor
        q_fix, budgets, limited = _fixed_for(c, gamma_q, p=4.0)
        assert budgets[0] == pytest.approx(0.0)
        assert q_fix[0] == pytest.approx(4.0)
        assert limited >= 1

    def test_fixed_infinite_fronthaul(self):
        q_fix, budgets, _ = _fixed_for(1e6, 2.69, p=4.0)
        assert q_fix[0] == 0.0
        assert budgets[0] == pytest.approx(4.0)


def _fixed_for(c_bits, gamma_q, p):
    cfg = synthetic_cfg(cells=1, picos=0, users=1, p_w=p,
                        gamma_q_db=10 * np.log10(gamma_q), c_macro=float(c_bits))
    return fixed_profile(cfg)


class TestOptimizeCompression:
    def test_zero_fronthaul_silences(self, rng):
        cfg = synthetic_cfg(users=3, c_macro=0.0, c_pico=0.0)
        chan = random_channel(cfg, rng)
        bf, prof, res = optimize_compression(chan, np.ones(3), cfg, opts=FAST)
        assert np.abs(bf.w).max() == 0.0
        assert np.allclose(res.rates_bps, 0.0)
        assert np.allclose(prof.q, 0.0)

    def test_huge_fronthaul_matches_full_coop(self, rng):
        cfg = synthetic_cfg(users=4, picos=2, c_macro=1e12, c_pico=1e12, seed=2)
        chan = random_channel(cfg, rng)
        alpha = np.ones(4)
        _, prof, res_c = optimize_compression(chan, alpha, cfg, opts=FAST)
        _, res_fc = optimize_full_coop(chan, alpha, cfg, opts=DataSharingOptions(outer_max=12, inner_max=60))
        assert np.allclose(prof.q, 0.0)
        assert res_c.sum_rate_bps == pytest.approx(res_fc.sum_rate_bps, rel=1e-3)

    def test_scalar_toy_matches_grid_search(self, rng):
        # L = K = M = N = 1: brute-force over |w|^2 with q tied by the
        # rate-distortion equality
        c_bits, gq_db, p = 3.0, 4.3, 5.0
        cfg = synthetic_cfg(cells=1, picos=0, users=1, p_w=p, gamma_q_db=gq_db,
                            c_macro=c_bits, gamma_m_db=3.0)
        chan = random_channel(cfg, rng)
        h2 = abs(chan.H[0, 0, 0]) ** 2
        gq = cfg.gamma_q
        kap = (2 ** c_bits - 1) / gq
        best = 0.0
        for y in np.linspace(0, p * kap / (1 + kap), 30001):
            q = y / kap
            sinr = y * h2 / (cfg.noise_power_w + q * h2)
            best = max(best, np.log2(1 + sinr / cfg.gamma_m))
        _, prof, res = optimize_compression(chan, np.ones(1), cfg, opts=FAST)
        assert res.rates_bps[0] == pytest.approx(best, rel=1e-3)

    def test_adaptive_equality_invariant(self, rng):
        cfg = synthetic_cfg(users=4, picos=2, c_macro=6.0, c_pico=4.0, seed=5)
        chan = random_channel(cfg, rng)
        bf, prof, res = optimize_compression(chan, rng.uniform(0.3, 2.0, 4), cfg, opts=FAST)
        kap = kappa_from_bits(per_antenna_bits(cfg), cfg.gamma_q)
        y = np.sum(np.abs(bf.w) ** 2, axis=0)
        resid = np.abs(y - kap * prof.q) / np.maximum(kap * prof.q, 1e-12)
        assert resid[y > 0].max(initial=0.0) <= 1e-6

    def test_feasibility_both_modes(self, rng):
        for mode in ("adaptive", "fixed"):
            for seed in (0, 1):
                cfg = synthetic_cfg(users=4, picos=2, c_macro=5.0, c_pico=3.0, seed=seed)
                chan = random_channel(cfg, rng)
                _, prof, res = optimize_compression(chan, np.ones(4), cfg, mode=mode, opts=FAST)
                assert res.power_violation_rel <= 1e-6
                assert res.backhaul_violation_rel <= 1e-6

    def test_adaptive_not_worse_than_fixed(self, rng):
        # fixed-codebook solutions are feasible for the adaptive problem
        diffs = []
        for seed in range(6):
            cfg = synthetic_cfg(users=4, picos=2, c_macro=5.0, c_pico=3.0, seed=seed)
            chan = random_channel(cfg, np.random.default_rng(100 + seed))
            alpha = np.ones(4)
            _, _, res_a = optimize_compression(chan, alpha, cfg, mode="adaptive", opts=FAST)
            _, _, res_f = optimize_compression(chan, alpha, cfg, mode="fixed", opts=FAST)
            diffs.append(res_a.sum_rate_bps - res_f.sum_rate_bps)
        assert min(diffs) >= -1e-6 * max(1.0, abs(max(diffs)))

    def test_rates_monotone_in_fronthaul(self, rng):
        worse = 0
        for seed in range(20):
            chan_rng = np.random.default_rng(200 + seed)
            cfg_lo = synthetic_cfg(users=3, picos=1, c_macro=2.0, c_pico=2.0, seed=seed)
            cfg_hi = synthetic_cfg(users=3, picos=1, c_macro=6.0, c_pico=6.0, seed=seed)
            chan = random_channel(cfg_lo, chan_rng)
            alpha = np.ones(3)
            _, _, lo = optimize_compression(chan, alpha, cfg_lo, opts=FAST)
            _, _, hi = optimize_compression(chan, alpha, cfg_hi, opts=FAST)
            if hi.sum_rate_bps < lo.sum_rate_bps * (1 - 1e-6):
                worse += 1
        assert worse <= 2  # directional over 20 seeds, solver noise allowed

    def test_iteration_monotone_wsr(self, rng):
        cfg = synthetic_cfg(users=4, picos=2, m_macro=2, m_pico=2, c_macro=8.0, c_pico=4.0)
        chan = random_channel(cfg, rng)
        opts = CompressionOptions(record_trace=True, max_iters=40)
        _, _, res = optimize_compression(chan, rng.uniform(0.5, 1.5, 4), cfg, opts=opts)
        arr = np.asarray(res.diagnostics["wsr_trace"])
        assert (np.diff(arr) >= -1e-8 * np.maximum(np.abs(arr[:-1]), 1e-12)).all()

    def test_fronthaul_usage_formula(self, rng):
        w = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        q = np.array([0.5, 0.0, 2.0])
        w[:, 1] = 0.0
        bits = fronthaul_bits_used(w, q, gamma_q=2.0)
        y0 = np.sum(np.abs(w[:, 0]) ** 2)
        assert bits[0] == pytest.approx(np.log2(1 + 2.0 * y0 / 0.5))
        assert bits[1] == 0.0
