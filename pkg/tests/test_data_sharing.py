import numpy as np
import pytest

from cranopt.baselines import optimize_full_coop, optimize_no_coop
from cranopt.data_sharing import (
    DataSharingOptions,
    backhaul_usage_exact,
    group_norm_sq,
    optimize_data_sharing,
    update_cluster_weights,
)
from cranopt.network import ChannelRealization

from conftest import random_channel, synthetic_cfg
from oracles import grid_search_phase_power

FAST = DataSharingOptions(outer_max=12, inner_max=40)


class TestClusterWeights:
    def test_zero_norm_gives_inverse_tau(self):
        w = np.zeros((1, 2), dtype=complex)
        cw = update_cluster_weights(w, np.array([0, 2]), tau=1e-6)
        assert cw.beta[0, 0] == pytest.approx(1e6)

    def test_reciprocal_identity(self):
        tau = 0.37
        w = np.full((1, 1), np.sqrt(1.0 - tau), dtype=complex)
        cw = update_cluster_weights(w, np.array([0, 1]), tau=tau)
        assert cw.beta[0, 0] == pytest.approx(1.0)

    def test_monotone_in_norm(self, rng):
        offs = np.array([0, 2, 4])
        w_small = rng.standard_normal((3, 4)) * 0.1 + 0j
        w_big = 10.0 * w_small
        b_small = update_cluster_weights(w_small, offs, 1e-8).beta
        b_big = update_cluster_weights(w_big, offs, 1e-8).beta
        assert (b_big < b_small).all()

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ValueError):
            update_cluster_weights(np.zeros((1, 1), dtype=complex), np.array([0, 1]), 0.0)


class TestBackhaulUsage:
    def test_members_charged_full_rate(self):
        offs = np.array([0, 1, 2, 3])
        w = np.zeros((1, 3), dtype=complex)
        w[0, 0] = 1.0
        w[0, 1] = 1.0
        usage, members = backhaul_usage_exact(w, np.array([100e6]), offs, np.full(3, 1e-9))
        assert usage[0] == pytest.approx(100e6)
        assert usage[1] == pytest.approx(100e6)
        assert usage[2] == 0.0
        assert members[:, 0].tolist() == [True, True, False]

    def test_below_threshold_is_free(self):
        offs = np.array([0, 1])
        w = np.full((2, 1), 1e-3, dtype=complex)  # |w|^2 = 1e-6
        usage, _ = backhaul_usage_exact(w, np.array([5.0, 7.0]), offs, np.array([1e-9]))
        assert usage[0] == pytest.approx(12.0)
        usage, _ = backhaul_usage_exact(w, np.array([5.0, 7.0]), offs, np.array([1e-3]))
        assert usage[0] == 0.0

    def test_group_norms(self, rng):
        offs = np.array([0, 2, 3])
        w = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        gn = group_norm_sq(w, offs)
        assert gn[0, 0] == pytest.approx(abs(w[0, 0]) ** 2 + abs(w[0, 1]) ** 2)
        assert gn[1, 1] == pytest.approx(abs(w[1, 2]) ** 2)


class TestOptimizeDataSharing:
    def test_zero_backhaul_silences_network(self, rng):
        cfg = synthetic_cfg(users=3, c_macro=0.0, c_pico=0.0)
        chan = random_channel(cfg, rng)
        bf, res = optimize_data_sharing(chan, np.ones(3), cfg, opts=FAST)
        assert np.abs(bf.w).max() == 0.0
        assert np.allclose(res.rates_bps, 0.0)

    def test_infinite_backhaul_matches_unconstrained(self, rng):
        cfg = synthetic_cfg(users=4, picos=2, c_macro=1e12, c_pico=1e12, seed=3)
        chan = random_channel(cfg, rng)
        alpha = np.ones(cfg.num_users)
        _, res_ds = optimize_data_sharing(chan, alpha, cfg, opts=FAST)
        _, res_fc = optimize_full_coop(chan, alpha, cfg, opts=FAST)
        assert res_ds.sum_rate_bps == pytest.approx(res_fc.sum_rate_bps, rel=0.01)
        # with generous backhaul the clusters of served users grow to all BSs
        served_sizes = [len(c) for c, r in zip(res_ds.clusters, res_ds.rates_bps) if r > 0]
        assert max(served_sizes) == cfg.num_bs

    def test_single_user_two_bs_matches_grid_search(self, rng):
        # K=1, L=2 single-antenna BSs: full aligned power is optimal
        cfg = synthetic_cfg(cells=1, picos=1, users=1, p_w=4.0, c_macro=1e6, c_pico=1e6, seed=5)
        chan = random_channel(cfg, rng)
        h = chan.H[0, 0, :]
        bf, res = optimize_data_sharing(chan, np.ones(1), cfg, opts=DataSharingOptions())
        best_gain = grid_search_phase_power(h, p_max=4.0, steps=120)
        best_rate = np.log2(1.0 + best_gain / (cfg.gamma_m * cfg.noise_power_w))
        achieved = res.rates_bps[0]  # bandwidth is 1 Hz
        assert achieved == pytest.approx(best_rate, rel=1e-3)

    def test_feasibility_random_instances(self, rng):
        for seed in range(4):
            cfg = synthetic_cfg(users=4, picos=2, c_macro=6.0, c_pico=3.0, seed=seed)
            chan = random_channel(cfg, rng)
            alpha = rng.uniform(0.2, 2.0, cfg.num_users)
            _, res = optimize_data_sharing(chan, alpha, cfg, opts=FAST)
            assert res.power_violation_rel <= 1e-6
            assert res.backhaul_violation_rel <= 1e-6

    def test_inner_loop_monotone_wsr(self, rng):
        cfg = synthetic_cfg(users=4, picos=2, m_macro=2, m_pico=2, c_macro=8.0, c_pico=4.0)
        chan = random_channel(cfg, rng)
        opts = DataSharingOptions(record_trace=True, outer_max=6, inner_max=30)
        _, res = optimize_data_sharing(chan, rng.uniform(0.5, 1.5, 4), cfg, opts=opts)
        for inner in res.diagnostics["wsr_trace"]:
            arr = np.asarray(inner)
            if len(arr) > 1:
                assert (np.diff(arr) >= -1e-8 * np.maximum(np.abs(arr[:-1]), 1e-12)).all()

    def test_tighter_backhaul_smaller_clusters(self, rng):
        sizes_loose, sizes_tight = [], []
        for seed in range(20):
            cfg_l = synthetic_cfg(users=4, picos=2, c_macro=10.0, c_pico=10.0, seed=seed)
            cfg_t = synthetic_cfg(users=4, picos=2, c_macro=5.0, c_pico=5.0, seed=seed)
            chan = random_channel(cfg_l, np.random.default_rng(seed))
            _, r_l = optimize_data_sharing(chan, np.ones(4), cfg_l, opts=FAST)
            _, r_t = optimize_data_sharing(chan, np.ones(4), cfg_t, opts=FAST)
            sizes_loose.append(sum(len(c) for c in r_l.clusters))
            sizes_tight.append(sum(len(c) for c in r_t.clusters))
        assert np.mean(sizes_tight) <= np.mean(sizes_loose) + 0.5

    def test_clustered_csi_restricts_clusters(self, rng):
        cfg = synthetic_cfg(users=3, picos=3, c_macro=20.0, c_pico=20.0, csi=2)
        chan = random_channel(cfg, rng)
        mask = np.zeros((3, 4), dtype=bool)
        strongest = np.argsort(-chan.link_gain, axis=1)[:, :2]
        np.put_along_axis(mask, strongest, True, axis=1)
        chan = ChannelRealization(H=chan.H, csi_mask=mask, link_gain=chan.link_gain)
        _, res = optimize_data_sharing(chan, np.ones(3), cfg, opts=FAST)
        for k, cluster in enumerate(res.clusters):
            assert set(cluster) <= set(np.flatnonzero(mask[k]).tolist())


class TestBaselines:
    def test_no_coop_cluster_size_one(self, rng):
        cfg = synthetic_cfg(users=4, picos=2, c_macro=50.0, c_pico=50.0)
        chan = random_channel(cfg, rng)
        _, res = optimize_no_coop(chan, np.ones(4), cfg, opts=FAST)
        strongest = chan.strongest_bs()
        for k, cluster in enumerate(res.clusters):
            assert len(cluster) <= 1
            if cluster:
                assert cluster[0] == strongest[k]

    def test_full_coop_beats_no_coop(self, rng):
        cfg = synthetic_cfg(users=4, picos=2, seed=8)
        chan = random_channel(cfg, rng)
        alpha = np.ones(4)
        _, fc = optimize_full_coop(chan, alpha, cfg, opts=FAST)
        _, nc = optimize_no_coop(chan, alpha, cfg, opts=FAST)
        assert fc.sum_rate_bps >= nc.sum_rate_bps * 0.999
