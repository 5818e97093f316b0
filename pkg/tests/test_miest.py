"""Tests for the mutual-information bounds, oracle, and benchmark."""
from __future__ import annotations

import numpy as np
import pytest
from scipy.special import logsumexp

from dib import miest
from dib.diffcore import Rng
from dib.textio import read_csv

LN2 = np.log(2.0)


def dense_reference_lower(batch):
    """Straight-line InfoNCE evaluation with an explicit density loop."""
    k, d = batch.us.shape
    ldm = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            diff = batch.us[i] - batch.mus[j]
            ldm[i, j] = -0.5 * np.sum(
                diff * diff * np.exp(-batch.log_vars[j])
                + batch.log_vars[j] + np.log(2 * np.pi))
    vals = [ldm[i, i] - (logsumexp(ldm[i]) - np.log(k)) for i in range(k)]
    return float(np.mean(vals)) / LN2


class TestDensityMatrix:
    def test_matches_explicit_loop(self):
        rng = Rng(42)
        us = rng.standard_normal((6, 3))
        mus = rng.standard_normal((5, 3))
        lvs = 0.5 * rng.standard_normal((5, 3))
        fast = miest.log_density_matrix(us, mus, lvs)
        for i in range(6):
            for j in range(5):
                diff = us[i] - mus[j]
                ref = -0.5 * np.sum(diff ** 2 * np.exp(-lvs[j])
                                    + lvs[j] + np.log(2 * np.pi))
                np.testing.assert_allclose(fast[i, j], ref, rtol=1e-10)


class TestBounds:
    def test_identical_codes_give_zero(self):
        """A channel that ignores its input transmits nothing."""
        ch = miest.OrthogonalScheme(2, 0.0, dim=4).channel()
        batches = [ch.sample_batch(Rng(s), 64) for s in range(4)]
        lo, _ = miest.infonce_lower(batches)
        up, _ = miest.loo_upper(batches)
        assert abs(lo) < 1e-12
        assert abs(up) < 1e-12

    def test_lower_is_capped_at_log2_k(self):
        ch = miest.OrthogonalScheme(6, 50.0, dim=64).channel()
        for k in (4, 16, 64):
            lo, _ = miest.infonce_lower([ch.sample_batch(Rng(1), k)])
            assert lo <= np.log2(k) + 1e-12

    def test_two_outcome_separated_gives_one_bit(self):
        ch = miest.OrthogonalScheme(1, 20.0, dim=2).channel()
        res = miest.measure_channel(ch, Rng(3), k=256, n_batches=8)
        assert abs(res.lower_bits - 1.0) < 0.02
        assert abs(res.upper_bits - 1.0) < 0.02

    def test_sandwich_with_gap_below_tenth_bit(self):
        """H=4, d=8, K=1024: both bounds in [3.9, 4.1], gap < 0.1."""
        ch = miest.OrthogonalScheme(4, 8.0).channel()
        res = miest.measure_channel(ch, Rng(5), k=1024, n_batches=8)
        assert res.gap_bits < 0.1
        assert 3.9 <= res.lower_bits <= res.upper_bits <= 4.1

    def test_matches_straight_line_reference(self):
        ch = miest.OrthogonalScheme(2, 1.5, dim=4).channel()
        batch = ch.sample_batch(Rng(8), 32)
        lo, _ = miest.infonce_lower([batch])
        np.testing.assert_allclose(lo, dense_reference_lower(batch), rtol=1e-10)

    def test_batch_order_invariance(self):
        ch = miest.OrthogonalScheme(3, 2.0, dim=8).channel()
        batch = ch.sample_batch(Rng(13), 128)
        perm = Rng(14).permutation(128)
        shuffled = miest.EvalBatch(
            xs=batch.xs[perm], mus=batch.mus[perm],
            log_vars=batch.log_vars[perm], us=batch.us[perm])
        lo_a, _ = miest.infonce_lower([batch])
        lo_b, _ = miest.infonce_lower([shuffled])
        up_a, _ = miest.loo_upper([batch])
        up_b, _ = miest.loo_upper([shuffled])
        assert abs(lo_a - lo_b) < 1e-12
        assert abs(up_a - up_b) < 1e-12

    def test_upper_needs_two_items(self):
        ch = miest.OrthogonalScheme(1, 1.0, dim=2).channel()
        with pytest.raises(miest.EstimationError, match="K >= 2"):
            miest.loo_upper([ch.sample_batch(Rng(0), 1)])

    def test_empty_batch_rejected(self):
        with pytest.raises(miest.EstimationError, match="empty"):
            miest.EvalBatch(xs=np.empty(0), mus=np.empty((0, 1)),
                            log_vars=np.empty((0, 1)), us=np.empty((0, 1)))

    def test_result_invariant_upper_above_lower(self):
        ch = miest.OrthogonalScheme(3, 1.0, dim=8).channel()
        res = miest.measure_channel(ch, Rng(21), k=256, n_batches=8)
        tol = 3.0 * (res.lower_std + res.upper_std) / np.sqrt(res.n_batches)
        assert res.upper_bits >= res.lower_bits - tol


class TestDiscreteFastPath:
    def test_summands_match_generic_route(self):
        ch = miest.OrthogonalScheme(2, 1.5, dim=4).channel()
        idx = ch.sample_indices(Rng(9), 64)
        batch = ch.batch_from_indices(idx, Rng(10))
        lo_ref, up_ref = miest.batch_summands(batch)
        lo, up = miest.discrete_batch_summands(ch, idx, batch.us)
        np.testing.assert_allclose(lo, lo_ref, atol=1e-10)
        np.testing.assert_allclose(up, up_ref, atol=1e-10)

    def test_measure_channel_agrees_across_routes(self):
        ch = miest.OrthogonalScheme(1, 2.0, dim=2).channel()
        fast = miest.measure_channel(ch, Rng(11), k=128, n_batches=4)
        rng = Rng(11)
        slow = miest.bounds_from_batches(
            ch.sample_batch(rng, 128) for _ in range(4))
        assert fast.lower_bits == pytest.approx(slow.lower_bits, abs=1e-9)
        assert fast.upper_bits == pytest.approx(slow.upper_bits, abs=1e-9)

    def test_leave_one_out_survives_underflowing_cross_terms(self):
        # own density dominates by hundreds of orders of magnitude
        ch = miest.OrthogonalScheme(1, 50.0, dim=2).channel()
        res = miest.measure_channel(ch, Rng(12), k=256, n_batches=4)
        assert np.isfinite(res.upper_bits)
        assert abs(res.upper_bits - 1.0) < 0.05
        assert abs(res.lower_bits - 1.0) < 0.05


class TestMcOracle:
    def test_zero_separation_is_zero(self):
        ch = miest.OrthogonalScheme(3, 0.0, dim=8).channel()
        mi, err = miest.mc_oracle(ch, Rng(1), 20_000)
        assert abs(mi) < 1e-12

    def test_saturation_reaches_entropy(self):
        ch = miest.OrthogonalScheme(2, 30.0, dim=4).channel()
        mi, err = miest.mc_oracle(ch, Rng(2), 50_000)
        assert abs(mi - 2.0) < 0.01

    def test_sits_between_bounds(self):
        ch = miest.OrthogonalScheme(2, 1.2, dim=4).channel()
        res = miest.measure_channel(ch, Rng(3), k=512, n_batches=16)
        mi, err = miest.mc_oracle(ch, Rng(4), 200_000)
        assert res.lower_bits - 3 * (res.lower_std + err) <= mi
        assert mi <= res.upper_bits + 3 * (res.upper_std + err)

    def test_continuous_channel_rejected(self):
        pool = miest.SampledChannel(
            pool_xs=np.linspace(0, 1, 10),
            pool_mus=np.zeros((10, 2)), pool_log_vars=np.zeros((10, 2)))
        with pytest.raises(miest.EstimationError, match="finite-support"):
            miest.mc_oracle(pool, Rng(0))

    def test_stderr_is_reported(self):
        ch = miest.OrthogonalScheme(2, 1.0, dim=4).channel()
        _, err = miest.mc_oracle(ch, Rng(5), 10_000)
        assert 0.0 < err < 0.1


class TestPerOutcome:
    def test_average_over_probes_recovers_full_lower_bound(self):
        """Algebraic identity: batch summands decompose the bound."""
        ch = miest.OrthogonalScheme(2, 1.5, dim=4).channel()
        batch = ch.sample_batch(Rng(17), 64)
        lows, ups = miest.batch_summands(batch)
        full, _ = miest.infonce_lower([batch])
        np.testing.assert_allclose(np.mean(lows) / LN2, full, atol=1e-9)
        full_up, _ = miest.loo_upper([batch])
        np.testing.assert_allclose(np.mean(ups) / LN2, full_up, atol=1e-9)

    def test_prior_collapsed_channel_contributes_nothing(self):
        ch = miest.OrthogonalScheme(1, 0.0, dim=2).channel()
        lo, up = miest.per_outcome_contribution(0.0, ch, Rng(2), k=128,
                                                n_batches=4)
        assert abs(lo) < 1e-9
        assert abs(up) < 1e-9

    def test_separated_two_outcome_contributes_one_bit(self):
        ch = miest.OrthogonalScheme(1, 20.0, dim=2).channel()
        lo, up = miest.per_outcome_contribution(1.0, ch, Rng(3), k=256,
                                                n_batches=8)
        assert abs(lo - 1.0) < 0.05
        assert abs(up - 1.0) < 0.05

    def test_probe_outside_support_rejected(self):
        ch = miest.OrthogonalScheme(1, 1.0, dim=2).channel()
        with pytest.raises(miest.EstimationError, match="support"):
            miest.per_outcome_contribution(7.0, ch, Rng(1), k=16, n_batches=1)


class TestScheme:
    def test_dim_must_hold_means(self):
        with pytest.raises(miest.EstimationError, match="orthogonal"):
            miest.OrthogonalScheme(6, 1.0, dim=32)

    def test_means_are_orthogonal_rows(self):
        ch = miest.OrthogonalScheme(2, 3.0, dim=8).channel()
        gram = ch.mus @ ch.mus.T
        np.testing.assert_allclose(gram, 9.0 * np.eye(4), atol=1e-12)


class TestBench:
    def test_rows_and_csv_schema(self, tmp_path):
        rows = miest.bench_orthogonal(h_list=(1, 2), d_grid=(0.0, 4.0),
                                      k_grid=(32, 64), n_batches=4,
                                      rng=Rng(14), n_mc=5_000,
                                      dataset_size=128)
        assert len(rows) == 2 * 2 * 2
        out = tmp_path / "bench.csv"
        miest.write_bench_csv(rows, out)
        header, data = read_csv(out)
        assert header == ["H_bits", "d", "K", "B", "lower_bits", "lower_std",
                          "upper_bits", "upper_std", "mc_bits", "mc_stderr"]
        assert len(data) == len(rows)

    def test_sandwich_on_small_grid(self):
        rows = miest.bench_orthogonal(h_list=(1, 2), d_grid=(0.0, 1.0, 8.0),
                                      k_grid=(64,), n_batches=16, rng=Rng(14),
                                      n_mc=20_000, dataset_size=256)
        for r in rows:
            tol_lo = 3.0 * (r.lower_std + r.mc_stderr) + 1e-9
            tol_up = 3.0 * (r.upper_std + r.mc_stderr) + 1e-9
            assert r.lower_bits <= r.mc_bits + tol_lo
            assert r.mc_bits <= r.upper_bits + tol_up

    def test_doubling_batches_shrinks_the_error_sqrt2(self):
        """stderr of the mean falls like 1/sqrt(B) (within 20%)."""
        ch_args = dict(h_list=(2,), d_grid=(1.0,), k_grid=(128,),
                       rng=Rng(14), n_mc=2_000, dataset_size=512)
        r1 = miest.bench_orthogonal(n_batches=64, **ch_args)[0]
        r2 = miest.bench_orthogonal(n_batches=128, **ch_args)[0]
        ratio = (r1.lower_std / np.sqrt(64)) / (r2.lower_std / np.sqrt(128))
        assert np.sqrt(2.0) * 0.8 <= ratio <= np.sqrt(2.0) * 1.2

    def test_k_larger_than_dataset_rejected(self):
        with pytest.raises(miest.EstimationError, match="dataset"):
            miest.bench_orthogonal(h_list=(1,), d_grid=(1.0,), k_grid=(512,),
                                   n_batches=2, rng=Rng(0), n_mc=1_000,
                                   dataset_size=128)
