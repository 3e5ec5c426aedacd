import math

import numpy as np
import pytest

import helpers
from spikesr.events import EventError, EventStream, SpikeTensor
from spikesr.metrics import (DegenerateStreamError, MetricsReport,
                             mse_spatial, mse_temporal, polarity_accuracy,
                             rmse_st)


def stream_of(events, width, height, t0=None, t1=None):
    t = [e[0] for e in events]
    x = [e[1] for e in events]
    y = [e[2] for e in events]
    p = [e[3] for e in events]
    return EventStream(t, x, y, p, width, height, t0=t0, t1=t1)


class TestMseTemporal:
    def test_identity(self, rng):
        x = SpikeTensor(rng.integers(0, 4, (2, 3, 3, 10)).astype(float))
        assert mse_temporal(x, x) == 0.0

    def test_hand_value(self):
        a = np.zeros((2, 1, 1, 3))
        b = np.zeros((2, 1, 1, 3))
        a[0, 0, 0] = [2, 0, 1]
        b[0, 0, 0] = [0, 1, 1]
        assert mse_temporal(SpikeTensor(a), SpikeTensor(b)) == 5.0

    def test_shape_mismatch(self):
        a = SpikeTensor(np.zeros((2, 2, 2, 4)))
        b = SpikeTensor(np.zeros((2, 2, 2, 5)))
        with pytest.raises(EventError):
            mse_temporal(a, b)


class TestMseSpatial:
    def test_equals_temporal_at_step_block(self, rng):
        a = SpikeTensor(rng.integers(0, 3, (2, 4, 4, 12)).astype(float))
        b = SpikeTensor(rng.integers(0, 3, (2, 4, 4, 12)).astype(float))
        assert mse_spatial(a, b, block_ms=1.0) == pytest.approx(
            mse_temporal(a, b), rel=1e-12)

    def test_single_block_collapses_time(self, rng):
        a = SpikeTensor(rng.integers(0, 3, (2, 4, 4, 12)).astype(float))
        b = SpikeTensor(rng.integers(0, 3, (2, 4, 4, 12)).astype(float))
        d = (a.data - b.data).sum(axis=-1)
        assert mse_spatial(a, b, block_ms=1e6) == pytest.approx(
            float(np.sum(d * d)), rel=1e-12)

    def test_partial_last_block(self):
        # 70 steps of 1 ms into 50 ms blocks: second block holds 20 steps
        a = np.zeros((1, 1, 1, 70))
        b = np.zeros((1, 1, 1, 70))
        a[..., 60] = 3.0
        b[..., 69] = 1.0
        got = mse_spatial(SpikeTensor(a), SpikeTensor(b))
        assert got == pytest.approx(4.0)

    def test_rejects_bad_block(self):
        x = SpikeTensor(np.zeros((1, 2, 2, 4)))
        with pytest.raises(EventError):
            mse_spatial(x, x, block_ms=0.0)


class TestRmseSt:
    def test_identity_is_zero(self, rng):
        for _ in range(5):
            s = helpers.random_stream(rng, 8, 8, 40, 60)
            rep = rmse_st(s, s, 40)
            assert rep.rmse_st == 0.0
            assert rep.pa_percent == 100.0

    def test_hand_value_single_miss(self):
        # gt: one +1 event at (1,1) t=10ms; out: empty; declared 20 ms span
        gt = stream_of([(10_000, 1, 1, 1)], 4, 4, t0=0, t1=20_000)
        out = stream_of([], 4, 4, t0=0, t1=20_000)
        rep = rmse_st(out, gt, 20)
        # mse_t = 1 (one missed voxel), mse_s = 1 (one block), n_p = 1
        assert rep.rmse_st == pytest.approx(math.sqrt(2.0 / 20.0))
        assert rep.n_p == 1 and rep.span_ms == 20.0
        assert rep.mse_t_raw == 1.0 and rep.mse_s_raw == 1.0

    def test_matches_oracle_on_random_streams(self, rng):
        for _ in range(10):
            w, h = int(rng.integers(4, 12)), int(rng.integers(4, 12))
            dur = int(rng.integers(20, 80))
            gt = helpers.random_stream(rng, w, h, dur, int(rng.integers(30, 120)))
            out = helpers.random_stream(rng, w, h, dur, int(rng.integers(0, 120)))
            steps = dur
            got = rmse_st(out, gt, steps)
            want, mse_t, mse_s, n_p = helpers.rmse_st_oracle(out, gt, steps)
            assert got.rmse_st == pytest.approx(want, rel=1e-9)
            assert got.mse_t_raw == mse_t and got.mse_s_raw == mse_s
            assert got.n_p == n_p

    def test_empty_ground_truth_rejected(self):
        gt = stream_of([], 4, 4, t0=0, t1=10_000)
        out = stream_of([(1_000, 0, 0, 1)], 4, 4)
        with pytest.raises(DegenerateStreamError):
            rmse_st(out, gt, 10)

    def test_zero_span_rejected(self):
        gt = stream_of([(5_000, 1, 1, 1)], 4, 4, t0=5_000, t1=5_000)
        out = stream_of([], 4, 4, t0=5_000, t1=5_000)
        with pytest.raises(DegenerateStreamError):
            rmse_st(out, gt, 10)

    def test_geometry_mismatch_rejected(self):
        gt = stream_of([(1_000, 1, 1, 1)], 4, 4)
        out = stream_of([(1_000, 1, 1, 1)], 8, 8)
        with pytest.raises(EventError):
            rmse_st(out, gt, 10)

    def test_span_is_union_of_both_streams(self):
        gt = stream_of([(2_000, 1, 1, 1)], 4, 4, t0=2_000, t1=6_000)
        out = stream_of([(0, 0, 0, 1)], 4, 4, t0=0, t1=1_000)
        rep = rmse_st(out, gt, 6)
        assert rep.span_ms == 6.0

    def test_normalized_fields(self, rng):
        gt = helpers.random_stream(rng, 6, 6, 30, 80)
        out = helpers.random_stream(rng, 6, 6, 30, 40)
        rep = rmse_st(out, gt, 30)
        assert rep.mse_t_norm == pytest.approx(rep.mse_t_raw / rep.n_p)
        assert rep.mse_s_norm == pytest.approx(rep.mse_s_raw / rep.n_p)


class TestPolarityAccuracy:
    def test_identity_100(self, rng):
        s = helpers.random_stream(rng, 6, 6, 30, 50)
        assert polarity_accuracy(s, s) == 100.0

    def test_flipped_is_zero(self, rng):
        s = helpers.random_stream(rng, 6, 6, 30, 50)
        flipped = EventStream(s.t, s.x, s.y, -s.p, s.width, s.height,
                              t0=s.t0, t1=s.t1)
        assert polarity_accuracy(flipped, s) == 0.0

    def test_half_agreement(self):
        # two occupied cells, one polarity match and one mismatch
        gt = stream_of([(500, 0, 0, 1), (500, 1, 1, -1)], 4, 4, t0=0, t1=1_000)
        out = stream_of([(500, 0, 0, 1), (500, 1, 1, 1)], 4, 4, t0=0, t1=1_000)
        assert polarity_accuracy(out, gt) == 50.0

    def test_tied_cells_excluded(self):
        # out has +1 and -1 in one cell (tied): cell drops from the count
        gt = stream_of([(500, 0, 0, 1), (500, 1, 1, 1)], 4, 4, t0=0, t1=1_000)
        out = stream_of([(200, 0, 0, 1), (700, 0, 0, -1),
                         (500, 1, 1, 1)], 4, 4, t0=0, t1=1_000)
        assert polarity_accuracy(out, gt) == 100.0

    def test_disjoint_cells_vacuous(self):
        gt = stream_of([(500, 0, 0, 1)], 4, 4, t0=0, t1=1_000)
        out = stream_of([(500, 3, 3, 1)], 4, 4, t0=0, t1=1_000)
        assert polarity_accuracy(out, gt) == 100.0

    def test_empty_stream_vacuous(self):
        gt = stream_of([(500, 0, 0, 1)], 4, 4)
        out = stream_of([], 4, 4)
        assert polarity_accuracy(out, gt) == 100.0

    def test_symmetric(self, rng):
        a = helpers.random_stream(rng, 6, 6, 40, 60)
        b = helpers.random_stream(rng, 6, 6, 40, 60)
        assert polarity_accuracy(a, b) == pytest.approx(polarity_accuracy(b, a))

    def test_matches_oracle(self, rng):
        for _ in range(10):
            a = helpers.random_stream(rng, 8, 8, 50, 100)
            b = helpers.random_stream(rng, 8, 8, 50, 100)
            steps = max(1, math.ceil((max(a.t1, b.t1) - min(a.t0, b.t0)) / 1000))
            want = helpers.pa_oracle(a, b, steps, min(a.t0, b.t0))[0]
            assert polarity_accuracy(a, b) == pytest.approx(want)


class TestMetricsReport:
    def test_kv_and_csv_round_trip(self, rng):
        gt = helpers.random_stream(rng, 6, 6, 30, 60)
        out = helpers.random_stream(rng, 6, 6, 30, 30)
        rep = rmse_st(out, gt, 30)
        kv = dict(line.split("=") for line in rep.to_kv().splitlines())
        assert set(kv) == set(MetricsReport.FIELDS)
        assert float(kv["rmse_st"]) == rep.rmse_st
        row = rep.to_csv_row().split(",")
        assert len(row) == len(MetricsReport.FIELDS)
        header = MetricsReport.csv_header().split(",")
        assert header[0] == "rmse_st"
