import numpy as np
import pytest

from leobeam import dataset, evaluate, nn


class TestTopkAccuracy:
    def test_full_coverage_is_one(self, rng):
        logits = rng.standard_normal((20, 16))
        labels = rng.integers(0, 16, 20)
        assert evaluate.topk_accuracy(logits, labels, 16) == 1.0

    def test_single_row_argmax(self):
        logits = np.zeros((1, 16))
        logits[0, 9] = 5.0
        assert evaluate.topk_accuracy(logits, np.array([9]), 1) == 1.0
        assert evaluate.topk_accuracy(logits, np.array([3]), 1) == 0.0

    def test_hand_batch_against_sorting_oracle(self, rng):
        logits = rng.standard_normal((4, 16))
        labels = rng.integers(0, 16, 4)
        for k in (1, 2, 3, 5):
            got = evaluate.topk_accuracy(logits, labels, k)
            hits = 0
            for i in range(4):
                ranked = sorted(range(16), key=lambda b: (-logits[i, b], b))
                hits += labels[i] in ranked[:k]
            assert got == pytest.approx(hits / 4)

    def test_ties_go_to_lower_index(self):
        logits = np.zeros((1, 16))  # all tied
        assert evaluate.topk_accuracy(logits, np.array([0]), 1) == 1.0
        assert evaluate.topk_accuracy(logits, np.array([1]), 1) == 0.0
        assert evaluate.topk_accuracy(logits, np.array([2]), 3) == 1.0

    def test_monotone_in_k(self, rng):
        logits = rng.standard_normal((50, 16))
        labels = rng.integers(0, 16, 50)
        accs = [evaluate.topk_accuracy(logits, labels, k) for k in range(1, 17)]
        assert all(b >= a for a, b in zip(accs, accs[1:]))
        assert accs[-1] == 1.0

    def test_errors(self, rng):
        with pytest.raises(ValueError, match="empty"):
            evaluate.topk_accuracy(np.zeros((0, 16)), np.zeros(0, int), 1)
        with pytest.raises(ValueError):
            evaluate.topk_accuracy(np.zeros((2, 16)), np.zeros(2, int), 17)


def synthetic_dataset(labels, planes, snapshots, elevations, ue=None, sat=None,
                      t_total=None):
    n = len(labels)
    return dataset.Dataset(
        {"num_snapshots": t_total or int(np.max(snapshots)) + 1, "n_beams": 16},
        plane_id=np.asarray(planes, np.int64),
        ue_id=np.asarray(ue if ue is not None else np.zeros(n), np.int64),
        sat_id=np.asarray(sat if sat is not None else np.zeros(n), np.int64),
        snapshot=np.asarray(snapshots, np.int64),
        elevation_deg=np.asarray(elevations, float),
        slant_range_m=np.ones(n),
        best_snr_db=np.zeros(n),
        label=np.asarray(labels, np.int64),
        features=np.zeros((n, 8)),
    )


class TestPerClientAccuracy:
    def test_zero_model_hand_accuracies(self):
        # Zero parameters predict beam 0 everywhere (tie rule); craft shards
        # whose test labels make accuracies 1.0 and 0.8 -> mean 0.9.
        arch = nn.ArchMLP()
        params = nn.ModelParams(arch, np.zeros(nn.param_count(arch)))
        labels = np.array([0] * 10 + [0] * 8 + [1] * 2, dtype=np.int64)
        inputs = np.zeros((20, 8))
        shards = [
            dataset.Shard(0, np.array([], int), np.arange(0, 10)),
            dataset.Shard(1, np.array([], int), np.arange(10, 20)),
        ]
        per, mean, skipped = evaluate.per_client_accuracy(params, inputs, labels, shards)
        assert per[0] == pytest.approx(1.0)
        assert per[1] == pytest.approx(0.8)
        assert mean == pytest.approx(0.9)
        assert skipped == []
        assert min(per.values()) <= mean <= max(per.values())

    def test_empty_test_shard_skipped(self):
        arch = nn.ArchMLP()
        params = nn.ModelParams(arch, np.zeros(nn.param_count(arch)))
        shards = [
            dataset.Shard(0, np.array([], int), np.arange(4)),
            dataset.Shard(1, np.arange(4), np.array([], int)),
        ]
        per, mean, skipped = evaluate.per_client_accuracy(
            params, np.zeros((4, 8)), np.zeros(4, np.int64), shards
        )
        assert list(per) == [0]
        assert skipped == [1]


class TestElevationBins:
    def test_bin_edges_truncate(self):
        bins = evaluate.elevation_bins(10.0, 25.0)
        assert bins == [(10.0, 35.0), (35.0, 60.0), (60.0, 85.0), (85.0, 90.0)]

    def test_single_bin_equals_global(self):
        preds = np.array([1, 2, 2, 3])
        labels = np.array([1, 2, 0, 0])
        elev = np.array([15.0, 25.0, 35.0, 88.0])
        bins = evaluate.elevation_binned_accuracy(preds, labels, elev, 10.0, 80.0)
        assert len(bins) == 1
        assert bins[0][2] == pytest.approx(0.5)
        assert bins[0][3] == 4

    def test_counts_partition_and_empty_bins(self):
        preds = labels = np.zeros(3, int)
        elev = np.array([12.0, 13.0, 90.0])
        bins = evaluate.elevation_binned_accuracy(preds, labels, elev, 10.0, 10.0)
        assert sum(n for *_, n in bins) == 3
        assert bins[0][3] == 2
        assert bins[-1][3] == 1       # elevation 90 lands in the last bin
        assert bins[1][2] is None     # empty bin reports absence

    def test_weighted_bins_recover_global(self, rng):
        preds = rng.integers(0, 16, 200)
        labels = rng.integers(0, 16, 200)
        elev = rng.uniform(10, 90, 200)
        bins = evaluate.elevation_binned_accuracy(preds, labels, elev, 10.0, 10.0)
        total = sum(a * n for _, _, a, n in bins if a is not None)
        count = sum(n for *_, n in bins)
        assert total / count == pytest.approx(np.mean(preds == labels))


class TestSwitchingRate:
    def test_constant_predictions_zero(self):
        ue = np.zeros(5, int)
        sat = np.zeros(5, int)
        snap = np.arange(5)
        elev = np.full(5, 45.0)
        out = evaluate.switching_rate(np.full(5, 7), ue, sat, snap, elev, 10.0, 10.0)
        rates = [r for *_, r, n in [(lo, hi, r, n) for lo, hi, r, n in out] if n > 0]
        assert rates == [0.0]

    def test_alternating_beams_rate_one(self):
        n = 6
        beams = np.array([0, 1] * 3)
        out = evaluate.switching_rate(
            beams, np.zeros(n, int), np.zeros(n, int), np.arange(n),
            np.full(n, 45.0), 10.0, 10.0,
        )
        by_bin = {lo: (r, c) for lo, hi, r, c in out}
        assert by_bin[40.0] == (1.0, 5)

    def test_no_transitions_reports_absent(self):
        out = evaluate.switching_rate(
            np.array([0, 1]), np.array([0, 1]), np.array([0, 0]),
            np.array([0, 1]), np.array([45.0, 45.0]), 10.0, 10.0,
        )
        assert all(r is None and n == 0 for _, _, r, n in out)

    def test_satellite_handover_not_a_transition(self):
        # Same UE, different satellites on consecutive snapshots: no track.
        out = evaluate.switching_rate(
            np.array([0, 5]), np.array([0, 0]), np.array([1, 2]),
            np.array([3, 4]), np.array([45.0, 45.0]), 10.0, 10.0,
        )
        assert all(n == 0 for *_, n in out)

    def test_gap_in_track_not_a_transition(self):
        out = evaluate.switching_rate(
            np.array([0, 5]), np.zeros(2, int), np.zeros(2, int),
            np.array([3, 5]), np.array([45.0, 45.0]), 10.0, 10.0,
        )
        assert all(n == 0 for *_, n in out)

    def test_attribution_to_earlier_elevation(self):
        # One transition whose earlier snapshot sits in the 10-20 bin and the
        # later in 30-40: the transition must be counted in 10-20.
        out = evaluate.switching_rate(
            np.array([2, 3]), np.zeros(2, int), np.zeros(2, int),
            np.array([0, 1]), np.array([12.0, 33.0]), 10.0, 10.0,
        )
        by_bin = {lo: (r, n) for lo, hi, r, n in out}
        assert by_bin[10.0] == (1.0, 1)
        assert by_bin[30.0] == (None, 0)


class TestSpearman:
    def test_monotone(self):
        assert evaluate.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
        assert evaluate.spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)

    def test_constant_is_zero(self):
        assert evaluate.spearman([1, 2, 3], [5, 5, 5]) == 0.0

    def test_nonlinear_monotone_still_one(self):
        x = [1, 2, 3, 4, 5]
        y = [1, 8, 27, 64, 125]
        assert evaluate.spearman(x, y) == pytest.approx(1.0)


class TestBuildReport:
    def trained_setup(self, tiny_config):
        ds = dataset.generate(tiny_config)
        shards = dataset.partition(ds, tiny_config.dataset.test_fraction)
        arch = nn.ArchMLP()
        params = nn.init(arch, 5)
        return ds, shards, params

    def test_report_consistency(self, tiny_config):
        ds, shards, params = self.trained_setup(tiny_config)
        rep = evaluate.build_report(params, ds, shards, tiny_config, train_time_s=1.5)
        assert 0.0 <= rep.top1 <= rep.top3 <= 1.0
        vals = list(rep.per_client_top1.values())
        assert rep.mean_client_top1 == pytest.approx(np.mean(vals), abs=1e-12)
        assert sum(n for *_, n in rep.elevation_bins) == rep.n_test
        total = sum(a * n for _, _, a, n in rep.elevation_bins if a is not None)
        assert total / rep.n_test == pytest.approx(rep.top1, abs=1e-12)

    def test_param_bytes_matches_checkpoint(self, tiny_config, tmp_path):
        ds, shards, params = self.trained_setup(tiny_config)
        rep = evaluate.build_report(params, ds, shards, tiny_config)
        path = tmp_path / "m.bfl1"
        nn.save_checkpoint(params, path)
        assert rep.param_bytes == path.stat().st_size - nn.HEADER_BYTES

    def test_arch_mismatch_rejected(self, tiny_config):
        ds, shards, _ = self.trained_setup(tiny_config)
        bad = nn.init(nn.ArchMLP(n_beams=8), 0)
        with pytest.raises(ValueError, match="beams"):
            evaluate.build_report(bad, ds, shards, tiny_config)

    def test_oracle_switching_is_model_free(self, tiny_config):
        ds, shards, params = self.trained_setup(tiny_config)
        rep1 = evaluate.build_report(params, ds, shards, tiny_config)
        rep2 = evaluate.build_report(nn.init(nn.ArchGNN(), 1), ds, shards, tiny_config)
        oracle1 = [(lo, o) for lo, _, _, o, _ in rep1.switching]
        oracle2 = [(lo, o) for lo, _, _, o, _ in rep2.switching]
        assert oracle1 == oracle2
        test_idx = np.sort(np.concatenate([s.test_idx for s in shards]))
        direct = evaluate.switching_rate(
            ds.label[test_idx], ds.ue_id[test_idx], ds.sat_id[test_idx],
            ds.snapshot[test_idx], ds.elevation_deg[test_idx],
            tiny_config.theta_min_deg, 10.0,
        )
        assert [(lo, r) for lo, _, r, _ in direct] == oracle1

    def test_shared_test_counts_across_models(self, tiny_config):
        ds, shards, params = self.trained_setup(tiny_config)
        rep_mlp = evaluate.build_report(params, ds, shards, tiny_config)
        rep_gnn = evaluate.build_report(nn.init(nn.ArchGNN(), 1), ds, shards, tiny_config)
        assert rep_mlp.n_test == rep_gnn.n_test
        assert [n for *_, n in rep_mlp.elevation_bins] == [
            n for *_, n in rep_gnn.elevation_bins
        ]

    def test_write_reports_deterministic(self, tiny_config, tmp_path):
        ds, shards, params = self.trained_setup(tiny_config)
        rep = evaluate.build_report(params, ds, shards, tiny_config, train_time_s=2.0)
        d1, d2 = tmp_path / "a", tmp_path / "b"
        evaluate.write_reports(rep, d1)
        evaluate.write_reports(rep, d2)
        for name in ("metrics.csv", "elevation_accuracy.csv", "switching.csv"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
        header = (d1 / "switching.csv").read_text().splitlines()[0]
        assert header == "bin_lo,bin_hi,model_rate,oracle_rate,n"

    def test_comparison_rows_exact_set(self, tiny_config):
        ds, shards, params = self.trained_setup(tiny_config)
        rep = evaluate.build_report(params, ds, shards, tiny_config, train_time_s=2.0)
        rows = evaluate.comparison_rows(rep, rep)
        assert rows[0] == "metric,mlp,gnn"
        names = [r.split(",")[0] for r in rows[1:]]
        assert names == list(evaluate.COMPARISON_METRICS)
        assert len(names) == 5
