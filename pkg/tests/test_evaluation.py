import numpy as np
import pytest

from srspla import evaluation as ev
from srspla import feature_io as fio
from srspla import features as feat
from srspla import srs_synth as synth
from srspla.authenticators.network import SeResNet1dConfig
from srspla.authenticators.training import TrainConfig


def synthetic_matrix(tmp_path, legit_n=(40, 40), attack_n=(20,), seed=0):
    sessions = []
    for k, n in enumerate(legit_n):
        sessions.append(synth.SessionSpec(
            device=synth.LEGIT_PROFILE, n_probes=n, rnti=10 + k, label="legit",
            seed=seed + k, session_id=f"l{k}", start_timestamp_ns=k * 10**12))
    for k, n in enumerate(attack_n):
        sessions.append(synth.SessionSpec(
            device=synth.ATTACK_PROFILE, n_probes=n, rnti=90 + k, label="attack",
            seed=seed + 50 + k, session_id=f"a{k}", start_timestamp_ns=(10 + k) * 10**12))
    manifest = synth.gen_dataset(synth.DatasetConfig(sessions), str(tmp_path))
    return fio.extract_dataset(manifest, str(tmp_path))


class TestSplits:
    def matrix_100(self):
        n = 100
        rng = np.random.default_rng(0)
        return fio.FeatureMatrix(
            rng.standard_normal((n, feat.FEATURE_DIM)).astype(np.float32),
            np.arange(n, dtype=np.uint64) * 80_000_000,
            np.full(n, 7, np.uint16),
            np.ones(n, np.uint8),
            np.zeros(n, np.uint16),
            ["s0"],
        )

    def test_chronological_exact_fractions(self):
        fm = self.matrix_100()
        s = ev.make_splits(fm, ev.SplitSpec("chronological"))
        np.testing.assert_array_equal(s.train, np.arange(70))
        np.testing.assert_array_equal(s.val, np.arange(70, 85))
        np.testing.assert_array_equal(s.test, np.arange(85, 100))

    def test_chronological_purity(self):
        fm = self.matrix_100()
        s = ev.make_splits(fm, ev.SplitSpec("chronological"))
        ev.check_chronological_purity(fm, s)
        assert fm.timestamps[s.train].max() < fm.timestamps[s.val].min()
        assert fm.timestamps[s.val].max() < fm.timestamps[s.test].min()

    def test_random_deterministic(self):
        fm = self.matrix_100()
        s1 = ev.make_splits(fm, ev.SplitSpec("random", seed=5))
        s2 = ev.make_splits(fm, ev.SplitSpec("random", seed=5))
        np.testing.assert_array_equal(s1.train, s2.train)
        np.testing.assert_array_equal(s1.test, s2.test)

    def test_partition_disjoint_exhaustive(self):
        fm = self.matrix_100()
        for method in ("chronological", "random"):
            s = ev.make_splits(fm, ev.SplitSpec(method, seed=1))
            assert s.all_disjoint_exhaustive(len(fm))

    def test_session_too_small(self):
        fm = self.matrix_100()
        fm.session_idx[:] = 0
        fm.session_idx[:6] = 1
        fm.session_ids = ["s0", "s1"]
        with pytest.raises(ev.SessionTooSmall):
            ev.make_splits(fm, ev.SplitSpec("chronological"))

    def test_methods_share_class_counts(self, tmp_path):
        fm = synthetic_matrix(tmp_path)
        sc = ev.make_splits(fm, ev.SplitSpec("chronological"))
        sr = ev.make_splits(fm, ev.SplitSpec("random", seed=3))
        assert ev.split_class_sizes(fm, sc) == ev.split_class_sizes(fm, sr)


class TestEer:
    def test_perfect_separation(self):
        eer, _ = ev.compute_eer(np.array([0.9, 0.8]), np.array([0.1, 0.2]))
        assert eer == 0.0

    def test_exact_crossing_point(self):
        eer, thr = ev.compute_eer(np.array([0.8, 0.6, 0.4]),
                                  np.array([0.7, 0.5, 0.3]))
        assert eer == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert thr == pytest.approx(0.6)

    def test_identical_distributions_half(self):
        rng = np.random.default_rng(1)
        legit = rng.standard_normal(10_000)
        attack = rng.standard_normal(10_000)
        eer, _ = ev.compute_eer(legit, attack)
        assert eer == pytest.approx(0.5, abs=0.02)

    def test_single_shared_score(self):
        eer, _ = ev.compute_eer(np.array([0.5, 0.5]), np.array([0.5]))
        assert eer == pytest.approx(0.5)

    def test_sweep_monotone(self):
        rng = np.random.default_rng(2)
        _, far, frr = ev.far_frr_sweep(rng.random(500), rng.random(300))
        assert np.all(np.diff(far) <= 0)
        assert np.all(np.diff(frr) >= 0)

    def test_eer_bracketing(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            legit = rng.normal(0.7, 0.2, size=rng.integers(5, 200))
            attack = rng.normal(0.3, 0.2, size=rng.integers(5, 200))
            grid, far, frr = ev.far_frr_sweep(legit, attack)
            eer, _ = ev.compute_eer(legit, attack)
            d = far - frr
            k = int(np.argmax(d <= 0))
            lo = min(far[k - 1], far[k], frr[k - 1], frr[k])
            hi = max(far[k - 1], far[k], frr[k - 1], frr[k])
            assert lo - 1e-12 <= eer <= hi + 1e-12
            assert 0.0 <= eer <= 0.5 + 1e-12

    def test_empty_class(self):
        with pytest.raises(ev.EmptyClass):
            ev.compute_eer(np.array([]), np.array([0.1]))


def trapezoid_auc(legit, attack):
    """Independent oracle: trapezoidal integration of the full ROC curve."""
    grid, far, frr = ev.far_frr_sweep(legit, attack)
    tpr = 1.0 - frr
    return float(np.trapezoid(tpr[::-1], far[::-1]))


class TestAuc:
    def test_perfect_separation(self):
        assert ev.compute_auc(np.array([0.9, 0.8]), np.array([0.1, 0.2])) == 1.0

    def test_identical_singletons(self):
        assert ev.compute_auc(np.array([0.4]), np.array([0.4])) == 0.5

    def test_matches_trapezoid_oracle(self):
        rng = np.random.default_rng(4)
        for trial in range(20):
            legit = rng.normal(0.6, 0.25, 200)
            attack = rng.normal(0.4, 0.25, 200)
            assert ev.compute_auc(legit, attack) == pytest.approx(
                trapezoid_auc(legit, attack), abs=1e-9)

    def test_matches_trapezoid_with_ties(self):
        rng = np.random.default_rng(5)
        legit = np.round(rng.random(300), 1)
        attack = np.round(rng.random(200), 1)
        assert ev.compute_auc(legit, attack) == pytest.approx(
            trapezoid_auc(legit, attack), abs=1e-9)


class TestExperiment:
    def test_pearson_experiment(self, tmp_path):
        fm = synthetic_matrix(tmp_path)
        result = ev.run_experiment(fm, "pearson", split_seed=0)
        rc, rr = result["chronological"], result["random"]
        assert rc.split_sizes == rr.split_sizes
        assert result["delta_eer"] == pytest.approx(rc.eer - rr.eer)
        for rep in (rc, rr):
            assert 0.0 <= rep.eer <= 1.0
            assert 0.0 <= rep.auc <= 1.0
            assert len(rep.det_points) == len(rep.sweep["threshold"])
            assert rep.extra["model_kind"] == "pearson"

    def test_resnet_experiment_tiny(self, tmp_path):
        fm = synthetic_matrix(tmp_path)
        tc = TrainConfig(epochs_max=2, early_stop_patience=2, batch_size=16, seed=0)
        mc = SeResNet1dConfig(stem_out=32, n_blocks=1, channels=8, se_reduction=4,
                              head_hidden=16)
        result = ev.run_experiment(fm, "resnet", split_seed=0,
                                   train_config=tc, model_config=mc)
        assert "best_epoch" in result["chronological"].extra
        assert result["chronological"].split_sizes == result["random"].split_sizes

    def test_report_deterministic(self, tmp_path):
        fm = synthetic_matrix(tmp_path)
        r1 = ev.run_experiment(fm, "pearson", split_seed=2)
        r2 = ev.run_experiment(fm, "pearson", split_seed=2)
        assert r1["chronological"].to_dict() == r2["chronological"].to_dict()
        assert r1["random"].to_dict() == r2["random"].to_dict()


class TestBench:
    def test_stage_set_and_stats(self, tmp_path):
        from srspla.authenticators.pearson import enroll
        from srspla.authenticators.training import train as train_fn

        probes = list(synth.gen_session(synth.SessionSpec(
            device=synth.LEGIT_PROFILE, n_probes=30, rnti=3, label="legit", seed=8)))
        rows = np.stack([vec for _, vec in feat.extract_stream(probes)])
        amps = rows[:, feat.FEATURE_SLICES["amplitude"]]
        auth = enroll(amps[:10])
        rng = np.random.default_rng(0)
        y = np.concatenate([np.zeros(10, np.int64), np.ones(20, np.int64)])
        tc = TrainConfig(epochs_max=1, batch_size=8, seed=0)
        mc = SeResNet1dConfig(stem_out=32, n_blocks=1, channels=8, se_reduction=4,
                              head_hidden=16)
        model = train_fn(rows.astype(np.float32), y, rows[:5].astype(np.float32),
                         y[:5], tc, mc)
        table = ev.bench_latency(probes, model, auth, n_probes=10, warmup=5)
        assert set(ev.BENCH_STAGES) <= set(table)
        assert table["n_probes"] == 10
        for stage in ev.BENCH_STAGES:
            assert table[stage]["max_us"] >= table[stage]["mean_us"] > 0
        assert table["total"]["mean_us"] >= max(
            table[s]["mean_us"] for s in ev.BENCH_STAGES)

    def test_requires_warmup_headroom(self):
        with pytest.raises(ValueError):
            ev.bench_latency([], None, None, warmup=100)
