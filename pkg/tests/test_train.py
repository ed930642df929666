import numpy as np
import pytest

from srspla.authenticators import model_io
from srspla.authenticators import pearson as pa
from srspla.authenticators import training as tr
from srspla.authenticators.network import SeResNet1dConfig
from srspla.features import FEATURE_DIM


def blob_dataset(n=200, seed=0, dim=FEATURE_DIM, sep=6.0):
    """Two well-separated Gaussian blobs; label 1 = legit-like class."""
    rng = np.random.default_rng(seed)
    half = n // 2
    mu = rng.standard_normal(dim)
    mu /= np.linalg.norm(mu)
    x0 = rng.standard_normal((half, dim)) + sep * mu
    x1 = rng.standard_normal((n - half, dim)) - sep * mu
    x = np.vstack([x0, x1]).astype(np.float32)
    y = np.concatenate([np.zeros(half, np.int64), np.ones(n - half, np.int64)])
    order = rng.permutation(n)
    return x[order], y[order]


def tiny_model_config():
    return SeResNet1dConfig(stem_out=64, n_blocks=1, channels=16,
                            se_reduction=4, head_hidden=32)


class TestPieces:
    def test_smoothed_targets(self):
        t = tr.smooth_targets(np.array([1, 0]), 0.1)
        np.testing.assert_allclose(t[0], [0.05, 0.95])
        np.testing.assert_allclose(t[1], [0.95, 0.05])

    def test_cosine_schedule(self):
        lr = 1e-3
        assert tr.cosine_lr(lr, 0, 100) == pytest.approx(lr)
        assert tr.cosine_lr(lr, 50, 100) == pytest.approx(0.5 * lr)
        assert tr.cosine_lr(lr, 100, 100) == pytest.approx(0.0, abs=1e-18)

    def test_clip_global_norm(self):
        grads = {"a": np.array([3.0, 4.0]), "b": np.array([12.0])}
        pre = tr.clip_global_norm(grads, 1.0)
        assert pre == pytest.approx(13.0)
        post = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        assert post <= 1.0 + 1e-9

    def test_clip_leaves_small_gradients_alone(self):
        grads = {"a": np.array([0.3, 0.4])}
        tr.clip_global_norm(grads, 1.0)
        np.testing.assert_allclose(grads["a"], [0.3, 0.4])

    def test_train_config_validation(self):
        with pytest.raises(ValueError):
            tr.TrainConfig(label_smoothing=0.6).validate()
        with pytest.raises(ValueError):
            tr.TrainConfig(lr=-1.0).validate()


class TestTraining:
    def make_trained(self, seed=0, epochs=20):
        x, y = blob_dataset(seed=seed)
        split = 160
        cfg = tr.TrainConfig(epochs_max=epochs, batch_size=32, seed=seed)
        return tr.train(x[:split], y[:split], x[split:], y[split:],
                        cfg, tiny_model_config()), (x, y, split)

    def test_separable_blobs_reach_full_accuracy(self):
        model, _ = self.make_trained()
        assert model.best_val_accuracy == 1.0
        assert model.best_epoch < 20

    def test_determinism(self):
        m1, _ = self.make_trained(seed=3, epochs=4)
        m2, _ = self.make_trained(seed=3, epochs=4)
        assert m1.history == m2.history
        for k, v in m1.state.items():
            np.testing.assert_array_equal(v, m2.state[k])

    def test_standardization_from_train_only(self):
        model, (x, y, split) = self.make_trained(seed=1, epochs=2)
        expected = x[:split].astype(np.float64).mean(axis=0).astype(np.float32)
        np.testing.assert_array_equal(model.feat_mean, expected)

    def test_history_and_early_stop_bookkeeping(self):
        model, _ = self.make_trained(seed=2, epochs=6)
        assert [h["epoch"] for h in model.history] == list(range(len(model.history)))
        best = max(model.history, key=lambda h: h["val_accuracy"])
        assert model.best_val_accuracy == best["val_accuracy"]
        accs = [h["val_accuracy"] for h in model.history]
        assert accs.index(model.best_val_accuracy) == model.best_epoch

    def test_empty_split_rejected(self):
        x, y = blob_dataset(n=40, seed=4)
        with pytest.raises(tr.EmptySplit):
            tr.train(x[:0], y[:0], x, y, tr.TrainConfig(epochs_max=1),
                     tiny_model_config())

    def test_scores_in_unit_interval_and_separated(self):
        model, (x, y, split) = self.make_trained(seed=5)
        p = model.score(x[split:])
        assert np.all((p >= 0) & (p <= 1))
        assert np.all((p >= 0.5) == (y[split:] == 1))


class TestScoreBatch:
    def test_model_scoring_deterministic(self):
        x, y = blob_dataset(n=80, seed=6)
        cfg = tr.TrainConfig(epochs_max=2, batch_size=16, seed=6)
        model = tr.train(x[:60], y[:60], x[60:], y[60:], cfg, tiny_model_config())
        s1 = tr.score_batch(model, x[60:])
        s2 = tr.score_batch(model, x[60:])
        np.testing.assert_array_equal(s1, s2)

    def test_pearson_from_feature_rows(self):
        rng = np.random.default_rng(7)
        rows = np.zeros((4, FEATURE_DIM))
        amps = np.abs(rng.standard_normal((4, 1248))) + 0.1
        rows[:, :1248] = amps
        auth = pa.enroll(amps[:2])
        got = tr.score_batch(auth, rows)
        np.testing.assert_allclose(got, auth.unified_scores(amps), rtol=1e-12)
        assert tr.score_batch(auth, amps[0][None, :])[0] == pytest.approx(
            auth.unified_scores(amps[:1])[0])

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(8)
        auth = pa.enroll(np.abs(rng.standard_normal((3, 1248))) + 0.1)
        with pytest.raises(tr.DimensionMismatch):
            tr.score_batch(auth, np.ones((2, 999)))


class TestModelIO:
    def test_roundtrip_scores_identical(self, tmp_path):
        x, y = blob_dataset(n=80, seed=9)
        cfg = tr.TrainConfig(epochs_max=2, batch_size=16, seed=9)
        model = tr.train(x[:60], y[:60], x[60:], y[60:], cfg, tiny_model_config())
        path = str(tmp_path / "m.srsmdl")
        model_io.save_model(path, model)
        back = model_io.load_model(path)
        np.testing.assert_array_equal(model.score(x[60:]), back.score(x[60:]))
        assert back.best_epoch == model.best_epoch
        assert back.history == model.history

    def test_save_deterministic(self, tmp_path):
        x, y = blob_dataset(n=80, seed=10)
        cfg = tr.TrainConfig(epochs_max=2, batch_size=16, seed=10)
        model = tr.train(x[:60], y[:60], x[60:], y[60:], cfg, tiny_model_config())
        p1, p2 = str(tmp_path / "a.srsmdl"), str(tmp_path / "b.srsmdl")
        model_io.save_model(p1, model)
        model_io.save_model(p2, model)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.srsmdl"
        path.write_bytes(b"NOTMODEL" + b"\x00" * 64)
        with pytest.raises(model_io.ModelFileError):
            model_io.load_model(str(path))
