import numpy as np
import pytest

from srspla.authenticators import pearson as pa


def brute_pearson(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    dx, dy = x - x.mean(), y - y.mean()
    return float((dx * dy).sum() / np.sqrt((dx * dx).sum() * (dy * dy).sum()))


class TestEnroll:
    def test_two_identical_probes(self):
        amp = np.abs(np.random.default_rng(0).standard_normal(1248)) + 0.1
        auth = pa.enroll(np.stack([amp, amp]))
        np.testing.assert_array_equal(auth.reference, amp)
        assert auth.n_enroll == 2

    def test_mean_of_x_and_3x(self):
        amp = np.abs(np.random.default_rng(1).standard_normal(1248)) + 0.1
        auth = pa.enroll(np.stack([amp, 3.0 * amp]))
        np.testing.assert_allclose(auth.reference, 2.0 * amp, rtol=1e-15)

    def test_mean_oracle_50_probes(self):
        rng = np.random.default_rng(2)
        rows = np.abs(rng.standard_normal((50, 1248))) + 0.1
        auth = pa.enroll(rows)
        oracle = np.zeros(1248)
        for row in rows:
            oracle += row
        oracle /= 50
        np.testing.assert_allclose(auth.reference, oracle, rtol=1e-12)

    def test_degenerate_reference(self):
        with pytest.raises(pa.DegenerateReference):
            pa.enroll(np.ones((3, 1248)))

    def test_needs_two_probes(self):
        with pytest.raises(ValueError):
            pa.enroll(np.ones((1, 1248)))


class TestScore:
    def make_auth(self, seed=3):
        rng = np.random.default_rng(seed)
        rows = np.abs(rng.standard_normal((5, 1248))) + 0.1
        return pa.enroll(rows)

    def test_probe_equal_to_reference(self):
        auth = self.make_auth()
        assert auth.score(auth.reference) == pytest.approx(1.0, abs=1e-12)

    def test_positive_affine_invariance(self):
        auth = self.make_auth()
        probe = 2.5 * auth.reference + 7.0
        assert auth.score(probe) == pytest.approx(1.0, abs=1e-12)
        assert auth.decide(probe)

    def test_hand_vectors_match_bruteforce(self):
        # tiny fixed vectors; the brute-force correlation is the oracle
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        y = np.array([2.0, 1.0, 4.0, 3.0, 6.0])
        auth = pa.PearsonAuthenticator(reference=y)
        assert auth.score(x) == pytest.approx(brute_pearson(x, y), rel=1e-12)
        y5 = np.array([2.0, 1.0, 4.0, 3.0, 5.0])
        auth5 = pa.PearsonAuthenticator(reference=y5)
        assert auth5.score(x) == pytest.approx(0.8, abs=1e-12)
        assert brute_pearson(x, y5) == pytest.approx(0.8, abs=1e-12)

    def test_zero_variance_probe_scores_zero(self):
        auth = self.make_auth()
        assert auth.score(np.full(1248, 3.0)) == 0.0
        assert not auth.decide(np.full(1248, 3.0))

    def test_batch_matches_per_row(self):
        auth = self.make_auth()
        rng = np.random.default_rng(4)
        rows = np.abs(rng.standard_normal((20, 1248))) + 0.1
        batch = auth.score_batch(rows)
        singles = np.array([auth.score(r) for r in rows])
        np.testing.assert_allclose(batch, singles, rtol=1e-12)

    def test_unified_score_endpoints(self):
        auth = self.make_auth()
        u = auth.unified_scores(auth.reference[None, :])
        assert u[0] == pytest.approx(1.0, abs=1e-12)
        anti = -auth.reference + 2 * auth.reference.mean()
        u = auth.unified_scores(anti[None, :])
        assert u[0] == pytest.approx(0.0, abs=1e-9)

    def test_decision_invariance_random_affine(self):
        auth = self.make_auth()
        rng = np.random.default_rng(5)
        rows = np.abs(rng.standard_normal((10, 1248))) + 0.1
        base = auth.score_batch(rows) >= auth.threshold_alpha
        for _ in range(5):
            a = rng.uniform(0.1, 10.0)
            b = rng.uniform(-5.0, 5.0)
            trans = auth.score_batch(a * rows + b) >= auth.threshold_alpha
            np.testing.assert_array_equal(trans, base)
