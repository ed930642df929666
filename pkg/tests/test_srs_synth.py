import math

import numpy as np
import pytest

from srspla import srs_synth as synth
from srspla import trace_format as tf


def flat_profile(**kwargs):
    base = dict(taps=[(0, 1.0, 0.0)], doppler_hz=0.0, toa_jitter_ns=0.0)
    base.update(kwargs)
    return synth.DeviceProfile(**base)


def session(profile, n=10, seed=0, **kwargs):
    base = dict(device=profile, n_probes=n, rnti=100, label="legit", seed=seed)
    base.update(kwargs)
    return synth.SessionSpec(**base)


def complex_corr(a, b):
    num = np.vdot(a, b)
    return num / (np.linalg.norm(a) * np.linalg.norm(b))


class TestGenSession:
    def test_single_tap_flat_channel(self):
        probes = list(synth.gen_session(session(flat_profile(), n=5)))
        assert len(probes) == 5
        first = probes[0]
        active = first.active_bins
        amps = np.abs(active)
        assert np.all(amps == amps[0]) and amps[0] > 0
        # impulse response concentrated at delay 0
        assert np.count_nonzero(first.time_est) == 1
        assert first.time_est[0] != 0
        for p in probes[1:]:
            np.testing.assert_array_equal(p.freq_est, first.freq_est)
            np.testing.assert_array_equal(p.time_est, first.time_est)

    def test_frozen_channel_lag1_correlation(self):
        profile = flat_profile(taps=[(0, 1.0, 0.0), (4, 0.5, 0.3), (11, 0.2, -1.0)])
        probes = list(synth.gen_session(session(profile, n=8)))
        for a, b in zip(probes, probes[1:]):
            r = complex_corr(a.active_bins, b.active_bins)
            assert abs(r - 1.0) < 1e-6

    def test_probe_invariants_and_ordering(self):
        probes = list(synth.gen_session(session(synth.LEGIT_PROFILE, n=30, seed=3)))
        ts = [p.timestamp_ns for p in probes]
        assert all(t1 < t2 for t1, t2 in zip(ts, ts[1:]))
        for p in probes:
            p.validate()
            assert np.all(np.abs(p.active_bins) > 0)

    def test_quantization_headroom(self):
        probes = list(synth.gen_session(session(synth.LEGIT_PROFILE, n=4, seed=1)))
        for p in probes:
            peak = max(np.abs(p.freq_est.real).max(), np.abs(p.freq_est.imag).max(),
                       np.abs(p.time_est.real).max(), np.abs(p.time_est.imag).max())
            assert peak == pytest.approx(synth.Q15_HEADROOM * 32767 / 32768, abs=1e-4)

    def test_quantization_overflow_signals_bad_profile(self):
        bad = flat_profile(pa_coeff3=float("inf"))
        with np.errstate(invalid="ignore"):
            with pytest.raises(synth.QuantizationOverflow):
                list(synth.gen_session(session(bad, n=1)))

    def test_doppler_nyquist_enforced(self):
        fast = flat_profile(doppler_hz=7.0)  # rate/2 = 6.25 Hz at 80 ms
        with pytest.raises(synth.ConfigError):
            session(fast).validate()


class TestGaussMarkov:
    def test_rho_mapping(self):
        assert synth.rho_from_doppler(0.0, 80_000_000) == 1.0
        f = -math.log(0.9) / (2 * math.pi * 0.08)
        assert synth.rho_from_doppler(f, 80_000_000) == pytest.approx(0.9, abs=1e-12)

    def test_lag1_correlation_matches_rho(self):
        rng = np.random.default_rng(42)
        powers = np.array([1.0, 0.5, 0.25, 0.125])
        phase0 = np.zeros(4)
        gains = np.array(list(synth.gauss_markov_gains(rng, 0.9, 2000, powers, phase0)))
        r = complex_corr(gains[:-1].ravel(), gains[1:].ravel())
        assert abs(r) == pytest.approx(0.9, abs=0.03)

    def test_iid_when_rho_zero(self):
        rng = np.random.default_rng(7)
        powers = np.ones(4)
        gains = np.array(list(synth.gauss_markov_gains(rng, 0.0, 2000, powers, np.zeros(4))))
        r = complex_corr(gains[:-1].ravel(), gains[1:].ravel())
        assert abs(r) < 0.05

    def test_stationary_variance(self):
        rng = np.random.default_rng(11)
        powers = np.ones(8)
        gains = np.array(list(synth.gauss_markov_gains(rng, 0.9, 2000, powers, np.zeros(8))))
        v1 = np.var(gains[:1000].ravel())
        v2 = np.var(gains[1000:].ravel())
        assert abs(v2 - v1) / v1 < 0.10

    def test_gm_rho_override_in_session(self):
        profile = flat_profile(taps=[(0, 1.0, 0.0), (5, 0.5, 0.0)], gm_rho=0.0)
        probes = list(synth.gen_session(session(profile, n=400, seed=5)))
        rs = [abs(complex_corr(a.active_bins, b.active_bins))
              for a, b in zip(probes, probes[1:])]
        # iid tap gains: consecutive probes share no excess correlation beyond
        # the structural floor from the common steering vectors
        assert np.mean(rs) < 0.75


class TestSeparability:
    def test_cross_device_below_within_device(self):
        legit = list(synth.gen_session(session(synth.LEGIT_PROFILE, n=100, seed=21)))
        attack = list(synth.gen_session(
            session(synth.ATTACK_PROFILE, n=100, seed=22, label="attack", rnti=200)))
        la = np.array([np.abs(p.active_bins) for p in legit])
        aa = np.array([np.abs(p.active_bins) for p in attack])
        within = np.mean([np.corrcoef(la[i], la[i + 1])[0, 1] for i in range(99)])
        cross = np.mean([np.corrcoef(la[i], aa[i])[0, 1] for i in range(100)])
        assert cross < within


class TestGenDataset:
    def small_config(self, seed=0):
        sessions = [
            session(synth.LEGIT_PROFILE, n=20, seed=seed + 1, session_id="l0", rnti=1),
            session(synth.ATTACK_PROFILE, n=5, seed=seed + 2, session_id="a0",
                    rnti=2, label="attack"),
        ]
        return synth.DatasetConfig(sessions=sessions)

    def test_default_config_ratio(self):
        cfg = synth.default_dataset_config()
        cfg.validate()
        legit = sum(s.n_probes for s in cfg.sessions if s.label == "legit")
        attack = sum(s.n_probes for s in cfg.sessions if s.label == "attack")
        assert abs(legit / attack - 38.0) / 38.0 <= 0.10

    def test_zero_attack_sessions_rejected(self):
        cfg = synth.DatasetConfig(sessions=[session(synth.LEGIT_PROFILE, n=8, seed=1)])
        with pytest.raises(synth.ConfigError):
            cfg.validate()

    def test_deterministic_files(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        synth.gen_dataset(self.small_config(), str(d1))
        synth.gen_dataset(self.small_config(), str(d2))
        for name in ("l0.srstrace", "a0.srstrace", "manifest.json"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_manifest_contents(self, tmp_path):
        manifest = synth.gen_dataset(self.small_config(), str(tmp_path))
        assert manifest["counts"] == {"legit": 20, "attack": 5}
        assert manifest["legit_to_attack_ratio"] == 4.0
        by_id = {s["session_id"]: s for s in manifest["sessions"]}
        assert by_id["a0"]["label"] == "attack"
        assert "taps" in by_id["a0"]["device"]

    def test_generated_files_parse_back(self, tmp_path):
        manifest = synth.gen_dataset(self.small_config(), str(tmp_path))
        total = 0
        for meta in manifest["sessions"]:
            with open(tmp_path / meta["path"], "rb") as fh:
                probes = list(tf.assemble_probes(tf.read_trace(fh), meta["label"]))
            assert len(probes) == meta["n_probes"]
            for p in probes:
                p.validate()
                assert p.device_label == meta["label"]
            total += len(probes)
        assert total == 25

    def test_profile_dict_roundtrip(self):
        d = synth.ATTACK_PROFILE.to_dict()
        back = synth.DeviceProfile.from_dict(d)
        assert back == synth.ATTACK_PROFILE
