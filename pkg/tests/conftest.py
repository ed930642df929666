import numpy as np
import pytest

from srspla import srs_synth as synth
from srspla import trace_format as tf


def make_probe(active=None, time=None, toa=500.0, timestamp_ns=0, rnti=1,
               label="unknown"):
    """Build an SrsProbe directly from float arrays (bypassing the container)."""
    freq = np.zeros(tf.N_FFT, dtype=complex)
    if active is not None:
        active = np.asarray(active, dtype=complex)
        assert active.shape == (tf.N_ACTIVE,)
        freq[tf.ACTIVE_START:tf.ACTIVE_STOP] = active
    if time is None:
        time_est = np.zeros(tf.N_TIME, dtype=complex)
    else:
        time_est = np.asarray(time, dtype=complex)
    snr = np.full(tf.N_RB, 25.0)
    return tf.SrsProbe(freq, time_est, snr, toa, timestamp_ns, rnti, label)


def calibration_profile(rho, n_taps=12, probe_period_ns=80_000_000):
    """Impairment-free many-tap profile with a known Gauss-Markov coefficient."""
    taps = [(3 * t, 1.0 / (1.0 + 0.15 * t), 0.0) for t in range(n_taps)]
    doppler = -np.log(rho) / (2 * np.pi * probe_period_ns * 1e-9) if rho > 0 else None
    if doppler is not None:
        return synth.DeviceProfile(taps=taps, doppler_hz=float(doppler))
    return synth.DeviceProfile(taps=taps, gm_rho=0.0)


def calibration_session(rho, n_probes, seed=0, rnti=77):
    return synth.SessionSpec(
        device=calibration_profile(rho),
        n_probes=n_probes,
        rnti=rnti,
        label="legit",
        seed=seed,
        session_id=f"cal-rho{rho}",
    )
