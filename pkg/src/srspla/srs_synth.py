"""Synthetic SRS trace generator.

Produces temporally autocorrelated, device-fingerprinted probe sessions in
the trace_format container so the full pipeline runs at desk scale. The
channel is a tapped delay line whose complex tap gains follow a first-order
Gauss-Markov process with coefficient rho = exp(-2*pi*doppler_hz*T_probe);
transmitter impairments (IQ imbalance, cubic PA term, CFO rotation) are
applied on top as a per-device fingerprint.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Iterator

import numpy as np

from srspla import trace_format as tf


class ConfigError(Exception):
    """Invalid generator or pipeline configuration."""


class QuantizationOverflow(Exception):
    """Post-impairment probe amplitude cannot be Q15-quantized (bad profile)."""


Q15_HEADROOM = 0.7  # max |component| after per-probe scaling


def rho_from_doppler(doppler_hz: float, probe_period_ns: int) -> float:
    """Gauss-Markov lag-1 coefficient for a given Doppler and probe period."""
    return math.exp(-2.0 * math.pi * doppler_hz * probe_period_ns * 1e-9)


@dataclass
class DeviceProfile:
    """Synthetic device fingerprint: multipath geometry plus analog impairments.

    taps: (delay_index, mean_power, phase0) triples, delay strictly increasing.
    gm_rho, when set, overrides the Doppler-derived Gauss-Markov coefficient
    (the Doppler mapping cannot express rho = 0 within the Nyquist bound).
    """

    taps: list[tuple[int, float, float]]
    cfo_hz: float = 0.0
    iq_gain_imbalance: float = 1.0
    iq_phase_imbalance_rad: float = 0.0
    pa_coeff3: float = 0.0
    doppler_hz: float = 0.0
    toa_mean_ns: float = 500.0
    toa_jitter_ns: float = 0.0
    snr_db_mean: float = 25.0
    gm_rho: float | None = None

    def validate(self, probe_period_ns: int | None = None) -> None:
        if not self.taps:
            raise ConfigError("device profile needs at least one tap")
        delays = [t[0] for t in self.taps]
        if any(d2 <= d1 for d1, d2 in zip(delays, delays[1:])):
            raise ConfigError(f"tap delays must be strictly increasing, got {delays}")
        if not all(0 <= d <= tf.N_TIME - 1 for d in delays):
            raise ConfigError(f"tap delays must lie in [0, {tf.N_TIME - 1}], got {delays}")
        if sum(t[1] for t in self.taps) <= 0:
            raise ConfigError("sum of tap mean powers must be positive")
        if self.doppler_hz < 0:
            raise ConfigError("doppler_hz must be >= 0")
        if self.toa_jitter_ns < 0:
            raise ConfigError("toa_jitter_ns must be >= 0")
        if self.gm_rho is not None and not 0.0 <= self.gm_rho <= 1.0:
            raise ConfigError(f"gm_rho must lie in [0, 1], got {self.gm_rho}")
        if probe_period_ns is not None and self.gm_rho is None:
            nyquist = 0.5 / (probe_period_ns * 1e-9)
            if self.doppler_hz >= nyquist:
                raise ConfigError(
                    f"doppler_hz {self.doppler_hz} not below probe rate/2 = {nyquist}"
                )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["taps"] = [list(t) for t in self.taps]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceProfile":
        d = dict(d)
        d["taps"] = [tuple(t) for t in d["taps"]]
        return cls(**d)


@dataclass
class SessionSpec:
    """One generated session: a device observed for n_probes at fixed period."""

    device: DeviceProfile
    n_probes: int
    rnti: int
    label: str  # "legit" | "attack"
    seed: int
    session_id: str = "session"
    probe_period_ns: int = 80_000_000
    start_timestamp_ns: int = 0

    def validate(self) -> None:
        if self.n_probes < 1:
            raise ConfigError(f"session {self.session_id}: n_probes must be >= 1")
        if self.probe_period_ns <= 0:
            raise ConfigError(f"session {self.session_id}: probe_period_ns must be > 0")
        if self.label not in ("legit", "attack"):
            raise ConfigError(f"session {self.session_id}: label must be legit|attack")
        if not 0 <= self.rnti < 2**16:
            raise ConfigError(f"session {self.session_id}: rnti out of u16 range")
        self.device.validate(self.probe_period_ns)


def gauss_markov_gains(rng: np.random.Generator, rho: float, n: int,
                       powers: np.ndarray, phase0: np.ndarray) -> Iterator[np.ndarray]:
    """Yield per-probe complex tap gain vectors of a stationary Gauss-Markov process.

    Each tap evolves as u(t) = rho*u(t-1) + sqrt(1-rho^2)*w, w ~ CN(0,1),
    u(0) ~ CN(0,1), scaled by sqrt(power)*exp(j*phase0). Unit second moment
    from the first sample on, lag-1 autocorrelation exactly rho.
    """
    k = len(powers)
    scale = np.sqrt(powers) * np.exp(1j * phase0)
    innov_std = math.sqrt(max(0.0, 1.0 - rho * rho))
    u = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / math.sqrt(2.0)
    yield scale * u
    for _ in range(n - 1):
        w = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / math.sqrt(2.0)
        u = rho * u + innov_std * w
        yield scale * u


def _quantize_q15(freq: np.ndarray, time: np.ndarray) -> tuple[np.ndarray, ...]:
    """Scale both arrays jointly so max |component| hits the Q15 headroom, then round."""
    peak = max(
        np.abs(freq.real).max(), np.abs(freq.imag).max(),
        np.abs(time.real).max(), np.abs(time.imag).max(),
    )
    if not np.isfinite(peak) or peak <= 0.0:
        raise QuantizationOverflow(f"probe amplitude peak {peak} cannot be scaled into Q15")
    s = Q15_HEADROOM * 32767.0 / peak
    fi = np.round(freq.real * s).astype(np.int64)
    fq = np.round(freq.imag * s).astype(np.int64)
    ti = np.round(time.real * s).astype(np.int64)
    tq = np.round(time.imag * s).astype(np.int64)
    for arr in (fi, fq, ti, tq):
        if arr.max() > 32767 or arr.min() < -32768:
            raise QuantizationOverflow("quantized component exceeds int16 range")
    return (fi.astype(np.int16), fq.astype(np.int16),
            ti.astype(np.int16), tq.astype(np.int16))


def gen_session_records(spec: SessionSpec) -> Iterator[tf.TraceRecord]:
    """Yield the four trace records per probe for one session, in timestamp order.

    Deterministic for a fixed spec (single seeded generator drives all draws).
    """
    spec.validate()
    dev = spec.device
    rng = np.random.default_rng(spec.seed)
    period_s = spec.probe_period_ns * 1e-9
    rho = dev.gm_rho if dev.gm_rho is not None else rho_from_doppler(
        dev.doppler_hz, spec.probe_period_ns)

    delays = np.array([t[0] for t in dev.taps], dtype=np.float64)
    powers = np.array([t[1] for t in dev.taps], dtype=np.float64)
    phase0 = np.array([t[2] for t in dev.taps], dtype=np.float64)

    # Steering matrix: bin k response of a unit tap at each delay.
    k = np.arange(tf.N_FFT, dtype=np.float64)
    steering = np.exp(-2j * np.pi * np.outer(k, delays) / tf.N_FFT)

    # IQ imbalance mixes each bin with the conjugate of its mirror image.
    g, phi = dev.iq_gain_imbalance, dev.iq_phase_imbalance_rad
    mu = 0.5 * (1.0 + g * np.exp(-1j * phi))
    nu = 0.5 * (1.0 - g * np.exp(1j * phi))
    mirror = (-np.arange(tf.N_FFT)) % tf.N_FFT

    snr_tilt = rng.uniform(-1.5, 1.5)  # dB across the band, fixed per session
    rb_ramp = np.linspace(-1.0, 1.0, tf.N_RB)

    gains = gauss_markov_gains(rng, rho, spec.n_probes, powers, phase0)
    for n, tap_gain in enumerate(gains):
        ts = spec.start_timestamp_ns + n * spec.probe_period_ns

        h = steering @ tap_gain
        h = mu * h + nu * np.conj(h[mirror])
        h = h + dev.pa_coeff3 * np.abs(h) ** 2 * h
        h = h * np.exp(2j * np.pi * dev.cfo_hz * (n * period_s))

        time = np.fft.ifft(h)
        time = np.concatenate([time, np.zeros(tf.N_TIME - tf.N_FFT, dtype=complex)])
        freq = h.copy()
        freq[:tf.ACTIVE_START] = 0.0
        freq[tf.ACTIVE_STOP:] = 0.0

        fi, fq, ti, tq = _quantize_q15(freq, time)

        snr_db = dev.snr_db_mean + snr_tilt * rb_ramp + rng.normal(0.0, 0.2, tf.N_RB)
        snr_tenths = np.clip(np.round(snr_db * 10.0), -32768, 32767).astype(np.int16)
        toa = int(round(dev.toa_mean_ns + rng.normal(0.0, 1.0) * dev.toa_jitter_ns))

        yield tf.make_freq_record(ts, spec.rnti, fi, fq)
        yield tf.make_time_record(ts, spec.rnti, ti, tq)
        yield tf.make_snr_record(ts, spec.rnti, snr_tenths)
        yield tf.make_toa_record(ts, spec.rnti, toa)


def gen_session(spec: SessionSpec) -> Iterator[tf.SrsProbe]:
    """Yield the session's probes exactly as a parser would decode them.

    Built on gen_session_records + assemble_probes so the generator-parser
    contract holds by construction (probes reflect Q15 quantization).
    """
    return tf.assemble_probes(gen_session_records(spec), device_label=spec.label)


# -- dataset-level generation ---------------------------------------------------


@dataclass
class DatasetConfig:
    sessions: list[SessionSpec] = field(default_factory=list)

    def validate(self) -> None:
        if not self.sessions:
            raise ConfigError("dataset config lists no sessions")
        labels = {s.label for s in self.sessions}
        for s in self.sessions:
            s.validate()
        if "legit" not in labels:
            raise ConfigError("dataset config needs at least one legit session")
        if "attack" not in labels:
            raise ConfigError("dataset config needs at least one attack session")
        ids = [s.session_id for s in self.sessions]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate session ids in config: {ids}")


# Reference profiles: a stationary SDR-like legitimate device and a clearly
# distinct handset-like attacker (different multipath geometry, opposite-sign
# impairments, different CFO).
LEGIT_PROFILE = DeviceProfile(
    taps=[(0, 1.0, 0.0), (3, 0.35, 1.1), (7, 0.12, -0.7), (12, 0.04, 2.3)],
    cfo_hz=180.0,
    iq_gain_imbalance=1.02,
    iq_phase_imbalance_rad=0.03,
    pa_coeff3=-0.05,
    doppler_hz=0.2,
    toa_mean_ns=520.0,
    toa_jitter_ns=12.0,
    snr_db_mean=28.0,
)

ATTACK_PROFILE = DeviceProfile(
    taps=[(1, 1.0, 0.4), (5, 0.55, -1.9), (9, 0.30, 0.9), (15, 0.10, -2.6), (22, 0.05, 1.4)],
    cfo_hz=-260.0,
    iq_gain_imbalance=0.96,
    iq_phase_imbalance_rad=-0.05,
    pa_coeff3=-0.12,
    doppler_hz=0.35,
    toa_mean_ns=800.0,
    toa_jitter_ns=25.0,
    snr_db_mean=22.0,
)

_DAY_NS = 86_400_000_000_000

# Session sizes mirror the measurement-campaign layout at one fifth scale,
# preserving the ~38:1 legitimate-to-attack imbalance.
_DEFAULT_SESSIONS = [
    ("trace1", "legit", 642, 4601),
    ("anchor1", "legit", 472, 4602),
    ("anchor2", "legit", 1486, 4603),
    ("anchor3", "legit", 1362, 4604),
    ("attack", "attack", 102, 9001),
]


def default_dataset_config(seed: int = 0) -> DatasetConfig:
    sessions = []
    for idx, (sid, label, n, rnti) in enumerate(_DEFAULT_SESSIONS):
        profile = LEGIT_PROFILE if label == "legit" else ATTACK_PROFILE
        sessions.append(SessionSpec(
            device=profile,
            n_probes=n,
            rnti=rnti,
            label=label,
            seed=seed * 1000 + idx,
            session_id=sid,
            start_timestamp_ns=idx * _DAY_NS,
        ))
    return DatasetConfig(sessions=sessions)


def gen_dataset(config: DatasetConfig, out_dir: str) -> dict:
    """Write one .srstrace file per session plus manifest.json; returns the manifest.

    Sessions are independent (per-session seed) and written streaming, so
    memory stays flat in the session length.
    """
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    sessions_meta = []
    counts = {"legit": 0, "attack": 0}
    for spec in config.sessions:
        fname = f"{spec.session_id}.srstrace"
        path = os.path.join(out_dir, fname)
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            tf.write_trace(gen_session_records(spec), fh)
        os.replace(tmp, path)
        counts[spec.label] += spec.n_probes
        sessions_meta.append({
            "session_id": spec.session_id,
            "path": fname,
            "label": spec.label,
            "n_probes": spec.n_probes,
            "rnti": spec.rnti,
            "seed": spec.seed,
            "probe_period_ns": spec.probe_period_ns,
            "start_timestamp_ns": spec.start_timestamp_ns,
            "device": spec.device.to_dict(),
        })
    manifest = {
        "sessions": sessions_meta,
        "counts": counts,
        "legit_to_attack_ratio": counts["legit"] / counts["attack"],
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    tmp = manifest_path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, manifest_path)
    return manifest


def load_manifest(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)
