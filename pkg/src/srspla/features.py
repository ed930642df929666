"""Multi-domain feature extraction: one 2,531-dimensional vector per probe.

Layout (fixed, see FEATURE_SLICES):

    amplitude        [   0, 1248)  per-subcarrier magnitude of the active bins
    diff_phase       [1248, 2495)  wrapped phase difference of adjacent bins
    pdp_delay        [2495, 2511)  top-5 taps, RMS delay spread, ToA,
                                   coherence bandwidth, amplitude moments
    doppler_temporal [2511, 2519)  Doppler stats, coherence time, entropy,
                                   correlation decay over a 20-probe window
    nonlinear        [2519, 2531)  Haar wavelet variances, sample entropy,
                                   fractal dimension, Lyapunov exponent,
                                   recurrence rate of the amplitude series
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from srspla import _kernels
from srspla.trace_format import SrsProbe, ACTIVE_START, ACTIVE_STOP, N_ACTIVE

FEATURE_DIM = 2531
SLICE_BOUNDS = (0, 1248, 2495, 2511, 2519, 2531)
FEATURE_SLICES = {
    "amplitude": slice(0, 1248),
    "diff_phase": slice(1248, 2495),
    "pdp_delay": slice(2495, 2511),
    "doppler_temporal": slice(2511, 2519),
    "nonlinear": slice(2519, 2531),
}

WINDOW_PROBES = 20  # current probe plus up to 19 of history

# Caps keep degenerate channels finite: delay spread floored at one sample
# before inversion, Doppler floored at 1 mHz.
TAU_FLOOR_SAMPLES = 1.0
DOPPLER_FLOOR_HZ = 1e-3
COHERENCE_TIME_FACTOR = 0.423

ENTROPY_BINS = 32
WAVELET_LEVELS = 8
SAMPEN_M = 2
SAMPEN_R_FACTOR = 0.2
HIGUCHI_KMAX = 8
LYAP_EMBED = 3
LYAP_FIT_STEPS = 10
LYAP_THEILER = 10
RECURRENCE_EMBED = 2
RECURRENCE_EPS_FACTOR = 0.2

_LOG_FLOOR = 1e-12


@dataclass
class ProbeWindow:
    """A probe plus its trailing same-stream history (time-ordered, oldest first)."""

    current: SrsProbe
    history: list[SrsProbe] = field(default_factory=list)
    probe_period_ns: int = 80_000_000

    def validate(self) -> None:
        if len(self.history) > WINDOW_PROBES - 1:
            raise ValueError(f"history holds {len(self.history)} probes, max {WINDOW_PROBES - 1}")
        ts = [p.timestamp_ns for p in self.history] + [self.current.timestamp_ns]
        if any(a >= b for a, b in zip(ts, ts[1:])):
            raise ValueError("window timestamps must be strictly increasing")


def wrap_phase(x: np.ndarray) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def amplitude_features(probe: SrsProbe) -> np.ndarray:
    """Per-subcarrier magnitude over the active bins, increasing bin order."""
    return np.abs(probe.freq_est[ACTIVE_START:ACTIVE_STOP])


def diff_phase_features(probe: SrsProbe) -> np.ndarray:
    """Wrapped phase difference between adjacent active bins.

    Removes the common linear phase slope from timing offset. Pairs touching
    an exactly-zero bin emit 0 (guard handling; active bins are nonzero in
    practice).
    """
    h = probe.freq_est[ACTIVE_START:ACTIVE_STOP]
    ph = np.angle(h)
    d = wrap_phase(ph[1:] - ph[:-1])
    dead = (h[1:] == 0) | (h[:-1] == 0)
    d[dead] = 0.0
    return d


def _kurtosis(x: np.ndarray) -> float:
    m = x.mean()
    m2 = np.mean((x - m) ** 2)
    if m2 == 0.0:
        return 0.0
    return float(np.mean((x - m) ** 4) / m2**2 - 3.0)


def pdp_delay_features(probe: SrsProbe) -> np.ndarray:
    """Power-delay-profile slice: [p1..p5, d1..d5, tau_rms, toa, coh_bw, amplitude moments].

    Tap powers are |h|^2 over the 3,072-sample impulse response, descending;
    tau_rms is the power-weighted delay standard deviation in samples.
    """
    power = np.abs(probe.time_est) ** 2
    total = power.sum()
    if total > 0.0:
        order = np.argsort(-power, kind="stable")[:5]
        top_p = power[order]
        top_d = order.astype(np.float64)
        delays = np.arange(len(power), dtype=np.float64)
        tau_bar = float((power * delays).sum() / total)
        tau_var = float((power * (delays - tau_bar) ** 2).sum() / total)
        tau_rms = float(np.sqrt(max(tau_var, 0.0)))
    else:
        top_p = np.zeros(5)
        top_d = np.zeros(5)
        tau_rms = 0.0
    coherence_bw = 1.0 / max(tau_rms, TAU_FLOOR_SAMPLES)
    amps = amplitude_features(probe)
    return np.concatenate([
        top_p, top_d,
        [tau_rms, probe.toa_ns, coherence_bw,
         amps.mean(), amps.std(), _kurtosis(amps)],
    ])


def _stack_correlation(v: np.ndarray, lag: int) -> complex:
    """Normalized complex correlation between the window stack and its lag-shifted self."""
    a = v[:-lag].ravel()
    b = v[lag:].ravel()
    if np.array_equal(a, b):  # frozen channel: exactly 1, no rounding residue
        return 1.0 if a.any() else 0.0
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return complex(np.vdot(a, b) / denom)


def doppler_temporal_features(window: ProbeWindow) -> np.ndarray:
    """Temporal-dynamics slice over a window of consecutive probes.

    [doppler_mean, doppler_max, doppler_std, coherence_time, amplitude_entropy,
     |r(1)|, |r(5)|, decay_slope]. Doppler per adjacent pair comes from the
    quadratic small-lag decay of the channel autocovariance,
    f = sqrt(2*(1-|r|)) / (2*pi*T). Windows with fewer than two probes emit zeros.
    """
    probes = list(window.history) + [window.current]
    if len(probes) < 2:
        return np.zeros(8)
    v = np.stack([p.freq_est[ACTIVE_START:ACTIVE_STOP] for p in probes])
    t_s = window.probe_period_ns * 1e-9

    num = np.einsum("nk,nk->n", np.conj(v[:-1]), v[1:])
    norms = np.sqrt(np.einsum("nk,nk->n", np.conj(v), v).real)
    denom = norms[:-1] * norms[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        pair_r = np.where(denom > 0.0, np.abs(num) / denom, 0.0)
    frozen = np.all(v[:-1] == v[1:], axis=1) & (norms[:-1] > 0)
    pair_r[frozen] = 1.0  # bit-identical probes: exactly 1, no rounding residue
    doppler = np.sqrt(np.maximum(0.0, 2.0 * (1.0 - pair_r))) / (2.0 * np.pi * t_s)
    doppler_mean = float(doppler.mean())
    coherence_time = COHERENCE_TIME_FACTOR / max(doppler_mean, DOPPLER_FLOOR_HZ)

    amps = amplitude_features(window.current)
    counts, _ = np.histogram(amps, bins=ENTROPY_BINS)
    p = counts[counts > 0] / amps.size
    entropy = float(-(p * np.log(p)).sum())

    max_lag = min(5, len(probes) - 1)
    r_abs = np.array([abs(_stack_correlation(v, lag)) for lag in range(1, max_lag + 1)])
    r1 = float(r_abs[0])
    r5 = float(r_abs[4]) if max_lag >= 5 else 0.0
    if max_lag >= 2:
        lags = np.arange(1, max_lag + 1)
        decay_slope = float(np.polyfit(lags, np.log(np.maximum(r_abs, _LOG_FLOOR)), 1)[0])
    else:
        decay_slope = 0.0

    return np.array([
        doppler_mean, float(doppler.max()), float(doppler.std()),
        coherence_time, entropy, r1, r5, decay_slope,
    ])


# -- nonlinear dynamics indicators ----------------------------------------------


def haar_wavelet_variances(x: np.ndarray, levels: int = WAVELET_LEVELS) -> np.ndarray:
    """Non-decimated Haar detail variance (second moment) at dyadic scales 2^1..2^levels."""
    out = np.zeros(levels)
    approx = x.astype(np.float64)
    for j in range(levels):
        shift = 1 << j
        if len(approx) <= shift:
            break
        detail = (approx[:-shift] - approx[shift:]) / np.sqrt(2.0)
        out[j] = float(np.mean(detail**2))
        approx = (approx[:-shift] + approx[shift:]) / np.sqrt(2.0)
    return out


def _embed(x: np.ndarray, dim: int, delay: int = 1) -> np.ndarray:
    n = len(x) - (dim - 1) * delay
    return np.stack([x[i * delay:i * delay + n] for i in range(dim)], axis=1)


def sample_entropy(x: np.ndarray, m: int = SAMPEN_M,
                   r_factor: float = SAMPEN_R_FACTOR) -> float:
    """Sample entropy -ln(A/B) with Chebyshev matching at tolerance r = r_factor*std.

    Both template sets use the same N-m start indices (Richman-Moorman
    convention). Degenerate cases (zero spread, no matches) return 0.
    """
    sd = x.std()
    if sd == 0.0:
        return 0.0
    x = np.ascontiguousarray(x, dtype=np.float64)
    b, a = _kernels.sampen_counts(x, len(x) - m, m, r_factor * sd)
    if a == 0 or b == 0:
        return 0.0
    return float(-np.log(a / b))


def higuchi_fractal_dimension(x: np.ndarray, kmax: int = HIGUCHI_KMAX) -> float:
    """Higuchi curve-length slope; ~1 for smooth series, ~2 for white noise."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    lengths = _kernels.higuchi_curve_lengths(x, kmax)
    valid = lengths > 0
    if valid.sum() < 2:
        return 1.0
    ks = np.arange(1, kmax + 1)[valid]
    slope = np.polyfit(np.log(1.0 / ks), np.log(lengths[valid]), 1)[0]
    return float(slope)


def lyapunov_rosenstein(x: np.ndarray, emb: int = LYAP_EMBED,
                        steps: int = LYAP_FIT_STEPS,
                        theiler: int = LYAP_THEILER) -> float:
    """Largest Lyapunov exponent: slope of mean log divergence of nearest neighbors."""
    if x.std() == 0.0:
        return 0.0
    y = np.ascontiguousarray(_embed(np.asarray(x, dtype=np.float64), emb))
    n = len(y)
    if n <= theiler + steps + 1:
        return 0.0
    neighbor = _kernels.nearest_neighbors_excluded(y, theiler)
    base = np.arange(n)
    keep = (neighbor >= 0) & (base + steps < n) & (neighbor + steps < n)
    base, nbr = base[keep], neighbor[keep]
    if len(base) == 0:
        return 0.0
    mean_log = _kernels.divergence_curve(y, base, nbr, steps, _LOG_FLOOR)
    return float(np.polyfit(np.arange(1, steps + 1), mean_log, 1)[0])


def recurrence_rate(x: np.ndarray, emb: int = RECURRENCE_EMBED,
                    eps_factor: float = RECURRENCE_EPS_FACTOR) -> float:
    """Fraction of embedded state pairs within eps = eps_factor*std (Chebyshev)."""
    sd = x.std()
    if sd == 0.0:
        return 1.0
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = len(x) - emb + 1
    pairs = _kernels.recurrence_pair_count(x, n, emb, eps_factor * sd)
    return float(2.0 * pairs / (n * (n - 1)))


def nonlinear_features(probe: SrsProbe) -> np.ndarray:
    """Hardware-nonlinearity slice computed on the subcarrier amplitude series."""
    amps = amplitude_features(probe)
    return np.concatenate([
        haar_wavelet_variances(amps),
        [sample_entropy(amps),
         higuchi_fractal_dimension(amps),
         lyapunov_rosenstein(amps),
         recurrence_rate(amps)],
    ])


def extract(window: ProbeWindow) -> np.ndarray:
    """Full 2,531-dimensional feature vector in manifest order."""
    vec = np.concatenate([
        amplitude_features(window.current),
        diff_phase_features(window.current),
        pdp_delay_features(window.current),
        doppler_temporal_features(window),
        nonlinear_features(window.current),
    ])
    assert vec.shape == (FEATURE_DIM,)
    return vec


def extract_stream(probes: Iterable[SrsProbe],
                   probe_period_ns: int = 80_000_000) -> Iterator[tuple[SrsProbe, np.ndarray]]:
    """Extract features for a time-ordered probe stream, managing the trailing window."""
    history: deque[SrsProbe] = deque(maxlen=WINDOW_PROBES - 1)
    for probe in probes:
        window = ProbeWindow(probe, list(history), probe_period_ns)
        yield probe, extract(window)
        history.append(probe)
