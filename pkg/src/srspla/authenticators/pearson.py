"""Pearson-correlation threshold baseline over enrolment amplitude profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_THRESHOLD = 0.85


class DegenerateReference(Exception):
    """Enrolment produced a zero-variance reference profile."""


@dataclass
class PearsonAuthenticator:
    reference: np.ndarray  # mean enrolment amplitude profile
    threshold_alpha: float = DEFAULT_THRESHOLD
    n_enroll: int = 0
    _ref_centered: np.ndarray = field(init=False, repr=False)
    _ref_norm: float = field(init=False, repr=False)

    def __post_init__(self):
        self._ref_centered = self.reference - self.reference.mean()
        self._ref_norm = float(np.linalg.norm(self._ref_centered))
        if self._ref_norm == 0.0:
            raise DegenerateReference("reference amplitude profile has zero variance")

    def score(self, amplitudes: np.ndarray) -> float:
        """Pearson correlation in [-1, 1]; zero-variance probes score 0 (reject)."""
        a = amplitudes - amplitudes.mean()
        norm = np.linalg.norm(a)
        if norm == 0.0:
            return 0.0
        return float(a @ self._ref_centered / (norm * self._ref_norm))

    def score_batch(self, amplitude_rows: np.ndarray) -> np.ndarray:
        a = amplitude_rows - amplitude_rows.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(a, axis=1)
        out = np.zeros(len(a))
        ok = norms > 0.0
        out[ok] = (a[ok] @ self._ref_centered) / (norms[ok] * self._ref_norm)
        return out

    def decide(self, amplitudes: np.ndarray) -> bool:
        return self.score(amplitudes) >= self.threshold_alpha

    def unified_scores(self, amplitude_rows: np.ndarray) -> np.ndarray:
        """Correlations mapped to [0, 1] via (rho + 1) / 2 for shared evaluation."""
        return (self.score_batch(amplitude_rows) + 1.0) / 2.0


def enroll(amplitude_rows: np.ndarray,
           threshold_alpha: float = DEFAULT_THRESHOLD) -> PearsonAuthenticator:
    """Average >= 2 calibration probes' amplitude vectors into a reference profile."""
    amplitude_rows = np.asarray(amplitude_rows, dtype=np.float64)
    if amplitude_rows.ndim != 2 or len(amplitude_rows) < 2:
        raise ValueError("enrolment needs at least two amplitude vectors")
    reference = amplitude_rows.mean(axis=0)
    return PearsonAuthenticator(reference, threshold_alpha, n_enroll=len(amplitude_rows))


def pearson_score(auth: PearsonAuthenticator, amplitudes: np.ndarray) -> float:
    return auth.score(amplitudes)
