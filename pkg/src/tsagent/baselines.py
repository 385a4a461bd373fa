"""Statistical reference detectors: FFT low-pass residual, Spectral Residual, mu + k*sigma."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SeriesTooShort

SR_EPS = 1e-8
MIN_LENGTH = 8


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    scores: np.ndarray
    method: str

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        if np.any(~np.isfinite(scores)):
            raise ValueError("scores contain NaN or infinity")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.scores)

    def to_dict(self) -> dict:
        return {"method": self.method, "scores": [float(s) for s in self.scores]}


def _values(series) -> np.ndarray:
    x = np.asarray(getattr(series, "values", series), dtype=float)
    if len(x) < MIN_LENGTH:
        raise SeriesTooShort(f"need at least {MIN_LENGTH} points, got {len(x)}")
    return x


def lowpass_bins(n: int, keep_fraction: float) -> np.ndarray:
    """Boolean mask of retained DFT bins: DC plus the lowest m frequencies and their conjugates."""
    m = math.ceil(keep_fraction * n / 2)
    k = np.arange(n)
    return np.minimum(k, n - k) <= m


def fft_ad_score(series, keep_fraction: float = 0.1) -> ScoreSeries:
    """Absolute residual against a low-pass reconstruction."""
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must be in (0, 1]")
    x = _values(series)
    spec = np.fft.fft(x)
    spec[~lowpass_bins(len(x), keep_fraction)] = 0.0
    smooth = np.fft.ifft(spec).real
    return ScoreSeries(np.abs(x - smooth), "fft")


def circular_moving_average(a: np.ndarray, q: int) -> np.ndarray:
    """Centered moving average that wraps around, matching the periodicity of a spectrum."""
    if q <= 1:
        return a.copy()
    left = (q - 1) // 2
    right = q - 1 - left
    padded = np.concatenate([a[len(a) - left :] if left else a[:0], a, a[:right]])
    return np.convolve(padded, np.ones(q) / q, mode="valid")


def spectral_residual_score(series, avg_window: int = 3) -> ScoreSeries:
    """Spectral Residual saliency map.

    log-amplitude minus its local (circular) average is recombined with the
    original phase and transformed back; the saliency is the magnitude.
    A series with zero spread has no salient point and scores all zeros.
    """
    x = _values(series)
    if np.ptp(x) == 0:
        return ScoreSeries(np.zeros(len(x)), "sr")
    spec = np.fft.fft(x)
    log_amp = np.log(np.abs(spec) + SR_EPS)
    residual = log_amp - circular_moving_average(log_amp, avg_window)
    saliency = np.abs(np.fft.ifft(np.exp(residual + 1j * np.angle(spec))))
    return ScoreSeries(saliency, "sr")


def threshold_mu_3sigma(scores, k: float = 3.0) -> np.ndarray:
    """Label 1 where the score exceeds mean + k * population std."""
    s = np.asarray(getattr(scores, "scores", scores), dtype=float)
    if len(s) < 2:
        raise SeriesTooShort("thresholding needs at least 2 scores")
    sigma = s.std()
    if sigma == 0:
        return np.zeros(len(s), dtype=np.int8)
    return (s > s.mean() + k * sigma).astype(np.int8)


METHODS = {"fft": fft_ad_score, "sr": spectral_residual_score}
