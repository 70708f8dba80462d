"""Cepstral feature extraction: filterbank log-energies, DCT, RASTA, deltas, CMVN."""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .dsp import (
    AudioSegment,
    PowerSpectrogram,
    dct_ii_ortho,
    frame_signal,
    hamming_window,
    next_pow2,
    power_spectrum,
    pre_emphasize,
)
from .filterbank import Filterbank
from .sad import bi_gaussian_sad, frame_log_energy

ENERGY_EPS = 1e-12

# Classic RASTA band-pass: 0.1*(2 + z^-1 - z^-3 - 2 z^-4) / (1 - 0.98 z^-1).
RASTA_NUM = 0.1 * np.array([2.0, 1.0, 0.0, -1.0, -2.0])
RASTA_DEN = np.array([1.0, -0.98])


@dataclass
class FeatureConfig:
    """Extraction settings; defaults give the 57-dimensional configuration."""

    frame_ms: float = 20.0
    hop_ms: float = 10.0
    n_filters: int = 20
    n_ceps: int = 19
    delta_window: int = 2
    rasta_enabled: bool = True
    cmvn_enabled: bool = True
    preemph: float = 0.97

    def __post_init__(self):
        if self.n_ceps > self.n_filters - 1:
            raise ValueError("n_ceps must be <= n_filters - 1")
        if self.delta_window < 1:
            raise ValueError("delta_window must be >= 1")

    @property
    def dim(self) -> int:
        return 3 * self.n_ceps


@dataclass
class FeatureMatrix:
    """Per-frame feature vectors with a speech/non-speech mask."""

    vectors: np.ndarray
    mask: np.ndarray
    utterance_id: str = ""

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be two-dimensional")
        if self.mask.shape != (self.vectors.shape[0],):
            raise ValueError("mask length must equal the frame count")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("feature vectors must be finite")

    @property
    def n_frames(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def speech_frames(self) -> np.ndarray:
        return self.vectors[self.mask]


def filterbank_log_energies(spec: PowerSpectrogram, fb: Filterbank) -> np.ndarray:
    """log(power . response + eps) per frame and filter.

    PCA-learned responses may carry small negative components, so the energy
    sum is clamped at zero before the log to keep the pipeline total.
    """
    if spec.n_bins != fb.n_bins:
        raise ValueError("spectrogram and filterbank disagree on bin count")
    return np.log(np.maximum(spec.frames @ fb.responses.T, 0.0) + ENERGY_EPS)


def cepstra(log_energies: np.ndarray, n_ceps: int) -> np.ndarray:
    """Orthonormal DCT-II per frame, keeping coefficients 1..n_ceps (c0 dropped)."""
    log_energies = np.atleast_2d(np.asarray(log_energies, dtype=np.float64))
    q = log_energies.shape[1]
    if n_ceps > q - 1:
        raise ValueError("n_ceps must be <= Q - 1")
    return dct_ii_ortho(log_energies, n_ceps + 1)[:, 1:]


def rasta_filter(trajectories: np.ndarray) -> np.ndarray:
    """RASTA band-pass applied independently to each coefficient trajectory."""
    trajectories = np.atleast_2d(np.asarray(trajectories, dtype=np.float64))
    return scipy.signal.lfilter(RASTA_NUM, RASTA_DEN, trajectories, axis=0)


def append_deltas(base: np.ndarray, w: int = 2) -> np.ndarray:
    """Regression deltas and double-deltas appended column-wise: [base | d | dd]."""
    base = np.atleast_2d(np.asarray(base, dtype=np.float64))
    if w < 1:
        raise ValueError("delta window must be >= 1")

    def delta(x):
        padded = np.pad(x, ((w, w), (0, 0)), mode="edge")
        num = sum(t * (padded[w + t : padded.shape[0] - w + t] - padded[w - t : -w - t]) for t in range(1, w + 1))
        return num / (2.0 * sum(t * t for t in range(1, w + 1)))

    d = delta(base)
    return np.hstack([base, d, delta(d)])


def cmvn(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Standardize every column using mean/std over masked frames only."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (features.shape[0],):
        raise ValueError("mask length must equal the frame count")
    selected = features[mask]
    if selected.shape[0] < 2:
        raise ValueError("CMVN needs at least two selected frames")
    mean = selected.mean(axis=0)
    std = selected.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return (features - mean) / std


def utterance_spectra(
    x: AudioSegment, cfg: FeatureConfig
) -> tuple[PowerSpectrogram, np.ndarray]:
    """Pre-emphasis, framing and Hamming-windowed power spectra for one utterance."""
    emphasized = pre_emphasize(x, cfg.preemph)
    grid, frames = frame_signal(emphasized, cfg.frame_ms, cfg.hop_ms)
    window = hamming_window(grid.frame_len)
    spec = power_spectrum(frames, next_pow2(grid.frame_len), window, x.sample_rate_hz)
    return spec, frames


def extract_features(x: AudioSegment, fb: Filterbank, cfg: FeatureConfig) -> FeatureMatrix:
    """Full per-utterance pipeline from waveform to masked, normalized features."""
    if x.sample_rate_hz != fb.layout.sample_rate_hz:
        raise ValueError("sample rate of utterance and filterbank must match")
    emphasized = pre_emphasize(x, cfg.preemph)
    grid, frames = frame_signal(emphasized, cfg.frame_ms, cfg.hop_ms)
    window = hamming_window(grid.frame_len)
    spec = power_spectrum(frames, fb.layout.n_fft, window, x.sample_rate_hz)
    log_e = filterbank_log_energies(spec, fb)
    coeffs = cepstra(log_e, cfg.n_ceps)
    if cfg.rasta_enabled:
        coeffs = rasta_filter(coeffs)
    vectors = append_deltas(coeffs, cfg.delta_window)
    mask = bi_gaussian_sad(frame_log_energy(frames))
    if cfg.cmvn_enabled:
        vectors = cmvn(vectors, mask)
    return FeatureMatrix(vectors, mask, x.id)
