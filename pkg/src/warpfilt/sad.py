"""Frame selection: bi-Gaussian energy SAD and autocorrelation pitch detection."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dsp import PowerSpectrogram, next_pow2

ENERGY_EPS = 1e-12
VAR_FLOOR = 1e-10

# Lags with fewer overlapping samples than this are excluded from the pitch
# search: the normalized autocorrelation degenerates to +/-1 as the overlap
# shrinks, which would mark noise frames as voiced.
MIN_OVERLAP = 48

# A pitch estimator maps (frame, sample_rate_hz) to f0 in Hz or None when unvoiced.
PitchEstimator = Callable[[np.ndarray, int], Optional[float]]


@dataclass
class PitchConfig:
    """Search band and voicing decision threshold for the built-in estimator."""

    f_min_hz: float = 50.0
    f_max_hz: float = 400.0
    voicing_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.f_min_hz < self.f_max_hz:
            raise ValueError("require 0 < f_min_hz < f_max_hz")


@dataclass
class PitchTrack:
    """Per-frame pitch estimates; unvoiced frames carry NaN."""

    f0_hz: np.ndarray
    voicing_score: np.ndarray

    @property
    def voiced(self) -> np.ndarray:
        return np.isfinite(self.f0_hz)


def frame_log_energy(frames: np.ndarray) -> np.ndarray:
    """log(sum of squared samples + eps) per frame."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    return np.log(np.sum(frames * frames, axis=1) + ENERGY_EPS)


def _gaussian_log_pdf(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def fit_two_gaussians(
    energies: np.ndarray, max_iter: int = 50, tol: float = 1e-6
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """EM fit of a 2-component 1-D GMM.

    Means start at the 25th/75th percentiles with a nearest-mean assignment;
    variances are clamped at 1e-10. Returns (weights, means, variances,
    per-iteration mean log-likelihood).
    """
    e = np.asarray(energies, dtype=np.float64)
    mu = np.percentile(e, [25.0, 75.0])
    assign = np.abs(e[:, None] - mu[None, :]).argmin(axis=1)
    w = np.zeros(2)
    var = np.zeros(2)
    global_var = max(e.var(), VAR_FLOOR)
    for c in range(2):
        members = e[assign == c]
        w[c] = max(members.size, 1) / e.size
        var[c] = members.var() if members.size > 1 else global_var
        if members.size > 0:
            mu[c] = members.mean()
    w = np.clip(w, 1e-6, None)
    w /= w.sum()
    var = np.maximum(var, VAR_FLOOR)

    history = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_joint = np.log(w)[None, :] + np.stack(
            [_gaussian_log_pdf(e, mu[c], var[c]) for c in range(2)], axis=1
        )
        log_norm = np.logaddexp(log_joint[:, 0], log_joint[:, 1])
        ll = float(log_norm.mean())
        history.append(ll)
        gamma = np.exp(log_joint - log_norm[:, None])
        nk = gamma.sum(axis=0)
        w = np.clip(nk / e.size, 1e-6, None)
        w /= w.sum()
        safe_nk = np.maximum(nk, 1e-12)
        mu = gamma.T @ e / safe_nk
        var = np.array([(gamma[:, c] * (e - mu[c]) ** 2).sum() / safe_nk[c] for c in range(2)])
        var = np.maximum(var, VAR_FLOOR)
        if abs(ll - prev_ll) / max(1.0, abs(prev_ll)) < tol:
            break
        prev_ll = ll
    return w, mu, var, np.asarray(history)


def _crossing_threshold(w: np.ndarray, mu: np.ndarray, var: np.ndarray) -> float:
    """Energy where the two weighted component densities cross between the means."""
    order = np.argsort(mu)
    (w_lo, w_hi) = w[order]
    (m_lo, m_hi) = mu[order]
    (v_lo, v_hi) = var[order]
    midpoint = 0.5 * (m_lo + m_hi)
    if m_hi - m_lo < 1e-12:
        return midpoint
    # w_lo*N(x; m_lo, v_lo) = w_hi*N(x; m_hi, v_hi) reduces to a*x^2 + b*x + c = 0.
    a = 0.5 / v_hi - 0.5 / v_lo
    b = m_lo / v_lo - m_hi / v_hi
    c = 0.5 * m_hi**2 / v_hi - 0.5 * m_lo**2 / v_lo + np.log((w_lo * np.sqrt(v_hi)) / (w_hi * np.sqrt(v_lo)))
    if abs(a) < 1e-12:
        if abs(b) < 1e-12:
            return midpoint
        roots = np.array([-c / b])
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            return midpoint
        sq = np.sqrt(disc)
        roots = np.array([(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)])
    inside = roots[(roots > m_lo) & (roots < m_hi)]
    if inside.size == 0:
        return midpoint
    return float(inside[np.abs(inside - midpoint).argmin()])


def bi_gaussian_sad(energies: np.ndarray) -> np.ndarray:
    """Speech mask from a two-Gaussian fit of frame log-energies; ties count as speech."""
    e = np.asarray(energies, dtype=np.float64)
    if e.size < 10:
        raise ValueError("insufficient frames")
    w, mu, var, _ = fit_two_gaussians(e)
    # Collapsed components carry no speech/non-speech split: keep every frame.
    if abs(mu[1] - mu[0]) <= max(1e-9, 1e-6 * (e.max() - e.min())):
        return np.ones(e.size, dtype=bool)
    threshold = _crossing_threshold(w, mu, var)
    return e >= threshold


def normalized_autocorrelation(frames: np.ndarray, lag_min: int, lag_max: int) -> np.ndarray:
    """r(tau) = sum x[n]x[n+tau] / sqrt(sum x[n]^2 * sum x[n+tau]^2) for each row.

    Returns shape (n_frames, lag_max - lag_min + 1). Computed with one FFT per
    frame batch plus cumulative-sum denominators.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = frames.shape[1]
    if not 1 <= lag_min <= lag_max <= n - 1:
        raise ValueError("lag range must lie within [1, frame_len - 1]")
    size = next_pow2(2 * n)
    spec = np.fft.rfft(frames, size)
    acf = np.fft.irfft(spec * np.conj(spec), size)[:, : lag_max + 1]
    sq = frames * frames
    # head[t] = sum_{n<N-t} x[n]^2, tail[t] = sum_{n>=t} x[n]^2
    csum = np.cumsum(sq, axis=1)
    total = csum[:, -1][:, None]
    lags = np.arange(lag_min, lag_max + 1)
    head = csum[:, n - 1 - lags]
    tail = total - np.concatenate([np.zeros((frames.shape[0], 1)), csum], axis=1)[:, lags]
    denom = np.sqrt(head * tail)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0.0, acf[:, lag_min : lag_max + 1] / denom, 0.0)
    return r


def _peak_lag(r: np.ndarray, lag_min: int) -> tuple[float, float]:
    """Global peak value and the parabolically interpolated lag of the chosen peak.

    Among local maxima within 2% of the global peak the shortest lag wins,
    suppressing subharmonic (pitch-halving) errors on near-periodic frames.
    """
    peak = float(r.max())
    interior = np.flatnonzero((r[1:-1] >= r[:-2]) & (r[1:-1] >= r[2:])) + 1
    cands = list(interior)
    if r.size >= 2 and r[0] >= r[1]:
        cands.insert(0, 0)
    if r.size >= 2 and r[-1] >= r[-2]:
        cands.append(r.size - 1)
    strong = [i for i in cands if r[i] >= 0.98 * peak]
    idx = strong[0] if strong else int(r.argmax())
    lag = float(lag_min + idx)
    if 0 < idx < r.size - 1:
        denom = r[idx - 1] - 2.0 * r[idx] + r[idx + 1]
        if abs(denom) > 1e-12:
            delta = 0.5 * (r[idx - 1] - r[idx + 1]) / denom
            lag += float(np.clip(delta, -0.5, 0.5))
    return peak, lag


def estimate_pitch(
    frame: np.ndarray,
    sample_rate_hz: int,
    f_min_hz: float = 50.0,
    f_max_hz: float = 400.0,
    voicing_threshold: float = 0.5,
) -> float | None:
    """Autocorrelation f0 estimate in Hz, or None when the frame is unvoiced."""
    frame = np.asarray(frame, dtype=np.float64)
    if np.sum(frame * frame) <= ENERGY_EPS:
        return None
    lag_min = max(1, int(np.ceil(sample_rate_hz / f_max_hz)))
    lag_max = min(int(np.floor(sample_rate_hz / f_min_hz)), frame.size - 1, frame.size - MIN_OVERLAP)
    if lag_min > lag_max:
        return None
    r = normalized_autocorrelation(frame[None, :], lag_min, lag_max)[0]
    peak, lag = _peak_lag(r, lag_min)
    if peak < voicing_threshold:
        return None
    f0 = sample_rate_hz / lag
    return float(np.clip(f0, f_min_hz, f_max_hz))


def track_pitch(
    frames: np.ndarray, sample_rate_hz: int, cfg: PitchConfig | None = None
) -> PitchTrack:
    """Built-in estimator applied to every frame of a frame matrix."""
    cfg = cfg or PitchConfig()
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n_frames, n = frames.shape
    f0 = np.full(n_frames, np.nan)
    score = np.zeros(n_frames)
    lag_min = max(1, int(np.ceil(sample_rate_hz / cfg.f_max_hz)))
    lag_max = min(int(np.floor(sample_rate_hz / cfg.f_min_hz)), n - 1, n - MIN_OVERLAP)
    if lag_min > lag_max:
        return PitchTrack(f0, score)
    live = np.sum(frames * frames, axis=1) > ENERGY_EPS
    if not live.any():
        return PitchTrack(f0, score)
    r = normalized_autocorrelation(frames[live], lag_min, lag_max)
    live_idx = np.flatnonzero(live)
    for row, i in enumerate(live_idx):
        peak, lag = _peak_lag(r[row], lag_min)
        score[i] = float(np.clip(peak, 0.0, 1.0))
        if peak >= cfg.voicing_threshold:
            f0[i] = np.clip(sample_rate_hz / lag, cfg.f_min_hz, cfg.f_max_hz)
    return PitchTrack(f0, score)


def voiced_mask(
    spec: PowerSpectrogram,
    frames: np.ndarray,
    sample_rate_hz: int,
    cfg: PitchConfig | None = None,
    estimator: PitchEstimator | None = None,
) -> np.ndarray:
    """SAD mask AND pitch presence, per frame."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if spec.n_frames != frames.shape[0]:
        raise ValueError("spectrogram and frame matrix disagree on frame count")
    sad = bi_gaussian_sad(frame_log_energy(frames))
    if estimator is None:
        voiced = track_pitch(frames, sample_rate_hz, cfg).voiced
    else:
        voiced = np.array(
            [estimator(frames[i], sample_rate_hz) is not None for i in range(frames.shape[0])]
        )
    return sad & voiced
