"""Filter placement on a warping scale and PCA-learned filter frequency responses."""

import logging
from dataclasses import dataclass

import numpy as np

from .dsp import hamming_window
from .scale import WarpingScale

logger = logging.getLogger(__name__)

SHAPE_KINDS = ("triangular", "pca", "windowed-pca", "windowed-pca-normalized")

POWER_ITER_TOL = 1e-10
POWER_ITER_MAX = 10_000


@dataclass
class FilterbankLayout:
    """Q+2 boundary bins; filter j spans boundaries j-1..j+1 with center at j."""

    boundary_bins: np.ndarray
    sample_rate_hz: int
    n_fft: int

    def __post_init__(self):
        self.boundary_bins = np.asarray(self.boundary_bins, dtype=np.int64)
        k = self.n_bins
        b = self.boundary_bins
        if b.size < 3:
            raise ValueError("layout needs at least three boundaries")
        if b[0] != 0 or b[-1] != k - 1 or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must rise strictly from 0 to K-1")

    @property
    def n_filters(self) -> int:
        return self.boundary_bins.size - 2

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def bin_hz(self) -> float:
        return self.sample_rate_hz / self.n_fft

    def subband(self, j: int) -> tuple[int, int]:
        """Inclusive bin range of filter j (1-based)."""
        return int(self.boundary_bins[j - 1]), int(self.boundary_bins[j + 1])


@dataclass
class Filterbank:
    """Full-band frequency responses, one row per filter."""

    layout: FilterbankLayout
    responses: np.ndarray
    shape_kind: str

    def __post_init__(self):
        self.responses = np.asarray(self.responses, dtype=np.float64)
        if self.responses.shape != (self.layout.n_filters, self.layout.n_bins):
            raise ValueError("responses must be shaped n_filters x n_bins")
        if self.shape_kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind: {self.shape_kind!r}")

    @property
    def n_filters(self) -> int:
        return self.layout.n_filters

    @property
    def n_bins(self) -> int:
        return self.layout.n_bins


def place_filter_edges(
    scale: WarpingScale, q: int, n_fft: int, sample_rate_hz: int
) -> FilterbankLayout:
    """Boundary bins at equidistant warped points j/(Q+1), j = 0..Q+1."""
    if q < 1:
        raise ValueError("need at least one filter")
    k = n_fft // 2 + 1
    if k < q + 2:
        raise ValueError("too few bins")
    bin_hz = sample_rate_hz / n_fft
    warped = np.arange(q + 2) / (q + 1)
    bins = np.rint(scale.inverse(warped) / bin_hz).astype(np.int64)
    bins[0] = 0
    for j in range(1, q + 2):
        # Rounding collisions advance one bin to keep the layout strictly increasing.
        if bins[j] <= bins[j - 1]:
            bins[j] = bins[j - 1] + 1
    if bins[-1] > k - 1:
        raise ValueError("too few bins")
    bins[-1] = k - 1
    return FilterbankLayout(bins, sample_rate_hz, n_fft)


def _triangle(layout: FilterbankLayout, j: int) -> np.ndarray:
    b = layout.boundary_bins
    lo, mid, hi = int(b[j - 1]), int(b[j]), int(b[j + 1])
    resp = np.zeros(layout.n_bins)
    rise = np.arange(lo, mid + 1)
    resp[rise] = (rise - lo) / (mid - lo)
    fall = np.arange(mid, hi + 1)
    resp[fall] = (hi - fall) / (hi - mid)
    resp[mid] = 1.0
    return resp


def triangular_responses(layout: FilterbankLayout) -> Filterbank:
    """Unit-peak triangles rising over [b_{j-1}, b_j] and falling over [b_j, b_{j+1}]."""
    responses = np.stack([_triangle(layout, j) for j in range(1, layout.n_filters + 1)])
    return Filterbank(layout, responses, "triangular")


def subband_covariance(
    log_specs: np.ndarray, band: tuple[int, int], taper: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance and mean of (optionally tapered) subband log spectra."""
    log_specs = np.atleast_2d(np.asarray(log_specs, dtype=np.float64))
    lo, hi = band
    if lo > hi:
        raise ValueError("band must satisfy k_l <= k_h")
    n_frames = log_specs.shape[0]
    if n_frames < 2:
        raise ValueError("need >=2 frames")
    sliced = log_specs[:, lo : hi + 1]
    if taper is not None:
        taper = np.asarray(taper, dtype=np.float64)
        if taper.shape != (sliced.shape[1],):
            raise ValueError("taper length must equal the band width")
        sliced = sliced * taper
    mean = sliced.mean(axis=0)
    centered = sliced - mean
    cov = centered.T @ centered / (n_frames - 1)
    return cov, mean


def pca_first_basis(s: np.ndarray) -> np.ndarray:
    """Unit-norm dominant eigenvector of a symmetric matrix by power iteration.

    The sign is fixed so the component sum is non-negative.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] < 1:
        raise ValueError("matrix must be square and non-empty")
    s = 0.5 * (s + s.T)
    if not np.any(s):
        raise ValueError("degenerate subband")
    n = s.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(POWER_ITER_MAX):
        w = s @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        v = w / norm
        lam = float(v @ s @ v)
        if np.linalg.norm(s @ v - lam * v) <= POWER_ITER_TOL * max(1.0, abs(lam)):
            break
    if v.sum() < 0.0:
        v = -v
    return v


def learn_pca_filterbank(
    log_specs: np.ndarray,
    layout: FilterbankLayout,
    taper: bool = False,
    normalize: bool = False,
) -> Filterbank:
    """Per-filter dominant PCA basis of subband log spectra, zero-padded to full band.

    Degenerate (zero-variance) subbands fall back to the triangular response.
    """
    log_specs = np.atleast_2d(np.asarray(log_specs, dtype=np.float64))
    if normalize and not taper:
        raise ValueError("normalization is only defined for the windowed variant")
    if log_specs.shape[1] != layout.n_bins:
        raise ValueError("log spectra width must equal the layout bin count")
    if log_specs.shape[0] < 2:
        raise ValueError("need >=2 frames")
    responses = np.zeros((layout.n_filters, layout.n_bins))
    for j in range(1, layout.n_filters + 1):
        lo, hi = layout.subband(j)
        window = hamming_window(hi - lo + 1) if taper else None
        cov, _ = subband_covariance(log_specs, (lo, hi), window)
        try:
            basis = pca_first_basis(cov)
        except ValueError:
            logger.warning("degenerate subband for filter %d; using triangular shape", j)
            responses[j - 1] = _triangle(layout, j)
            continue
        responses[j - 1, lo : hi + 1] = basis
    if normalize:
        responses = responses / responses.max(axis=1, keepdims=True)
    if taper:
        kind = "windowed-pca-normalized" if normalize else "windowed-pca"
    else:
        kind = "pca"
    return Filterbank(layout, responses, kind)
