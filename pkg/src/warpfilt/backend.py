"""GMM-UBM speaker verification backend: EM training, MAP adaptation, LLR scoring,
score fusion, and DET/EER/minDCF metrics."""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .features import FeatureMatrix

VARIANCE_FLOOR = 1e-4

# (c_miss, c_fa, p_target) per evaluation plan.
COST_PRESETS = {
    "nist-sre": (10.0, 1.0, 0.01),
    "voxceleb": (1.0, 1.0, 0.01),
}

TARGET = "target"
IMPOSTOR = "impostor"


@dataclass
class GmmModel:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        c, d = self.means.shape
        if self.weights.shape != (c,) or self.variances.shape != (c, d):
            raise ValueError("inconsistent mixture shapes")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if np.any(self.variances < VARIANCE_FLOOR - 1e-12):
            raise ValueError("variances below floor")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def component_log_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Per-frame, per-component diagonal Gaussian log densities, shape (N, C)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.dim:
        raise ValueError("feature dimension mismatch")
    out = np.empty((x.shape[0], model.n_components))
    const = model.dim * np.log(2.0 * np.pi)
    for c in range(model.n_components):
        diff = x - model.means[c]
        out[:, c] = -0.5 * (
            const + np.log(model.variances[c]).sum() + (diff * diff / model.variances[c]).sum(axis=1)
        )
    return out


def log_likelihoods(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Per-frame mixture log likelihoods."""
    return logsumexp(np.log(model.weights)[None, :] + component_log_densities(model, x), axis=1)


def _responsibilities(model: GmmModel, x: np.ndarray) -> tuple[np.ndarray, float]:
    log_joint = np.log(model.weights)[None, :] + component_log_densities(model, x)
    log_norm = logsumexp(log_joint, axis=1)
    return np.exp(log_joint - log_norm[:, None]), float(log_norm.mean())


def _kmeans_style_init(x: np.ndarray, n_components: int, rng: np.random.Generator) -> GmmModel:
    n = x.shape[0]
    centroids = x[rng.choice(n, size=n_components, replace=False)]
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    global_var = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
    weights = np.empty(n_components)
    means = centroids.copy()
    variances = np.tile(global_var, (n_components, 1))
    for c in range(n_components):
        members = x[assign == c]
        weights[c] = max(members.shape[0], 1)
        if members.shape[0] > 0:
            means[c] = members.mean(axis=0)
        if members.shape[0] > 1:
            variances[c] = np.maximum(members.var(axis=0), VARIANCE_FLOOR)
    weights /= weights.sum()
    return GmmModel(weights, means, variances)


def train_ubm(
    features: np.ndarray, n_components: int, iters: int = 10, seed: int = 0
) -> tuple[GmmModel, np.ndarray]:
    """EM-trained diagonal GMM over pooled frames.

    Returns the model and the mean log-likelihood recorded at each E-step.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[0] < 10 * n_components:
        raise ValueError("too few frames")
    rng = np.random.default_rng(seed)
    model = _kmeans_style_init(x, n_components, rng)
    history = np.empty(iters)
    for it in range(iters):
        gamma, ll = _responsibilities(model, x)
        history[it] = ll
        nk = gamma.sum(axis=0)
        safe_nk = np.maximum(nk, 1e-12)
        weights = nk / x.shape[0]
        means = gamma.T @ x / safe_nk[:, None]
        variances = np.empty_like(means)
        for c in range(model.n_components):
            diff = x - means[c]
            variances[c] = (gamma[:, c][:, None] * diff * diff).sum(axis=0) / safe_nk[c]
        variances = np.maximum(variances, VARIANCE_FLOOR)
        model = GmmModel(weights / weights.sum(), means, variances)
    return model, history


def map_adapt_means(ubm: GmmModel, features: np.ndarray, relevance: float = 14.0) -> GmmModel:
    """Mean-only MAP adaptation with alpha_i = n_i / (n_i + relevance)."""
    if relevance < 0.0:
        raise ValueError("relevance must be non-negative")
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[0] < 1:
        raise ValueError("need at least one adaptation frame")
    gamma, _ = _responsibilities(ubm, x)
    nk = gamma.sum(axis=0)
    safe_nk = np.maximum(nk, 1e-12)
    ex = gamma.T @ x / safe_nk[:, None]
    ex = np.where(nk[:, None] > 0.0, ex, ubm.means)
    alpha = nk / (nk + relevance)
    means = alpha[:, None] * ex + (1.0 - alpha)[:, None] * ubm.means
    return GmmModel(ubm.weights.copy(), means, ubm.variances.copy())


def score_trial(enroll: GmmModel, ubm: GmmModel, test: FeatureMatrix) -> float:
    """Per-frame-averaged log-likelihood ratio over the masked (speech) frames."""
    if enroll.dim != ubm.dim:
        raise ValueError("model dimensions do not match")
    x = test.speech_frames
    if x.shape[0] < 1:
        raise ValueError("no speech frames to score")
    return float(np.mean(log_likelihoods(enroll, x) - log_likelihoods(ubm, x)))


@dataclass(frozen=True)
class Trial:
    """One verification trial; score may be absent before scoring."""

    enroll_id: str
    test_id: str
    label: str
    score: float | None = None

    def __post_init__(self):
        if self.label not in (TARGET, IMPOSTOR):
            raise ValueError(f"unknown trial label: {self.label!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.enroll_id, self.test_id)


@dataclass
class TrialScoreSet:
    """Scored verification trials."""

    trials: list[Trial]

    def scores(self, label: str) -> np.ndarray:
        values = [t.score for t in self.trials if t.label == label]
        if any(v is None for v in values):
            raise ValueError("trials are not fully scored")
        return np.asarray(values, dtype=np.float64)


def fuse_scores(a: TrialScoreSet, b: TrialScoreSet) -> TrialScoreSet:
    """Equal-weight score fusion over identical trial keys."""
    by_key = {t.key: t for t in b.trials}
    if len(by_key) != len(b.trials):
        raise ValueError("duplicate trial keys")
    if {t.key for t in a.trials} != set(by_key):
        raise ValueError("trial keys do not match")
    fused = []
    for t in a.trials:
        other = by_key[t.key]
        if t.label != other.label:
            raise ValueError(f"trial {t.key} labels disagree")
        if t.score is None or other.score is None:
            raise ValueError("trials are not fully scored")
        fused.append(replace(t, score=0.5 * (t.score + other.score)))
    return TrialScoreSet(fused)


@dataclass
class DetCurve:
    """Miss/false-alarm rates swept over all distinct scores (accept iff score >= threshold)."""

    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray


def det_curve(scores: TrialScoreSet) -> DetCurve:
    """Threshold sweep over all distinct scores plus a reject-all sentinel."""
    targets = np.sort(scores.scores(TARGET))
    impostors = np.sort(scores.scores(IMPOSTOR))
    if targets.size == 0 or impostors.size == 0:
        raise ValueError("need at least one target and one impostor trial")
    thresholds = np.concatenate([np.unique(np.concatenate([targets, impostors])), [np.inf]])
    p_miss = np.searchsorted(targets, thresholds, side="left") / targets.size
    p_fa = (impostors.size - np.searchsorted(impostors, thresholds, side="left")) / impostors.size
    return DetCurve(thresholds, p_miss, p_fa)


def eer(curve: DetCurve) -> float:
    """Equal error rate by linear interpolation at the miss/false-alarm crossing."""
    diff = curve.p_miss - curve.p_fa
    idx = int(np.searchsorted(diff >= 0.0, True))
    if diff[idx] == 0.0:
        return float(curve.p_miss[idx])
    lo, hi = idx - 1, idx
    t = -diff[lo] / (diff[hi] - diff[lo])
    return float(curve.p_miss[lo] + t * (curve.p_miss[hi] - curve.p_miss[lo]))


def min_dcf(curve: DetCurve, c_miss: float, c_fa: float, p_tar: float) -> float:
    """Minimum of c_miss*P_miss*p_tar + c_fa*P_fa*(1-p_tar) over the sweep."""
    if not 0.0 < p_tar < 1.0:
        raise ValueError("p_tar must lie in (0, 1)")
    if c_miss <= 0.0 or c_fa <= 0.0:
        raise ValueError("costs must be positive")
    cost = c_miss * curve.p_miss * p_tar + c_fa * curve.p_fa * (1.0 - p_tar)
    return float(cost.min())
