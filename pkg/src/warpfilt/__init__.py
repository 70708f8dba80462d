"""Data-driven filterbank learning, cepstral feature extraction, and desk-scale
GMM-UBM speaker verification."""

from .analysis import f_ratio, f_ratio_report
from .backend import (
    COST_PRESETS,
    DetCurve,
    GmmModel,
    Trial,
    TrialScoreSet,
    det_curve,
    eer,
    fuse_scores,
    map_adapt_means,
    min_dcf,
    score_trial,
    train_ubm,
)
from .dsp import (
    AudioSegment,
    FrameGrid,
    PowerSpectrogram,
    dct_ii_ortho,
    frame_signal,
    hamming_window,
    power_spectrum,
    pre_emphasize,
)
from .features import (
    FeatureConfig,
    FeatureMatrix,
    append_deltas,
    cepstra,
    cmvn,
    extract_features,
    filterbank_log_energies,
    rasta_filter,
)
from .filterbank import (
    Filterbank,
    FilterbankLayout,
    learn_pca_filterbank,
    pca_first_basis,
    place_filter_edges,
    subband_covariance,
    triangular_responses,
)
from .sad import PitchConfig, PitchTrack, bi_gaussian_sad, estimate_pitch, frame_log_energy, voiced_mask
from .scale import (
    BandPartition,
    Ltas,
    WarpingScale,
    average_ltas,
    build_warping_scale,
    compute_ltas,
    equal_area_partition,
    mel,
    mel_warping_scale,
    merge_ltas,
)

__version__ = "0.1.0"
