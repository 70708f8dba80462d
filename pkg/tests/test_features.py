import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import synth_utterance

from warpfilt.dsp import AudioSegment, PowerSpectrogram
from warpfilt.features import (
    RASTA_DEN,
    RASTA_NUM,
    FeatureConfig,
    FeatureMatrix,
    append_deltas,
    cepstra,
    cmvn,
    extract_features,
    filterbank_log_energies,
    rasta_filter,
)
from warpfilt.filterbank import FilterbankLayout, triangular_responses, place_filter_edges
from warpfilt.scale import mel_warping_scale


def toy_fb(k=5, sr=16000):
    layout = FilterbankLayout(np.array([0, 2, 4]), sr, (k - 1) * 2)
    return triangular_responses(layout)


def full_fb(sr=16000, q=20):
    layout = place_filter_edges(mel_warping_scale(sr / 2.0), q, 512, sr)
    return triangular_responses(layout)


class TestFilterbankLogEnergies:
    def test_flat_spectrum(self):
        fb = toy_fb()
        spec = PowerSpectrogram(np.ones((1, 5)), 8, 16000)
        expected = np.log(fb.responses[0].sum() + 1e-12)
        assert np.isclose(filterbank_log_energies(spec, fb)[0, 0], expected, atol=1e-12)

    def test_zero_spectrum(self):
        fb = toy_fb()
        spec = PowerSpectrogram(np.zeros((3, 5)), 8, 16000)
        assert np.allclose(filterbank_log_energies(spec, fb), np.log(1e-12), atol=1e-12)

    def test_doubling_adds_log2(self):
        fb = toy_fb()
        rng = np.random.default_rng(0)
        frames = rng.uniform(0.5, 2.0, size=(4, 5))
        base = filterbank_log_energies(PowerSpectrogram(frames, 8, 16000), fb)
        doubled = filterbank_log_energies(PowerSpectrogram(2.0 * frames, 8, 16000), fb)
        assert np.allclose(doubled - base, np.log(2.0), atol=1e-9)

    def test_bin_count_mismatch(self):
        fb = toy_fb()
        with pytest.raises(ValueError):
            filterbank_log_energies(PowerSpectrogram(np.ones((1, 9)), 16, 16000), fb)


class TestCepstra:
    def test_constant_row_zero(self):
        out = cepstra(np.full((3, 20), 2.5), 19)
        assert np.abs(out).max() <= 1e-9

    def test_width(self):
        out = cepstra(np.random.default_rng(1).normal(size=(4, 20)), 19)
        assert out.shape == (4, 19)

    def test_offset_invariance(self):
        rng = np.random.default_rng(2)
        row = rng.normal(size=(2, 20))
        assert np.allclose(cepstra(row + 3.7, 19), cepstra(row, 19), atol=1e-12)

    def test_too_many_coefficients(self):
        with pytest.raises(ValueError):
            cepstra(np.zeros((1, 20)), 20)


class TestRastaFilter:
    def test_dc_rejection(self):
        out = rasta_filter(np.full((600, 2), 5.0))
        assert np.abs(out[500:]).max() < 1e-3 * 5.0

    def test_zero_input(self):
        assert np.array_equal(rasta_filter(np.zeros((50, 3))), np.zeros((50, 3)))

    def test_impulse_matches_direct_recursion(self):
        x = np.zeros(40)
        x[0] = 1.0
        got = rasta_filter(x[:, None])[:, 0]
        y = np.zeros(40)
        for n in range(40):
            acc = 0.0
            for i, b in enumerate(RASTA_NUM):
                if n - i >= 0:
                    acc += b * x[n - i]
            if n >= 1:
                acc -= RASTA_DEN[1] * y[n - 1]
            y[n] = acc
        assert np.abs(got - y).max() <= 1e-12


class TestAppendDeltas:
    def test_constant_base(self):
        out = append_deltas(np.full((10, 3), 1.5), 2)
        assert np.array_equal(out[:, 3:], np.zeros((10, 6)))

    def test_linear_ramp_interior(self):
        base = np.arange(20.0)[:, None]
        out = append_deltas(base, 2)
        assert np.allclose(out[4:-4, 1], 1.0, atol=1e-12)

    def test_width_triples(self):
        out = append_deltas(np.zeros((5, 7)), 2)
        assert out.shape == (5, 21)


class TestCmvn:
    def test_masked_statistics(self):
        rng = np.random.default_rng(3)
        feats = rng.normal(2.0, 3.0, size=(40, 5))
        mask = rng.uniform(size=40) > 0.3
        out = cmvn(feats, mask)
        assert np.abs(out[mask].mean(axis=0)).max() <= 1e-9
        assert np.abs(out[mask].var(axis=0) - 1.0).max() <= 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        feats = rng.normal(size=(30, 4))
        mask = np.ones(30, dtype=bool)
        once = cmvn(feats, mask)
        assert np.allclose(cmvn(once, mask), once, atol=1e-9)

    def test_constant_column_zeroed(self):
        feats = np.column_stack([np.full(20, 7.0), np.arange(20.0)])
        out = cmvn(feats, np.ones(20, dtype=bool))
        assert np.array_equal(out[:, 0], np.zeros(20))

    def test_needs_two_frames(self):
        with pytest.raises(ValueError):
            cmvn(np.ones((5, 2)), np.array([True, False, False, False, False]))


class TestFeatureConfig:
    def test_defaults_give_57_dims(self):
        assert FeatureConfig().dim == 57

    def test_invalid_ceps(self):
        with pytest.raises(ValueError):
            FeatureConfig(n_ceps=20)


def vowel_segment(duration_s=3.0, sr=16000):
    """Fully voiced synthetic vowel (no silence margins)."""
    samples = synth_utterance(2, 0, sr, duration_s, seed=42, voiced_fraction=1.0)
    return AudioSegment(samples, sr, "vowel")


class TestExtractFeatures:
    def test_shape_and_finiteness(self):
        fm = extract_features(vowel_segment(), full_fb(), FeatureConfig())
        # 48000 samples, 320/160 framing: 1 + (48000-320)//160 = 299 frames
        assert fm.vectors.shape == (299, 57)
        assert fm.mask.shape == (299,)
        assert np.all(np.isfinite(fm.vectors))

    def test_deterministic(self):
        seg = vowel_segment()
        a = extract_features(seg, full_fb(), FeatureConfig())
        b = extract_features(seg, full_fb(), FeatureConfig())
        assert np.array_equal(a.vectors, b.vectors)
        assert np.array_equal(a.mask, b.mask)

    def test_rasta_changes_output(self):
        seg = vowel_segment()
        with_rasta = extract_features(seg, full_fb(), FeatureConfig(rasta_enabled=True))
        without = extract_features(seg, full_fb(), FeatureConfig(rasta_enabled=False))
        assert not np.allclose(with_rasta.vectors, without.vectors)

    def test_gain_invariance_of_kept_cepstra(self):
        seg = vowel_segment()
        cfg = FeatureConfig(rasta_enabled=False, cmvn_enabled=False)
        base = extract_features(seg, full_fb(), cfg)
        loud = extract_features(
            AudioSegment(2.0 * seg.samples, seg.sample_rate_hz, seg.id), full_fb(), cfg
        )
        assert np.abs(loud.vectors - base.vectors).max() <= 1e-6

    def test_gain_invariance_full_pipeline(self):
        seg = vowel_segment()
        loud_seg = AudioSegment(2.0 * seg.samples, seg.sample_rate_hz, seg.id)
        cfg = FeatureConfig(cmvn_enabled=False)
        base = extract_features(seg, full_fb(), cfg)
        loud = extract_features(loud_seg, full_fb(), cfg)
        assert np.array_equal(base.mask, loud.mask)
        # c1..c19 carry the 1e-6 bound; CMVN then divides by per-column stds,
        # which amplifies float noise, so the normalized check is looser.
        assert np.abs(loud.vectors[:, :19] - base.vectors[:, :19]).max() <= 1e-6
        full = FeatureConfig()
        a = extract_features(seg, full_fb(), full)
        b = extract_features(loud_seg, full_fb(), full)
        assert np.abs(a.vectors - b.vectors).max() <= 1e-5

    def test_sample_rate_mismatch(self):
        seg = vowel_segment(sr=8000)
        with pytest.raises(ValueError):
            extract_features(seg, full_fb(sr=16000), FeatureConfig())

    def test_downstream_stages_identical_across_filterbanks(self):
        # Only the log-energy stage depends on the filterbank shape.
        rng = np.random.default_rng(5)
        log_e = rng.normal(size=(50, 20))
        first = append_deltas(rasta_filter(cepstra(log_e, 19)), 2)
        second = append_deltas(rasta_filter(cepstra(log_e, 19)), 2)
        assert np.array_equal(first, second)


def test_feature_matrix_rejects_nan():
    with pytest.raises(ValueError):
        FeatureMatrix(np.array([[np.nan, 1.0]]), np.array([True]))
