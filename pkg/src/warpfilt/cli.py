"""Command-line pipeline: scale and filterbank learning, feature extraction,
F-ratio analysis, and GMM-UBM verification with DET/EER/minDCF reporting."""

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.stats

from . import analysis, backend, filterbank, sad, scale, store
from .dsp import next_pow2
from .features import ENERGY_EPS, FeatureConfig, extract_features, filterbank_log_energies, utterance_spectra

logger = logging.getLogger(__name__)

SCALE_FLAGS = {"mel": "mel", "speech": "speech-based", "speech-pitch": "speech-based-pitch"}
SHAPE_FLAGS = {"tri": "triangular", "pca": "pca", "wpca": "windowed-pca", "wpca-norm": "windowed-pca-normalized"}

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


@dataclass
class RunConfig:
    """Pipeline settings; file values are overridden by command-line flags."""

    frame_ms: float = 20.0
    hop_ms: float = 10.0
    n_filters: int = 20
    n_ceps: int = 19
    delta_window: int = 2
    rasta_enabled: bool = True
    cmvn_enabled: bool = True
    preemph: float = 0.97
    scale: str = "mel"
    shape: str = "tri"
    pitch_f_min_hz: float = 50.0
    pitch_f_max_hz: float = 400.0
    voicing_threshold: float = 0.5
    ubm_components: int = 64
    em_iters: int = 10
    relevance: float = 14.0
    seed: int = 0
    jobs: int = 1
    subsample_fraction: float = 1.0
    cost_preset: str = "nist-sre"

    def __post_init__(self):
        if self.scale not in SCALE_FLAGS:
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.shape not in SHAPE_FLAGS:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.cost_preset not in backend.COST_PRESETS:
            raise ValueError(f"unknown cost preset {self.cost_preset!r}")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValueError("subsample_fraction must lie in (0, 1]")

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            frame_ms=self.frame_ms,
            hop_ms=self.hop_ms,
            n_filters=self.n_filters,
            n_ceps=self.n_ceps,
            delta_window=self.delta_window,
            rasta_enabled=self.rasta_enabled,
            cmvn_enabled=self.cmvn_enabled,
            preemph=self.preemph,
        )

    def pitch_config(self) -> sad.PitchConfig:
        return sad.PitchConfig(self.pitch_f_min_hz, self.pitch_f_max_hz, self.voicing_threshold)

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path: str | Path | None, overrides: dict) -> RunConfig:
    """RunConfig from an optional JSON file plus flag overrides (flags win)."""
    values = {}
    if path is not None:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        values.update(obj)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _setup_logging():
    level = os.environ.get("WARPFILT_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        stream=sys.stderr,
        level=levels.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _map_ordered(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@contextmanager
def _directory_lock(outdir: Path):
    lock = outdir / ".warpfilt.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValueError(f"{outdir} is in use by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _refuse_existing(path: Path, overwrite: bool):
    if path.exists() and not overwrite:
        raise ValueError(f"{path} exists; pass --overwrite to replace it")


def _load_segment(entry: store.ManifestEntry, expected_rate: int):
    seg = store.load_wav(entry.path)
    if seg.sample_rate_hz != expected_rate:
        raise ValueError(
            f"sample rate {seg.sample_rate_hz} differs from manifest rate {expected_rate}"
        )
    seg.id = entry.utterance_id
    return seg


def _subsample(entries, fraction: float, seed: int):
    if fraction >= 1.0:
        return entries
    n_used = max(1, math.ceil(fraction * len(entries)))
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(entries), size=n_used, replace=False))
    logger.info("subsampling %d of %d utterances", n_used, len(entries))
    return [entries[i] for i in idx]


def _provenance(cfg: RunConfig, manifest_path: str | None) -> dict:
    prov = {"config": cfg.snapshot()}
    if manifest_path is not None:
        prov["manifest_sha256"] = store.file_digest(manifest_path)
    return prov


# --- Subcommands ---------------------------------------------------------------

def cmd_learn_scale(args) -> int:
    cfg = _config_from_args(args)
    manifest = store.load_manifest(args.manifest)
    if not manifest.entries:
        raise ValueError("no utterances")
    sr = manifest.sample_rate_hz
    frame_len = int(round(sr * cfg.frame_ms / 1000.0))
    n_fft = next_pow2(frame_len)
    kind = SCALE_FLAGS[cfg.scale]
    if kind == "mel":
        warping = scale.mel_warping_scale(sr / 2.0)
    else:
        entries = _subsample(manifest.entries, cfg.subsample_fraction, cfg.seed)
        fc = cfg.feature_config()
        pc = cfg.pitch_config()

        def one(entry):
            try:
                seg = _load_segment(entry, sr)
                spec, frames = utterance_spectra(seg, fc)
                if kind == "speech-based-pitch":
                    mask = sad.voiced_mask(spec, frames, sr, pc)
                else:
                    mask = sad.bi_gaussian_sad(sad.frame_log_energy(frames))
                return scale.compute_ltas(spec, mask)
            except ValueError as err:
                raise ValueError(f"utterance {entry.utterance_id}: {err}") from err

        ltas_list = _map_ordered(one, entries, cfg.jobs)
        avg = scale.average_ltas(ltas_list)
        partition = scale.equal_area_partition(avg, cfg.n_filters)
        warping = scale.build_warping_scale(partition, avg.bin_hz, sr / 2.0, kind)
    out = Path(args.out)
    _refuse_existing(out, args.overwrite)
    doc = store.scale_document(warping, sr, n_fft, _provenance(cfg, args.manifest))
    store.save_model(doc, out)
    for f_hz, w in zip(warping.knots_hz, warping.knots_warped):
        print(f"{float(f_hz)!r}\t{float(w)!r}")
    logger.info("wrote %s scale with %d knots to %s", kind, warping.knots_hz.size, out)
    return EXIT_OK


def cmd_learn_filterbank(args) -> int:
    cfg = _config_from_args(args)
    scale_doc = store.load_model(args.scale_doc, expect_kind="warping-scale")
    warping = store.scale_from_document(scale_doc)
    sr = scale_doc.sample_rate_hz
    n_fft = scale_doc.n_fft
    layout = filterbank.place_filter_edges(warping, cfg.n_filters, n_fft, sr)
    shape_kind = SHAPE_FLAGS[cfg.shape]
    if shape_kind == "triangular":
        fb = filterbank.triangular_responses(layout)
    else:
        if args.manifest is None:
            raise ValueError("PCA filter shapes need --manifest for the corpus pass")
        manifest = store.load_manifest(args.manifest)
        if not manifest.entries:
            raise ValueError("no utterances")
        entries = _subsample(manifest.entries, cfg.subsample_fraction, cfg.seed)
        fc = cfg.feature_config()

        def one(entry):
            try:
                seg = _load_segment(entry, sr)
                spec, frames = utterance_spectra(seg, fc)
                mask = sad.bi_gaussian_sad(sad.frame_log_energy(frames))
                return np.log(spec.frames[mask] + ENERGY_EPS)
            except ValueError as err:
                raise ValueError(f"utterance {entry.utterance_id}: {err}") from err

        log_specs = np.vstack(_map_ordered(one, entries, cfg.jobs))
        fb = filterbank.learn_pca_filterbank(
            log_specs,
            layout,
            taper=shape_kind in ("windowed-pca", "windowed-pca-normalized"),
            normalize=shape_kind == "windowed-pca-normalized",
        )
    out = Path(args.out)
    _refuse_existing(out, args.overwrite)
    manifest_path = args.manifest if shape_kind != "triangular" else None
    store.save_model(store.filterbank_document(fb, _provenance(cfg, manifest_path)), out)
    print(f"filters\t{fb.n_filters}")
    print(f"shape\t{fb.shape_kind}")
    logger.info("wrote %s filterbank to %s", fb.shape_kind, out)
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config_from_args(args)
    manifest = store.load_manifest(args.manifest)
    if not manifest.entries:
        raise ValueError("no utterances")
    fb = store.filterbank_from_document(store.load_model(args.filterbank, expect_kind="filterbank"))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    fc = cfg.feature_config()
    targets = {e.utterance_id: outdir / f"{e.utterance_id}.wflt" for e in manifest.entries}
    if not args.overwrite:
        for path in targets.values():
            _refuse_existing(path, False)

    def one(entry):
        try:
            seg = _load_segment(entry, manifest.sample_rate_hz)
            fm = extract_features(seg, fb, fc)
            store.write_features(fm, targets[entry.utterance_id])
            return entry.utterance_id, fm.n_frames, float(fm.mask.mean()) * 100.0, None
        except ValueError as err:
            return entry.utterance_id, 0, 0.0, str(err)

    failed = 0
    with _directory_lock(outdir):
        for utt, n_frames, pct, err in _map_ordered(one, manifest.entries, cfg.jobs):
            if err is not None:
                failed += 1
                logger.error("utterance %s failed: %s", utt, err)
            else:
                print(f"{utt}\t{n_frames}\t{pct:.1f}")
    if failed:
        logger.error("%d of %d utterances failed", failed, len(manifest.entries))
        return EXIT_DATA
    return EXIT_OK


def cmd_fratio(args) -> int:
    cfg = _config_from_args(args)
    manifest = store.load_manifest(args.manifest)
    speakers = manifest.speakers()
    if len(speakers) < 2:
        raise ValueError("manifest needs speaker_ids for at least two speakers")
    fc = cfg.feature_config()
    variants = {}
    for doc_path in args.filterbanks:
        fb = store.filterbank_from_document(store.load_model(doc_path, expect_kind="filterbank"))
        groups = {}
        for speaker, entries in speakers.items():
            def one(entry):
                try:
                    seg = _load_segment(entry, manifest.sample_rate_hz)
                    spec, frames = utterance_spectra(seg, fc)
                    mask = sad.bi_gaussian_sad(sad.frame_log_energy(frames))
                    return filterbank_log_energies(spec, fb)[mask]
                except ValueError as err:
                    raise ValueError(f"utterance {entry.utterance_id}: {err}") from err

            groups[speaker] = np.vstack(_map_ordered(one, entries, cfg.jobs))
        label = Path(doc_path).stem
        if label in variants:
            label = f"{label}#{sum(1 for v in variants if v.split('#')[0] == label) + 1}"
        variants[label] = groups
    report = analysis.f_ratio_report(variants)
    print(report.to_text())
    if args.out is not None:
        out = Path(args.out)
        _refuse_existing(out, args.overwrite)
        out.write_text(report.to_tsv(), encoding="utf-8")
    return EXIT_OK


def _read_feature_dir(features_dir: Path) -> dict:
    files = sorted(features_dir.glob("*.wflt"))
    if not files:
        raise ValueError(f"no feature files in {features_dir}")
    return {p.stem: p for p in files}


def cmd_train_ubm(args) -> int:
    cfg = _config_from_args(args)
    feature_files = _read_feature_dir(Path(args.features))
    frames = np.vstack([store.read_features(p).speech_frames for p in feature_files.values()])
    model, history = backend.train_ubm(frames, cfg.ubm_components, cfg.em_iters, cfg.seed)
    out = Path(args.out)
    _refuse_existing(out, args.overwrite)
    prov = _provenance(cfg, None)
    prov["em_log_likelihoods"] = [float(v) for v in history]
    store.save_model(store.gmm_document(model, 0, 0, prov), out)
    print(f"components\t{model.n_components}")
    print(f"frames\t{frames.shape[0]}")
    print(f"final_log_likelihood\t{float(history[-1])!r}")
    return EXIT_OK


def cmd_enroll(args) -> int:
    cfg = _config_from_args(args)
    manifest = store.load_manifest(args.manifest)
    speakers = manifest.speakers()
    if not speakers:
        raise ValueError("manifest has no speaker_ids")
    ubm = store.gmm_from_document(store.load_model(args.ubm, expect_kind="gmm"))
    feature_files = _read_feature_dir(Path(args.features))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if not args.overwrite:
        for speaker in speakers:
            _refuse_existing(outdir / f"{speaker}.json", False)
    with _directory_lock(outdir):
        for speaker, entries in sorted(speakers.items()):
            rows = []
            for entry in entries:
                if entry.utterance_id not in feature_files:
                    raise ValueError(f"no features for utterance {entry.utterance_id}")
                rows.append(store.read_features(feature_files[entry.utterance_id]).speech_frames)
            adapted = backend.map_adapt_means(ubm, np.vstack(rows), cfg.relevance)
            store.save_model(
                store.gmm_document(adapted, 0, 0, _provenance(cfg, args.manifest)),
                outdir / f"{speaker}.json",
            )
            print(f"{speaker}\t{sum(r.shape[0] for r in rows)}")
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = _config_from_args(args)
    trials = store.read_trials(args.trials)
    if not trials.trials:
        raise ValueError("no trials")
    ubm = store.gmm_from_document(store.load_model(args.ubm, expect_kind="gmm"))
    models_dir = Path(args.models)
    feature_files = _read_feature_dir(Path(args.features))
    enroll_cache = {}
    feature_cache = {}

    def enroll_model(enroll_id):
        if enroll_id not in enroll_cache:
            path = models_dir / f"{enroll_id}.json"
            if not path.exists():
                raise ValueError(f"no enrolled model for {enroll_id}")
            enroll_cache[enroll_id] = store.gmm_from_document(
                store.load_model(path, expect_kind="gmm")
            )
        return enroll_cache[enroll_id]

    def test_features(test_id):
        if test_id not in feature_cache:
            if test_id not in feature_files:
                raise ValueError(f"no features for test segment {test_id}")
            feature_cache[test_id] = store.read_features(feature_files[test_id])
        return feature_cache[test_id]

    for t in trials.trials:  # warm caches serially so threads stay read-only
        enroll_model(t.enroll_id)
        test_features(t.test_id)

    def one(trial):
        value = backend.score_trial(enroll_model(trial.enroll_id), ubm, test_features(trial.test_id))
        return dataclasses.replace(trial, score=value)

    scored = backend.TrialScoreSet(_map_ordered(one, trials.trials, cfg.jobs))
    out = Path(args.out)
    _refuse_existing(out, args.overwrite)
    store.write_scores(scored, out)
    print(f"trials\t{len(scored.trials)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    scores = store.read_scores(args.scores)
    if args.fuse_with is not None:
        scores = backend.fuse_scores(scores, store.read_scores(args.fuse_with))
    curve = backend.det_curve(scores)
    c_miss, c_fa, p_tar = backend.COST_PRESETS[cfg.cost_preset]
    eer_value = backend.eer(curve)
    dcf_value = backend.min_dcf(curve, c_miss, c_fa, p_tar)
    print(f"eer_percent\t{100.0 * eer_value:.4f}")
    print(f"min_dcf_x100\t{100.0 * dcf_value:.4f}")
    if args.det_out is not None:
        out = Path(args.det_out)
        _refuse_existing(out, args.overwrite)
        with np.errstate(divide="ignore"):
            probit_miss = scipy.stats.norm.ppf(curve.p_miss)
            probit_fa = scipy.stats.norm.ppf(curve.p_fa)
        lines = ["threshold\tp_miss\tp_fa\tprobit_miss\tprobit_fa"]
        for row in zip(curve.thresholds, curve.p_miss, curve.p_fa, probit_miss, probit_fa):
            lines.append("\t".join(repr(float(v)) for v in row))
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


# --- Parser --------------------------------------------------------------------

def _config_from_args(args) -> RunConfig:
    overrides = {}
    for name in (
        "seed",
        "jobs",
        "scale",
        "shape",
        "subsample_fraction",
        "cost_preset",
        "n_filters",
        "ubm_components",
        "em_iters",
        "relevance",
    ):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    return load_config(getattr(args, "config", None), overrides)


def _add_common(p, *, jobs=True, seed=True):
    p.add_argument("--config", help="JSON config file; flags override its values")
    if seed:
        p.add_argument("--seed", type=int, help="random seed (default 0)")
    if jobs:
        p.add_argument("--jobs", type=int, help="parallel workers over utterances/trials")
    p.add_argument("--overwrite", action="store_true", help="replace existing outputs")


def _build_parser() -> _Parser:
    parser = _Parser(prog="warpfilt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn-scale", help="learn a frequency warping scale from a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", choices=sorted(SCALE_FLAGS))
    p.add_argument("--n-filters", dest="n_filters", type=int)
    p.add_argument("--subsample-fraction", dest="subsample_fraction", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_learn_scale)

    p = sub.add_parser("learn-filterbank", help="place filters on a scale; learn PCA shapes")
    p.add_argument("--manifest", help="corpus manifest (required for PCA shapes)")
    p.add_argument("--scale-doc", required=True, help="warping-scale document")
    p.add_argument("--out", required=True)
    p.add_argument("--shape", choices=sorted(SHAPE_FLAGS))
    p.add_argument("--n-filters", dest="n_filters", type=int)
    p.add_argument("--subsample-fraction", dest="subsample_fraction", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_learn_filterbank)

    p = sub.add_parser("extract", help="extract cepstral features for every utterance")
    p.add_argument("--manifest", required=True)
    p.add_argument("--filterbank", required=True)
    p.add_argument("--out", required=True, help="output directory for .wflt files")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fratio", help="per-filter F-ratio comparison of filterbank variants")
    p.add_argument("--manifest", required=True, help="manifest with speaker_ids")
    p.add_argument("--filterbanks", nargs="+", required=True)
    p.add_argument("--out", help="optional TSV output path")
    _add_common(p)
    p.set_defaults(func=cmd_fratio)

    p = sub.add_parser("train-ubm", help="train the universal background model")
    p.add_argument("--features", required=True, help="directory of .wflt files")
    p.add_argument("--out", required=True)
    p.add_argument("--ubm-components", dest="ubm_components", type=int)
    p.add_argument("--em-iters", dest="em_iters", type=int)
    _add_common(p, jobs=False)
    p.set_defaults(func=cmd_train_ubm)

    p = sub.add_parser("enroll", help="MAP-adapt a model per speaker")
    p.add_argument("--manifest", required=True, help="manifest with speaker_ids")
    p.add_argument("--features", required=True)
    p.add_argument("--ubm", required=True)
    p.add_argument("--out", required=True, help="output directory for speaker models")
    p.add_argument("--relevance", type=float)
    _add_common(p, jobs=False, seed=False)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("score", help="score a trial list with enrolled models")
    p.add_argument("--trials", required=True)
    p.add_argument("--models", required=True, help="directory of enrolled speaker models")
    p.add_argument("--ubm", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="score file to write")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="EER / minDCF / DET points from a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--fuse-with", dest="fuse_with", help="second score file for equal-weight fusion")
    p.add_argument("--cost-preset", dest="cost_preset", choices=sorted(backend.COST_PRESETS))
    p.add_argument("--det-out", dest="det_out", help="write DET sweep points here")
    _add_common(p, jobs=False, seed=False)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        logger.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
