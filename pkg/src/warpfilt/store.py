"""Persistence and interchange: WAV ingestion, model documents, feature files,
corpus manifests, trial lists, and score files."""

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import GmmModel, Trial, TrialScoreSet
from .dsp import AudioSegment
from .filterbank import Filterbank, FilterbankLayout
from .scale import WarpingScale

SCHEMA_VERSION = 1
MODEL_KINDS = ("warping-scale", "filterbank", "gmm")
DOCUMENT_KEYS = {"schema_version", "kind", "sample_rate_hz", "n_fft", "payload", "provenance"}

FEATURE_MAGIC = b"WFLT"
FEATURE_VERSION = 1

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3


class ModelKindError(ValueError):
    """A model document was loaded as the wrong kind."""


def _atomic_write(path: str | Path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# --- WAV ---------------------------------------------------------------------

def load_wav(path: str | Path) -> AudioSegment:
    """Read a mono RIFF/WAVE file (16-bit PCM or 32-bit IEEE float) scaled to [-1, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise ValueError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if chunk_id != b"data" and len(body) < chunk_size:
            raise ValueError(f"{path}: truncated {chunk_id.decode('ascii', 'replace')} chunk")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise ValueError(f"{path}: malformed fmt chunk")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise ValueError(f"{path}: truncated data chunk")
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)
    if fmt is None:
        raise ValueError(f"{path}: missing fmt chunk")
    if data is None:
        raise ValueError(f"{path}: missing data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels != 1:
        raise ValueError(f"{path}: unsupported channel count {channels} (mono required)")
    if audio_format == WAVE_FORMAT_PCM and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise ValueError(
            f"{path}: unsupported codec (format tag {audio_format}, {bits} bits);"
            " need 16-bit PCM or 32-bit IEEE float"
        )
    if samples.size == 0:
        raise ValueError("empty signal")
    return AudioSegment(samples, sample_rate, Path(path).stem)


def write_wav(path: str | Path, segment: AudioSegment, fmt: str = "pcm16"):
    """Write mono 16-bit PCM or 32-bit IEEE float WAV."""
    if fmt == "pcm16":
        format_tag, bits = WAVE_FORMAT_PCM, 16
        clipped = np.clip(segment.samples, -1.0, 32767.0 / 32768.0)
        payload = (np.rint(clipped * 32768.0).astype("<i2")).tobytes()
    elif fmt == "float32":
        format_tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = segment.samples.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown wav format: {fmt!r}")
    byte_rate = segment.sample_rate_hz * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, format_tag, 1, segment.sample_rate_hz, byte_rate, bits // 8, bits
    )
    header += b"data" + struct.pack("<I", len(payload))
    _atomic_write(path, header + payload)


# --- Model documents ---------------------------------------------------------

@dataclass
class ModelDocument:
    """Versioned serialized model with provenance."""

    kind: str
    sample_rate_hz: int
    n_fft: int
    payload: dict
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION


def _payload_digest(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def save_model(doc: ModelDocument, path: str | Path):
    """Write a model document as UTF-8 JSON with a payload checksum."""
    if doc.kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind: {doc.kind!r}")
    provenance = dict(doc.provenance)
    provenance["payload_sha256"] = _payload_digest(doc.payload)
    obj = {
        "schema_version": doc.schema_version,
        "kind": doc.kind,
        "sample_rate_hz": doc.sample_rate_hz,
        "n_fft": doc.n_fft,
        "payload": doc.payload,
        "provenance": provenance,
    }
    _atomic_write(path, (json.dumps(obj, indent=1, sort_keys=True) + "\n").encode("utf-8"))


def load_model(path: str | Path, expect_kind: str | None = None) -> ModelDocument:
    """Read and validate a model document; checks keys, version, kind, and checksum."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict) or set(obj) != DOCUMENT_KEYS:
        raise ValueError(f"{path}: unexpected document keys")
    if obj["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {obj['schema_version']}")
    if obj["kind"] not in MODEL_KINDS:
        raise ValueError(f"{path}: unknown model kind {obj['kind']!r}")
    provenance = dict(obj["provenance"])
    stored = provenance.pop("payload_sha256", None)
    if stored != _payload_digest(obj["payload"]):
        raise ValueError(f"{path}: checksum mismatch")
    if expect_kind is not None and obj["kind"] != expect_kind:
        raise ModelKindError(f"{path}: expected kind {expect_kind!r}, found {obj['kind']!r}")
    return ModelDocument(
        kind=obj["kind"],
        sample_rate_hz=obj["sample_rate_hz"],
        n_fft=obj["n_fft"],
        payload=obj["payload"],
        provenance=provenance,
        schema_version=obj["schema_version"],
    )


def scale_document(
    scale: WarpingScale, sample_rate_hz: int, n_fft: int, provenance: dict | None = None
) -> ModelDocument:
    payload = {
        "scale_kind": scale.kind,
        "knots_hz": scale.knots_hz.tolist(),
        "knots_warped": scale.knots_warped.tolist(),
    }
    return ModelDocument("warping-scale", sample_rate_hz, n_fft, payload, provenance or {})


def scale_from_document(doc: ModelDocument) -> WarpingScale:
    p = doc.payload
    # WarpingScale validates monotonicity, catching hand-edited documents.
    return WarpingScale(np.asarray(p["knots_hz"]), np.asarray(p["knots_warped"]), p["scale_kind"])


def filterbank_document(fb: Filterbank, provenance: dict | None = None) -> ModelDocument:
    payload = {
        "shape_kind": fb.shape_kind,
        "boundary_bins": fb.layout.boundary_bins.tolist(),
        "responses": fb.responses.tolist(),
    }
    return ModelDocument(
        "filterbank", fb.layout.sample_rate_hz, fb.layout.n_fft, payload, provenance or {}
    )


def filterbank_from_document(doc: ModelDocument) -> Filterbank:
    p = doc.payload
    layout = FilterbankLayout(np.asarray(p["boundary_bins"]), doc.sample_rate_hz, doc.n_fft)
    return Filterbank(layout, np.asarray(p["responses"]), p["shape_kind"])


def gmm_document(
    model: GmmModel, sample_rate_hz: int, n_fft: int, provenance: dict | None = None
) -> ModelDocument:
    payload = {
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
    }
    return ModelDocument("gmm", sample_rate_hz, n_fft, payload, provenance or {})


def gmm_from_document(doc: ModelDocument) -> GmmModel:
    p = doc.payload
    return GmmModel(np.asarray(p["weights"]), np.asarray(p["means"]), np.asarray(p["variances"]))


# --- Feature files -----------------------------------------------------------

def write_features(fm, path: str | Path):
    """Binary layout: magic, version u32, n_frames u32, dim u32, packed mask, float64 rows."""
    header = FEATURE_MAGIC + struct.pack(
        "<III", FEATURE_VERSION, fm.n_frames, fm.dim
    )
    mask_bytes = np.packbits(fm.mask, bitorder="little").tobytes()
    payload = fm.vectors.astype("<f8").tobytes()
    _atomic_write(path, header + mask_bytes + payload)


def read_features(path: str | Path):
    """Read a feature file written by write_features; rejects corrupt headers."""
    from .features import FeatureMatrix

    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: bad feature-file magic")
    version, n_frames, dim = struct.unpack("<III", raw[4:16])
    if version != FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported feature-file version {version}")
    mask_len = (n_frames + 7) // 8
    expected = 16 + mask_len + n_frames * dim * 8
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated feature file")
    mask = np.unpackbits(
        np.frombuffer(raw[16 : 16 + mask_len], dtype=np.uint8), bitorder="little"
    )[:n_frames].astype(bool)
    vectors = np.frombuffer(raw[16 + mask_len :], dtype="<f8").reshape(n_frames, dim)
    return FeatureMatrix(vectors.copy(), mask, Path(path).stem)


# --- Trials and scores -------------------------------------------------------

def read_trials(path: str | Path) -> TrialScoreSet:
    """Parse 'enroll<TAB>test<TAB>target|impostor' lines."""
    trials = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[2] not in ("target", "impostor"):
            raise ValueError(f"{path}:{lineno}: malformed trial line")
        key = (parts[0], parts[1])
        if key in seen:
            raise ValueError(f"{path}:{lineno}: duplicate trial {key}")
        seen.add(key)
        trials.append(Trial(parts[0], parts[1], parts[2]))
    return TrialScoreSet(trials)


def write_scores(scores: TrialScoreSet, path: str | Path):
    """Write trial lines with a trailing decimal score column."""
    lines = []
    for t in scores.trials:
        if t.score is None:
            raise ValueError("cannot write unscored trials")
        lines.append(f"{t.enroll_id}\t{t.test_id}\t{t.label}\t{float(t.score)!r}")
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_scores(path: str | Path) -> TrialScoreSet:
    """Parse score files written by write_scores."""
    trials = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4 or parts[2] not in ("target", "impostor"):
            raise ValueError(f"{path}:{lineno}: malformed score line")
        try:
            value = float(parts[3])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed score value") from None
        key = (parts[0], parts[1])
        if key in seen:
            raise ValueError(f"{path}:{lineno}: duplicate trial {key}")
        seen.add(key)
        trials.append(Trial(parts[0], parts[1], parts[2], value))
    return TrialScoreSet(trials)


# --- Corpus manifests --------------------------------------------------------

@dataclass
class ManifestEntry:
    utterance_id: str
    path: Path
    speaker_id: str | None = None


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    sample_rate_hz: int

    def speakers(self) -> dict[str, list[ManifestEntry]]:
        groups: dict[str, list[ManifestEntry]] = {}
        for e in self.entries:
            if e.speaker_id is not None:
                groups.setdefault(e.speaker_id, []).append(e)
        return groups


def load_manifest(path: str | Path) -> CorpusManifest:
    """Read a JSON corpus manifest; ids must be unique and paths must exist."""
    path = Path(path)
    obj = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(obj, dict) or "entries" not in obj or "sample_rate_hz" not in obj:
        raise ValueError(f"{path}: manifest needs 'sample_rate_hz' and 'entries'")
    entries = []
    seen = set()
    for item in obj["entries"]:
        utt = item["utterance_id"]
        if utt in seen:
            raise ValueError(f"{path}: duplicate utterance id {utt!r}")
        seen.add(utt)
        wav = Path(item["path"])
        if not wav.is_absolute():
            wav = path.parent / wav
        if not wav.exists():
            raise ValueError(f"{path}: missing audio file {wav}")
        entries.append(ManifestEntry(utt, wav, item.get("speaker_id")))
    return CorpusManifest(entries, int(obj["sample_rate_hz"]))


def save_manifest(manifest: CorpusManifest, path: str | Path):
    path = Path(path)
    base = path.resolve().parent

    def encode(p: Path) -> str:
        # Paths are stored relative to the manifest so corpus trees stay movable;
        # load_manifest resolves them against the manifest location.
        try:
            return os.path.relpath(Path(p).resolve(), base)
        except ValueError:
            return str(Path(p).resolve())

    obj = {
        "sample_rate_hz": manifest.sample_rate_hz,
        "entries": [
            {
                "utterance_id": e.utterance_id,
                "path": encode(e.path),
                **({"speaker_id": e.speaker_id} if e.speaker_id is not None else {}),
            }
            for e in manifest.entries
        ],
    }
    _atomic_write(path, (json.dumps(obj, indent=1) + "\n").encode("utf-8"))


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
