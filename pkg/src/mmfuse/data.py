"""Embedding container format, dataset loading, and synthetic data.

One utterance is stored as a small binary file: a text embedding plus a
list of per-chunk frame matrices, all float32 little-endian. A JSON
manifest names the files, their labels, and the train/test split.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    DimensionMismatchError,
    ManifestError,
    PayloadError,
    ShapeError,
    UnsupportedVersionError,
)

MAGIC = b"MMEB"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

LABEL_CONTROL = 0
LABEL_IMPAIRED = 1
LABEL_UNKNOWN = -1
VALID_LABELS = (LABEL_CONTROL, LABEL_IMPAIRED, LABEL_UNKNOWN)


@dataclass
class UtteranceRecord:
    id: str
    label: int
    text_embedding: np.ndarray          # (d_t,) float32
    chunks: List[np.ndarray] = field(default_factory=list)  # each (L, d_a) float32

    @property
    def d_t(self):
        return int(self.text_embedding.shape[0])

    @property
    def d_a(self):
        return int(self.chunks[0].shape[1])


def _validate_record(rec):
    if rec.label not in VALID_LABELS:
        raise ShapeError(f"label must be one of {VALID_LABELS}, got {rec.label}")
    if rec.text_embedding.ndim != 1 or rec.text_embedding.shape[0] < 1:
        raise ShapeError("text embedding must be a nonempty 1-D vector")
    if not rec.chunks:
        raise ShapeError(f"record {rec.id!r} needs at least one chunk")
    d_a = rec.chunks[0].shape[1] if rec.chunks[0].ndim == 2 else -1
    for i, chunk in enumerate(rec.chunks):
        if chunk.ndim != 2 or chunk.shape[0] < 1 or chunk.shape[1] != d_a:
            raise ShapeError(
                f"record {rec.id!r} chunk {i} must be (L>=1, {d_a}), "
                f"got {chunk.shape}"
            )


def write_record(rec, path):
    """Serialize one utterance; values are stored float32 little-endian."""
    _validate_record(rec)
    text = np.ascontiguousarray(rec.text_embedding, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HHiIII", FORMAT_VERSION, 0, rec.label,
                             text.shape[0], rec.d_a, len(rec.chunks)))
        fh.write(text.tobytes())
        for chunk in rec.chunks:
            arr = np.ascontiguousarray(chunk, dtype="<f4")
            fh.write(struct.pack("<I", arr.shape[0]))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise PayloadError(f"{path}: truncated while reading {what}")
    return buf


def read_record(path, record_id=None):
    """Parse one utterance file, checking magic, version, and payload size."""
    path = str(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}")
        header = _read_exact(fh, 20, "header", path)
        version, flags, label, d_t, d_a, n_chunks = struct.unpack("<HHiIII", header)
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"{path}: container version {version} not supported"
            )
        if d_t < 1 or d_a < 1 or n_chunks < 1:
            raise PayloadError(f"{path}: nonpositive dims in header")
        if label not in VALID_LABELS:
            raise PayloadError(f"{path}: invalid label {label}")
        text = np.frombuffer(
            _read_exact(fh, 4 * d_t, "text embedding", path), dtype="<f4"
        ).copy()
        chunks = []
        for ci in range(n_chunks):
            (length,) = struct.unpack("<I", _read_exact(fh, 4, f"chunk {ci} length", path))
            if length < 1:
                raise PayloadError(f"{path}: chunk {ci} has zero frames")
            raw = _read_exact(fh, 4 * length * d_a, f"chunk {ci} frames", path)
            chunks.append(np.frombuffer(raw, dtype="<f4").reshape(length, d_a).copy())
        if fh.read(1):
            raise PayloadError(f"{path}: trailing bytes after final chunk")
    return UtteranceRecord(
        id=record_id if record_id is not None else Path(path).stem,
        label=label,
        text_embedding=text,
        chunks=chunks,
    )


# ---------------------------------------------------------------------------
# manifest + dataset loading


def write_manifest(path, d_t, d_a, entries):
    doc = {
        "version": FORMAT_VERSION,
        "d_t": int(d_t),
        "d_a": int(d_a),
        "utterances": entries,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(manifest_path):
    """Load (train_records, test_records) per the manifest's split field."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{manifest_path}: invalid JSON ({exc})") from exc
    for key in ("version", "d_t", "d_a", "utterances"):
        if key not in doc:
            raise ManifestError(f"{manifest_path}: missing key {key!r}")
    d_t, d_a = int(doc["d_t"]), int(doc["d_a"])
    base = manifest_path.parent
    seen_ids = set()
    splits = {"train": [], "test": []}
    for entry in doc["utterances"]:
        uid = entry.get("id")
        if uid in seen_ids:
            raise ManifestError(f"duplicate utterance id {uid!r}")
        seen_ids.add(uid)
        split = entry.get("split")
        if split not in splits:
            raise ManifestError(f"utterance {uid!r}: unknown split {split!r}")
        file_path = base / entry["file"]
        if not file_path.is_file():
            raise ManifestError(f"utterance {uid!r}: file missing ({file_path})")
        rec = read_record(file_path, record_id=uid)
        if rec.d_t != d_t or rec.d_a != d_a:
            raise DimensionMismatchError(
                f"utterance {uid!r}: dims ({rec.d_t}, {rec.d_a}) disagree "
                f"with manifest ({d_t}, {d_a})"
            )
        if rec.label != entry.get("label"):
            raise ManifestError(
                f"utterance {uid!r}: file label {rec.label} != manifest "
                f"label {entry.get('label')}"
            )
        splits[split].append(rec)
    if not splits["test"]:
        warnings.warn("manifest has an empty test split", stacklevel=2)
    return splits["train"], splits["test"]


# ---------------------------------------------------------------------------
# synthetic data


def _unit(rng, dim):
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def gen_synthetic(n_per_class, d_t, d_a, separation, seed, out_dir,
                  chunks_range=(1, 3), frames_range=(4, 10), test_frac=0.3):
    """Write a labeled two-class multimodal dataset and its manifest.

    Each class sits at one of two antipodal latent directions scaled by
    `separation`; a per-utterance scalar drawn once and injected into both
    modalities couples them beyond the class label, so the cross-modal
    dependency is genuinely positive whenever separation > 0.
    Deterministic: the same arguments produce byte-identical files.
    """
    if separation < 0:
        raise ConfigError(f"separation must be nonnegative, got {separation}")
    if n_per_class < 1 or d_t < 1 or d_a < 1:
        raise ConfigError("n_per_class, d_t, and d_a must be positive")
    if not (0 < test_frac < 1):
        raise ConfigError(f"test_frac must be in (0, 1), got {test_frac}")
    lo_c, hi_c = chunks_range
    lo_f, hi_f = frames_range
    if lo_c < 1 or hi_c < lo_c or lo_f < 1 or hi_f < lo_f:
        raise ConfigError("invalid chunk or frame count ranges")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    class_dir_t = _unit(rng, d_t)
    class_dir_a = _unit(rng, d_a)
    shared_dir_t = _unit(rng, d_t)
    shared_dir_a = _unit(rng, d_a)
    coupling = 0.5 * separation

    entries = []
    n_train = n_per_class - max(1, round(test_frac * n_per_class))
    if n_train < 1:
        raise ConfigError("test_frac leaves no training records")
    for label in (0, 1):
        sign = 1.0 if label == 1 else -1.0
        for i in range(n_per_class):
            shared = rng.standard_normal()
            text = (sign * separation * class_dir_t
                    + coupling * shared * shared_dir_t
                    + rng.standard_normal(d_t))
            chunks = []
            for _ in range(int(rng.integers(lo_c, hi_c + 1))):
                frames = int(rng.integers(lo_f, hi_f + 1))
                base = (sign * separation * class_dir_a
                        + coupling * shared * shared_dir_a)
                chunks.append(base[None, :] + rng.standard_normal((frames, d_a)))
            uid = f"syn-{label}-{i:04d}"
            rec = UtteranceRecord(
                id=uid,
                label=label,
                text_embedding=text.astype(np.float32),
                chunks=[c.astype(np.float32) for c in chunks],
            )
            file_name = f"{uid}.mmeb"
            write_record(rec, out_dir / file_name)
            entries.append({
                "id": uid,
                "file": file_name,
                "label": label,
                "split": "train" if i < n_train else "test",
            })
    manifest_path = out_dir / MANIFEST_NAME
    write_manifest(manifest_path, d_t, d_a, entries)
    return manifest_path
