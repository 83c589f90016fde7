"""Dataset manifest IO, clip windowing, frame sampling, label balancing,
train/test splitting, and transcript-source selection.

The manifest is JSON Lines: one instance per line with keys id, case_id,
onset_s, labels (object with the five dimension booleans), text_manual,
text_asr, payload, embeddings, and optional oracle_scores. Payload entries
are either inline numeric arrays or strings naming a raw little-endian
float32 file (one-line JSON shape header) relative to the manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import DIMENSIONS, FeedbackLabelSet, InstanceRecord


class ManifestError(ValueError):
    """Malformed manifest content; message carries the line number."""


class MissingTranscriptError(ValueError):
    """Requested transcript variant is null for some instance."""


@dataclass
class PreprocessSpec:
    """Clip windowing and media preprocessing parameters."""

    clip_pre_s: float = 5.0
    clip_post_s: float = 5.0
    frame_count: int = 16
    video_resolution: tuple = (320, 250)
    audio_rate_hz: int = 16000

    def __post_init__(self):
        if self.clip_pre_s + self.clip_post_s <= 0:
            raise ValueError("clip window must have positive length")
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")


def window_clip(onset_s: float, recording_len_s: float,
                spec: PreprocessSpec | None = None) -> tuple:
    """Onset-centered clip window, clamped to the recording boundaries."""
    spec = spec or PreprocessSpec()
    if not 0 <= onset_s <= recording_len_s:
        raise ValueError(
            f"onset {onset_s} outside recording [0, {recording_len_s}]"
        )
    t0 = max(0.0, onset_s - spec.clip_pre_s)
    t1 = min(recording_len_s, onset_s + spec.clip_post_s)
    return (t0, t1)


def sample_frame_indices(total_frames: int, frame_count: int, seed: int) -> list:
    """One uniformly random frame index per equal temporal segment.

    The clip is partitioned into ``frame_count`` equal segments and one
    index is drawn per segment, so the result is sorted and covers the
    clip. Clips shorter than ``frame_count`` frames yield repeated indices
    through segment rounding.
    """
    if total_frames < 1:
        raise ValueError("total_frames must be >= 1")
    rng = np.random.default_rng(seed)
    indices = []
    for i in range(frame_count):
        lo = int(np.floor(i * total_frames / frame_count))
        hi = int(np.floor((i + 1) * total_frames / frame_count))
        hi = max(hi, lo + 1)
        idx = int(rng.integers(lo, hi))
        indices.append(min(idx, total_frames - 1))
    return indices


def balance_dataset(records, dimension: str, seed: int) -> list:
    """Randomly downsample the majority class of ``dimension`` to parity.

    Output preserves the input record order and has exactly equal positive
    and negative counts; deterministic per seed.
    """
    if dimension not in DIMENSIONS:
        raise KeyError(f"unknown dimension {dimension!r}")
    pos = [r for r in records if r.labels.get(dimension)]
    neg = [r for r in records if not r.labels.get(dimension)]
    if not pos or not neg:
        raise ValueError(
            f"cannot balance dimension {dimension!r}: one class is empty "
            f"({len(pos)} positive / {len(neg)} negative)"
        )
    minority = min(len(pos), len(neg))
    majority = pos if len(pos) > len(neg) else neg
    rng = np.random.default_rng(seed)
    kept_majority = rng.choice(len(majority), size=minority, replace=False)
    keep_ids = {majority[i].id for i in kept_majority}
    keep_ids.update(r.id for r in (neg if majority is pos else pos))
    return [r for r in records if r.id in keep_ids]


def split(records, train_fraction: float = 0.8, seed: int = 0) -> tuple:
    """Random disjoint, exhaustive train/test partition."""
    if len(records) < 2:
        raise ValueError("split needs at least 2 records")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_train = int(round(train_fraction * len(records)))
    train_idx = set(order[:n_train].tolist())
    train = [r for i, r in enumerate(records) if i in train_idx]
    test = [r for i, r in enumerate(records) if i not in train_idx]
    return train, test


def select_text(record: InstanceRecord, source: str):
    """Return the chosen transcript variant's payload for one record.

    Analytic-mode records hold the text channel as a numeric vector in
    ``payloads``; structural-mode records hold whitespace-separated token
    ids in the string field. Raises when the requested variant is null.
    """
    if source not in ("manual", "asr"):
        raise ValueError(f"transcript source must be 'manual' or 'asr', got {source!r}")
    channel = f"text_{source}"
    if channel in record.payloads:
        return record.payloads[channel]
    text = getattr(record, channel)
    if text is None:
        raise MissingTranscriptError(
            f"instance {record.id}: transcript variant {source!r} is missing"
        )
    return np.array([int(tok) for tok in text.split()], dtype=np.intp)


def labels_vector(records, dimension: str) -> np.ndarray:
    return np.array([r.labels.get(dimension) for r in records], dtype=bool)


def payload_matrix(records, channel: str) -> np.ndarray:
    """Stack one payload channel across records into a single array."""
    try:
        return np.stack([np.asarray(r.payloads[channel], dtype=np.float64)
                         for r in records])
    except KeyError as e:
        raise KeyError(f"payload channel {channel!r} missing from records") from e


def text_matrix(records, source: str) -> np.ndarray:
    """Stack the selected text payload (vectors or token-id rows)."""
    rows = [select_text(r, source) for r in records]
    return np.stack([np.asarray(row) for row in rows])


# ---------------------------------------------------------------------------
# Raw payload files: one-line JSON shape header + little-endian float32 data.

def write_payload_file(path, array) -> None:
    arr = np.asarray(array, dtype="<f4")
    header = json.dumps({"shape": list(arr.shape), "dtype": "float32"})
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        f.write(np.ascontiguousarray(arr).tobytes())


def read_payload_file(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        data = np.frombuffer(f.read(), dtype="<f4")
    shape = tuple(header["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"payload file {path}: data does not match shape {shape}")
    return data.reshape(shape)


# ---------------------------------------------------------------------------
# Manifest JSON Lines IO.

def _payload_to_json(value):
    if isinstance(value, str):
        return value
    return np.asarray(value, dtype=np.float64).tolist()


def write_manifest(records, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            line = {
                "id": r.id,
                "case_id": r.case_id,
                "onset_s": r.onset_s,
                "labels": r.labels.as_dict(),
                "text_manual": r.text_manual,
                "text_asr": r.text_asr,
                "payload": {k: _payload_to_json(v) for k, v in r.payloads.items()},
                "embeddings": dict(r.embeddings),
            }
            if r.oracle_scores is not None:
                line["oracle_scores"] = list(r.oracle_scores)
            f.write(json.dumps(line) + "\n")


def _parse_line(obj: dict, lineno: int, base_dir: Path) -> InstanceRecord:
    for key in ("id", "case_id", "onset_s", "labels"):
        if key not in obj:
            raise ManifestError(f"line {lineno}: missing key {key!r}")
    labels_obj = obj["labels"]
    for d in DIMENSIONS:
        if d not in labels_obj:
            raise ManifestError(f"line {lineno}: labels missing key {d!r}")
    extra = set(labels_obj) - set(DIMENSIONS)
    if extra:
        raise ManifestError(f"line {lineno}: unknown label keys {sorted(extra)}")
    onset = float(obj["onset_s"])
    if onset < 0:
        raise ManifestError(f"line {lineno}: onset_s must be >= 0")

    payloads = {}
    for channel, value in (obj.get("payload") or {}).items():
        if isinstance(value, str):
            payloads[channel] = read_payload_file(base_dir / value).astype(np.float64)
        else:
            payloads[channel] = np.asarray(value, dtype=np.float64)

    return InstanceRecord(
        id=str(obj["id"]),
        case_id=str(obj["case_id"]),
        onset_s=onset,
        labels=FeedbackLabelSet.from_dict(labels_obj),
        text_manual=obj.get("text_manual"),
        text_asr=obj.get("text_asr"),
        payloads=payloads,
        embeddings=dict(obj.get("embeddings") or {}),
        oracle_scores=obj.get("oracle_scores"),
    )


def load_manifest(path) -> list:
    """Parse a JSON-Lines manifest; all errors carry a 1-based line number."""
    path = Path(path)
    records = []
    seen_ids = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ManifestError(f"line {lineno}: malformed JSON ({e.msg})") from e
            rec = _parse_line(obj, lineno, path.parent)
            if rec.id in seen_ids:
                raise ManifestError(f"line {lineno}: duplicate id {rec.id!r}")
            seen_ids.add(rec.id)
            records.append(rec)
    return records
