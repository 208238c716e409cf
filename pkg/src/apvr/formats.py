"""Binary artifact formats: feature bundles and attention tensors.

Both formats are little-endian throughout.

Feature bundle (magic ``APVRFB1``)::

    magic           7 bytes  b"APVRFB1"
    n_frames        u64
    embed_dim       u32
    fps             f32
    frame embeddings   n_frames * embed_dim f32, row-major
    text embedding     embed_dim f32
    detections length  u64 (byte length of the JSON blob)
    detections JSON    UTF-8: array (one entry per frame) of arrays of
                       {"phrase": str, "box": [x0, y0, x1, y1], "logit": float}

Attention tensor (magic ``APVRAT1``)::

    magic           7 bytes  b"APVRAT1"
    n_layers        u32
    n_heads         u32
    query_len       u32
    token_len       u32
    values          n_layers * n_heads * query_len * token_len f32,
                    layer-major (C order)
    optional trailer   u64 length + UTF-8 JSON array: per-token source
                       frame index (``chunk_frame_map``); absent when the
                       file ends after the values

Readers raise :class:`~apvr.errors.FormatError` with the byte offset at
which a structural problem was detected. Writers stage to a temporary file
and rename, so a failed write never leaves a corrupt artifact behind.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import FormatError, InvalidInput
from .ptr import ROW_SUM_TOLERANCE, AttentionTensor
from .scoring import DetectionRecord, FeatureBundle

__all__ = [
    "BUNDLE_MAGIC",
    "ATTENTION_MAGIC",
    "write_bundle",
    "read_bundle",
    "validate_bundle",
    "write_attention",
    "read_attention",
    "validate_attention",
    "write_json",
    "sha256_file",
]

BUNDLE_MAGIC = b"APVRFB1"
ATTENTION_MAGIC = b"APVRAT1"

_BUNDLE_HEADER = struct.Struct("<7sQIf")
_ATTENTION_HEADER = struct.Struct("<7s4I")
_LENGTH_PREFIX = struct.Struct("<Q")

# How many rows the validators spot-check for norm / row-sum invariants.
_VALIDATE_SAMPLES = 64


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_json(obj, path: str | Path) -> None:
    """Deterministic JSON dump (sorted keys, trailing newline), atomic."""
    path = Path(path)
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    _atomic_write(path, text.encode("utf-8"))


def sha256_file(path: str | Path) -> str:
    import hashlib

    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class _Reader:
    """Sequential reader that reports byte offsets on truncation."""

    def __init__(self, handle: BinaryIO):
        self.handle = handle
        self.offset = 0

    def read_exact(self, count: int, what: str) -> bytes:
        data = self.handle.read(count)
        if len(data) != count:
            raise FormatError(
                f"truncated file while reading {what}: wanted {count} bytes, "
                f"got {len(data)}",
                offset=self.offset,
            )
        self.offset += count
        return data

    def read_array(self, count: int, what: str) -> np.ndarray:
        raw = self.read_exact(count * 4, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)

    def at_eof(self) -> bool:
        probe = self.handle.read(1)
        if probe:
            self.handle.seek(-1, os.SEEK_CUR)
            return False
        return True


# ---------------------------------------------------------------------------
# Feature bundles
# ---------------------------------------------------------------------------


def write_bundle(bundle: FeatureBundle, path: str | Path) -> None:
    path = Path(path)
    parts = [
        _BUNDLE_HEADER.pack(
            BUNDLE_MAGIC, bundle.n_frames, bundle.embed_dim, bundle.fps
        ),
        np.ascontiguousarray(bundle.frame_embeddings, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.text_embedding_agg, dtype="<f4").tobytes(),
    ]
    detections = [
        [det.to_dict() for det in frame_dets] for frame_dets in bundle.detections
    ]
    blob = json.dumps(detections, separators=(",", ":"), sort_keys=True).encode("utf-8")
    parts.append(_LENGTH_PREFIX.pack(len(blob)))
    parts.append(blob)
    _atomic_write(path, b"".join(parts))


def _read_bundle_header(reader: _Reader) -> tuple[int, int, float]:
    raw = reader.read_exact(_BUNDLE_HEADER.size, "bundle header")
    magic, n_frames, embed_dim, fps = _BUNDLE_HEADER.unpack(raw)
    if magic != BUNDLE_MAGIC:
        raise FormatError(
            f"bad magic {magic!r}, expected {BUNDLE_MAGIC!r}", offset=0
        )
    if n_frames < 1 or embed_dim < 1:
        raise FormatError(
            f"header declares n_frames={n_frames}, embed_dim={embed_dim}; "
            f"both must be >= 1",
            offset=7,
        )
    if not np.isfinite(fps) or fps <= 0:
        raise FormatError(f"header declares non-positive fps {fps}", offset=19)
    return n_frames, embed_dim, fps


def _read_detection_blob(reader: _Reader, n_frames: int) -> list:
    start = reader.offset
    (length,) = _LENGTH_PREFIX.unpack(
        reader.read_exact(_LENGTH_PREFIX.size, "detection blob length")
    )
    blob = reader.read_exact(length, "detection JSON blob")
    try:
        parsed = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"detection blob is not valid JSON: {exc}", offset=start)
    if not isinstance(parsed, list) or len(parsed) != n_frames:
        raise FormatError(
            f"detection blob must be an array of {n_frames} per-frame arrays",
            offset=start,
        )
    return parsed


def _detections_from_json(parsed: list, offset: int) -> list[list[DetectionRecord]]:
    out: list[list[DetectionRecord]] = []
    for frame, frame_dets in enumerate(parsed):
        if not isinstance(frame_dets, list):
            raise FormatError(
                f"frame {frame} detections entry is not an array", offset=offset
            )
        records = []
        for det in frame_dets:
            try:
                records.append(DetectionRecord.from_dict(det))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(
                    f"frame {frame} has a malformed detection record: {exc}",
                    offset=offset,
                )
        out.append(records)
    return out


def read_bundle(path: str | Path) -> FeatureBundle:
    """Read and fully materialize a feature bundle file."""
    with open(path, "rb") as handle:
        reader = _Reader(handle)
        n_frames, embed_dim, fps = _read_bundle_header(reader)
        embeddings = reader.read_array(
            n_frames * embed_dim, "frame embeddings"
        ).reshape(n_frames, embed_dim)
        text_agg = reader.read_array(embed_dim, "text embedding")
        blob_offset = reader.offset
        parsed = _read_detection_blob(reader, n_frames)
        if not reader.at_eof():
            raise FormatError("trailing bytes after detection blob", offset=reader.offset)
    detections = _detections_from_json(parsed, blob_offset)
    try:
        return FeatureBundle(
            n_frames=n_frames,
            fps=fps,
            embed_dim=embed_dim,
            frame_embeddings=embeddings,
            text_embedding_agg=text_agg,
            detections=detections,
        )
    except InvalidInput as exc:
        raise FormatError(f"bundle violates data invariants: {exc}")


def validate_bundle(path: str | Path, rng_seed: int = 0) -> dict:
    """Structural validation plus sampled invariant checks.

    Checks the magic, header sanity, exact payload sizes, the detection
    JSON schema, and the unit-norm invariant on a sample of embedding rows.
    Returns a summary dict; raises :class:`FormatError` on any failure.
    """
    path = Path(path)
    with open(path, "rb") as handle:
        reader = _Reader(handle)
        n_frames, embed_dim, fps = _read_bundle_header(reader)
        embedding_offset = reader.offset
        handle.seek(0, os.SEEK_END)
        file_size = handle.tell()
        needed = embedding_offset + (n_frames + 1) * embed_dim * 4 + _LENGTH_PREFIX.size
        if file_size < needed:
            raise FormatError(
                f"file too short for declared dimensions: need at least "
                f"{needed} bytes, have {file_size}",
                offset=file_size,
            )

        rng = np.random.default_rng(rng_seed)
        sample = min(_VALIDATE_SAMPLES, n_frames)
        rows = np.sort(rng.choice(n_frames, size=sample, replace=False))
        for row in rows:
            handle.seek(embedding_offset + int(row) * embed_dim * 4)
            reader.offset = embedding_offset + int(row) * embed_dim * 4
            vec = reader.read_array(embed_dim, f"embedding row {row}")
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > 1e-4:
                raise FormatError(
                    f"embedding row {row} has norm {norm:.6f}, expected 1 +- 1e-4",
                    offset=embedding_offset + int(row) * embed_dim * 4,
                )

        blob_offset = embedding_offset + (n_frames + 1) * embed_dim * 4
        handle.seek(blob_offset)
        reader.offset = blob_offset
        parsed = _read_detection_blob(reader, n_frames)
        if not reader.at_eof():
            raise FormatError("trailing bytes after detection blob", offset=reader.offset)

    detections = _detections_from_json(parsed, blob_offset)
    counts = [len(frame) for frame in detections]
    return {
        "n_frames": n_frames,
        "embed_dim": embed_dim,
        "fps": fps,
        "total_detections": int(sum(counts)),
        "frames_with_detections": int(sum(1 for c in counts if c)),
        "file_bytes": file_size,
    }


# ---------------------------------------------------------------------------
# Attention tensors
# ---------------------------------------------------------------------------


def write_attention(tensor: AttentionTensor, path: str | Path) -> None:
    path = Path(path)
    parts = [
        _ATTENTION_HEADER.pack(
            ATTENTION_MAGIC,
            tensor.n_layers,
            tensor.n_heads,
            tensor.query_len,
            tensor.token_len,
        ),
        np.ascontiguousarray(tensor.values, dtype="<f4").tobytes(),
    ]
    if tensor.chunk_frame_map is not None:
        blob = json.dumps(
            [int(f) for f in tensor.chunk_frame_map], separators=(",", ":")
        ).encode("utf-8")
        parts.append(_LENGTH_PREFIX.pack(len(blob)))
        parts.append(blob)
    _atomic_write(path, b"".join(parts))


def _read_attention_header(reader: _Reader) -> tuple[int, int, int, int]:
    raw = reader.read_exact(_ATTENTION_HEADER.size, "attention header")
    magic, n_layers, n_heads, query_len, token_len = _ATTENTION_HEADER.unpack(raw)
    if magic != ATTENTION_MAGIC:
        raise FormatError(
            f"bad magic {magic!r}, expected {ATTENTION_MAGIC!r}", offset=0
        )
    if min(n_layers, n_heads, query_len, token_len) < 1:
        raise FormatError(
            f"header declares zero-sized axis "
            f"(L={n_layers}, h={n_heads}, d_q={query_len}, d_v={token_len})",
            offset=7,
        )
    return n_layers, n_heads, query_len, token_len


def _read_frame_map(reader: _Reader, token_len: int) -> np.ndarray | None:
    if reader.at_eof():
        return None
    start = reader.offset
    (length,) = _LENGTH_PREFIX.unpack(
        reader.read_exact(_LENGTH_PREFIX.size, "frame map length")
    )
    blob = reader.read_exact(length, "frame map JSON blob")
    try:
        parsed = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"frame map blob is not valid JSON: {exc}", offset=start)
    if (
        not isinstance(parsed, list)
        or len(parsed) != token_len
        or not all(isinstance(v, int) for v in parsed)
    ):
        raise FormatError(
            f"frame map must be an array of {token_len} integers", offset=start
        )
    if not reader.at_eof():
        raise FormatError("trailing bytes after frame map blob", offset=reader.offset)
    return np.asarray(parsed, dtype=np.int64)


def read_attention(path: str | Path) -> AttentionTensor:
    """Read and fully materialize an attention tensor file."""
    with open(path, "rb") as handle:
        reader = _Reader(handle)
        n_layers, n_heads, query_len, token_len = _read_attention_header(reader)
        values = reader.read_array(
            n_layers * n_heads * query_len * token_len, "attention values"
        ).reshape(n_layers, n_heads, query_len, token_len)
        frame_map = _read_frame_map(reader, token_len)
    try:
        return AttentionTensor(values=values, chunk_frame_map=frame_map)
    except InvalidInput as exc:
        raise FormatError(f"attention tensor violates data invariants: {exc}")


def validate_attention(path: str | Path, rng_seed: int = 0) -> dict:
    """Structural validation plus sampled row-sum checks."""
    path = Path(path)
    with open(path, "rb") as handle:
        reader = _Reader(handle)
        n_layers, n_heads, query_len, token_len = _read_attention_header(reader)
        values_offset = reader.offset
        n_rows = n_layers * n_heads * query_len
        handle.seek(0, os.SEEK_END)
        file_size = handle.tell()
        needed = values_offset + n_rows * token_len * 4
        if file_size < needed:
            raise FormatError(
                f"file too short for declared dimensions: need at least "
                f"{needed} bytes, have {file_size}",
                offset=file_size,
            )

        rng = np.random.default_rng(rng_seed)
        sample = min(_VALIDATE_SAMPLES, n_rows)
        rows = np.sort(rng.choice(n_rows, size=sample, replace=False))
        for row in rows:
            offset = values_offset + int(row) * token_len * 4
            handle.seek(offset)
            reader.offset = offset
            vec = reader.read_array(token_len, f"attention row {row}")
            if (vec < 0).any():
                raise FormatError(
                    f"attention row {row} contains negative scores", offset=offset
                )
            total = float(vec.sum())
            if abs(total - 1.0) > ROW_SUM_TOLERANCE:
                raise FormatError(
                    f"attention row {row} sums to {total:.6f}, expected "
                    f"1 +- {ROW_SUM_TOLERANCE}",
                    offset=offset,
                )

        map_offset = values_offset + n_rows * token_len * 4
        handle.seek(map_offset)
        reader.offset = map_offset
        frame_map = _read_frame_map(reader, token_len)

    return {
        "n_layers": n_layers,
        "n_heads": n_heads,
        "query_len": query_len,
        "token_len": token_len,
        "has_chunk_frame_map": frame_map is not None,
        "file_bytes": file_size,
    }
