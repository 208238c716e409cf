"""Writers for the engine's artifact file formats.

Independent byte-level implementations of the documented layouts (the
engine is consumed only through its file formats and CLI, never imported).
Everything is little-endian.

Feature bundle ``APVRFB1``: magic (7 bytes), n_frames u64, embed_dim u32,
fps f32, then row-major f32 frame embeddings, f32 aggregated text
embedding, and a u64-length-prefixed UTF-8 JSON array of per-frame
detection arrays ({"phrase", "box": [4 floats], "logit"}).

Attention tensor ``APVRAT1``: magic (7 bytes), u32 layer/head/query/token
counts, f32 values in layer-major C order, then an optional
u64-length-prefixed JSON array mapping each token to its source frame.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

BUNDLE_MAGIC = b"APVRFB1"
ATTENTION_MAGIC = b"APVRAT1"

_BUNDLE_HEADER = struct.Struct("<7sQIf")
_ATTENTION_HEADER = struct.Struct("<7s4I")
_LENGTH_PREFIX = struct.Struct("<Q")


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_bundle_file(
    path: str | Path,
    frame_embeddings: np.ndarray,
    text_embedding_agg: np.ndarray,
    fps: float,
    detections: list[list[dict]],
) -> None:
    """Write a feature bundle; embeddings are stored as f32."""
    path = Path(path)
    frame_embeddings = np.ascontiguousarray(frame_embeddings, dtype="<f4")
    text_embedding_agg = np.ascontiguousarray(text_embedding_agg, dtype="<f4")
    n_frames, embed_dim = frame_embeddings.shape
    if len(detections) != n_frames:
        raise ValueError(
            f"detections length {len(detections)} != n_frames {n_frames}"
        )
    blob = json.dumps(detections, separators=(",", ":"), sort_keys=True).encode()
    payload = b"".join(
        [
            _BUNDLE_HEADER.pack(BUNDLE_MAGIC, n_frames, embed_dim, fps),
            frame_embeddings.tobytes(),
            text_embedding_agg.tobytes(),
            _LENGTH_PREFIX.pack(len(blob)),
            blob,
        ]
    )
    _atomic_write(path, payload)


def write_attention_file(
    path: str | Path,
    values: np.ndarray,
    chunk_frame_map: list[int] | np.ndarray | None = None,
) -> None:
    """Write an attention tensor; values are stored as f32."""
    path = Path(path)
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 4:
        raise ValueError(f"attention values must be 4-D, got shape {values.shape}")
    n_layers, n_heads, query_len, token_len = values.shape
    parts = [
        _ATTENTION_HEADER.pack(
            ATTENTION_MAGIC, n_layers, n_heads, query_len, token_len
        ),
        values.tobytes(),
    ]
    if chunk_frame_map is not None:
        frame_map = [int(f) for f in chunk_frame_map]
        if len(frame_map) != token_len:
            raise ValueError(
                f"chunk_frame_map length {len(frame_map)} != token_len {token_len}"
            )
        blob = json.dumps(frame_map, separators=(",", ":")).encode()
        parts.append(_LENGTH_PREFIX.pack(len(blob)))
        parts.append(blob)
    _atomic_write(path, b"".join(parts))
