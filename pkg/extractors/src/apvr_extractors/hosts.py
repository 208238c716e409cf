"""Attention hosts: where cross-attention maps come from.

A host turns query text plus per-frame images into per-layer, per-head
attention of the text-query rows over the visual tokens, each row a
softmax distribution over the visual-token span. Real multimodal models
attend over text and visual tokens together, so any adapter must
renormalize its rows over the visual span before export; the synthetic
host produces rows that are softmax over visual tokens by construction.

``synthetic`` is a deterministic stand-in with real transformer structure:
word-level query tokens and per-patch visual tokens are embedded (hashed
backends), then projected through seeded per-(layer, head) query/key maps
and combined with scaled dot-product attention. It needs no weights and
lets the full artifact path run offline; hosts wrapping actual models can
be added behind the same interface, and identifiers that do not expose
per-layer cross attention are rejected up front.
"""

from __future__ import annotations

import hashlib
import re

import cv2
import numpy as np

from .encoders import HashedImageEncoder, HashedTextEncoder
from .errors import UnsupportedHost

TOKEN_PATTERN = re.compile(r"[a-z0-9]+")


class SyntheticAttentionHost:
    """Deterministic scaled-dot-product cross-attention generator."""

    def __init__(
        self,
        n_layers: int = 4,
        n_heads: int = 2,
        head_dim: int = 16,
        embed_dim: int = 64,
        tokens_per_frame: int = 4,
        seed: int = 0,
    ):
        if n_layers < 1 or n_heads < 1 or head_dim < 1 or tokens_per_frame < 1:
            raise UnsupportedHost("host dimensions must all be >= 1")
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.head_dim = head_dim
        self.tokens_per_frame = tokens_per_frame
        self.seed = seed
        self.text_encoder = HashedTextEncoder(dim=embed_dim, identifier="host-text")
        self.patch_encoder = HashedImageEncoder(dim=embed_dim, identifier="host-patch")
        mix = hashlib.sha256(f"host:{seed}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(mix[:8], "little"))
        scale = 1.0 / np.sqrt(embed_dim)
        self.q_proj = rng.normal(scale=scale,
                                 size=(n_layers, n_heads, embed_dim, head_dim))
        self.k_proj = rng.normal(scale=scale,
                                 size=(n_layers, n_heads, embed_dim, head_dim))

    def tokenize(self, text: str) -> list[str]:
        return TOKEN_PATTERN.findall(text.lower())

    def _patches(self, image: np.ndarray) -> list[np.ndarray]:
        """Split the frame into a grid of tokens_per_frame patches."""
        grid_cols = int(np.ceil(np.sqrt(self.tokens_per_frame)))
        grid_rows = int(np.ceil(self.tokens_per_frame / grid_cols))
        height, width = image.shape[:2]
        patches = []
        for cell in range(self.tokens_per_frame):
            row, col = divmod(cell, grid_cols)
            y0 = row * height // grid_rows
            y1 = max(y0 + 1, (row + 1) * height // grid_rows)
            x0 = col * width // grid_cols
            x1 = max(x0 + 1, (col + 1) * width // grid_cols)
            patch = image[y0:y1, x0:x1]
            if patch.size == 0:  # degenerate tiny frames: reuse the whole image
                patch = image
            patches.append(patch)
        return patches

    def attention_over_frames(
        self, query_text: str, frames: list[np.ndarray]
    ) -> tuple[np.ndarray, np.ndarray]:
        """Cross-attention values and the token -> frame index map.

        Returns (values, frame_map): values has shape
        (n_layers, n_heads, query_len, token_len) with softmax rows over
        the visual-token span.
        """
        tokens = self.tokenize(query_text)
        if not tokens:
            raise UnsupportedHost("query text tokenizes to nothing")
        if not frames:
            raise UnsupportedHost("no visual tokens: refusing to capture "
                                  "attention over an empty frame set")
        query_states = np.stack([self.text_encoder.encode(t) for t in tokens])
        visual_states = []
        frame_map = []
        for frame_index, image in enumerate(frames):
            for patch in self._patches(image):
                visual_states.append(self.patch_encoder.encode(patch))
                frame_map.append(frame_index)
        key_states = np.stack(visual_states)

        d_q, token_len = query_states.shape[0], key_states.shape[0]
        values = np.empty((self.n_layers, self.n_heads, d_q, token_len))
        root_d = np.sqrt(self.head_dim)
        for layer in range(self.n_layers):
            for head in range(self.n_heads):
                q = query_states @ self.q_proj[layer, head]
                k = key_states @ self.k_proj[layer, head]
                logits = q @ k.T / root_d
                logits -= logits.max(axis=1, keepdims=True)
                weights = np.exp(logits)
                values[layer, head] = weights / weights.sum(axis=1, keepdims=True)
        return values, np.asarray(frame_map, dtype=np.int64)


def make_host(identifier: str, **kwargs) -> SyntheticAttentionHost:
    if identifier == "synthetic":
        return SyntheticAttentionHost(**kwargs)
    raise UnsupportedHost(
        f"host {identifier!r} does not expose per-layer cross attention for "
        f"text-query rows over visual tokens; available hosts: 'synthetic'"
    )
