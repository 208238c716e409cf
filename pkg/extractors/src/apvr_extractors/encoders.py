"""Image and text embedding backends.

The default ``hashed`` backend is fully offline and deterministic: text is
embedded by signed character-n-gram feature hashing, images by a seeded
random projection of a downscaled grayscale thumbnail. It produces
unit-norm vectors with the right contract (similar inputs map to similar
vectors) without any model weights, which keeps extraction runnable in
air-gapped environments and tests reproducible.

Pretrained image-text encoders are exposed through the ``clip:`` prefix
(``clip:openai/clip-vit-base-patch16`` and friends); they require the
transformers package and downloadable weights and raise
:class:`ModelUnavailable` otherwise.
"""

from __future__ import annotations

import hashlib

import cv2
import numpy as np

from .errors import ModelUnavailable

THUMBNAIL_SIDE = 16


def _seed_from(identifier: str) -> int:
    return int.from_bytes(hashlib.sha256(identifier.encode()).digest()[:8], "little")


class HashedTextEncoder:
    """Signed character-trigram feature hashing, L2-normalized."""

    def __init__(self, dim: int = 64, identifier: str = "hashed"):
        self.dim = dim
        self.identifier = identifier

    def encode(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        padded = f"  {text.lower()} "
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3]
            digest = hashlib.md5((self.identifier + gram).encode()).digest()
            bucket = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] % 2 else -1.0
            vector[bucket] += sign
        norm = np.linalg.norm(vector)
        if norm == 0:
            vector[0] = 1.0
            norm = 1.0
        return vector / norm


class HashedImageEncoder:
    """Seeded random projection of a grayscale thumbnail, L2-normalized."""

    def __init__(self, dim: int = 64, identifier: str = "hashed"):
        self.dim = dim
        rng = np.random.default_rng(_seed_from(identifier))
        n_pixels = THUMBNAIL_SIDE * THUMBNAIL_SIDE
        self.projection = rng.normal(size=(dim, n_pixels)) / np.sqrt(n_pixels)

    def encode(self, image: np.ndarray) -> np.ndarray:
        gray = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
        thumb = cv2.resize(gray, (THUMBNAIL_SIDE, THUMBNAIL_SIDE),
                           interpolation=cv2.INTER_AREA)
        flat = thumb.astype(np.float64).ravel() / 255.0
        flat -= flat.mean()
        vector = self.projection @ flat
        norm = np.linalg.norm(vector)
        if norm == 0:
            vector = self.projection[:, 0].copy()
            norm = np.linalg.norm(vector)
        return vector / norm


def _load_pretrained_pair(model_id: str, dim: int):
    try:
        import torch  # noqa: F401
        from transformers import CLIPModel, CLIPProcessor
    except ImportError as exc:
        raise ModelUnavailable(
            f"pretrained encoder {model_id!r} needs torch and transformers: {exc}"
        )
    try:
        model = CLIPModel.from_pretrained(model_id)
        processor = CLIPProcessor.from_pretrained(model_id)
    except Exception as exc:
        raise ModelUnavailable(
            f"could not load weights for {model_id!r} "
            f"(offline environment?): {exc}"
        )
    return model, processor


class PretrainedImageEncoder:
    """Image tower of a pretrained image-text model (transformers)."""

    def __init__(self, model_id: str, dim: int | None = None):
        self.model, self.processor = _load_pretrained_pair(model_id, dim)
        self.dim = int(self.model.config.projection_dim)

    def encode(self, image: np.ndarray) -> np.ndarray:
        import torch

        rgb = cv2.cvtColor(image, cv2.COLOR_BGR2RGB)
        inputs = self.processor(images=rgb, return_tensors="pt")
        with torch.no_grad():
            features = self.model.get_image_features(**inputs)[0].numpy()
        return features / np.linalg.norm(features)


class PretrainedTextEncoder:
    """Text tower of a pretrained image-text model (transformers)."""

    def __init__(self, model_id: str, dim: int | None = None):
        self.model, self.processor = _load_pretrained_pair(model_id, dim)
        self.dim = int(self.model.config.projection_dim)

    def encode(self, text: str) -> np.ndarray:
        import torch

        inputs = self.processor(
            text=[text], return_tensors="pt", padding=True, truncation=True
        )
        with torch.no_grad():
            features = self.model.get_text_features(**inputs)[0].numpy()
        return features / np.linalg.norm(features)


def make_encoders(image_model: str, text_model: str, dim: int):
    """Resolve model identifiers to (image_encoder, text_encoder).

    ``hashed`` (optionally ``hashed:<salt>``) is the offline default;
    ``clip:<hf-model-id>`` loads a pretrained pair. Both towers must agree
    on the embedding dimension.
    """
    def resolve(identifier: str, kind: str):
        if identifier == "hashed" or identifier.startswith("hashed:"):
            cls = HashedImageEncoder if kind == "image" else HashedTextEncoder
            return cls(dim=dim, identifier=identifier)
        if identifier.startswith("clip:"):
            cls = PretrainedImageEncoder if kind == "image" else PretrainedTextEncoder
            return cls(identifier.split(":", 1)[1])
        raise ModelUnavailable(
            f"unknown {kind} model identifier {identifier!r}; "
            f"use 'hashed[:salt]' or 'clip:<model-id>'"
        )

    image_encoder = resolve(image_model, "image")
    text_encoder = resolve(text_model, "text")
    if image_encoder.dim != text_encoder.dim:
        raise ModelUnavailable(
            f"image and text encoders disagree on dimension: "
            f"{image_encoder.dim} vs {text_encoder.dim}"
        )
    return image_encoder, text_encoder
