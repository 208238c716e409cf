"""Open-vocabulary detection backends producing (box, logit) records.

The offline ``colorblob`` grounder detects phrases that name a colour
("red clothes", "blue background") by HSV thresholding and connected
components; it is crude but real: boxes come from actual pixels, so tests
and demos exercise genuine detection geometry. Phrases without a colour
word yield no detections.

``gdino:<hf-model-id>`` adapts a pretrained zero-shot detector through
transformers when weights are available.
"""

from __future__ import annotations

import numpy as np

from .errors import ModelUnavailable

# HSV hue ranges (OpenCV hue is 0..180); red wraps around.
COLOR_RANGES = {
    "red": [(0, 10), (170, 180)],
    "orange": [(11, 25)],
    "yellow": [(26, 35)],
    "green": [(36, 85)],
    "blue": [(86, 125)],
    "purple": [(126, 155)],
    "pink": [(156, 169)],
}

MIN_AREA_FRACTION = 0.002


class ColorBlobGrounder:
    """Detects colour-named phrases as thresholded pixel blobs."""

    def __init__(self, min_area_fraction: float = MIN_AREA_FRACTION):
        self.min_area_fraction = min_area_fraction

    def detect(self, image: np.ndarray, phrases: list[str]) -> list[dict]:
        import cv2

        hsv = cv2.cvtColor(image, cv2.COLOR_BGR2HSV)
        height, width = image.shape[:2]
        area = float(height * width)
        records = []
        for phrase in phrases:
            ranges = self._ranges_for(phrase)
            if not ranges:
                continue
            mask = np.zeros((height, width), dtype=np.uint8)
            for lo, hi in ranges:
                mask |= cv2.inRange(hsv, (lo, 80, 60), (hi, 255, 255))
            n_labels, _, stats, _ = cv2.connectedComponentsWithStats(mask)
            for label in range(1, n_labels):
                x, y, w, h, pixels = stats[label]
                fraction = pixels / area
                if fraction < self.min_area_fraction or w < 2 or h < 2:
                    continue
                records.append(
                    {
                        "phrase": phrase,
                        "box": [
                            x / width,
                            y / height,
                            min(1.0, (x + w) / width),
                            min(1.0, (y + h) / height),
                        ],
                        # confident when the blob fills more of the frame
                        "logit": float(2.0 + 4.0 * np.sqrt(fraction)),
                    }
                )
        return records

    @staticmethod
    def _ranges_for(phrase: str):
        for word in phrase.lower().split():
            if word in COLOR_RANGES:
                return COLOR_RANGES[word]
        return None


class PretrainedGrounder:
    """Zero-shot phrase grounding through a pretrained detector."""

    def __init__(self, model_id: str, box_threshold: float = 0.25):
        try:
            import torch  # noqa: F401
            from transformers import (
                AutoModelForZeroShotObjectDetection,
                AutoProcessor,
            )
        except ImportError as exc:
            raise ModelUnavailable(
                f"grounder {model_id!r} needs torch and transformers: {exc}"
            )
        try:
            self.processor = AutoProcessor.from_pretrained(model_id)
            self.model = AutoModelForZeroShotObjectDetection.from_pretrained(model_id)
        except Exception as exc:
            raise ModelUnavailable(
                f"could not load weights for {model_id!r} "
                f"(offline environment?): {exc}"
            )
        self.box_threshold = box_threshold

    def detect(self, image: np.ndarray, phrases: list[str]) -> list[dict]:
        import cv2
        import torch

        rgb = cv2.cvtColor(image, cv2.COLOR_BGR2RGB)
        text = ". ".join(phrases) + "."
        inputs = self.processor(images=rgb, text=text, return_tensors="pt")
        with torch.no_grad():
            outputs = self.model(**inputs)
        height, width = image.shape[:2]
        processed = self.processor.post_process_grounded_object_detection(
            outputs,
            inputs.input_ids,
            threshold=self.box_threshold,
            target_sizes=[(height, width)],
        )[0]
        records = []
        for box, score, label in zip(
            processed["boxes"], processed["scores"], processed["text_labels"]
        ):
            x0, y0, x1, y1 = (float(v) for v in box)
            records.append(
                {
                    "phrase": str(label),
                    "box": [
                        max(0.0, x0 / width),
                        max(0.0, y0 / height),
                        min(1.0, x1 / width),
                        min(1.0, y1 / height),
                    ],
                    # invert the sigmoid the post-processing applied
                    "logit": float(torch.logit(score.clamp(1e-6, 1 - 1e-6))),
                }
            )
        return records


def make_grounder(identifier: str):
    if identifier == "colorblob":
        return ColorBlobGrounder()
    if identifier.startswith("gdino:"):
        return PretrainedGrounder(identifier.split(":", 1)[1])
    raise ModelUnavailable(
        f"unknown grounder identifier {identifier!r}; "
        f"use 'colorblob' or 'gdino:<model-id>'"
    )
