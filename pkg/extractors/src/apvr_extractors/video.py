"""Frame sources: video files decoded with OpenCV, or image directories.

``iter_frames`` yields BGR uint8 arrays resampled to the target fps. For a
directory source every image counts as one frame already at the target
rate (directories are assumed to be pre-sampled dumps).
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .errors import DecodeError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def iter_frames(source: str | Path, fps: float):
    """Yield (frame_index, image) pairs at the target fps."""
    if fps <= 0:
        raise DecodeError(f"target fps must be positive, got {fps}")
    source = Path(source)
    if source.is_dir():
        yield from _iter_directory(source)
    else:
        yield from _iter_video(source, fps)


def _iter_directory(directory: Path):
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise DecodeError(f"no image frames found in directory {directory}")
    for index, path in enumerate(paths):
        image = cv2.imread(str(path))
        if image is None:
            raise DecodeError(f"could not decode image {path}", frame_index=index)
        yield index, image


def _iter_video(path: Path, fps: float):
    if not path.exists():
        raise DecodeError(f"video file {path} does not exist")
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise DecodeError(f"could not open video {path}")
    try:
        native_fps = capture.get(cv2.CAP_PROP_FPS)
        if not native_fps or native_fps <= 0 or not np.isfinite(native_fps):
            native_fps = fps  # containers without timing: take every frame
        step = max(1, int(round(native_fps / fps)))
        native_index = 0
        out_index = 0
        while True:
            ok, image = capture.read()
            if not ok:
                break
            if native_index % step == 0:
                if image is None or image.size == 0:
                    raise DecodeError(
                        f"decoder returned an empty frame from {path}",
                        frame_index=native_index,
                    )
                yield out_index, image
                out_index += 1
            native_index += 1
        if out_index == 0:
            raise DecodeError(f"video {path} yielded no frames")
    finally:
        capture.release()
