"""Shared fixtures: a small real video and an expanded-query JSON file."""

import json

import cv2
import numpy as np
import pytest


def write_test_video(path, n_frames=20, fps=8.0, size=(64, 48), red_frames=(6, 7)):
    """A real encoded video: gray noise frames, red square on some frames."""
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, size
    )
    if not writer.isOpened():
        pytest.skip("OpenCV VideoWriter unavailable in this environment")
    rng = np.random.default_rng(0)
    for i in range(n_frames):
        frame = rng.integers(60, 120, size=(size[1], size[0], 3)).astype(np.uint8)
        if i in red_frames:
            frame[10:34, 18:46] = (20, 20, 230)  # BGR red block
        writer.write(frame)
    writer.release()
    return path


QUERY_DATA = {
    "question": "When does the person in red clothes appear with the dog?",
    "key_objects": ["person", "dog", "red clothes"],
    "cue_objects": ["grassy area", "leash", "fence"],
    "relations": [
        {"subject": "person", "relation": "attribute", "object": "red clothes"},
        {"subject": "person", "relation": "spatial", "object": "dog"},
    ],
    "descriptions": {"dog": ["a kind of animal"], "red clothes": ["bright garment"]},
    "semantics": ["leash often appears with dog"],
}


@pytest.fixture
def video_path(tmp_path):
    return write_test_video(tmp_path / "clip.avi")


@pytest.fixture
def frames_dir(tmp_path):
    directory = tmp_path / "frames"
    directory.mkdir()
    rng = np.random.default_rng(1)
    for i in range(6):
        frame = rng.integers(0, 255, size=(32, 40, 3)).astype(np.uint8)
        if i == 3:
            frame[4:20, 8:30] = (230, 30, 30)  # blue block (BGR)
        cv2.imwrite(str(directory / f"frame_{i:03d}.png"), frame)
    return directory


@pytest.fixture
def query_json(tmp_path):
    path = tmp_path / "expanded.json"
    path.write_text(json.dumps(QUERY_DATA, indent=2))
    return path
