"""Cross-component conformance: extractor output through the engine CLI.

Everything here talks to the engine exclusively through its external
interfaces: the artifact file formats and the `apvr` command. One
pass/fail line per acceptance check.
"""

import json
import shutil
import subprocess
import sys
from contextlib import contextmanager

import numpy as np
import pytest

from apvr_extractors import ExtractionJob, capture_attention, extract_bundle, load_query
from conftest import write_test_video


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL", flush=True)
        raise
    print(f"\nACCEPTANCE {name}: PASS", flush=True)


def apvr(*args):
    """Invoke the engine CLI; skip the suite if it is not installed."""
    if shutil.which("apvr") is None:
        pytest.skip("engine CLI `apvr` is not installed")
    return subprocess.run(
        ["apvr", *args], capture_output=True, text=True, timeout=120
    )


@pytest.fixture
def artifacts(tmp_path, query_json):
    video = write_test_video(tmp_path / "smoke.avi", n_frames=40, fps=8.0,
                             red_frames=(12, 13, 14))
    query = load_query(query_json)
    bundle_path = tmp_path / "smoke.apvrfb"
    attn_path = tmp_path / "smoke.apvrat"
    extract_bundle(
        ExtractionJob(video=video, output=bundle_path, query=query, fps=2.0)
    )
    capture_attention(
        ExtractionJob(video=video, output=attn_path, query=query, fps=2.0,
                      host_layers=3, host_heads=2, tokens_per_frame=4)
    )
    return bundle_path, attn_path, query_json


def test_format_conformance_and_pipeline_smoke(artifacts, tmp_path, query_json):
    """Extractor files pass the engine validators (attention rows within
    1e-4 of 1) and a 10-frame real-video job runs end-to-end through the
    engine `pipeline` command."""
    with criterion("extractor-format-conformance"):
        bundle_path, attn_path, _ = artifacts

        result = apvr("validate", "--bundle", str(bundle_path),
                      "--attn", str(attn_path))
        assert result.returncode == 0, result.stderr
        assert "bundle ok" in result.stdout
        assert "attention ok" in result.stdout

        # row-sum invariant, checked directly on the written bytes
        import struct

        data = attn_path.read_bytes()
        _, L, h, d_q, d_v = struct.unpack_from("<7s4I", data)
        values = np.frombuffer(
            data, dtype="<f4", count=L * h * d_q * d_v,
            offset=struct.calcsize("<7s4I"),
        ).reshape(L, h, d_q, d_v).astype(np.float64)
        worst = np.abs(values.sum(axis=-1) - 1.0).max()
        assert worst <= 1e-4, f"worst attention row-sum deviation {worst:.2e}"

        # ten-frame real-video job, end to end through `pipeline`
        video10 = write_test_video(tmp_path / "ten.avi", n_frames=10, fps=2.0,
                                   red_frames=(4, 5))
        query = load_query(query_json)
        bundle10 = tmp_path / "ten.apvrfb"
        attn10 = tmp_path / "ten.apvrat"
        extract_bundle(
            ExtractionJob(video=video10, output=bundle10, query=query, fps=2.0)
        )
        capture_attention(
            ExtractionJob(video=video10, output=attn10, query=query, fps=2.0)
        )

        reply = tmp_path / "reply.txt"
        reply.write_text(
            "Key Objects: person, dog, red clothes\n"
            "Cue Objects: grassy area, leash, fence\n"
            "Rel: (person; attribute; red clothes), (person; spatial; dog)\n"
            "Des: (dog: a kind of animal)\n"
            "Sem: leash often appears with dog\n"
        )
        out_dir = tmp_path / "run"
        result = apvr(
            "pipeline", "--bundle", str(bundle10), "--expansion", str(reply),
            "--attn", str(attn10), "--out-dir", str(out_dir), "--seed", "5",
        )
        assert result.returncode == 0, result.stderr
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["pivot_frame_count"] == 10  # top_k clamps to N
        assert (out_dir / "pfr_selection.json").exists()
        assert (out_dir / "ptr_selection.json").exists()
        ptr_payload = json.loads((out_dir / "ptr_selection.json").read_text())
        assert ptr_payload["total_token_count"] == 40  # 10 frames x 4 tokens


def test_extractor_cli_mirrors_engine_flags(tmp_path, query_json):
    video = write_test_video(tmp_path / "cli.avi", n_frames=12, fps=4.0)
    bundle_out = tmp_path / "cli.apvrfb"
    attn_out = tmp_path / "cli.apvrat"
    base = [sys.executable, "-m", "apvr_extractors.cli"]
    result = subprocess.run(
        base + ["bundle", "--video", str(video), "--query", str(query_json),
                "--out", str(bundle_out), "--fps", "2"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0, result.stderr
    summary = json.loads(result.stdout)
    assert summary["n_frames"] == 6

    result = subprocess.run(
        base + ["attention", "--video", str(video), "--query", str(query_json),
                "--out", str(attn_out), "--fps", "2", "--seed", "3"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0, result.stderr
    assert attn_out.exists()

    validate = apvr("validate", "--bundle", str(bundle_out),
                    "--attn", str(attn_out))
    assert validate.returncode == 0, validate.stderr

    missing = subprocess.run(
        base + ["bundle", "--video", str(tmp_path / "gone.avi"),
                "--query", str(query_json), "--out", str(bundle_out)],
        capture_output=True, text=True,
    )
    assert missing.returncode == 2
