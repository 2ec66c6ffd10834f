import json
import subprocess
import sys

import pytest

from feature_adapter import AdapterError
from feature_adapter.extract import VideoJob, extract, write_documents
from feature_adapter.models import AdapterConfig


def records(document: str):
    return [json.loads(line) for line in document.splitlines() if line.strip()]


def job(path, video_id, location="Lab", date="2024-03-01"):
    return VideoJob(path=str(path), video_id=video_id, location=location, date=date)


class TestExtract:
    def test_frame_count_matches_clip(self, clips):
        docs = extract([job(clips[1], "b")], AdapterConfig())
        recs = records(docs["b"])
        frames = [r for r in recs if r["type"] == "frame"]
        assert len(frames) == 10
        assert recs[0]["type"] == "meta"
        assert recs[0]["dim"] == 32

    def test_embeddings_match_declared_dimension(self, clips):
        config = AdapterConfig(dim=16)
        docs = extract([job(clips[0], "a")], config)
        for rec in records(docs["a"]):
            if rec["type"] == "frame":
                assert len(rec["emb"]) == 16

    def test_clip_without_people_has_zero_detections(self, empty_clip):
        docs = extract([job(empty_clip, "empty")], AdapterConfig())
        assert all(r["type"] != "det" for r in records(docs["empty"]))

    def test_sample_rate_halves_frames(self, clips):
        docs = extract([job(clips[0], "a")], AdapterConfig(sample_rate=2))
        frames = [r for r in records(docs["a"]) if r["type"] == "frame"]
        assert len(frames) == 6
        # fps is scaled so timestamps still span the source duration
        meta = records(docs["a"])[0]
        assert meta["fps"] == pytest.approx(4.0)

    def test_identity_tokens_consistent_across_videos(self, clips):
        docs = extract(
            [job(clips[0], "a"), job(clips[1], "b"), job(clips[2], "c")],
            AdapterConfig(),
        )
        per_video = {}
        for vid, doc in docs.items():
            per_video[vid] = {r["id"] for r in records(doc) if r["type"] == "det"}
        # RED appears in all three clips under one shared token
        shared = per_video["a"] & per_video["b"] & per_video["c"]
        assert len(shared) == 1
        # GREEN and BLUE stay distinct from the shared token
        assert len(per_video["a"]) == 2
        assert len(per_video["c"]) == 2
        assert per_video["b"] == shared

    def test_unreadable_video_rejected(self, tmp_path):
        bogus = tmp_path / "nope.avi"
        bogus.write_text("this is not a video")
        with pytest.raises(AdapterError, match="decode|frames"):
            extract([job(bogus, "x")], AdapterConfig())

    def test_unknown_model_rejected(self):
        with pytest.raises(AdapterError, match="embedder"):
            AdapterConfig(embedder="resnet-900b")
        with pytest.raises(AdapterError, match="sample_rate"):
            AdapterConfig(sample_rate=0)


class TestEngineConformance:
    """Emitted documents must pass the engine's ingest validator — exercised
    through the engine's public CLI, not its internals."""

    def test_three_clip_corpus_passes_engine_ingest(self, clips, tmp_path):
        config = AdapterConfig()
        docs = extract(
            [
                job(clips[0], "cam_a", "Lobby", "2024-03-01"),
                job(clips[1], "cam_b", "Lab", "2024-03-01"),
                job(clips[2], "cam_c", "Lobby", "2024-03-02"),
            ],
            config,
        )
        paths = write_documents(docs, tmp_path / "streams")
        proc = subprocess.run(
            [sys.executable, "-m", "canopy", "ingest", "--json"]
            + [str(p) for p in paths],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert len(report["videos"]) == 3
        assert all(v["dim"] == config.dim for v in report["videos"])

    def test_engine_builds_forest_from_adapter_streams(self, clips, tmp_path):
        docs = extract(
            [
                job(clips[0], "cam_a", "Lobby", "2024-03-01"),
                job(clips[1], "cam_b", "Lab", "2024-03-01"),
                job(clips[2], "cam_c", "Lobby", "2024-03-02"),
            ],
            AdapterConfig(),
        )
        paths = write_documents(docs, tmp_path / "streams")
        forest_path = tmp_path / "forest.json"
        proc = subprocess.run(
            [sys.executable, "-m", "canopy", "build", "--json",
             "--out", str(forest_path)] + [str(p) for p in paths],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["videos"] == 3
        assert forest_path.exists()
