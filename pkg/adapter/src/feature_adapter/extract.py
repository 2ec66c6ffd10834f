"""Video-file extraction: per-frame embeddings and tracked detections emitted
as feature-stream documents (line-delimited JSON, one file per video)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2

from feature_adapter import AdapterError
from feature_adapter.models import AdapterConfig, BlobTracker, GridEmbedder


@dataclass(frozen=True)
class VideoJob:
    path: str
    video_id: str
    location: str
    date: str  # ISO


def extract(jobs: list[VideoJob], config: AdapterConfig) -> dict[str, str]:
    """Extract every job into a stream document keyed by video id.

    One tracker instance serves all jobs so identity tokens stay consistent
    across videos (gallery-based re-identification).
    """
    embedder = GridEmbedder(config.dim)
    tracker = BlobTracker()
    documents: dict[str, str] = {}
    for job in jobs:
        documents[job.video_id] = _extract_one(job, config, embedder, tracker)
    return documents


def _extract_one(
    job: VideoJob, config: AdapterConfig, embedder: GridEmbedder, tracker: BlobTracker
) -> str:
    capture = cv2.VideoCapture(job.path)
    if not capture.isOpened():
        raise AdapterError(f"cannot decode video {job.path!r}")
    try:
        source_fps = capture.get(cv2.CAP_PROP_FPS) or 0.0
        if source_fps <= 0:
            source_fps = 25.0  # container did not declare a rate
        effective_fps = source_fps / config.sample_rate

        lines = [
            json.dumps(
                {
                    "type": "meta",
                    "video_id": job.video_id,
                    "location": job.location,
                    "date": job.date,
                    "fps": effective_fps,
                    "dim": config.dim,
                }
            )
        ]
        det_lines: list[str] = []
        out_index = 0
        source_index = 0
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            if source_index % config.sample_rate == 0:
                emb = embedder.embed(frame)
                if emb.shape[0] != config.dim:
                    raise AdapterError(
                        f"embedder produced d={emb.shape[0]}, declared d={config.dim}"
                    )
                lines.append(
                    json.dumps({"type": "frame", "idx": out_index, "emb": emb.tolist()})
                )
                for x, y, ident in tracker.track(frame):
                    det_lines.append(
                        json.dumps(
                            {"type": "det", "idx": out_index, "x": x, "y": y, "id": ident}
                        )
                    )
                out_index += 1
            source_index += 1
        if out_index == 0:
            raise AdapterError(f"video {job.path!r} contained no decodable frames")
        return "\n".join(lines + det_lines) + "\n"
    finally:
        capture.release()


def write_documents(documents: dict[str, str], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for video_id, text in sorted(documents.items()):
        path = out / f"{video_id}.jsonl"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
