"""Canonical data types and the feature-stream ingestion layer.

A feature-stream document is line-delimited JSON, one file per video:

    {"type": "meta", "video_id": ..., "location": ..., "date": "YYYY-MM-DD",
     "fps": ..., "dim": ...}
    {"type": "frame", "idx": 0, "emb": [...]}
    {"type": "det", "idx": 0, "x": 0.5, "y": 0.5, "id": "P1"}

The meta record must come first; unknown record types are rejected.
Timestamps are always derived as ``frame_index / fps``, never read from the
file, so temporal arithmetic is consistent engine-wide.
"""

from __future__ import annotations

import datetime as _dt
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from canopy.errors import IngestError

# Derived timestamps must match idx / fps to this tolerance (seconds).
TIMESTAMP_TOL = 1e-6


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    location_label: str
    date: _dt.date
    fps: float
    frame_count: int

    def __post_init__(self):
        if not self.video_id:
            raise ValueError("video_id must be non-empty")
        if not (self.fps > 0):
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if self.frame_count < 0:
            raise ValueError(f"frame_count must be >= 0, got {self.frame_count}")

    @property
    def duration(self) -> float:
        """Video span in seconds: frame_count / fps."""
        return self.frame_count / self.fps


@dataclass(frozen=True)
class FrameFeature:
    video_id: str
    frame_index: int
    timestamp: float
    embedding: np.ndarray

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")


@dataclass(frozen=True)
class PersonDetection:
    video_id: str
    frame_index: int
    timestamp: float
    position: tuple[float, float]
    identity: str

    def __post_init__(self):
        x, y = self.position
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ValueError(f"position out of [0,1]: ({x}, {y})")
        if not self.identity:
            raise ValueError("identity token must be non-empty")


@dataclass(frozen=True)
class Segment:
    video_id: str
    start_index: int
    end_index: int
    keyframe_index: int

    def __post_init__(self):
        if not (self.start_index <= self.keyframe_index <= self.end_index):
            raise ValueError(
                f"keyframe {self.keyframe_index} outside "
                f"[{self.start_index}, {self.end_index}]"
            )

    @property
    def frame_range(self) -> range:
        """Inclusive frame index range as a Python range."""
        return range(self.start_index, self.end_index + 1)


@dataclass
class VideoStream:
    """One ingested video: meta plus ordered frames and detections."""

    meta: VideoMeta
    frames: list[FrameFeature]
    detections: list[PersonDetection]

    # (frame_index -> detections), built once at ingest
    _det_by_frame: dict[int, list[PersonDetection]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self):
        if not self._det_by_frame:
            for det in self.detections:
                self._det_by_frame.setdefault(det.frame_index, []).append(det)

    @property
    def dim(self) -> int:
        return int(self.frames[0].embedding.shape[0]) if self.frames else 0

    def detections_at(self, frame_index: int) -> list[PersonDetection]:
        return self._det_by_frame.get(frame_index, [])

    def identities_at(self, frame_index: int) -> frozenset[str]:
        return frozenset(d.identity for d in self.detections_at(frame_index))


def identity_set(frame: FrameFeature, stream: VideoStream) -> frozenset[str]:
    """Identities detected at *frame*; empty set when none (never an error)."""
    if frame.video_id != stream.meta.video_id:
        return frozenset()
    return stream.identities_at(frame.frame_index)


class Corpus:
    """Immutable collection of ingested videos sharing embedding dimension d."""

    def __init__(self, streams: Iterable[VideoStream]):
        self._by_id: dict[str, VideoStream] = {}
        dim: int | None = None
        for stream in streams:
            vid = stream.meta.video_id
            if vid in self._by_id:
                raise IngestError(f"duplicate video_id {vid!r} in corpus")
            if stream.frames:
                d = stream.dim
                if dim is None:
                    dim = d
                elif d != dim:
                    raise IngestError(
                        f"dimension mismatch: video {vid!r} has d={d}, corpus d={dim}"
                    )
            self._by_id[vid] = stream
        self._dim = dim or 0

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def video_ids(self) -> list[str]:
        return sorted(self._by_id)

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[VideoStream]:
        return iter(self._by_id[v] for v in self.video_ids)

    def __getitem__(self, video_id: str) -> VideoStream:
        return self._by_id[video_id]

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._by_id


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

_META_KEYS = {"type", "video_id", "location", "date", "fps", "dim"}
_FRAME_KEYS = {"type", "idx", "emb"}
_DET_KEYS = {"type", "idx", "x", "y", "id"}


def _parse_line(raw: str, line_no: int) -> dict:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise IngestError(f"invalid JSON: {exc.msg}", line_no) from exc
    if not isinstance(record, dict) or "type" not in record:
        raise IngestError("record must be an object with a 'type' field", line_no)
    return record


def _require(record: dict, keys: set[str], line_no: int) -> None:
    missing = keys - set(record)
    if missing:
        raise IngestError(f"missing fields {sorted(missing)}", line_no)
    unknown = set(record) - keys
    if unknown:
        raise IngestError(f"unknown fields {sorted(unknown)}", line_no)


def ingest_stream(source: str | Path | IO[str]) -> VideoStream:
    """Parse and validate one feature-stream document.

    Raises :class:`IngestError` (with the offending line number) on malformed
    records, dimension mismatches, non-monotonic or non-contiguous frame
    indices, positions outside [0,1], duplicate per-frame identities, or
    detections referencing unknown frames.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return ingest_stream(fh)

    lines = enumerate((ln for ln in source), start=1)

    meta: VideoMeta | None = None
    dim = 0
    frames: list[FrameFeature] = []
    detections: list[tuple[int, PersonDetection]] = []  # (line_no, det)
    seen_det_keys: set[tuple[int, str]] = set()

    for line_no, raw in lines:
        raw = raw.strip()
        if not raw:
            continue
        record = _parse_line(raw, line_no)
        rtype = record["type"]

        if meta is None:
            if rtype != "meta":
                raise IngestError("first record must have type 'meta'", line_no)
            _require(record, _META_KEYS, line_no)
            try:
                date = _dt.date.fromisoformat(record["date"])
            except (TypeError, ValueError) as exc:
                raise IngestError(f"bad date {record['date']!r}", line_no) from exc
            fps = record["fps"]
            if not isinstance(fps, (int, float)) or not fps > 0:
                raise IngestError(f"fps must be > 0, got {fps!r}", line_no)
            dim = record["dim"]
            if not isinstance(dim, int) or dim <= 0:
                raise IngestError(f"dim must be a positive integer, got {dim!r}", line_no)
            # frame_count is filled in after the scan
            meta = VideoMeta(
                video_id=str(record["video_id"]),
                location_label=str(record["location"]),
                date=date,
                fps=float(fps),
                frame_count=0,
            )
            continue

        if rtype == "meta":
            raise IngestError("duplicate meta record", line_no)

        if rtype == "frame":
            _require(record, _FRAME_KEYS, line_no)
            idx = record["idx"]
            if not isinstance(idx, int) or idx < 0:
                raise IngestError(f"bad frame idx {idx!r}", line_no)
            expected = len(frames)
            if idx < expected:
                raise IngestError(
                    f"non-monotonic frame_index {idx} (expected {expected})", line_no
                )
            if idx > expected:
                raise IngestError(
                    f"non-contiguous frame_index {idx} (expected {expected})", line_no
                )
            emb = record["emb"]
            if not isinstance(emb, list) or len(emb) != dim:
                got = len(emb) if isinstance(emb, list) else type(emb).__name__
                raise IngestError(
                    f"dimension mismatch: embedding has {got} values, header dim={dim}",
                    line_no,
                )
            vec = np.asarray(emb, dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise IngestError("embedding contains non-finite values", line_no)
            frames.append(
                FrameFeature(
                    video_id=meta.video_id,
                    frame_index=idx,
                    timestamp=idx / meta.fps,
                    embedding=vec,
                )
            )
            continue

        if rtype == "det":
            _require(record, _DET_KEYS, line_no)
            idx = record["idx"]
            if not isinstance(idx, int) or idx < 0:
                raise IngestError(f"bad detection idx {idx!r}", line_no)
            x, y = record["x"], record["y"]
            if not all(isinstance(v, (int, float)) for v in (x, y)):
                raise IngestError("detection position must be numeric", line_no)
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise IngestError(f"position out of [0,1]: ({x}, {y})", line_no)
            ident = str(record["id"])
            if not ident:
                raise IngestError("empty identity token", line_no)
            key = (idx, ident)
            if key in seen_det_keys:
                raise IngestError(
                    f"duplicate detection of identity {ident!r} at frame {idx}", line_no
                )
            seen_det_keys.add(key)
            detections.append(
                (
                    line_no,
                    PersonDetection(
                        video_id=meta.video_id,
                        frame_index=idx,
                        timestamp=idx / meta.fps,
                        position=(float(x), float(y)),
                        identity=ident,
                    ),
                )
            )
            continue

        raise IngestError(f"unknown record type {rtype!r}", line_no)

    if meta is None:
        raise IngestError("empty document: missing meta record")

    frame_count = len(frames)
    for line_no, det in detections:
        if det.frame_index >= frame_count:
            raise IngestError(
                f"detection references unknown frame {det.frame_index}", line_no
            )
        # cross-check derived timestamps stay consistent
        if not math.isclose(
            det.timestamp, det.frame_index / meta.fps, abs_tol=TIMESTAMP_TOL
        ):
            raise IngestError("timestamp drift exceeds tolerance", line_no)

    meta = VideoMeta(
        video_id=meta.video_id,
        location_label=meta.location_label,
        date=meta.date,
        fps=meta.fps,
        frame_count=frame_count,
    )
    dets = sorted((d for _, d in detections), key=lambda d: (d.frame_index, d.identity))
    return VideoStream(meta=meta, frames=frames, detections=dets)


def write_stream(stream: VideoStream, target: str | Path | IO[str] | None = None) -> str:
    """Serialize a stream back to its document form (canonical record order).

    Returns the document text; writes it to *target* when given. Re-ingesting
    the output reproduces an equivalent stream field-for-field.
    """
    buf = io.StringIO()
    meta = stream.meta
    buf.write(
        json.dumps(
            {
                "type": "meta",
                "video_id": meta.video_id,
                "location": meta.location_label,
                "date": meta.date.isoformat(),
                "fps": meta.fps,
                "dim": stream.dim,
            }
        )
        + "\n"
    )
    for frame in stream.frames:
        buf.write(
            json.dumps(
                {"type": "frame", "idx": frame.frame_index, "emb": frame.embedding.tolist()}
            )
            + "\n"
        )
    for det in sorted(stream.detections, key=lambda d: (d.frame_index, d.identity)):
        x, y = det.position
        buf.write(
            json.dumps({"type": "det", "idx": det.frame_index, "x": x, "y": y, "id": det.identity})
            + "\n"
        )
    text = buf.getvalue()
    if target is not None:
        if isinstance(target, (str, Path)):
            Path(target).write_text(text, encoding="utf-8")
        else:
            target.write(text)
    return text


def load_corpus(paths: Iterable[str | Path]) -> Corpus:
    """Ingest every document in *paths* into one corpus."""
    return Corpus(ingest_stream(p) for p in paths)
