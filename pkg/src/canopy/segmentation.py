"""Temporal segmentation of frame streams via a disjunctive boundary criterion.

A boundary is placed before the current frame when any of three criteria
fires between the previous and current frame:

    C1  local transition     ||emb(curr) - emb(prev)||_2 > eps1
    C2  global deviation     ||emb(curr) - mean(open segment)||_2 > eps2
    C3  person-set change    |ids(curr) symdiff ids(prev)| >= delta_p

The open segment's representative is its running mean embedding, reset at
every boundary. Keyframes sit at the temporal center of each segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from canopy.errors import ValidationError
from canopy.model import FrameFeature, PersonDetection, Segment, VideoStream

C1 = "C1"
C2 = "C2"
C3 = "C3"


@dataclass(frozen=True)
class SegmenterConfig:
    eps1: float
    eps2: float
    delta_p: int = 1

    def __post_init__(self):
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValidationError("eps1 and eps2 must be >= 0")
        if self.delta_p < 1:
            raise ValidationError("delta_p must be >= 1")


class SegmentCentroid:
    """Running mean embedding of the currently open segment."""

    def __init__(self, first: np.ndarray):
        self._sum = np.array(first, dtype=np.float64)
        self.count = 1

    @property
    def mean(self) -> np.ndarray:
        return self._sum / self.count

    def add(self, embedding: np.ndarray) -> None:
        self._sum += embedding
        self.count += 1


def boundary_decision(
    prev: FrameFeature,
    curr: FrameFeature,
    centroid: SegmentCentroid,
    prev_ids: frozenset[str],
    curr_ids: frozenset[str],
    cfg: SegmenterConfig,
) -> tuple[bool, frozenset[str]]:
    """Evaluate all three criteria between consecutive frames.

    Returns (is_boundary, fired criteria names). *centroid* must reflect the
    open segment ending at *prev*.
    """
    if prev.embedding.shape != curr.embedding.shape:
        raise ValidationError(
            f"embedding dimension mismatch: {prev.embedding.shape} vs {curr.embedding.shape}"
        )
    fired = set()
    if float(np.linalg.norm(curr.embedding - prev.embedding)) > cfg.eps1:
        fired.add(C1)
    if float(np.linalg.norm(curr.embedding - centroid.mean)) > cfg.eps2:
        fired.add(C2)
    if len(curr_ids ^ prev_ids) >= cfg.delta_p:
        fired.add(C3)
    return bool(fired), frozenset(fired)


def keyframe_index(start: int, end: int) -> int:
    """Temporally central frame of an inclusive index range."""
    return (start + end) // 2


def identity_sets_for(
    frames: list[FrameFeature], detections: list[PersonDetection]
) -> list[frozenset[str]]:
    """Per-frame identity sets aligned with *frames*."""
    by_frame: dict[int, set[str]] = {}
    for det in detections:
        by_frame.setdefault(det.frame_index, set()).add(det.identity)
    return [frozenset(by_frame.get(f.frame_index, ())) for f in frames]


def segment_video(
    frames: list[FrameFeature],
    detections: list[PersonDetection],
    cfg: SegmenterConfig,
) -> list[Segment]:
    """Partition *frames* into contiguous covering segments.

    A new segment starts at frame j whenever the boundary decision between
    j-1 and j is true; the centroid resets at each boundary.
    """
    if not frames:
        raise ValidationError("cannot segment an empty frame list")
    identity_sets = identity_sets_for(frames, detections)

    video_id = frames[0].video_id
    segments: list[Segment] = []
    start = 0
    centroid = SegmentCentroid(frames[0].embedding)

    for j in range(1, len(frames)):
        is_boundary, _ = boundary_decision(
            frames[j - 1], frames[j], centroid, identity_sets[j - 1], identity_sets[j], cfg
        )
        if is_boundary:
            segments.append(
                Segment(video_id, start, j - 1, keyframe_index(start, j - 1))
            )
            start = j
            centroid = SegmentCentroid(frames[j].embedding)
        else:
            centroid.add(frames[j].embedding)

    last = len(frames) - 1
    segments.append(Segment(video_id, start, last, keyframe_index(start, last)))
    return segments


def segment_stream(stream: VideoStream, cfg: SegmenterConfig | None = None) -> list[Segment]:
    """Segment one ingested video, auto-calibrating thresholds when cfg is None."""
    if cfg is None:
        cfg = calibrate(stream.frames)
    return segment_video(stream.frames, stream.detections, cfg)


def consecutive_distances(frames: list[FrameFeature]) -> np.ndarray:
    """Euclidean distances between consecutive frame embeddings."""
    if len(frames) < 2:
        return np.zeros(0)
    embs = np.stack([f.embedding for f in frames])
    return np.linalg.norm(np.diff(embs, axis=0), axis=1)


def calibrate(frames: list[FrameFeature], delta_p: int = 1) -> SegmenterConfig:
    """Default thresholds from the stream itself: eps1 = eps2 = mean + 2*std
    of consecutive-frame distances (population std). Two-pass, deterministic.
    """
    dists = consecutive_distances(frames)
    if dists.size == 0:
        eps = 0.0
    else:
        eps = float(dists.mean() + 2.0 * dists.std())
    return SegmenterConfig(eps1=eps, eps2=eps, delta_p=delta_p)


def boundary_frames(segments: list[Segment]) -> list[int]:
    """Start indices of all segments after the first (the boundary positions)."""
    return [s.start_index for s in segments[1:]]
