"""Segment-level semantic encodings from keyframes and aggregated detections."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from canopy.errors import ProviderError, ValidationError
from canopy.model import FrameFeature, PersonDetection, Segment


@dataclass(frozen=True)
class SegmentEncoding:
    video_id: str
    segment_index: int
    content: np.ndarray
    summary_text: str | None = None


def keyframe_of(segment: Segment) -> int:
    """Temporally central keyframe index: floor((start + end) / 2)."""
    return (segment.start_index + segment.end_index) // 2


def aggregate_detections(
    segment: Segment, detections: list[PersonDetection]
) -> list[PersonDetection]:
    """All detections within the segment's frame range, ordered by
    (frame_index, identity)."""
    picked = [
        d
        for d in detections
        if segment.start_index <= d.frame_index <= segment.end_index
    ]
    picked.sort(key=lambda d: (d.frame_index, d.identity))
    return picked


def _detection_payload(detections: list[PersonDetection]) -> list[dict]:
    return [
        {
            "frame_index": d.frame_index,
            "timestamp": d.timestamp,
            "x": d.position[0],
            "y": d.position[1],
            "id": d.identity,
        }
        for d in detections
    ]


def encode_segment(
    segment: Segment,
    segment_index: int,
    frames: list[FrameFeature],
    detections: list[PersonDetection],
    provider,
) -> SegmentEncoding:
    key_idx = keyframe_of(segment)
    keyframe = frames[key_idx]
    agg = aggregate_detections(segment, detections)
    try:
        content, caption = provider.encode_segment(
            keyframe.embedding, _detection_payload(agg)
        )
    except ProviderError as exc:
        raise ProviderError(
            f"encode_segment failed for {segment.video_id} segment {segment_index}: {exc}",
            code=getattr(exc, "code", None),
        ) from exc
    content = np.asarray(content, dtype=np.float64)
    if content.shape != keyframe.embedding.shape:
        raise ValidationError(
            f"provider returned dimension {content.shape[0]}, "
            f"expected {keyframe.embedding.shape[0]}"
        )
    return SegmentEncoding(
        video_id=segment.video_id,
        segment_index=segment_index,
        content=content,
        summary_text=caption,
    )


def encode_all(
    segments: list[Segment],
    frames: list[FrameFeature],
    detections: list[PersonDetection],
    provider,
    max_concurrency: int = 1,
) -> list[SegmentEncoding]:
    """One encoding per segment, in segment order.

    Provider calls may fan out up to *max_concurrency*; results are joined
    deterministically by segment order regardless. Providers declaring a
    serial contract in their handshake are never fanned out.
    """
    if getattr(provider, "hello", None) is not None:
        if bool(provider.hello().get("serial", False)):
            max_concurrency = 1

    def one(item: tuple[int, Segment]) -> SegmentEncoding:
        idx, seg = item
        return encode_segment(seg, idx, frames, detections, provider)

    items = list(enumerate(segments))
    if max_concurrency <= 1 or len(items) <= 1:
        return [one(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        return list(pool.map(one, items))
