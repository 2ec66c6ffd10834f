"""Global cross-video identity index: the bridge points connecting trees
through shared person identities. Keyed to leaf nodes only; ancestors are
reachable through the tree itself."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass

from canopy.errors import ValidationError
from canopy.forest import Forest, VideoTree


@dataclass(frozen=True)
class Appearance:
    video_id: str
    node_id: str
    first_ts: float
    last_ts: float

    @property
    def interval(self) -> tuple[float, float]:
        return (self.first_ts, self.last_ts)


class GlobalIdentityIndex:
    """identity -> leaf appearances, plus per-video identity sets."""

    def __init__(
        self,
        appearances: dict[str, list[Appearance]],
        video_meta: dict[str, tuple[str, _dt.date]],
    ):
        self._appearances = {
            ident: sorted(apps, key=lambda a: (a.video_id, a.first_ts))
            for ident, apps in appearances.items()
            if apps
        }
        self._video_meta = dict(video_meta)
        self._per_video: dict[str, set[str]] = {v: set() for v in video_meta}
        for ident, apps in self._appearances.items():
            for app in apps:
                self._per_video.setdefault(app.video_id, set()).add(ident)

    @property
    def identities(self) -> frozenset[str]:
        return frozenset(self._appearances)

    @property
    def video_ids(self) -> list[str]:
        return sorted(self._video_meta)

    def video_location(self, video_id: str) -> str:
        return self._video_meta[video_id][0]

    def video_date(self, video_id: str) -> _dt.date:
        return self._video_meta[video_id][1]

    def identities_in(self, video_id: str) -> frozenset[str]:
        if video_id not in self._per_video:
            raise ValidationError(f"unknown video id {video_id!r}")
        return frozenset(self._per_video[video_id])

    def appearances(
        self,
        identity: str,
        time_range: tuple[float, float] | None = None,
        locations: set[str] | None = None,
    ) -> list[Appearance]:
        """Leaf appearances of *identity* intersecting *time_range* and
        matching *locations*. Unknown identities yield an empty list."""
        out = []
        for app in self._appearances.get(identity, []):
            if locations is not None:
                if self._video_meta[app.video_id][0] not in locations:
                    continue
            if time_range is not None:
                lo, hi = time_range
                if app.last_ts < lo or app.first_ts > hi:
                    continue
            out.append(app)
        return out

    def identities_common_to(
        self, video_ids: list[str], time_range: tuple[float, float] | None = None
    ) -> frozenset[str]:
        """Intersection of per-video identity sets, range-restricted."""
        if not video_ids:
            raise ValidationError("identities_common_to requires >= 1 video id")
        result: frozenset[str] | None = None
        for vid in video_ids:
            if vid not in self._per_video:
                raise ValidationError(f"unknown video id {vid!r}")
            if time_range is None:
                present = frozenset(self._per_video[vid])
            else:
                lo, hi = time_range
                present = frozenset(
                    ident
                    for ident in self._per_video[vid]
                    for app in self._appearances[ident]
                    if app.video_id == vid and app.last_ts >= lo and app.first_ts <= hi
                )
            result = present if result is None else (result & present)
            if not result:
                return frozenset()
        return result or frozenset()

    # -- persistence (embedded in the forest file) ------------------------

    def to_payload(self) -> dict:
        return {
            "appearances": {
                ident: [
                    {
                        "video_id": a.video_id,
                        "node_id": a.node_id,
                        "first_ts": a.first_ts,
                        "last_ts": a.last_ts,
                    }
                    for a in apps
                ]
                for ident, apps in sorted(self._appearances.items())
            },
            "videos": {
                vid: {"location": loc, "date": date.isoformat()}
                for vid, (loc, date) in sorted(self._video_meta.items())
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "GlobalIdentityIndex":
        appearances = {
            ident: [
                Appearance(
                    video_id=a["video_id"],
                    node_id=a["node_id"],
                    first_ts=a["first_ts"],
                    last_ts=a["last_ts"],
                )
                for a in apps
            ]
            for ident, apps in payload["appearances"].items()
        }
        video_meta = {
            vid: (m["location"], _dt.date.fromisoformat(m["date"]))
            for vid, m in payload["videos"].items()
        }
        return cls(appearances, video_meta)


def build_index(
    forest: Forest | dict[str, VideoTree],
    detections: dict[str, list] | None = None,
) -> GlobalIdentityIndex:
    """Index every leaf's identities with their first/last observation times.

    When *detections* (video_id -> detection list) is given, appearance spans
    come straight from the raw detections inside each leaf's frame range;
    otherwise the trajectory spans already summarized on validated leaves are
    used. Both paths agree on any validated forest. Identities absent from
    all videos are absent from the index.
    """
    trees = forest.trees if isinstance(forest, Forest) else forest
    appearances: dict[str, list[Appearance]] = {}
    video_meta: dict[str, tuple[str, _dt.date]] = {}
    for vid in sorted(trees):
        tree = trees[vid]
        video_meta[vid] = (tree.meta.location_label, tree.meta.date)
        dets = detections.get(vid, []) if detections is not None else None
        for leaf in tree.leaves():
            if dets is None:
                spans = {
                    ident: (desc.first_ts, desc.last_ts)
                    for ident, desc in leaf.reid_summary.items()
                }
            else:
                spans = {}
                for d in dets:
                    if leaf.start_frame <= d.frame_index < leaf.end_frame:
                        lo, hi = spans.get(d.identity, (d.timestamp, d.timestamp))
                        spans[d.identity] = (min(lo, d.timestamp), max(hi, d.timestamp))
            for ident, (first_ts, last_ts) in spans.items():
                appearances.setdefault(ident, []).append(
                    Appearance(
                        video_id=vid,
                        node_id=leaf.node_id,
                        first_ts=first_ts,
                        last_ts=last_ts,
                    )
                )
    return GlobalIdentityIndex(appearances, video_meta)
