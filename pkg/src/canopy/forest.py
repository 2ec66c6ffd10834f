"""Per-video hierarchical trees over segments, with disjoint-cover validation
and forest persistence.

Node intervals are half-open ``[t_start, t_end)`` so that sibling intervals
can be simultaneously covering and pairwise disjoint. Frame bounds are kept
alongside the float timestamps so cover checks run on exact integers.

Trees are built bottom-up: leaves are the segments in temporal order, and
each level groups up to ``fanout`` consecutive children until a single root
remains, which aligns every split boundary with a segment boundary by
construction.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from canopy.encoding import SegmentEncoding, aggregate_detections
from canopy.errors import PersistenceError, ValidationError
from canopy.model import PersonDetection, Segment, VideoMeta

FOREST_FORMAT_VERSION = 1
MAX_TRAJECTORY_SAMPLES = 8


@dataclass(frozen=True)
class TrajectoryDescriptor:
    identity: str
    first_ts: float
    last_ts: float
    observation_count: int
    mean_position: tuple[float, float]
    sample_positions: tuple[tuple[float, float, float], ...]  # (t, x, y)


@dataclass
class TreeNode:
    node_id: str
    t_start: float
    t_end: float
    start_frame: int
    end_frame: int  # exclusive
    reid_summary: dict[str, TrajectoryDescriptor]
    content: np.ndarray
    content_text: str | None
    children: list[str]
    depth: int
    segment_ref: int | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def interval(self) -> tuple[float, float]:
        return (self.t_start, self.t_end)

    def identity_tokens(self) -> frozenset[str]:
        return frozenset(self.reid_summary)


@dataclass
class VideoTree:
    meta: VideoMeta
    root_id: str
    nodes: dict[str, TreeNode]
    leaf_count: int

    @property
    def root(self) -> TreeNode:
        return self.nodes[self.root_id]

    def children_of(self, node: TreeNode) -> list[TreeNode]:
        return [self.nodes[c] for c in node.children]

    def leaves(self) -> list[TreeNode]:
        out = [n for n in self.nodes.values() if n.is_leaf]
        out.sort(key=lambda n: n.start_frame)
        return out

    def walk(self) -> list[TreeNode]:
        """Depth-first preorder traversal from the root."""
        out: list[TreeNode] = []
        stack = [self.root_id]
        while stack:
            node = self.nodes[stack.pop()]
            out.append(node)
            stack.extend(reversed(node.children))
        return out


@dataclass
class Forest:
    """All trees of a corpus plus the cross-video identity index."""

    trees: dict[str, VideoTree]
    identity_index: object | None = None

    def __iter__(self):
        return iter(self.trees[v] for v in sorted(self.trees))


# ---------------------------------------------------------------------------
# Trajectory descriptors
# ---------------------------------------------------------------------------

def _resample(samples: list[tuple[float, float, float]]) -> tuple[tuple[float, float, float], ...]:
    if len(samples) <= MAX_TRAJECTORY_SAMPLES:
        return tuple(samples)
    idx = np.linspace(0, len(samples) - 1, MAX_TRAJECTORY_SAMPLES).round().astype(int)
    picked = []
    last = -1
    for i in idx:
        if i != last:
            picked.append(samples[i])
            last = i
    return tuple(picked)


def descriptor_from_detections(identity: str, dets: list[PersonDetection]) -> TrajectoryDescriptor:
    if not dets:
        raise ValidationError(f"no detections for identity {identity!r}")
    dets = sorted(dets, key=lambda d: d.timestamp)
    xs = [d.position[0] for d in dets]
    ys = [d.position[1] for d in dets]
    samples = [(d.timestamp, d.position[0], d.position[1]) for d in dets]
    return TrajectoryDescriptor(
        identity=identity,
        first_ts=dets[0].timestamp,
        last_ts=dets[-1].timestamp,
        observation_count=len(dets),
        mean_position=(sum(xs) / len(xs), sum(ys) / len(ys)),
        sample_positions=_resample(samples),
    )


def merge_descriptors(parts: list[TrajectoryDescriptor]) -> TrajectoryDescriptor:
    """Merge one identity's descriptors from sibling nodes: min/max span,
    summed counts, count-weighted mean position, resampled positions."""
    if not parts:
        raise ValidationError("cannot merge zero descriptors")
    total = sum(p.observation_count for p in parts)
    mean_x = sum(p.mean_position[0] * p.observation_count for p in parts) / total
    mean_y = sum(p.mean_position[1] * p.observation_count for p in parts) / total
    samples = sorted(
        (s for p in parts for s in p.sample_positions), key=lambda s: s[0]
    )
    return TrajectoryDescriptor(
        identity=parts[0].identity,
        first_ts=min(p.first_ts for p in parts),
        last_ts=max(p.last_ts for p in parts),
        observation_count=total,
        mean_position=(mean_x, mean_y),
        sample_positions=_resample(samples),
    )


def merge_reid_summaries(
    children: list[dict[str, TrajectoryDescriptor]]
) -> dict[str, TrajectoryDescriptor]:
    merged: dict[str, list[TrajectoryDescriptor]] = {}
    for summary in children:
        for identity, desc in summary.items():
            merged.setdefault(identity, []).append(desc)
    return {ident: merge_descriptors(parts) for ident, parts in sorted(merged.items())}


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

class _Draft:
    """Mutable node under construction (ids assigned after shaping)."""

    __slots__ = (
        "start_frame", "end_frame", "reid", "content", "text", "children", "segment_ref",
    )

    def __init__(self, start_frame, end_frame, reid, content, text, children, segment_ref):
        self.start_frame = start_frame
        self.end_frame = end_frame
        self.reid = reid
        self.content = content
        self.text = text
        self.children = children
        self.segment_ref = segment_ref


def _mean_unit(vectors: list[np.ndarray]) -> np.ndarray:
    mean = np.mean(np.stack(vectors), axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        return np.array(vectors[0], dtype=np.float64)
    return mean / norm


def build_tree(
    segments: list[Segment],
    encodings: list[SegmentEncoding],
    detections: list[PersonDetection],
    meta: VideoMeta,
    fanout: int = 4,
) -> VideoTree:
    """Build one video's tree; leaves are *segments* in temporal order."""
    if not segments:
        raise ValidationError("cannot build a tree over zero segments")
    if fanout < 2:
        raise ValidationError(f"fanout must be >= 2, got {fanout}")
    if len(encodings) != len(segments):
        raise ValidationError(
            f"{len(segments)} segments but {len(encodings)} encodings"
        )

    fps = meta.fps
    level: list[_Draft] = []
    for idx, (seg, enc) in enumerate(zip(segments, encodings)):
        dets = aggregate_detections(seg, detections)
        by_ident: dict[str, list[PersonDetection]] = {}
        for d in dets:
            by_ident.setdefault(d.identity, []).append(d)
        reid = {
            ident: descriptor_from_detections(ident, ds)
            for ident, ds in sorted(by_ident.items())
        }
        level.append(
            _Draft(
                start_frame=seg.start_index,
                end_frame=seg.end_index + 1,
                reid=reid,
                content=np.asarray(enc.content, dtype=np.float64),
                text=enc.summary_text,
                children=[],
                segment_ref=idx,
            )
        )

    while len(level) > 1:
        grouped: list[_Draft] = []
        for i in range(0, len(level), fanout):
            chunk = level[i : i + fanout]
            grouped.append(
                _Draft(
                    start_frame=chunk[0].start_frame,
                    end_frame=chunk[-1].end_frame,
                    reid=merge_reid_summaries([c.reid for c in chunk]),
                    content=_mean_unit([c.content for c in chunk]),
                    text=None,
                    children=chunk,
                    segment_ref=None,
                )
            )
        level = grouped

    root_draft = level[0]
    nodes: dict[str, TreeNode] = {}
    counter = 0

    def materialize(draft: _Draft, depth: int) -> str:
        nonlocal counter
        node_id = f"{meta.video_id}/n{counter}"
        counter += 1
        child_ids = [materialize(c, depth + 1) for c in draft.children]
        nodes[node_id] = TreeNode(
            node_id=node_id,
            t_start=draft.start_frame / fps,
            t_end=draft.end_frame / fps,
            start_frame=draft.start_frame,
            end_frame=draft.end_frame,
            reid_summary=draft.reid,
            content=draft.content,
            content_text=draft.text,
            children=child_ids,
            depth=depth,
            segment_ref=draft.segment_ref,
        )
        return node_id

    root_id = materialize(root_draft, 0)
    return VideoTree(meta=meta, root_id=root_id, nodes=nodes, leaf_count=len(segments))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    node_id: str
    message: str


def validate_tree(
    tree: VideoTree,
    detections: list[PersonDetection] | None = None,
    fanout: int | None = None,
) -> list[Violation]:
    """Check coverage, disjointness, ordering, reid-union closure, and depth
    invariants. Returns violations as data; an empty list means valid."""
    out: list[Violation] = []
    root = tree.root

    if root.start_frame != 0 or root.end_frame != tree.meta.frame_count:
        out.append(
            Violation(
                "root-span",
                root.node_id,
                f"root frames [{root.start_frame}, {root.end_frame}) != "
                f"[0, {tree.meta.frame_count})",
            )
        )
    if root.depth != 0:
        out.append(Violation("depth", root.node_id, f"root depth {root.depth} != 0"))

    seen: set[str] = set()
    leaves = 0
    for node in tree.walk():
        if node.node_id in seen:
            out.append(Violation("cycle", node.node_id, "node reachable twice"))
            return out
        seen.add(node.node_id)

        if not node.t_start < node.t_end:
            out.append(
                Violation("interval", node.node_id, f"t_start {node.t_start} >= t_end {node.t_end}")
            )
        if node.is_leaf != (node.segment_ref is not None):
            out.append(
                Violation(
                    "leaf-ref", node.node_id,
                    "segment_ref must be present exactly on leaves",
                )
            )
        if node.is_leaf:
            leaves += 1
            continue

        kids = tree.children_of(node)
        for a, b in zip(kids, kids[1:]):
            if a.t_start > b.t_start:
                out.append(
                    Violation("order", node.node_id, "children not ordered by t_start")
                )
                break
        # exact integer cover: adjacent child frame ranges partition the parent
        if kids[0].start_frame != node.start_frame:
            out.append(
                Violation(
                    "coverage", node.node_id,
                    f"first child starts at frame {kids[0].start_frame}, "
                    f"parent at {node.start_frame}",
                )
            )
        if kids[-1].end_frame != node.end_frame:
            out.append(
                Violation(
                    "coverage", node.node_id,
                    f"last child ends at frame {kids[-1].end_frame}, "
                    f"parent at {node.end_frame}",
                )
            )
        for a, b in zip(kids, kids[1:]):
            if a.end_frame != b.start_frame:
                kind = "overlap" if a.end_frame > b.start_frame else "coverage"
                out.append(
                    Violation(
                        kind, node.node_id,
                        f"gap/overlap between {a.node_id} and {b.node_id}",
                    )
                )
        if sum(k.end_frame - k.start_frame for k in kids) != node.end_frame - node.start_frame:
            out.append(
                Violation("coverage", node.node_id, "child interval lengths do not sum to parent")
            )

        for kid in kids:
            if kid.depth != node.depth + 1:
                out.append(
                    Violation(
                        "depth", kid.node_id,
                        f"depth {kid.depth} != parent depth {node.depth} + 1",
                    )
                )

        union = frozenset().union(*(k.identity_tokens() for k in kids))
        if node.identity_tokens() != union:
            missing = union - node.identity_tokens()
            extra = node.identity_tokens() - union
            out.append(
                Violation(
                    "reid-union", node.node_id,
                    f"identity set mismatch (missing={sorted(missing)}, extra={sorted(extra)})",
                )
            )

    if leaves != tree.leaf_count:
        out.append(
            Violation("leaf-count", tree.root_id, f"{leaves} leaves != declared {tree.leaf_count}")
        )

    if detections is not None:
        by_frame: dict[int, set[str]] = {}
        for d in detections:
            by_frame.setdefault(d.frame_index, set()).add(d.identity)
        for node in tree.walk():
            if not node.is_leaf:
                continue
            expected: set[str] = set()
            for fr in range(node.start_frame, node.end_frame):
                expected |= by_frame.get(fr, set())
            if node.identity_tokens() != frozenset(expected):
                out.append(
                    Violation(
                        "reid-leaf", node.node_id,
                        "leaf identities do not match detections in its interval",
                    )
                )

    if fanout is not None and tree.leaf_count > 0:
        bound = math.ceil(math.log(max(tree.leaf_count, 2), fanout)) + 1
        worst = max(n.depth for n in tree.nodes.values())
        if worst > bound:
            out.append(
                Violation("depth-bound", tree.root_id, f"max depth {worst} > bound {bound}")
            )

    return out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _descriptor_payload(d: TrajectoryDescriptor) -> dict:
    return {
        "first_ts": d.first_ts,
        "last_ts": d.last_ts,
        "count": d.observation_count,
        "mean": [d.mean_position[0], d.mean_position[1]],
        "samples": [[t, x, y] for t, x, y in d.sample_positions],
    }


def _descriptor_from_payload(identity: str, p: dict) -> TrajectoryDescriptor:
    return TrajectoryDescriptor(
        identity=identity,
        first_ts=p["first_ts"],
        last_ts=p["last_ts"],
        observation_count=p["count"],
        mean_position=(p["mean"][0], p["mean"][1]),
        sample_positions=tuple((s[0], s[1], s[2]) for s in p["samples"]),
    )


def _node_payload(node: TreeNode) -> dict:
    return {
        "node_id": node.node_id,
        "t_start": node.t_start,
        "t_end": node.t_end,
        "start_frame": node.start_frame,
        "end_frame": node.end_frame,
        "depth": node.depth,
        "children": list(node.children),
        "segment_ref": node.segment_ref,
        "content": np.asarray(node.content, dtype=np.float64).tolist(),
        "content_text": node.content_text,
        "reid": {i: _descriptor_payload(d) for i, d in sorted(node.reid_summary.items())},
    }


def _node_from_payload(p: dict) -> TreeNode:
    return TreeNode(
        node_id=p["node_id"],
        t_start=p["t_start"],
        t_end=p["t_end"],
        start_frame=p["start_frame"],
        end_frame=p["end_frame"],
        reid_summary={i: _descriptor_from_payload(i, dp) for i, dp in p["reid"].items()},
        content=np.asarray(p["content"], dtype=np.float64),
        content_text=p["content_text"],
        children=list(p["children"]),
        depth=p["depth"],
        segment_ref=p["segment_ref"],
    )


def _tree_payload(tree: VideoTree) -> dict:
    meta = tree.meta
    return {
        "meta": {
            "video_id": meta.video_id,
            "location": meta.location_label,
            "date": meta.date.isoformat(),
            "fps": meta.fps,
            "frame_count": meta.frame_count,
        },
        "root": tree.root_id,
        "leaf_count": tree.leaf_count,
        "nodes": [_node_payload(n) for n in tree.walk()],  # depth-first order
    }


def _tree_from_payload(p: dict) -> VideoTree:
    m = p["meta"]
    meta = VideoMeta(
        video_id=m["video_id"],
        location_label=m["location"],
        date=_dt.date.fromisoformat(m["date"]),
        fps=m["fps"],
        frame_count=m["frame_count"],
    )
    nodes = {np_["node_id"]: _node_from_payload(np_) for np_ in p["nodes"]}
    return VideoTree(meta=meta, root_id=p["root"], nodes=nodes, leaf_count=p["leaf_count"])


def _canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def save_forest(forest: Forest, path: str | Path) -> None:
    """Write the forest to a single JSON document with a content checksum.

    Canonical node and key ordering makes the output byte-stable across runs.
    """
    index_payload = None
    if forest.identity_index is not None:
        index_payload = forest.identity_index.to_payload()
    body = {
        "version": FOREST_FORMAT_VERSION,
        "trees": [_tree_payload(forest.trees[v]) for v in sorted(forest.trees)],
        "identity_index": index_payload,
    }
    body["checksum"] = hashlib.sha256(_canonical(body).encode("utf-8")).hexdigest()
    Path(path).write_text(_canonical(body), encoding="utf-8")


def load_forest(path: str | Path) -> Forest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"cannot read forest file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != FOREST_FORMAT_VERSION:
        raise PersistenceError(
            f"forest version mismatch: expected {FOREST_FORMAT_VERSION}, "
            f"got {doc.get('version')!r}"
        )
    claimed = doc.pop("checksum", None)
    actual = hashlib.sha256(_canonical(doc).encode("utf-8")).hexdigest()
    if claimed != actual:
        raise PersistenceError("forest checksum failure: file content was altered")

    trees = {}
    for tp in doc["trees"]:
        tree = _tree_from_payload(tp)
        trees[tree.meta.video_id] = tree

    index = None
    if doc.get("identity_index") is not None:
        from canopy.reid import GlobalIdentityIndex

        index = GlobalIdentityIndex.from_payload(doc["identity_index"])
    return Forest(trees=trees, identity_index=index)
