"""Five-stage query pipeline: video selection, knowledge-base retrieval,
tree navigation, cross-video integration, and knowledge-base update.

Stages always execute in order 1..5 and are recorded in a stage trace;
individual stages may be no-ops (e.g. navigation is skipped when a
high-confidence knowledge-base fact already answers a presence query), but
they are never reordered.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from canopy.errors import ValidationError
from canopy.forest import Forest, VideoTree
from canopy.kb import KBEntry, KnowledgeBase
from canopy.search import (
    HIT_COVERAGE,
    HIT_IDENTITY,
    SearchHit,
    SearchOptions,
    SearchTrace,
    cosine_relevance,
    search,
)

TASKS = ("locate", "presence", "common_identity", "count", "summarize")
MODALITIES = ("single", "cross_spatial", "cross_temporal", "cross_spatiotemporal")

INSUFFICIENT_TEXT = "insufficient evidence"


@dataclass(frozen=True)
class StructuredQuery:
    task: str
    description: str = ""
    date_range: tuple[_dt.date, _dt.date] | None = None
    locations: frozenset[str] | None = None
    identities: frozenset[str] | None = None
    modality_tag: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r}")
        if not self.description and not self.identities:
            raise ValidationError("query needs a description or identities")
        if self.modality_tag is not None and self.modality_tag not in MODALITIES:
            raise ValidationError(f"unknown modality tag {self.modality_tag!r}")
        if self.date_range is not None and self.date_range[0] > self.date_range[1]:
            raise ValidationError("date_range start after end")

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "StructuredQuery":
        if not isinstance(payload, dict):
            raise ValidationError("structured query must be an object")
        unknown = set(payload) - {
            "task", "description", "date_range", "locations", "identities", "modality",
        }
        if unknown:
            raise ValidationError(f"unknown query fields {sorted(unknown)}")
        if "task" not in payload:
            raise ValidationError("query missing 'task'")
        date_range = None
        if payload.get("date_range") is not None:
            dr = payload["date_range"]
            if not (isinstance(dr, (list, tuple)) and len(dr) == 2):
                raise ValidationError("date_range must be [start, end]")
            try:
                date_range = (
                    _dt.date.fromisoformat(dr[0]),
                    _dt.date.fromisoformat(dr[1]),
                )
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"bad date_range {dr!r}") from exc
        locations = (
            frozenset(payload["locations"]) if payload.get("locations") else None
        )
        identities = (
            frozenset(payload["identities"]) if payload.get("identities") else None
        )
        return cls(
            task=payload["task"],
            description=payload.get("description", "") or "",
            date_range=date_range,
            locations=locations,
            identities=identities,
            modality_tag=payload.get("modality"),
        )

    def to_payload(self) -> dict[str, Any]:
        return {
            "task": self.task,
            "description": self.description,
            "date_range": (
                [self.date_range[0].isoformat(), self.date_range[1].isoformat()]
                if self.date_range
                else None
            ),
            "locations": sorted(self.locations) if self.locations else None,
            "identities": sorted(self.identities) if self.identities else None,
            "modality": self.modality_tag,
        }


@dataclass
class Answer:
    text: str
    payload: dict[str, Any]
    evidence: list[Any]  # SearchHit | KBEntry
    derived_facts: list[tuple[_dt.date, str, str]] = field(default_factory=list)
    insufficient: bool = False

    def to_payload(self) -> dict[str, Any]:
        ev = []
        for item in self.evidence:
            if isinstance(item, SearchHit):
                ev.append(
                    {
                        "type": "hit",
                        "video_id": item.video_id,
                        "node_id": item.node_id,
                        "relevance": item.relevance,
                        "interval": list(item.interval),
                        "kind": item.kind,
                        "flagged": item.flagged,
                    }
                )
            elif isinstance(item, KBEntry):
                ev.append(
                    {
                        "type": "kb",
                        "date": item.date.isoformat(),
                        "location": item.location,
                        "description": item.description,
                        "confidence": item.confidence,
                    }
                )
        return {
            "text": self.text,
            "payload": self.payload,
            "evidence": ev,
            "insufficient": self.insufficient,
        }


@dataclass(frozen=True)
class StageRecord:
    index: int
    name: str
    skipped: bool
    detail: str


@dataclass
class KBContext:
    priority: list[KBEntry]
    rest: list[KBEntry]
    short_circuit_entry: KBEntry | None = None

    @property
    def entries(self) -> list[KBEntry]:
        return self.priority + self.rest

    @property
    def short_circuit(self) -> bool:
        return self.short_circuit_entry is not None


def presence_fact(identity: str, present: bool) -> str:
    return f"{identity} {'present' if present else 'absent'}"


# ---------------------------------------------------------------------------
# Stage 1: video selection
# ---------------------------------------------------------------------------

def filter_videos(
    query: StructuredQuery, forest: Forest, video_filter: bool = True
) -> list[VideoTree]:
    """Trees matching the query's date range and locations; all trees when
    the video filter toggle is off."""
    if not forest.trees:
        raise ValidationError("empty corpus: no trees to filter")
    trees = [forest.trees[v] for v in sorted(forest.trees)]
    if not video_filter:
        return trees
    out = []
    for tree in trees:
        meta = tree.meta
        if query.date_range is not None and not (
            query.date_range[0] <= meta.date <= query.date_range[1]
        ):
            continue
        if query.locations is not None and meta.location_label not in query.locations:
            continue
        out.append(tree)
    return out


# ---------------------------------------------------------------------------
# Stage 2: knowledge-base retrieval
# ---------------------------------------------------------------------------

def retrieve_context(query: StructuredQuery, kb: KnowledgeBase) -> KBContext:
    """Retrieve KB evidence under the query constraints. A priority-tier
    entry that states the queried presence fact short-circuits tree search."""
    priority, rest = kb.retrieve(
        date_range=query.date_range,
        locations=set(query.locations) if query.locations else None,
        description_query=query.description or None,
    )
    ctx = KBContext(priority=priority, rest=rest)
    if query.task == "presence" and query.identities:
        wanted = {presence_fact(i, True) for i in query.identities} | {
            presence_fact(i, False) for i in query.identities
        }
        for entry in priority:
            if entry.description in wanted:
                ctx.short_circuit_entry = entry
                break
    return ctx


# ---------------------------------------------------------------------------
# Stage 3: navigation
# ---------------------------------------------------------------------------

def _ancestor_at_depth(tree: VideoTree, node_id: str, depth: int):
    """Ancestor-or-self of *node_id* at the given depth (for depth-limited
    runs, which must surface only coarse summaries)."""
    target = tree.nodes[node_id]
    if target.depth <= depth:
        return target
    node = tree.root
    while node.depth < depth and not node.is_leaf:
        for child_id in node.children:
            child = tree.nodes[child_id]
            if child.start_frame <= target.start_frame < child.end_frame:
                node = child
                break
        else:
            break
    return node


def navigate(
    query: StructuredQuery,
    trees: list[VideoTree],
    provider,
    opts: SearchOptions,
    identity_index=None,
    traces: dict[str, SearchTrace] | None = None,
) -> list[SearchHit]:
    """Per-tree search results concatenated in video order, tagged by video.

    Besides the threshold search, two task-driven hit kinds are added:
    identity hits (leaf appearances of queried identities, via the identity
    index) and coverage hits (root summaries, for identity-enumeration
    tasks). Both honor the active toggles: identity hits require the ReID
    toggle, and depth-limited runs coarsen identity hits to the cutoff level.
    """
    hits: list[SearchHit] = []
    query_vec: np.ndarray | None = None
    if query.description:
        query_vec = provider.embed_text(query.description)

    selected_ids = {t.meta.video_id for t in trees}
    by_id = {t.meta.video_id: t for t in trees}

    for tree in trees:
        vid = tree.meta.video_id
        if query_vec is not None:
            trace = SearchTrace() if traces is not None else None
            hits.extend(
                search(query_vec, query.identities, tree, cosine_relevance, opts, trace)
            )
            if traces is not None and trace is not None:
                traces[vid] = trace

    if query.identities and opts.use_reid and identity_index is not None:
        seen: set[tuple[str, str, str]] = set()
        for ident in sorted(query.identities):
            for app in identity_index.appearances(ident):
                if app.video_id not in selected_ids:
                    continue
                tree = by_id[app.video_id]
                node = tree.nodes[app.node_id]
                if opts.max_depth is not None:
                    node = _ancestor_at_depth(tree, app.node_id, opts.max_depth)
                key = (ident, app.video_id, node.node_id)
                if key in seen:
                    continue
                seen.add(key)
                hits.append(
                    SearchHit(
                        video_id=app.video_id,
                        node_id=node.node_id,
                        relevance=1.0,
                        interval=node.interval if node.node_id != app.node_id
                        else (app.first_ts, app.last_ts),
                        content_text=node.content_text,
                        flagged=False,
                        kind=HIT_IDENTITY,
                    )
                )

    # Coverage hits surface each tree's root summary. Enumeration tasks
    # always get them; other tasks get one only for trees that produced no
    # other hit, so negative answers stay grounded in examined evidence.
    always_coverage = query.task == "common_identity" or (
        query.task in ("count", "summarize") and not query.identities
    )
    videos_with_hits = {h.video_id for h in hits}
    for tree in trees:
        vid = tree.meta.video_id
        if not always_coverage and vid in videos_with_hits:
            continue
        root = tree.root
        rel = cosine_relevance(query_vec, root) if query_vec is not None else 1.0
        hits.append(
            SearchHit(
                video_id=vid,
                node_id=root.node_id,
                relevance=rel,
                interval=root.interval,
                content_text=root.content_text,
                flagged=False,
                kind=HIT_COVERAGE,
            )
        )
    return hits


# ---------------------------------------------------------------------------
# Stage 4: integration
# ---------------------------------------------------------------------------

def _insufficient() -> Answer:
    return Answer(
        text=INSUFFICIENT_TEXT, payload={}, evidence=[], derived_facts=[],
        insufficient=True,
    )


def _hit_identities(hit: SearchHit, trees: dict[str, VideoTree]) -> frozenset[str]:
    tree = trees.get(hit.video_id)
    if tree is None or hit.node_id not in tree.nodes:
        return frozenset()
    return tree.nodes[hit.node_id].identity_tokens()


def integrate(
    query: StructuredQuery,
    hits: list[SearchHit],
    kb_context: KBContext,
    provider,
    trees: list[VideoTree],
) -> Answer:
    """Task-dispatched synthesis over tree hits and KB evidence. Produces an
    explicit insufficient-evidence answer rather than fabricating claims."""
    by_id = {t.meta.video_id: t for t in trees}
    kb_entries = kb_context.entries

    if query.task == "presence":
        return _integrate_presence(query, hits, kb_context, by_id)
    if query.task == "common_identity":
        return _integrate_common_identity(query, hits, by_id)
    if query.task == "locate":
        return _integrate_locate(query, hits, by_id)
    if query.task == "count":
        return _integrate_count(query, hits, by_id)
    if query.task == "summarize":
        return _integrate_summarize(query, hits, kb_entries, provider, by_id)
    raise ValidationError(f"unknown task {query.task!r}")


def _integrate_presence(
    query: StructuredQuery,
    hits: list[SearchHit],
    kb_context: KBContext,
    trees: dict[str, VideoTree],
) -> Answer:
    idents = sorted(query.identities or ())
    if kb_context.short_circuit_entry is not None:
        entry = kb_context.short_circuit_entry
        present = entry.description.endswith(" present")
        ident = entry.description.rsplit(" ", 1)[0]
        return Answer(
            text=f"{ident} was {'observed' if present else 'not observed'} "
            f"at {entry.location} on {entry.date.isoformat()} (knowledge base)",
            payload={"present": present, "identity": ident, "source": "kb"},
            evidence=[entry],
            derived_facts=[(entry.date, entry.location, entry.description)],
        )

    if not hits and not kb_context.entries:
        return _insufficient()

    # coverage hits never establish presence; they only ground negatives
    support: SearchHit | None = None
    for hit in hits:
        if hit.kind == HIT_IDENTITY:
            support = hit
            break
    if support is None:
        for hit in hits:
            if hit.kind == HIT_COVERAGE:
                continue
            if set(idents) & set(_hit_identities(hit, trees)):
                support = hit
                break

    facts: list[tuple[_dt.date, str, str]] = []
    evidence: list[Any] = list(hits) + kb_context.entries
    if support is not None:
        tree = trees[support.video_id]
        ident = idents[0] if idents else "person"
        for i in idents:
            facts.append(
                (tree.meta.date, tree.meta.location_label, presence_fact(i, True))
            )
        return Answer(
            text=f"{ident} was observed at {tree.meta.location_label} on "
            f"{tree.meta.date.isoformat()} during "
            f"[{support.interval[0]:.2f}s, {support.interval[1]:.2f}s]",
            payload={
                "present": True,
                "identity": ident,
                "video_id": support.video_id,
                "interval": list(support.interval),
            },
            evidence=evidence,
            derived_facts=facts,
        )

    for tree in trees.values():
        for i in idents:
            facts.append(
                (tree.meta.date, tree.meta.location_label, presence_fact(i, False))
            )
    where = ", ".join(sorted(query.locations)) if query.locations else "the selected videos"
    return Answer(
        text=f"{', '.join(idents) or 'the person'} was not observed at {where}",
        payload={"present": False, "identity": idents[0] if idents else None},
        evidence=evidence,
        derived_facts=facts,
    )


def _integrate_common_identity(
    query: StructuredQuery, hits: list[SearchHit], trees: dict[str, VideoTree]
) -> Answer:
    per_video: dict[str, set[str]] = {}
    for hit in hits:
        per_video.setdefault(hit.video_id, set()).update(
            _hit_identities(hit, trees)
        )
    if len(per_video) < 2:
        return _insufficient()
    common: set[str] | None = None
    for idents in per_video.values():
        common = set(idents) if common is None else (common & idents)
    common = common or set()
    videos = sorted(per_video)
    facts = []
    for ident in sorted(common):
        for vid in videos:
            meta = trees[vid].meta
            facts.append((meta.date, meta.location_label, presence_fact(ident, True)))
    text = (
        f"identities common to {', '.join(videos)}: {', '.join(sorted(common)) or 'none'}"
    )
    return Answer(
        text=text,
        payload={"identities": sorted(common), "videos": videos},
        evidence=list(hits),
        derived_facts=facts,
    )


def _integrate_locate(
    query: StructuredQuery, hits: list[SearchHit], trees: dict[str, VideoTree]
) -> Answer:
    idents = sorted(query.identities or ())
    matches = []
    for hit in hits:
        if hit.kind == HIT_IDENTITY:
            matches.append(hit)
    if not matches:
        for hit in hits:
            if hit.kind == HIT_COVERAGE:
                continue
            if set(idents) & set(_hit_identities(hit, trees)):
                matches.append(hit)
    if not matches:
        if not hits:
            return _insufficient()
        return Answer(
            text=f"no located interval for {', '.join(idents)}",
            payload={"matches": []},
            evidence=list(hits),
            derived_facts=[],
        )
    payload_matches = [
        {
            "video_id": m.video_id,
            "node_id": m.node_id,
            "interval": list(m.interval),
            "location": trees[m.video_id].meta.location_label,
            "date": trees[m.video_id].meta.date.isoformat(),
        }
        for m in matches
    ]
    facts = []
    for m in matches:
        meta = trees[m.video_id].meta
        for i in idents:
            facts.append((meta.date, meta.location_label, presence_fact(i, True)))
    spans = "; ".join(
        f"{p['location']} {p['date']} [{p['interval'][0]:.2f}s, {p['interval'][1]:.2f}s]"
        for p in payload_matches
    )
    return Answer(
        text=f"{', '.join(idents)} located at {spans}",
        payload={"matches": payload_matches},
        evidence=list(matches),
        derived_facts=facts,
    )


def _integrate_count(
    query: StructuredQuery, hits: list[SearchHit], trees: dict[str, VideoTree]
) -> Answer:
    if not hits:
        return _insufficient()
    if query.identities:
        # how many distinct locations the queried identities were seen at
        locations = set()
        for hit in hits:
            if hit.kind == HIT_COVERAGE:
                continue
            if hit.kind == HIT_IDENTITY or (
                set(query.identities) & set(_hit_identities(hit, trees))
            ):
                locations.add(trees[hit.video_id].meta.location_label)
        count = len(locations)
        kind = "locations_visited"
        detail = ", ".join(sorted(locations)) or "none"
    else:
        observed = set()
        for hit in hits:
            if hit.kind == HIT_COVERAGE:
                observed |= set(_hit_identities(hit, trees))
        count = len(observed)
        kind = "distinct_identities"
        detail = ", ".join(sorted(observed)) or "none"
    return Answer(
        text=f"count ({kind}): {count} ({detail})",
        payload={"count": count, "kind": kind},
        evidence=list(hits),
        derived_facts=[],
    )


def _integrate_summarize(
    query: StructuredQuery,
    hits: list[SearchHit],
    kb_entries: list[KBEntry],
    provider,
    trees: dict[str, VideoTree],
) -> Answer:
    if not hits and not kb_entries:
        return _insufficient()
    # synthesis runs over tree-derived texts only; KB entries are cited as
    # evidence but their free-text claims are not merged into the summary
    texts: list[str] = []
    for hit in hits:
        if hit.kind == HIT_COVERAGE:
            meta = trees[hit.video_id].meta
            idents = sorted(_hit_identities(hit, trees))
            texts.append(
                f"{meta.location_label} {meta.date.isoformat()}: persons "
                f"{', '.join(idents) or 'none'} observed"
            )
        elif hit.content_text:
            texts.append(hit.content_text)
    summary = provider.synthesize("summarize", texts, query.to_payload())
    return Answer(
        text=summary,
        payload={"summary": summary, "sources": [h.node_id for h in hits]},
        evidence=list(hits) + list(kb_entries),
        derived_facts=[],
    )


# ---------------------------------------------------------------------------
# Engine: the full pipeline
# ---------------------------------------------------------------------------

class Engine:
    """Holds the immutable forest, the knowledge base, and the provider, and
    executes the five-stage pipeline per query."""

    def __init__(
        self,
        forest: Forest,
        kb: KnowledgeBase,
        provider,
        search_opts: SearchOptions | None = None,
        video_filter: bool = True,
    ):
        self.forest = forest
        self.kb = kb
        self.provider = provider
        # pipeline default keeps the fallback on so full-miss queries still
        # surface their best evidence; callers may opt out explicitly
        self.search_opts = search_opts or SearchOptions(leaf_fallback=True)
        self.video_filter = video_filter
        self.last_traces: dict[str, SearchTrace] = {}

    def reflection(self, query: StructuredQuery, answer: Answer) -> Answer:
        """Post-integration hook; intentionally a no-op (semantics left open)."""
        return answer

    def parse(self, raw_query: Any) -> StructuredQuery:
        if isinstance(raw_query, StructuredQuery):
            return raw_query
        if isinstance(raw_query, dict):
            return StructuredQuery.from_payload(raw_query)
        if isinstance(raw_query, str):
            return StructuredQuery.from_payload(self.provider.parse_query(raw_query))
        raise ValidationError(f"unsupported query type {type(raw_query).__name__}")

    def answer_query(self, raw_query: Any) -> tuple[Answer, list[StageRecord]]:
        query = self.parse(raw_query)
        stages: list[StageRecord] = []
        self.last_traces = {}

        trees = filter_videos(query, self.forest, self.video_filter)
        stages.append(
            StageRecord(1, "video_selection", False, f"{len(trees)} trees selected")
        )

        ctx = retrieve_context(query, self.kb)
        stages.append(
            StageRecord(
                2,
                "kb_retrieval",
                False,
                f"{len(ctx.priority)} priority / {len(ctx.rest)} other entries"
                + (", short-circuit" if ctx.short_circuit else ""),
            )
        )

        if ctx.short_circuit:
            hits: list[SearchHit] = []
            stages.append(StageRecord(3, "tree_traversal", True, "short-circuited"))
        else:
            hits = navigate(
                query,
                trees,
                self.provider,
                self.search_opts,
                identity_index=self.forest.identity_index,
                traces=self.last_traces,
            )
            stages.append(StageRecord(3, "tree_traversal", False, f"{len(hits)} hits"))

        if ctx.short_circuit:
            answer = integrate(query, [], ctx, self.provider, trees)
            stages.append(StageRecord(4, "integration", True, "answered from KB"))
        else:
            answer = integrate(query, hits, ctx, self.provider, trees)
            stages.append(StageRecord(4, "integration", False, answer.text[:80]))

        answer = self.reflection(query, answer)

        for date, location, description in answer.derived_facts:
            self.kb.upsert(date, location, description)
        stages.append(
            StageRecord(5, "kb_update", False, f"{len(answer.derived_facts)} upserts")
        )
        return answer, stages
