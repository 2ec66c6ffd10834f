"""Threshold-gated recursive tree search with optional identity pruning.

Semantics per node, starting at the root:

  * with identity pruning on and required identities given, any subtree
    whose summary lacks a required identity is skipped before scoring;
  * the node is scored; relevance >= tau_rel emits the node and stops the
    descent on that branch; otherwise the search recurses into all children
    in temporal order;
  * leaves below the threshold contribute nothing by default — with
    ``leaf_fallback`` the single best-scoring leaf of an otherwise empty
    search is emitted, flagged;
  * with ``max_depth`` set, recursion stops at that depth: cutoff nodes are
    emitted when above threshold, or flagged when ``leaf_fallback`` is on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from canopy.errors import ProviderError
from canopy.forest import TreeNode, VideoTree

RelevanceFn = Callable[[np.ndarray, TreeNode], float]

HIT_SEMANTIC = "semantic"
HIT_FALLBACK = "fallback"
HIT_IDENTITY = "identity"
HIT_COVERAGE = "coverage"


@dataclass(frozen=True)
class SearchOptions:
    tau_rel: float = 0.7
    use_reid: bool = True
    max_depth: int | None = None
    leaf_fallback: bool = False

    def __post_init__(self):
        if not (0.0 <= self.tau_rel <= 1.0):
            raise ValueError(f"tau_rel must lie in [0,1], got {self.tau_rel}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 when present")


@dataclass(frozen=True)
class SearchHit:
    video_id: str
    node_id: str
    relevance: float
    interval: tuple[float, float]
    content_text: str | None = None
    flagged: bool = False  # produced via fallback, below threshold
    kind: str = HIT_SEMANTIC


@dataclass(frozen=True)
class TraceEntry:
    node_id: str
    relevance: float
    depth: int
    emitted: bool


@dataclass
class SearchTrace:
    entries: list[TraceEntry] = field(default_factory=list)

    def record(self, node: TreeNode, relevance: float, emitted: bool) -> None:
        self.entries.append(TraceEntry(node.node_id, relevance, node.depth, emitted))

    def __len__(self) -> int:
        return len(self.entries)


def visited_nodes(trace: SearchTrace) -> list[str]:
    """Ordered node ids scored during a traced search."""
    return [e.node_id for e in trace.entries]


def cosine_relevance(query_vector: np.ndarray, node: TreeNode) -> float:
    """Default relevance: cosine similarity mapped to [0,1] via (1+cos)/2."""
    content = node.content
    qn = float(np.linalg.norm(query_vector))
    cn = float(np.linalg.norm(content))
    if qn == 0.0 or cn == 0.0:
        return 0.5
    cos = float(np.dot(query_vector, content) / (qn * cn))
    return min(1.0, max(0.0, (1.0 + cos) / 2.0))


def search(
    query_vector: np.ndarray,
    required_identities: frozenset[str] | set[str] | None,
    tree: VideoTree,
    relevance: RelevanceFn,
    opts: SearchOptions,
    trace: SearchTrace | None = None,
) -> list[SearchHit]:
    """Recursive threshold search of one tree. Returns hits in temporal
    order; scored nodes are appended to *trace* when given."""
    required = frozenset(required_identities or ())
    hits: list[SearchHit] = []
    best_fallback: list[tuple[float, TreeNode]] = []  # singleton: best below-threshold leaf

    def score(node: TreeNode) -> float:
        try:
            value = float(relevance(query_vector, node))
        except Exception as exc:  # provider-backed relevance may fail
            if isinstance(exc, ProviderError):
                raise
            raise ProviderError(f"relevance evaluation failed at {node.node_id}: {exc}") from exc
        return value

    def emit(node: TreeNode, rel: float, flagged: bool, kind: str) -> None:
        hits.append(
            SearchHit(
                video_id=tree.meta.video_id,
                node_id=node.node_id,
                relevance=rel,
                interval=node.interval,
                content_text=node.content_text,
                flagged=flagged,
                kind=kind,
            )
        )

    def consider_fallback(node: TreeNode, rel: float) -> None:
        if not best_fallback or rel > best_fallback[0][0]:
            best_fallback[:] = [(rel, node)]

    def visit(node: TreeNode) -> None:
        if opts.use_reid and required and not required <= node.identity_tokens():
            return  # pruned before scoring
        at_cutoff = opts.max_depth is not None and node.depth >= opts.max_depth
        rel = score(node)
        if rel >= opts.tau_rel:
            if trace is not None:
                trace.record(node, rel, emitted=True)
            emit(node, rel, flagged=False, kind=HIT_SEMANTIC)
            return
        if trace is not None:
            trace.record(node, rel, emitted=False)
        if at_cutoff:
            if opts.leaf_fallback:
                emit(node, rel, flagged=True, kind=HIT_FALLBACK)
            return
        if node.is_leaf:
            consider_fallback(node, rel)
            return
        for child_id in node.children:
            visit(tree.nodes[child_id])

    visit(tree.root)

    if not hits and opts.leaf_fallback and best_fallback:
        rel, node = best_fallback[0]
        emit(node, rel, flagged=True, kind=HIT_FALLBACK)
    return hits
