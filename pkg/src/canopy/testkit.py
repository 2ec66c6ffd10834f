"""Synthetic multi-camera scenarios with ground-truth manifests, plus the
naive brute-force oracles used to cross-check every engine module.

Oracles here are deliberately independent reimplementations: they operate on
plain arrays, dicts, and tuples, import nothing from the engine modules, and
favor from-scratch recomputation over shared state. Scenario generation is
fully deterministic per seed.

Synthetic embeddings are piecewise-constant unit vectors with small additive
jitter, so segment-boundary ground truth is unambiguous: under per-stream
auto-calibrated thresholds, boundaries occur exactly at declared scene
transitions and wherever the emitted person set changes.
"""

from __future__ import annotations

import datetime as _dt
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

JITTER_NORM = 0.02
DEFAULT_DIM = 32
DEFAULT_FPS = 4.0


class InfeasibleSpec(ValueError):
    """Scenario spec that cannot produce a consistent ground truth."""


# ---------------------------------------------------------------------------
# Scenario specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraSpec:
    location: str
    date: str  # ISO date
    duration_frames: int
    transition_frames: tuple[int, ...] = ()

    def __post_init__(self):
        if self.duration_frames < 2:
            raise InfeasibleSpec("camera needs at least 2 frames")
        for t in self.transition_frames:
            if not (1 <= t < self.duration_frames):
                raise InfeasibleSpec(f"transition frame {t} outside (0, duration)")


@dataclass(frozen=True)
class PlantedEvent:
    identity: str
    camera: int
    start_frame: int
    end_frame: int  # inclusive
    description: str = ""


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    cameras: tuple[CameraSpec, ...]
    identity_count: int
    planted_events: tuple[PlantedEvent, ...] = ()
    dim: int = DEFAULT_DIM
    fps: float = DEFAULT_FPS
    reid_noise_rate: float = 0.0

    def __post_init__(self):
        if not self.cameras:
            raise InfeasibleSpec("need at least one camera")
        if not (0.0 <= self.reid_noise_rate <= 1.0):
            raise InfeasibleSpec("reid_noise_rate must lie in [0,1]")
        for ev in self.planted_events:
            if not (0 <= ev.camera < len(self.cameras)):
                raise InfeasibleSpec(f"event camera {ev.camera} out of range")
            cam = self.cameras[ev.camera]
            if not (0 <= ev.start_frame <= ev.end_frame < cam.duration_frames):
                raise InfeasibleSpec(
                    f"event window [{ev.start_frame}, {ev.end_frame}] exceeds "
                    f"camera duration {cam.duration_frames}"
                )

    def video_id(self, camera_index: int) -> str:
        return f"cam{camera_index:02d}"


def default_scenario(seed: int = 7) -> ScenarioSpec:
    """Five cameras over two dates and three locations, with planted events
    covering all four query modalities."""
    d1, d2 = "2024-03-01", "2024-03-02"
    cameras = (
        CameraSpec("Lobby", d1, 240, (80, 160)),
        CameraSpec("Lab", d1, 240, (60, 120, 180)),
        CameraSpec("Atrium", d1, 240, (100,)),
        CameraSpec("Lobby", d2, 240, (70, 150)),
        CameraSpec("Lab", d2, 240, (90, 170)),
    )
    events = (
        # P0 traverses all three day-1 locations
        PlantedEvent("P0", 0, 20, 60, "walks through the lobby"),
        PlantedEvent("P0", 1, 90, 130, "works at a lab bench"),
        PlantedEvent("P0", 2, 150, 200, "crosses the atrium"),
        # P1 and P2 stay in one place
        PlantedEvent("P1", 0, 100, 140, "waits near the entrance"),
        PlantedEvent("P2", 1, 30, 70, "adjusts equipment"),
        # P3 returns to the lobby on the second day
        PlantedEvent("P3", 0, 170, 210, "picks up a package"),
        PlantedEvent("P3", 3, 40, 80, "returns the package"),
        # P4 appears across both dates and two locations
        PlantedEvent("P4", 2, 10, 50, "reads on a bench"),
        PlantedEvent("P4", 1, 200, 230, "visits the lab"),
        PlantedEvent("P4", 4, 120, 160, "resumes lab work"),
        # P5 only on day two
        PlantedEvent("P5", 3, 120, 200, "sweeps the lobby"),
    )
    return ScenarioSpec(seed=seed, cameras=cameras, identity_count=6, planted_events=events)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _linear_path(rng: np.random.Generator, n: int) -> list[tuple[float, float]]:
    a = rng.uniform(0.1, 0.9, size=2)
    b = rng.uniform(0.1, 0.9, size=2)
    if n == 1:
        return [(float(a[0]), float(a[1]))]
    return [
        (
            float(a[0] + (b[0] - a[0]) * k / (n - 1)),
            float(a[1] + (b[1] - a[1]) * k / (n - 1)),
        )
        for k in range(n)
    ]


def generate(spec: ScenarioSpec) -> tuple[dict[str, str], dict, list[dict]]:
    """Emit (documents by video_id, ground-truth manifest, query set).

    Every stream parses under engine ingest; the manifest is recomputed from
    the emitted records, so it stays exact even under identity noise.
    """
    rng = np.random.default_rng(spec.seed)
    identities = [f"P{i}" for i in range(spec.identity_count)]
    for ev in spec.planted_events:
        if ev.identity not in identities:
            raise InfeasibleSpec(f"event identity {ev.identity} not in alphabet")

    documents: dict[str, str] = {}
    emitted_dets: dict[str, list[tuple[int, str]]] = {}
    boundaries: dict[str, list[int]] = {}
    counts: dict[str, dict[str, int]] = {}

    for ci, cam in enumerate(spec.cameras):
        vid = spec.video_id(ci)
        m = cam.duration_frames
        cuts = sorted(set(cam.transition_frames))
        # piece index per frame
        piece = np.zeros(m, dtype=int)
        for t in cuts:
            piece[t:] += 1
        scene_vectors = [_unit(rng, spec.dim) for _ in range(len(cuts) + 1)]

        lines = [
            json.dumps(
                {
                    "type": "meta",
                    "video_id": vid,
                    "location": cam.location,
                    "date": cam.date,
                    "fps": spec.fps,
                    "dim": spec.dim,
                }
            )
        ]
        embs = np.empty((m, spec.dim))
        for j in range(m):
            jitter = rng.standard_normal(spec.dim)
            jitter *= JITTER_NORM / np.linalg.norm(jitter)
            embs[j] = scene_vectors[piece[j]] + jitter
            lines.append(json.dumps({"type": "frame", "idx": j, "emb": embs[j].tolist()}))

        dets: list[tuple[int, str, float, float]] = []
        for ev in spec.planted_events:
            if ev.camera != ci:
                continue
            n = ev.end_frame - ev.start_frame + 1
            path = _linear_path(rng, n)
            for k, j in enumerate(range(ev.start_frame, ev.end_frame + 1)):
                ident = ev.identity
                if spec.reid_noise_rate > 0 and rng.random() < spec.reid_noise_rate:
                    ident = rng.choice(identities)
                dets.append((j, str(ident), path[k][0], path[k][1]))
        # at most one detection of an identity per frame
        deduped: dict[tuple[int, str], tuple[int, str, float, float]] = {}
        for d in dets:
            deduped[(d[0], d[1])] = d
        dets = sorted(deduped.values(), key=lambda d: (d[0], d[1]))
        for j, ident, x, y in dets:
            lines.append(
                json.dumps({"type": "det", "idx": j, "x": x, "y": y, "id": ident})
            )

        documents[vid] = "\n".join(lines) + "\n"
        emitted_dets[vid] = [(j, ident) for j, ident, _, _ in dets]
        counts[vid] = {"frames": m, "detections": len(dets)}

        # ground-truth boundaries: scene transitions plus person-set changes
        idset = [set() for _ in range(m)]
        for j, ident in emitted_dets[vid]:
            idset[j].add(ident)
        bset = set(cuts)
        for j in range(1, m):
            if idset[j] != idset[j - 1]:
                bset.add(j)
        boundaries[vid] = sorted(bset)

        _check_stream_feasibility(embs, cuts, vid)

    manifest = _build_manifest(spec, emitted_dets, boundaries, counts)
    queries = _build_queries(spec, manifest)
    manifest["query_count"] = len(queries)
    return documents, manifest, queries


def _check_stream_feasibility(embs: np.ndarray, cuts: list[int], vid: str) -> None:
    """Transitions must beat per-stream auto-calibrated thresholds; jitter
    must stay well under them."""
    dists = np.linalg.norm(np.diff(embs, axis=0), axis=1)
    if dists.size == 0:
        return
    thr = float(dists.mean() + 2.0 * dists.std())
    cut_d = [dists[t - 1] for t in cuts]
    other = [d for j, d in enumerate(dists, start=1) if j not in set(cuts)]
    if cut_d and min(cut_d) <= thr:
        raise InfeasibleSpec(f"{vid}: transition magnitude below threshold {thr:.3f}")
    if other and max(other) >= thr:
        raise InfeasibleSpec(f"{vid}: jitter reaches calibrated threshold {thr:.3f}")


def _runs(frames: list[int]) -> list[tuple[int, int]]:
    """Contiguous runs (start, end inclusive) of a sorted frame list."""
    runs = []
    for f in sorted(frames):
        if runs and f == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], f)
        else:
            runs.append((f, f))
    return runs


def _build_manifest(spec, emitted_dets, boundaries, counts) -> dict:
    cam_meta = {
        spec.video_id(i): {"location": c.location, "date": c.date}
        for i, c in enumerate(spec.cameras)
    }
    appearance: dict[str, dict[str, list[list[int]]]] = {}
    for vid, dets in emitted_dets.items():
        per_ident: dict[str, list[int]] = {}
        for j, ident in dets:
            per_ident.setdefault(ident, []).append(j)
        for ident, frames in per_ident.items():
            appearance.setdefault(ident, {})[vid] = [list(r) for r in _runs(frames)]
    return {
        "seed": spec.seed,
        "fps": spec.fps,
        "dim": spec.dim,
        "videos": cam_meta,
        "counts": counts,
        "boundaries": boundaries,
        "appearances": appearance,
    }


# ---------------------------------------------------------------------------
# Query/answer-key construction (modality-tagged)
# ---------------------------------------------------------------------------

def oracle_filter(
    metas: list[tuple[str, str, str]],
    date_range: tuple[str, str] | None,
    locations: list[str] | None,
) -> list[str]:
    """Metadata video filter: (video_id, location, iso_date) triples matching
    the constraints, in video_id order."""
    out = []
    for vid, loc, date in sorted(metas):
        if date_range is not None and not (date_range[0] <= date <= date_range[1]):
            continue
        if locations is not None and loc not in locations:
            continue
        out.append(vid)
    return out


def _modality(videos: list[str], cam_meta: dict[str, dict]) -> str:
    locs = {cam_meta[v]["location"] for v in videos}
    dates = {cam_meta[v]["date"] for v in videos}
    if len(locs) > 1 and len(dates) > 1:
        return "cross_spatiotemporal"
    if len(locs) > 1:
        return "cross_spatial"
    if len(dates) > 1:
        return "cross_temporal"
    return "single"


def _build_queries(spec: ScenarioSpec, manifest: dict) -> list[dict]:
    fps = manifest["fps"]
    cam_meta = manifest["videos"]
    metas = [(vid, m["location"], m["date"]) for vid, m in cam_meta.items()]
    appearances = manifest["appearances"]
    all_dates = sorted({m["date"] for m in cam_meta.values()})
    all_locs = sorted({m["location"] for m in cam_meta.values()})
    identities = sorted(appearances)

    def ids_at(vid: str) -> set[str]:
        return {i for i, pervid in appearances.items() if vid in pervid}

    queries: list[dict] = []

    def add(task, description, key, *, locations=None, date_range=None,
            idents=None, modality="single"):
        queries.append(
            {
                "id": f"q{len(queries):03d}",
                "modality": modality,
                "query": {
                    "task": task,
                    "description": description,
                    "locations": locations,
                    "date_range": date_range,
                    "identities": idents,
                    "modality": modality,
                },
                "key": key,
            }
        )

    # presence, per camera: positives for every identity seen there,
    # one negative for an identity verifiably absent
    for vid in sorted(cam_meta):
        loc, date = cam_meta[vid]["location"], cam_meta[vid]["date"]
        present = sorted(ids_at(vid))
        for ident in present:
            add(
                "presence",
                f"was {ident} at {loc} on {date}",
                {"kind": "presence", "expected": True},
                locations=[loc],
                date_range=[date, date],
                idents=[ident],
            )
        absent = [i for i in identities if i not in present]
        if absent:
            add(
                "presence",
                f"was {absent[0]} at {loc} on {date}",
                {"kind": "presence", "expected": False},
                locations=[loc],
                date_range=[date, date],
                idents=[absent[0]],
            )

    # locate, per identity and date window
    def windows_for(ident: str, date_range: tuple[str, str]) -> dict[str, list[list[float]]]:
        out: dict[str, list[list[float]]] = {}
        for vid, runs in appearances.get(ident, {}).items():
            if not (date_range[0] <= cam_meta[vid]["date"] <= date_range[1]):
                continue
            out[vid] = [[r[0] / fps, r[1] / fps] for r in runs]
        return out

    for ident in identities:
        dates_seen = sorted(
            {cam_meta[v]["date"] for v in appearances[ident]}
        )
        for date in dates_seen:
            wins = windows_for(ident, (date, date))
            videos = sorted(wins)
            add(
                "locate",
                f"where was {ident} on {date}",
                {"kind": "locate", "windows": wins},
                date_range=[date, date],
                idents=[ident],
                modality=_modality(videos, cam_meta),
            )
        if len(dates_seen) > 1:
            span = (all_dates[0], all_dates[-1])
            wins = windows_for(ident, span)
            videos = sorted(wins)
            add(
                "locate",
                f"where was {ident} that week",
                {"kind": "locate", "windows": wins},
                date_range=[span[0], span[1]],
                idents=[ident],
                modality=_modality(videos, cam_meta),
            )

    # counts: distinct identities per camera; locations visited per identity
    for vid in sorted(cam_meta):
        loc, date = cam_meta[vid]["location"], cam_meta[vid]["date"]
        add(
            "count",
            f"how many people were at {loc} on {date}",
            {"kind": "count", "expected": len(ids_at(vid))},
            locations=[loc],
            date_range=[date, date],
        )
    for ident in identities:
        for dr in [(d, d) for d in all_dates] + [(all_dates[0], all_dates[-1])]:
            wins = windows_for(ident, dr)
            if not wins:
                continue
            videos = sorted(wins)
            locs = {cam_meta[v]["location"] for v in videos}
            add(
                "count",
                f"how many locations did {ident} visit between {dr[0]} and {dr[1]}",
                {"kind": "count", "expected": len(locs)},
                date_range=[dr[0], dr[1]],
                idents=[ident],
                modality=_modality(videos, cam_meta),
            )

    # common identity across video groups selected by (locations, dates)
    group_constraints = []
    for date in all_dates:
        locs = sorted(
            {m["location"] for m in cam_meta.values() if m["date"] == date}
        )
        if len(locs) >= 2:
            group_constraints.append((locs, (date, date)))
    for loc in all_locs:
        dates = sorted({m["date"] for m in cam_meta.values() if m["location"] == loc})
        if len(dates) >= 2:
            group_constraints.append(([loc], (dates[0], dates[-1])))
    if len(all_locs) >= 2 and len(all_dates) >= 2:
        group_constraints.append((all_locs[:2], (all_dates[0], all_dates[-1])))
        group_constraints.append((all_locs, (all_dates[0], all_dates[-1])))

    for locs, dr in group_constraints:
        videos = oracle_filter(metas, dr, locs)
        if len(videos) < 2:
            continue
        common = set(identities)
        for vid in videos:
            common &= ids_at(vid)
        add(
            "common_identity",
            f"who appeared in {' and '.join(locs)} between {dr[0]} and {dr[1]}",
            {"kind": "common_identity", "expected": sorted(common)},
            locations=list(locs),
            date_range=[dr[0], dr[1]],
            modality=_modality(videos, cam_meta),
        )

    # summaries, per camera: must mention everyone there, nobody else
    for vid in sorted(cam_meta):
        loc, date = cam_meta[vid]["location"], cam_meta[vid]["date"]
        present = sorted(ids_at(vid))
        absent = sorted(set(identities) - set(present))
        add(
            "summarize",
            f"summarize {loc} on {date}",
            {"kind": "summarize", "must_mention": present, "must_not_mention": absent},
            locations=[loc],
            date_range=[date, date],
        )

    return queries


def answer_matches(key: dict, answer: dict) -> bool:
    """Check an engine answer document (text/payload/insufficient) against a
    manifest answer key. Pure dict comparison; no engine types involved."""
    if answer.get("insufficient"):
        return False
    payload = answer.get("payload", {})
    kind = key["kind"]
    if kind == "presence":
        return payload.get("present") is key["expected"]
    if kind == "count":
        return payload.get("count") == key["expected"]
    if kind == "common_identity":
        return sorted(payload.get("identities", ())) == key["expected"]
    if kind == "locate":
        matches = payload.get("matches", [])
        windows: dict[str, list[list[float]]] = key["windows"]
        if not windows:
            return not matches
        if not matches:
            return False
        slack = 0.5
        covered: set[str] = set()
        for m in matches:
            vid = m.get("video_id")
            if vid not in windows:
                return False
            lo, hi = m.get("interval", (None, None))
            ok = any(
                w[0] - slack <= lo and hi <= w[1] + slack for w in windows[vid]
            )
            if not ok:
                return False
            covered.add(vid)
        return covered == set(windows)
    if kind == "summarize":
        text = answer.get("text", "")
        for ident in key["must_mention"]:
            if not re.search(rf"\b{re.escape(ident)}\b", text):
                return False
        for ident in key["must_not_mention"]:
            if re.search(rf"\b{re.escape(ident)}\b", text):
                return False
        return True
    raise ValueError(f"unknown key kind {kind!r}")


def verify_manifest(documents: dict[str, str], manifest: dict) -> list[str]:
    """Replay the manifest against the raw streams via direct scans.

    Returns a list of disagreement descriptions (empty means full fidelity).
    """
    problems: list[str] = []
    for vid, text in documents.items():
        frames = 0
        dets: list[tuple[int, str]] = []
        header = None
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["type"] == "meta":
                header = rec
            elif rec["type"] == "frame":
                frames += 1
            elif rec["type"] == "det":
                dets.append((rec["idx"], rec["id"]))
        counts = manifest["counts"][vid]
        if counts["frames"] != frames:
            problems.append(f"{vid}: manifest frames {counts['frames']} != {frames}")
        if counts["detections"] != len(dets):
            problems.append(
                f"{vid}: manifest detections {counts['detections']} != {len(dets)}"
            )
        meta = manifest["videos"][vid]
        if header is None or header["location"] != meta["location"] or header["date"] != meta["date"]:
            problems.append(f"{vid}: manifest meta disagrees with stream header")

        per_ident: dict[str, list[int]] = {}
        for j, ident in dets:
            per_ident.setdefault(ident, []).append(j)
        for ident, frames_list in per_ident.items():
            runs = [list(r) for r in _runs(frames_list)]
            claimed = manifest["appearances"].get(ident, {}).get(vid)
            if claimed != runs:
                problems.append(f"{vid}/{ident}: appearance runs {claimed} != {runs}")
        for ident, pervid in manifest["appearances"].items():
            if vid in pervid and ident not in per_ident:
                problems.append(f"{vid}/{ident}: claimed appearance not in stream")
    return problems


def write_scenario(spec: ScenarioSpec, out_dir: str | Path) -> dict:
    """Materialize a scenario to disk: streams, manifest.json, queries.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    documents, manifest, queries = generate(spec)
    for vid, text in documents.items():
        (out / f"{vid}.jsonl").write_text(text, encoding="utf-8")
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    (out / "queries.json").write_text(
        json.dumps(queries, indent=2), encoding="utf-8"
    )
    return {"videos": sorted(documents), "queries": len(queries)}


# ---------------------------------------------------------------------------
# Oracles (naive, literal, engine-independent)
# ---------------------------------------------------------------------------

def oracle_segment_boundaries(
    embeddings: np.ndarray,
    identity_sets: list[set[str]],
    eps1: float,
    eps2: float,
    delta_p: int,
) -> list[int]:
    """Literal per-frame re-evaluation of the three boundary criteria.

    The open segment's mean is recomputed from scratch at every step.
    Returns the frame indices where new segments start.
    """
    m = len(identity_sets)
    boundaries = []
    seg_start = 0
    for j in range(1, m):
        c1 = float(np.linalg.norm(embeddings[j] - embeddings[j - 1])) > eps1
        centroid = embeddings[seg_start:j].mean(axis=0)
        c2 = float(np.linalg.norm(embeddings[j] - centroid)) > eps2
        c3 = len(identity_sets[j] ^ identity_sets[j - 1]) >= delta_p
        if c1 or c2 or c3:
            boundaries.append(j)
            seg_start = j
    return boundaries


@dataclass
class PlainSearchNode:
    """Minimal tree shape for the search oracle."""

    node_id: str
    identities: frozenset[str]
    depth: int
    children: list["PlainSearchNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


def oracle_search(
    root: PlainSearchNode,
    relevance: dict[str, float],
    tau_rel: float,
    required: frozenset[str] = frozenset(),
    use_reid: bool = True,
    max_depth: int | None = None,
    leaf_fallback: bool = False,
) -> tuple[list[str], list[str]]:
    """Literal recursive threshold search. Returns (emitted, visited) node
    ids in visit order."""
    emitted: list[str] = []
    visited: list[str] = []
    best_leaf: list[tuple[float, str]] = []

    def go(node: PlainSearchNode) -> None:
        if use_reid and required and not required <= node.identities:
            return
        rel = relevance[node.node_id]
        visited.append(node.node_id)
        if rel >= tau_rel:
            emitted.append(node.node_id)
            return
        if max_depth is not None and node.depth >= max_depth:
            if leaf_fallback:
                emitted.append(node.node_id)
            return
        if node.is_leaf:
            if not best_leaf or rel > best_leaf[0][0]:
                best_leaf[:] = [(rel, node.node_id)]
            return
        for child in node.children:
            go(child)

    go(root)
    if not emitted and leaf_fallback and best_leaf:
        emitted.append(best_leaf[0][1])
    return emitted, visited


def oracle_kb(
    operations: list[tuple[str, str, str]],
    c_max: int,
    tau_sim: float,
    similarity,
) -> list[tuple[str, str, str, int]]:
    """Literal four-branch update table applied to a list model of the store.

    Operations are (date, location, description) upserts; returns the final
    entries in storage order as (date, location, description, confidence).
    """
    entries: list[list] = []  # [date, loc, desc, conf]
    for date, loc, desc in operations:
        hit = None
        for e in entries:
            if e[0] == date and e[1] == loc and e[2] == desc:
                hit = e
                break
        if hit is not None:
            hit[3] = min(hit[3] + 1, c_max)
            continue
        best = None
        best_sim = -1.0
        for e in entries:
            if e[0] != date or e[1] != loc or e[2] == desc:
                continue
            s = similarity(desc, e[2])
            if s > tau_sim and s > best_sim:
                best, best_sim = e, s
        if best is not None:
            if best[3] > 2:
                best[3] -= 1
            else:
                best[0], best[1], best[2], best[3] = date, loc, desc, 1
            continue
        entries.append([date, loc, desc, 1])
    return [tuple(e) for e in entries]


# ---------------------------------------------------------------------------
# Randomized inputs for module-level oracle comparisons
# ---------------------------------------------------------------------------

def random_stream_document(
    seed: int,
    max_frames: int = 200,
    dim_choices: tuple[int, ...] = (4, 8, 16),
    identity_pool: tuple[str, ...] = ("A", "B", "C", "D"),
    dim: int | None = None,
) -> str:
    """One random feature-stream document: a jittery random walk with
    occasional sharp jumps and random identity churn."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, max_frames + 1))
    if dim is None:
        dim = int(rng.choice(dim_choices))
    fps = float(rng.choice([2.0, 4.0, 10.0]))
    lines = [
        json.dumps(
            {
                "type": "meta",
                "video_id": f"rand{seed}",
                "location": "X",
                "date": "2024-01-01",
                "fps": fps,
                "dim": dim,
            }
        )
    ]
    emb = _unit(rng, dim)
    current: set[str] = set()
    for j in range(m):
        if j > 0:
            if rng.random() < 0.1:
                emb = _unit(rng, dim)  # sharp jump
            else:
                step = rng.standard_normal(dim) * rng.uniform(0.0, 0.1)
                emb = emb + step
        lines.append(json.dumps({"type": "frame", "idx": j, "emb": emb.tolist()}))
        if rng.random() < 0.3:
            churn = rng.choice(len(identity_pool)) + 1
            current = set(rng.choice(identity_pool, size=churn, replace=False).tolist())
        elif rng.random() < 0.1:
            current = set()
        for ident in sorted(current):
            lines.append(
                json.dumps(
                    {
                        "type": "det",
                        "idx": j,
                        "x": float(rng.uniform(0, 1)),
                        "y": float(rng.uniform(0, 1)),
                        "id": ident,
                    }
                )
            )
    return "\n".join(lines) + "\n"


def random_segmenter_config(seed: int, distances: np.ndarray) -> tuple[float, float, int]:
    """Random thresholds spanning interesting regimes of a distance sample."""
    rng = np.random.default_rng(seed)
    if distances.size == 0:
        return 0.5, 0.5, 1
    lo, hi = float(distances.min()), float(distances.max()) * 1.5 + 0.1
    eps1 = float(rng.uniform(lo, hi))
    eps2 = float(rng.uniform(lo, hi * 1.5))
    delta_p = int(rng.integers(1, 4))
    return eps1, eps2, delta_p
