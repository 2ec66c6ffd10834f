"""Operator command line: ingest, build, query, kb, synth, and eval.

Machine-readable output goes to stdout (JSON when --json is given); human
diagnostics go to stderr. Exit codes: 0 success, 2 validation error,
3 provider failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from canopy import testkit
from canopy.agents import Engine, StructuredQuery
from canopy.config import EngineConfig, resolve_config
from canopy.encoding import encode_all
from canopy.errors import (
    EngineError,
    IngestError,
    PersistenceError,
    ProviderError,
    ValidationError,
)
from canopy.forest import Forest, build_tree, save_forest, load_forest, validate_tree
from canopy.kb import KBConfig, KnowledgeBase, load_kb, save_kb
from canopy.model import Corpus, ingest_stream
from canopy.providers import CountingProvider, make_provider
from canopy.reid import build_index
from canopy.search import SearchOptions
from canopy.segmentation import SegmenterConfig, calibrate, segment_stream

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PROVIDER = 3


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(doc, as_json: bool, human: str | None = None) -> None:
    if as_json:
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(human if human is not None else json.dumps(doc, indent=2, sort_keys=True))


def _provider_from_args(cfg: EngineConfig, dim: int):
    mode, address = cfg.provider_mode, cfg.provider_address
    return CountingProvider(make_provider(mode, address, dim=dim))


def _segmenter_config(cfg: EngineConfig, stream) -> SegmenterConfig:
    if cfg.auto_calibrate or cfg.eps1 is None or cfg.eps2 is None:
        auto = calibrate(stream.frames, delta_p=cfg.delta_p)
        return SegmenterConfig(
            eps1=cfg.eps1 if cfg.eps1 is not None else auto.eps1,
            eps2=cfg.eps2 if cfg.eps2 is not None else auto.eps2,
            delta_p=cfg.delta_p,
        )
    return SegmenterConfig(eps1=cfg.eps1, eps2=cfg.eps2, delta_p=cfg.delta_p)


def build_forest_from_corpus(corpus: Corpus, cfg: EngineConfig, provider) -> Forest:
    if len(corpus) == 0:
        raise ValidationError("empty corpus: nothing to build")
    trees = {}
    for stream in corpus:
        seg_cfg = _segmenter_config(cfg, stream)
        segments = segment_stream(stream, seg_cfg)
        encodings = encode_all(
            segments, stream.frames, stream.detections, provider, max_concurrency=4
        )
        tree = build_tree(segments, encodings, stream.detections, stream.meta, cfg.fanout)
        violations = validate_tree(tree, detections=stream.detections, fanout=cfg.fanout)
        if violations:
            raise EngineError(
                f"built tree failed validation for {stream.meta.video_id}: "
                f"{violations[0].kind}: {violations[0].message}"
            )
        trees[stream.meta.video_id] = tree
    forest = Forest(trees=trees)
    forest.identity_index = build_index(forest)
    return forest


def _search_options(cfg: EngineConfig) -> SearchOptions:
    return SearchOptions(
        tau_rel=cfg.tau_rel,
        use_reid=cfg.use_reid,
        max_depth=cfg.max_depth,
        leaf_fallback=cfg.leaf_fallback,
    )


def _load_engine(cfg: EngineConfig) -> Engine:
    forest = load_forest(cfg.forest_path)
    kb_path = Path(cfg.kb_path)
    if kb_path.exists():
        kb = load_kb(kb_path)
    else:
        kb = KnowledgeBase(KBConfig(cfg.c_max, cfg.tau_sim, cfg.tau_conf))
    dim = 0
    for tree in forest.trees.values():
        dim = tree.root.content.shape[0]
        break
    provider = _provider_from_args(cfg, dim=dim or 32)
    return Engine(
        forest,
        kb,
        provider,
        search_opts=_search_options(cfg),
        video_filter=cfg.video_filter,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(args, cfg: EngineConfig) -> int:
    reports = []
    for path in args.streams:
        stream = ingest_stream(path)
        reports.append(
            {
                "video_id": stream.meta.video_id,
                "location": stream.meta.location_label,
                "date": stream.meta.date.isoformat(),
                "frames": stream.meta.frame_count,
                "detections": len(stream.detections),
                "dim": stream.dim,
            }
        )
    human = "\n".join(
        f"{r['video_id']}: {r['frames']} frames, {r['detections']} detections "
        f"({r['location']} {r['date']}, d={r['dim']})"
        for r in reports
    )
    _emit({"videos": reports}, args.json, human)
    return EXIT_OK


def cmd_build(args, cfg: EngineConfig) -> int:
    paths = sorted(Path(p) for p in args.streams)
    if not paths:
        raise ValidationError("no stream files given")
    corpus = Corpus(ingest_stream(p) for p in paths)
    provider = _provider_from_args(cfg, dim=corpus.dim or 32)
    t0 = time.perf_counter()
    forest = build_forest_from_corpus(corpus, cfg, provider)
    save_forest(forest, args.out or cfg.forest_path)
    elapsed = time.perf_counter() - t0
    report = {
        "videos": len(forest.trees),
        "nodes": sum(len(t.nodes) for t in forest.trees.values()),
        "leaves": sum(t.leaf_count for t in forest.trees.values()),
        "identities": sorted(forest.identity_index.identities),
        "out": str(args.out or cfg.forest_path),
        "seconds": round(elapsed, 3),
    }
    _emit(
        report,
        args.json,
        f"built {report['videos']} trees ({report['nodes']} nodes, "
        f"{report['leaves']} leaves) -> {report['out']} in {report['seconds']}s",
    )
    return EXIT_OK


def cmd_query(args, cfg: EngineConfig) -> int:
    if bool(args.file) == bool(args.text):
        raise ValidationError("provide exactly one of --file or --text")
    engine = _load_engine(cfg)
    if args.file:
        try:
            raw = json.loads(Path(args.file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read query file {args.file}: {exc}") from exc
    else:
        raw = args.text
    answer, stages = engine.answer_query(raw)
    save_kb(engine.kb, cfg.kb_path)
    doc = answer.to_payload()
    doc["stages"] = [
        {"index": s.index, "name": s.name, "skipped": s.skipped, "detail": s.detail}
        for s in stages
    ]
    if args.trace:
        trace_records = [
            {"video_id": vid, "node_id": e.node_id, "relevance": e.relevance,
             "depth": e.depth, "emitted": e.emitted}
            for vid, trace in sorted(engine.last_traces.items())
            for e in trace.entries
        ]
        doc["search_trace"] = trace_records
        for record in trace_records:  # line-delimited scored-node stream
            print(json.dumps(record), file=sys.stderr)
    _emit(doc, True)  # answers are always machine-readable JSON
    return EXIT_OK


def cmd_kb(args, cfg: EngineConfig) -> int:
    kb_path = Path(cfg.kb_path)
    kb = load_kb(kb_path) if kb_path.exists() else KnowledgeBase(
        KBConfig(cfg.c_max, cfg.tau_sim, cfg.tau_conf)
    )
    if args.kb_command == "show":
        entries = [
            {
                "date": e.date.isoformat(),
                "location": e.location,
                "description": e.description,
                "confidence": e.confidence,
            }
            for e in kb.entries()
        ]
        human = "\n".join(
            f"[c={e['confidence']}] {e['date']} @ {e['location']}: {e['description']}"
            for e in entries
        ) or "(empty)"
        _emit({"entries": entries}, args.json, human)
        return EXIT_OK
    if args.kb_command == "upsert":
        import datetime as _dt

        try:
            date = _dt.date.fromisoformat(args.date)
        except ValueError as exc:
            raise ValidationError(f"bad --date {args.date!r}") from exc
        result = kb.upsert(date, args.location, args.description)
        save_kb(kb, kb_path)
        _emit(
            {"action": result.action, "confidence": result.entry.confidence},
            args.json,
            f"{result.action}: confidence {result.entry.confidence}",
        )
        return EXIT_OK
    if args.kb_command == "compact":
        removed = kb.compact()
        save_kb(kb, kb_path)
        _emit({"removed": removed}, args.json, f"removed {removed} entries")
        return EXIT_OK
    raise ValidationError(f"unknown kb subcommand {args.kb_command!r}")


def cmd_synth(args, cfg: EngineConfig) -> int:
    if args.spec:
        try:
            raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read scenario spec: {exc}") from exc
        spec = _scenario_from_payload(raw, seed=args.seed)
    else:
        spec = testkit.default_scenario(seed=args.seed if args.seed is not None else 7)
    report = testkit.write_scenario(spec, args.out)
    _emit(
        report,
        args.json,
        f"wrote {len(report['videos'])} streams and {report['queries']} queries to {args.out}",
    )
    return EXIT_OK


def _scenario_from_payload(raw: dict, seed: int | None) -> testkit.ScenarioSpec:
    try:
        cameras = tuple(
            testkit.CameraSpec(
                location=c["location"],
                date=c["date"],
                duration_frames=c["duration_frames"],
                transition_frames=tuple(c.get("transition_frames", ())),
            )
            for c in raw["cameras"]
        )
        events = tuple(
            testkit.PlantedEvent(
                identity=e["identity"],
                camera=e["camera"],
                start_frame=e["start_frame"],
                end_frame=e["end_frame"],
                description=e.get("description", ""),
            )
            for e in raw.get("planted_events", ())
        )
        return testkit.ScenarioSpec(
            seed=seed if seed is not None else raw.get("seed", 0),
            cameras=cameras,
            identity_count=raw["identity_count"],
            planted_events=events,
            dim=raw.get("dim", testkit.DEFAULT_DIM),
            fps=raw.get("fps", testkit.DEFAULT_FPS),
            reid_noise_rate=raw.get("reid_noise_rate", 0.0),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scenario spec: {exc}") from exc


def run_eval(
    scenario_dir: str | Path,
    cfg: EngineConfig,
    ablations: bool = False,
) -> dict:
    """Run the query suite of a materialized scenario against a freshly built
    forest; report accuracy per modality, optionally per ablation row."""
    scenario_dir = Path(scenario_dir)
    stream_paths = sorted(scenario_dir.glob("*.jsonl"))
    queries_path = scenario_dir / "queries.json"
    if not stream_paths or not queries_path.exists():
        raise ValidationError(f"{scenario_dir} lacks streams or queries.json")
    queries = json.loads(queries_path.read_text(encoding="utf-8"))

    corpus = Corpus(ingest_stream(p) for p in stream_paths)
    provider = _provider_from_args(cfg, dim=corpus.dim or 32)
    forest = build_forest_from_corpus(corpus, cfg, provider)

    rows = {"default": cfg}
    if ablations:
        from dataclasses import replace

        rows["no_reid_in_search"] = replace(cfg, use_reid=False)
        rows["no_video_filter"] = replace(cfg, video_filter=False)
        rows["depth_limited"] = replace(cfg, max_depth=1)

    report: dict = {"rows": {}}
    for row_name, row_cfg in rows.items():
        provider_row = _provider_from_args(row_cfg, dim=corpus.dim or 32)
        kb = KnowledgeBase(KBConfig(row_cfg.c_max, row_cfg.tau_sim, row_cfg.tau_conf))
        engine = Engine(
            forest,
            kb,
            provider_row,
            search_opts=_search_options(row_cfg),
            video_filter=row_cfg.video_filter,
        )
        per_modality: dict[str, list[int]] = {}
        failures = []
        for q in queries:
            answer, _ = engine.answer_query(q["query"])
            ok = testkit.answer_matches(q["key"], answer.to_payload())
            per_modality.setdefault(q["modality"], []).append(1 if ok else 0)
            if not ok:
                failures.append(q["id"])
        accuracy = {
            tag: sum(vals) / len(vals) for tag, vals in sorted(per_modality.items())
        }
        overall = sum(sum(v) for v in per_modality.values()) / max(
            1, sum(len(v) for v in per_modality.values())
        )
        report["rows"][row_name] = {
            "accuracy": accuracy,
            "overall": overall,
            "failures": failures,
        }
    return report


def cmd_eval(args, cfg: EngineConfig) -> int:
    report = run_eval(args.dir, cfg, ablations=args.ablations)
    lines = []
    for row, data in report["rows"].items():
        acc = " ".join(f"{tag}={val:.2%}" for tag, val in data["accuracy"].items())
        lines.append(f"{row}: overall={data['overall']:.2%} {acc}")
    _emit(report, args.json, "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file path (or ENGINE_CONFIG env var)")
    parser.add_argument("--json", action="store_true", help="machine-readable stdout")
    parser.add_argument("--provider", help="mock | subprocess:CMD | http:URL")
    parser.add_argument("--tau-rel", type=float, dest="tau_rel")
    parser.add_argument("--no-reid", action="store_true", help="disable identity pruning")
    parser.add_argument("--no-filter", action="store_true", help="disable video filter")
    parser.add_argument("--max-depth", type=int, dest="max_depth")
    fallback = parser.add_mutually_exclusive_group()
    fallback.add_argument(
        "--leaf-fallback", action="store_true", dest="leaf_fallback", default=None,
        help="emit the best below-threshold leaf on full-miss searches (default)",
    )
    fallback.add_argument(
        "--no-leaf-fallback", action="store_false", dest="leaf_fallback", default=None,
    )
    parser.add_argument("--forest", dest="forest_path", help="forest file path")
    parser.add_argument("--kb", dest="kb_path", help="knowledge-base file path")
    parser.add_argument("--seed", type=int, help="generator seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canopy",
        description="cross-video indexing and question answering engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate feature-stream documents")
    p.add_argument("streams", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build", help="build and persist the forest")
    p.add_argument("streams", nargs="*")
    p.add_argument("--out", help="output forest path")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="answer one query")
    p.add_argument("--file", help="structured query JSON file")
    p.add_argument("--text", help="natural-language query (provider-parsed)")
    p.add_argument("--trace", action="store_true", help="include search trace")
    _add_common(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("kb", help="knowledge-base management")
    kb_sub = p.add_subparsers(dest="kb_command", required=True)
    ps = kb_sub.add_parser("show")
    _add_common(ps)
    ps.set_defaults(func=cmd_kb)
    pu = kb_sub.add_parser("upsert")
    pu.add_argument("--date", required=True)
    pu.add_argument("--location", required=True)
    pu.add_argument("--description", required=True)
    _add_common(pu)
    pu.set_defaults(func=cmd_kb)
    pc = kb_sub.add_parser("compact")
    _add_common(pc)
    pc.set_defaults(func=cmd_kb)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--spec", help="scenario spec JSON (omit for the demo scenario)")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="run a scenario's query suite and score it")
    p.add_argument("--dir", required=True, help="scenario directory (synth output)")
    p.add_argument("--ablations", action="store_true", help="include toggle-off rows")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    return parser


def _flag_overrides(args) -> dict:
    overrides: dict = {}
    if getattr(args, "provider", None):
        spec = args.provider
        if ":" in spec and not spec.startswith("mock"):
            mode, address = spec.split(":", 1)
            overrides["provider_mode"] = mode
            overrides["provider_address"] = address
        else:
            overrides["provider_mode"] = spec
    if getattr(args, "tau_rel", None) is not None:
        overrides["tau_rel"] = args.tau_rel
    if getattr(args, "no_reid", False):
        overrides["use_reid"] = False
    if getattr(args, "no_filter", False):
        overrides["video_filter"] = False
    if getattr(args, "max_depth", None) is not None:
        overrides["max_depth"] = args.max_depth
    if getattr(args, "leaf_fallback", None) is not None:
        overrides["leaf_fallback"] = args.leaf_fallback
    if getattr(args, "forest_path", None):
        overrides["forest_path"] = args.forest_path
    if getattr(args, "kb_path", None):
        overrides["kb_path"] = args.kb_path
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(getattr(args, "config", None), _flag_overrides(args))
        return args.func(args, cfg)
    except ProviderError as exc:
        _say(f"provider error: {exc}")
        return EXIT_PROVIDER
    except (ValidationError, IngestError, PersistenceError, testkit.InfeasibleSpec) as exc:
        _say(f"error: {exc}")
        return EXIT_VALIDATION
    except EngineError as exc:
        _say(f"error: {exc}")
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
