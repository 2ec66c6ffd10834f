"""Adapter command line: `adapter extract` and `adapter serve`."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from feature_adapter import AdapterError
from feature_adapter.extract import VideoJob, extract, write_documents
from feature_adapter.models import AdapterConfig
from feature_adapter.rpc import ProviderService, serve_http, serve_stdio


def _config_from_args(args) -> AdapterConfig:
    kwargs = {}
    if args.dim is not None:
        kwargs["dim"] = args.dim
    if getattr(args, "sample_rate", None) is not None:
        kwargs["sample_rate"] = args.sample_rate
    if args.embedder:
        kwargs["embedder"] = args.embedder
    if args.tracker:
        kwargs["tracker"] = args.tracker
    return AdapterConfig(**kwargs)


def cmd_extract(args) -> int:
    if len(args.video) != len(args.location) or len(args.video) != len(args.date):
        print("error: each --video needs a matching --location and --date", file=sys.stderr)
        return 2
    config = _config_from_args(args)
    jobs = [
        VideoJob(
            path=video,
            video_id=args.video_id[i] if args.video_id else Path(video).stem,
            location=args.location[i],
            date=args.date[i],
        )
        for i, video in enumerate(args.video)
    ]
    documents = extract(jobs, config)
    written = write_documents(documents, args.out)
    print(json.dumps({"written": [str(p) for p in written]}))
    return 0


def cmd_serve(args) -> int:
    service = ProviderService(_config_from_args(args), serial=not args.concurrent)
    if args.stdio:
        serve_stdio(service)
        return 0
    if args.port is not None:
        server = serve_http(service, args.port)
        print(f"[adapter] serving on 127.0.0.1:{server.server_port}", file=sys.stderr)
        server.serve_forever()
        return 0
    print("error: choose --stdio or --port", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="videos -> feature-stream documents")
    p.add_argument("--video", action="append", required=True)
    p.add_argument("--location", action="append", required=True)
    p.add_argument("--date", action="append", required=True)
    p.add_argument("--video-id", action="append", dest="video_id")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int)
    p.add_argument("--sample-rate", type=int, dest="sample_rate")
    p.add_argument("--embedder")
    p.add_argument("--tracker")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("serve", help="provider RPC endpoint")
    p.add_argument("--stdio", action="store_true")
    p.add_argument("--port", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--embedder")
    p.add_argument("--tracker")
    p.add_argument("--concurrent", action="store_true",
                   help="declare serial=false in the handshake")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
