"""trace-capture command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .capture import DEFAULT_ACTIONS, EMBEDDING_LAYERS, capture, load_model_pair


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trace-capture")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("capture", help="sweep a manifest into a trace file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default="stub",
                   help="'stub' or module.path:factory returning a ModelPair")
    p.add_argument("--actions", default=",".join(str(a) for a in DEFAULT_ACTIONS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embedding-layer", choices=EMBEDDING_LAYERS,
                   default="post_connector")
    p.add_argument("--sampler-cli", default="tokenbridge",
                   help="CLI used to derive n_frames for video-backed queries")
    p.set_defaults(func=cmd_capture)
    return ap


def cmd_capture(args) -> int:
    actions = tuple(int(x) for x in args.actions.split(","))
    pair = load_model_pair(args.model, seed=args.seed,
                           embedding_layer=args.embedding_layer)
    stats = capture(args.manifest, args.out, pair, actions=actions,
                    sampler_cli=args.sampler_cli,
                    embedding_layer=args.embedding_layer)
    print(json.dumps({"out": args.out, **stats}))
    return 0 if stats["failed"] == 0 else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
