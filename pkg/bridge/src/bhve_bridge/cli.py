"""bhve-bridge: export frozen encoder outputs for the alignment toolkit."""

from __future__ import annotations

import argparse
import sys

from .encoders import spec_for
from .errors import BridgeError
from .export import export_text_embeddings, export_video_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bhve-bridge",
        description="Export pretrained text/video encoder outputs as BHVE tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-text", help="encode manifest captions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", default="toy:512", help="clip | gpt2 | minilm | toy[:dim]")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0, help="toy-backend init seed")
    p.set_defaults(kind="text")

    p = sub.add_parser("export-video", help="encode per-window frame stacks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--frames", required=True, help="directory of <sample_id>.npy stacks")
    p.add_argument("--model", default="toy:512", help="videomae | toy[:dim]")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(kind="video")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_for(args.kind, args.model)
        if args.kind == "text":
            count = export_text_embeddings(
                args.manifest, args.out, spec, batch_size=args.batch_size, seed=args.seed
            )
        else:
            count = export_video_embeddings(
                args.manifest, args.frames, args.out, spec,
                batch_size=args.batch_size, seed=args.seed,
            )
    except BridgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"exported {count} rows at dim {spec.dim} -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
