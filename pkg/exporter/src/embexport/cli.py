"""embexport command line: export-embeddings and export-decoder."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ExportError
from .jobs import ExportJob, export_embeddings
from .onnx_export import export_decoder


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Turn raw dataset images plus a ViT-B checkpoint into "
        "SPEB embeddings, verified mask copies, a manifest, and an ONNX decoder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    emb = sub.add_parser("export-embeddings", help="encode a paired image/mask folder")
    emb.add_argument("--images", required=True, help="directory of input images")
    emb.add_argument("--masks", required=True, help="directory of ground-truth masks "
                     "(same filename stems)")
    emb.add_argument("--checkpoint", required=True, help="ViT-B checkpoint path")
    emb.add_argument("--out", required=True, help="output directory")
    emb.add_argument("--batch-size", type=int, default=4)

    dec = sub.add_parser("export-decoder", help="export the single-mask ONNX decoder")
    dec.add_argument("--checkpoint", required=True, help="ViT-B checkpoint path")
    dec.add_argument("--out", required=True, help="output .onnx path")

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "export-embeddings":
            job = ExportJob(
                image_dir=Path(args.images),
                mask_dir=Path(args.masks),
                output_dir=Path(args.out),
                checkpoint_path=Path(args.checkpoint),
                batch_size=args.batch_size,
            )
            manifest = export_embeddings(job)
            print(f"manifest -> {manifest}")
        else:
            out = export_decoder(args.checkpoint, args.out)
            print(f"decoder -> {out}")
        return 0
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
