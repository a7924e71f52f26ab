"""vitw CLI: `export` converts checkpoints, `prep` prepares images."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .export import ExportError, export_checkpoint
from .mapping import MappingError
from .preprocess import PreprocessError, preprocess_image


def cmd_export(args) -> int:
    manifest = export_checkpoint(args.model, args.out, heads=args.heads,
                                 mean=tuple(args.mean), std=tuple(args.std))
    spec = manifest.spec
    print(f"{manifest.source} -> {args.out}")
    print(f"spec: D={spec.dim} L={spec.depth} H={spec.heads} "
          f"patch={spec.patch_size} image={spec.image_size} classes={spec.num_classes}")
    print(f"tensors: {len(manifest.tensor_crc32)}")
    print(f"manifest: {args.out}.manifest.json")
    return 0


def cmd_prep(args) -> int:
    preprocess_image(args.img, args.size, args.out)
    print(f"{args.img} -> {args.out} ({args.size}x{args.size} P6)")
    return 0


def _triple(text: str) -> list[float]:
    vals = [float(tok) for tok in text.split(",")]
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("need three comma-separated floats")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitw", description="VITW checkpoint exporter and image prep")
    parser.add_argument("--version", action="version", version=f"vitw {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="convert a ViT checkpoint to VITW")
    p.add_argument("--model", required=True,
                   help="checkpoint path (.pt/.pth state dict), or "
                        "'torchvision:<builder>[:seed]' for a random-init fixture")
    p.add_argument("--out", required=True, help="output .vitw path")
    p.add_argument("--heads", type=int, default=None,
                   help="attention heads (required for unknown dim/depth pairs)")
    p.add_argument("--mean", type=_triple, default=[0.485, 0.456, 0.406],
                   help="normalization mean recorded in the header")
    p.add_argument("--std", type=_triple, default=[0.229, 0.224, 0.225],
                   help="normalization std recorded in the header")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("prep", help="resize + center-crop an image to engine PPM")
    p.add_argument("--img", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_prep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ExportError, MappingError) as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return 1
    except PreprocessError as exc:
        print(f"image error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
