"""Command-line entry point for feature extraction.

Exit codes: 0 success, 1 validation error (bad manifest / undecodable
image in strict mode / unknown encoder), 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .encoders import encoder_names, load_encoder
from .extract import extract_features

_PREPROCESSING_NOTES = """\
preprocessing per encoder (inference transforms of the published weights):
  clip_vit_b32       resize shorter side to 224 (bicubic), center-crop 224,
                     normalize with the CLIP pixel statistics
  resnet50, resnext101_64x4d, efficientnetv2_m, regnety_16gf
                     the torchvision weight preset's eval transform
                     (resize + center-crop + ImageNet normalization)
With --no-pretrained the CNNs fall back to resize 256 / crop 224 /
ImageNet normalization; the transform actually used is recorded in the
sidecar <out>.transform.txt.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patcls-extract",
        description="Export frozen-encoder image features to a PEMB file.",
        epilog=_PREPROCESSING_NOTES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--images", required=True,
                        help="directory manifest paths are relative to")
    parser.add_argument("--manifest", required=True, help="manifest CSV")
    parser.add_argument("--encoder", required=True, choices=encoder_names())
    parser.add_argument("--out", required=True, help="PEMB file to write")
    parser.add_argument("--batch", type=int, default=64,
                        help="inference batch size (default: 64)")
    parser.add_argument("--lenient", action="store_true",
                        help="skip undecodable images instead of aborting")
    parser.add_argument("--no-pretrained", action="store_true",
                        help="seeded random weights instead of downloading "
                             "pretrained ones (offline/testing)")
    parser.add_argument("--seed", type=int, default=0,
                        help="weight init seed for --no-pretrained (default: 0)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        encoder = load_encoder(args.encoder, pretrained=not args.no_pretrained,
                               seed=args.seed)
        result = extract_features(
            args.images, args.manifest, encoder, args.out,
            batch_size=args.batch, strict=not args.lenient,
        )
    except ValueError as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    print(f"wrote {result.count} vectors (dim={result.dim}) to {args.out}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} undecodable image(s)",
              file=sys.stderr)
    print(f"transform recorded in {result.transform_file}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
