"""Command-line entry point: manifest + plan -> ESF embedding files."""

import argparse
import sys

from .export import ExportJob, export


def build_parser():
    parser = argparse.ArgumentParser(
        prog="esf-export",
        description="Embed sampled image patches into ESF files "
        "with a ResNet-50 backbone",
    )
    parser.add_argument("--manifest", required=True,
                        help="image_id,path manifest file")
    parser.add_argument("--plan", required=True, help="sampling plan JSON")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--backbone", default="resnet50")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--batch-size", type=int, default=16)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    job = ExportJob(
        manifest_path=args.manifest,
        plan_path=args.plan,
        out_dir=args.out_dir,
        backbone=args.backbone,
        device=args.device,
        seed=args.seed,
        batch_size=args.batch_size,
    )
    result = export(job)
    for image_id, path, n in result.written:
        print(f"export: {image_id} -> {path} ({n} rows)", file=sys.stderr)
    if result.errors and not result.written:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
