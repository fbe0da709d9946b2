"""CLI: extract multi-scale CNN activations to FVD files + manifest.

Exit codes: 0 success, 2 invalid input/config, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from .extract import (
    DEFAULT_LAYER,
    ConfigError,
    ExtractorConfig,
    ExtractorError,
    extract,
)


def _parse_scales(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad scale list {text!r}: {exc}") from exc
    if not values:
        raise ConfigError(f"scale list {text!r} is empty")
    return values


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="fvagg-extract",
        description="Export intermediate-layer CNN activations over a scale "
        "pyramid as FVD descriptor files plus a JSONL manifest.",
    )
    ap.add_argument("--images", required=True, help="directory of input images")
    ap.add_argument("--labels", help="CSV with header image_id,label")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--layer", default=DEFAULT_LAYER, help="named module to hook")
    ap.add_argument(
        "--scales",
        default="-3,-2.5,-2,-1.5,-1,-0.5,0,0.5,1",
        help="comma-separated scale exponents (factors are 2^s)",
    )
    ap.add_argument("--checkpoint", help="backbone state-dict to load")
    ap.add_argument(
        "--backbone",
        default="resnet50",
        help="torchvision model name (resnet50/resnet101/resnet152, ...)",
    )
    ap.add_argument("--seed", type=int, default=0, help="init seed when no checkpoint")
    ap.add_argument(
        "--min-side",
        type=int,
        default=32,
        help="skip scales whose rescaled short side falls below this",
    )
    args = ap.parse_args(argv)

    try:
        config = ExtractorConfig(
            image_root=args.images,
            out_root=args.out,
            backbone=args.backbone,
            layer=args.layer,
            scale_exponents=_parse_scales(args.scales),
            labels_csv=args.labels,
            checkpoint=args.checkpoint,
            min_input_side=args.min_side,
            seed=args.seed,
        )
        result = extract(config)
    except (ConfigError, ExtractorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3

    print(
        f"wrote {result.n_files} FVD files (D={result.dim}) for "
        f"{result.n_images} images -> {result.manifest_path}"
    )
    if result.skipped:
        print(f"skipped {len(result.skipped)} inputs, see {result.report_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
