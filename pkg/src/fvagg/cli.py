"""Command-line interface.

Subcommands: train-codebook, encode, train, evaluate, predict,
synth-decomposition. Global flags --config (TOML or JSON), --seed,
--threads, --scales apply to every subcommand. Exit codes: 0 success,
2 invalid input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .errors import DataIOError, InvalidInputError
from .gmm import fit_gmm, save_gmm
from .pipeline import (
    PipelineConfig,
    SynthDecompositionConfig,
    load_manifest,
    run_encode,
    run_evaluate,
    run_predict,
    run_synth_decomposition,
    run_train,
    sample_codebook_descriptors,
)
from .pyramid import parse_exponents
from .seeding import derive_seeds

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config file (TOML or JSON)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="encoding worker threads")
    parser.add_argument(
        "--scales", help="comma-separated scale exponent list (overrides config)"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fvagg",
        description="Fisher-vector aggregation pipeline: GMM codebook, FV "
        "encoding, linear SVM, balanced accuracy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-codebook", help="fit a GMM codebook from a manifest")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output GMM1 file")

    p = sub.add_parser("encode", help="write one <image_id>.fvv per image")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True, help="GMM1 file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--raw", action="store_true", help="skip FV normalization")

    p = sub.add_parser("train", help="codebook + encoding + SVM, end to end")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-codebook", required=True, help="output GMM1 file")
    p.add_argument("--out-model", required=True, help="output LSV1 file")

    p = sub.add_parser("evaluate", help="balanced-accuracy report as JSON")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--model", required=True)

    p = sub.add_parser("predict", help="per-image predictions as JSON lines")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--model", required=True)

    p = sub.add_parser(
        "synth-decomposition",
        help="foreground/background FV linearity experiment on synthetic data",
    )
    _common_flags(p)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--source-components", type=int, default=2)
    p.add_argument("--codebook-components", type=int, default=8)
    p.add_argument("--w", type=float, default=0.7, help="foreground proportion")
    p.add_argument("--n", type=int, default=10000, help="descriptor sample size")
    p.add_argument("--separation", type=float, default=4.0)

    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_file(args.config)
    else:
        cfg = PipelineConfig()
    overrides = {}
    if args.seed is not None:
        # re-derive stage seeds from the new master seed, keeping any other
        # em/svm settings from the config file
        em_seed, svm_seed = derive_seeds(args.seed, 2)
        overrides["seed"] = args.seed
        overrides["em"] = dataclasses.replace(cfg.em, seed=em_seed)
        overrides["svm"] = dataclasses.replace(cfg.svm, seed=svm_seed)
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.scales is not None:
        overrides["scale_exponents"] = parse_exponents(args.scales)
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "synth-decomposition":
        cfg = _load_config(args)
        report = run_synth_decomposition(
            SynthDecompositionConfig(
                dim=args.dim,
                source_components=args.source_components,
                codebook_components=args.codebook_components,
                foreground_weight=args.w,
                n=args.n,
                separation=args.separation,
                seed=cfg.seed,
            )
        )
        print(json.dumps(report.summary(), indent=2))
        return EXIT_OK

    cfg = _load_config(args)
    if args.command == "train-codebook":
        manifest = load_manifest(args.manifest, classes=cfg.classes)
        data = sample_codebook_descriptors(manifest, cfg)
        gmm = fit_gmm(data, cfg.components, cfg.em)
        save_gmm(gmm, args.out)
        print(
            f"codebook: K={gmm.n_components} D={gmm.dim} "
            f"from {data.count} descriptors -> {args.out}"
        )
        return EXIT_OK
    if args.command == "encode":
        manifest = load_manifest(args.manifest, classes=cfg.classes)
        written = run_encode(manifest, args.codebook, args.out_dir, cfg, raw=args.raw)
        print(f"wrote {len(written)} FV files to {args.out_dir}")
        return EXIT_OK
    if args.command == "train":
        manifest = load_manifest(args.manifest, classes=cfg.classes)
        gmm, model = run_train(manifest, cfg, args.out_codebook, args.out_model)
        print(
            f"trained: K={gmm.n_components} D={gmm.dim}, "
            f"{len(model.classes)} classes -> {args.out_codebook}, {args.out_model}"
        )
        return EXIT_OK
    if args.command == "evaluate":
        manifest = load_manifest(args.manifest, classes=cfg.classes)
        report = run_evaluate(manifest, args.codebook, args.model, cfg)
        print(json.dumps(report.to_dict(), indent=2))
        return EXIT_OK
    if args.command == "predict":
        manifest = load_manifest(args.manifest)
        for row in run_predict(manifest, args.codebook, args.model, cfg):
            print(json.dumps(row))
        return EXIT_OK
    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DataIOError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
