"""CLI verbs: extract (image -> FMAP) and synthesize (bundle -> image)."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bundle import BundleError, load_bundle
from .colors import color_match
from .features import (
    ExtractionSpec,
    MissingWeights,
    N_CONV_LAYERS,
    extract,
    load_image,
    save_image,
)
from .fmapio import FmapError
from .synthesis import SynthesisSpec, synthesize


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="vggtex",
        description="VGG-19 feature extraction and segment-guided synthesis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="dump VGG-19 features to FMAP")
    ex.add_argument("--image", required=True)
    ex.add_argument("--output", required=True)
    ex.add_argument("--layers", type=int, default=N_CONV_LAYERS,
                    help="number of leading conv layers (default 16)")
    ex.add_argument("--weights", default="pretrained",
                    help="pretrained | random | path to a state dict")
    ex.add_argument("--seed", type=int, default=0,
                    help="filter seed for --weights random")
    ex.add_argument("--resize", default=None,
                    help="HxW, e.g. 224x224 (default: native size)")

    sy = sub.add_parser("synthesize",
                        help="optimize a seed image against a bundle")
    sy.add_argument("--bundle", required=True)
    sy.add_argument("--target", required=True,
                    help="target image (for size and color matching)")
    sy.add_argument("--output", required=True)
    sy.add_argument("--steps", type=int, default=200)
    sy.add_argument("--learning-rate", type=float, default=0.05)
    sy.add_argument("--layers", type=int, default=None)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--seed-mode", choices=["noise", "target"],
                    default="noise")
    sy.add_argument("--weights", default="pretrained")
    sy.add_argument("--weights-seed", type=int, default=0)
    sy.add_argument("--no-color-match", action="store_true")
    sy.add_argument("--trace-out", default=None,
                    help="optional CSV path for the loss trace")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            resize = None
            if args.resize:
                h, w = args.resize.lower().split("x")
                resize = (int(h), int(w))
            spec = ExtractionSpec(
                image=args.image,
                layers=tuple(range(1, args.layers + 1)),
                weights=args.weights,
                seed=args.seed,
                resize=resize,
            )
            shapes = extract(spec, args.output)
            print(f"wrote {args.output}: "
                  + ", ".join(f"{h}x{w}x{c}" for h, w, c in shapes))
        elif args.command == "synthesize":
            bundle = load_bundle(args.bundle)
            target = load_image(args.target)
            spec = SynthesisSpec(
                steps=args.steps,
                learning_rate=args.learning_rate,
                layers=args.layers,
                seed=args.seed,
                seed_mode=args.seed_mode,
                weights=args.weights,
                weights_seed=args.weights_seed,
                color_match=not args.no_color_match,
            )
            result = synthesize(
                bundle, spec, target.shape[:2],
                target_image=target if spec.seed_mode == "target" else None,
            )
            image = result.image
            if spec.color_match:
                image = color_match(image, target.astype(np.float64))
            save_image(image, args.output)
            if args.trace_out:
                with open(args.trace_out, "w") as fh:
                    fh.write("step,loss\n")
                    for i, value in enumerate(result.loss_trace):
                        fh.write(f"{i},{value:.17g}\n")
            print(f"wrote {args.output} "
                  f"(loss {result.loss_trace[0]:.4g} -> "
                  f"{result.loss_trace[-1]:.4g}, "
                  f"{len(result.skipped_segments)} empty segments skipped)")
    except (MissingWeights, FmapError, BundleError, ValueError, OSError) as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
