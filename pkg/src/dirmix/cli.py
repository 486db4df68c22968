"""Command-line surface: segment, eval, export-synthesis, info.

Configuration comes from an optional JSON file plus flag overrides; a failed
validation rejects the run before anything is written. Every artifact is a
deterministic function of the input file and the configuration, so repeated
single-threaded runs are byte-identical. The DIRMIX_THREADS environment
variable caps worker threads used inside a fit.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version as pkg_version
from pathlib import Path

import numpy as np

from .errors import ConfigError, DirmixError, MissingReference
from .estimators import build_density
from .fmap import (
    LabelMap,
    read_fmap,
    read_labelmap_pgm,
    write_labelmap_pgm,
    write_probmap_pgm,
)
from .metrics import adjusted_rand_index, boundary_f_score
from .multilayer import (
    KernelSpec,
    ModelVariant,
    MultilayerConfig,
    extract_labels,
    fit_multilayer,
)
from .preprocess import preprocess_stack
from .sidecar import write_params, write_segment_stats
from .spatial import resample_labels_nn

DEFAULT_SYNTHESIS_LAYERS = 5
_LABEL_RE = re.compile(r"labels_K(\d+)_([abc])_layer(\d+)\.pgm$")


def _version() -> str:
    try:
        return pkg_version("dirmix")
    except PackageNotFoundError:
        return "unknown"


@dataclass
class RunConfig:
    """Everything a segmentation run depends on."""

    input: str
    output_dir: str
    density: str = "gaussian"
    variant: str = "a"
    components: list[int] = field(default_factory=lambda: [2])
    iterations: int = 20
    sigmas: list[float] | None = None
    pca_threshold: float = 0.90
    dof_mode: str = "estimate"
    fixed_dof: float | None = None
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.density not in ("gaussian", "student"):
            raise ConfigError(f"density must be gaussian|student, got "
                              f"{self.density!r}")
        if self.variant not in ("a", "b", "c"):
            raise ConfigError(f"variant must be a|b|c, got {self.variant!r}")
        if not self.components:
            raise ConfigError("at least one component count is required")
        for k in self.components:
            if k < 2:
                raise ConfigError(f"component counts must be >= 2, got {k}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.sigmas is not None and any(s <= 0 for s in self.sigmas):
            raise ConfigError("sigma overrides must all be > 0")
        if not 0.0 < self.pca_threshold <= 1.0:
            raise ConfigError("pca_threshold must lie in (0, 1]")
        if self.dof_mode not in ("estimate", "fixed"):
            raise ConfigError("dof_mode must be estimate|fixed")
        if self.dof_mode == "fixed" and (self.fixed_dof is None
                                         or self.fixed_dof <= 0):
            raise ConfigError("fixed dof_mode needs fixed_dof > 0")
        return self

    @classmethod
    def from_sources(cls, json_path, overrides: dict) -> "RunConfig":
        data: dict = {}
        if json_path:
            with open(json_path) as fh:
                data.update(json.load(fh))
        data.update({k: v for k, v in overrides.items() if v is not None})
        missing = [key for key in ("input", "output_dir") if key not in data]
        if missing:
            raise ConfigError(f"missing required config fields: {missing}")
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data).validate()


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def cmd_segment(config: RunConfig) -> Path:
    """Run the fits and write label maps, probability maps, traces,
    parameter sidecars and the manifest into the output directory."""
    config.validate()
    stack = read_fmap(config.input)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    data, pca_models = preprocess_stack(stack, config.pca_threshold)
    variant = ModelVariant.from_string(config.variant)
    n_layers = len(data)
    spec = (KernelSpec.from_sigmas(config.sigmas) if config.sigmas
            else KernelSpec.default(variant, n_layers))

    runs = []
    for n_components in config.components:
        density = build_density(
            config.density,
            estimate_dof=config.dof_mode == "estimate",
            fixed_dof=config.fixed_dof,
        )
        state = fit_multilayer(
            data, n_components, variant, density, spec,
            MultilayerConfig(n_iter=config.iterations, rng_seed=config.seed),
        )
        tag = f"K{n_components}_{config.variant}"
        for h in range(1, n_layers + 1):
            label_map = extract_labels(state, h)
            write_labelmap_pgm(label_map, out_dir / f"labels_{tag}_layer{h}.pgm")
            grid = state.grids[h - 1]
            probs = state.mixing[h - 1].reshape(grid[0], grid[1], n_components)
            for k in range(n_components):
                write_probmap_pgm(
                    probs[:, :, k],
                    out_dir / f"prob_{tag}_layer{h}_component{k}.pgm",
                )
        with open(out_dir / f"trace_{tag}.csv", "w") as fh:
            fh.write("layer,iteration,log_posterior\n")
            for h, trace in enumerate(state.traces, start=1):
                for it, value in enumerate(trace):
                    fh.write(f"{h},{it},{_fmt(value)}\n")
        write_params(out_dir / f"params_{tag}.bin", config.density, state.params)
        runs.append({
            "components": n_components,
            "variant": config.variant,
            "layers": n_layers,
            "grids": [list(g) for g in state.grids],
            "retained_dims": [m.retained for m in pca_models],
            "empty_component_recoveries": sum(
                1 for d in state.diagnostics if d.get("event") == "empty_component"
            ),
        })

    manifest = {
        "tool": "dirmix",
        "version": _version(),
        "input": str(Path(config.input).resolve()),
        "config": asdict(config),
        "runs": runs,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def _discover_predictions(pred_dir: Path):
    """Yield (image_id, K, variant, layer, path) for every label map."""
    direct = sorted(pred_dir.glob("labels_K*_layer*.pgm"))
    if direct:
        for path in direct:
            match = _LABEL_RE.search(path.name)
            if match:
                yield (pred_dir.name, int(match.group(1)), match.group(2),
                       int(match.group(3)), path)
        return
    for sub in sorted(p for p in pred_dir.iterdir() if p.is_dir()):
        for path in sorted(sub.glob("labels_K*_layer*.pgm")):
            match = _LABEL_RE.search(path.name)
            if match:
                yield (sub.name, int(match.group(1)), match.group(2),
                       int(match.group(3)), path)


def _reference_maps(refs_dir: Path, image_id: str):
    single = refs_dir / f"{image_id}.pgm"
    if single.exists():
        return [read_labelmap_pgm(single)]
    multi = sorted(refs_dir.glob(f"{image_id}_*.pgm"))
    return [read_labelmap_pgm(p) for p in multi]


def cmd_eval(pred_dir, refs_dir, out_csv, match_radius=None) -> Path:
    """Score every prediction against its references; one CSV row per
    (image, layer, K, variant), then summary rows of per-image maxima."""
    pred_dir, refs_dir = Path(pred_dir), Path(refs_dir)
    rows = []
    for image_id, K, variant, layer, path in _discover_predictions(pred_dir):
        refs = _reference_maps(refs_dir, image_id)
        if not refs:
            continue
        pred = read_labelmap_pgm(path)
        ref_grid = refs[0].grid
        pred_labels = pred.labels
        if pred.grid != ref_grid:
            pred_labels = resample_labels_nn(pred.labels, ref_grid)
        ari = float(np.mean([
            adjusted_rand_index(pred_labels, ref.labels) for ref in refs
        ]))
        f_b = boundary_f_score(pred_labels, [r.labels for r in refs],
                               match_radius)
        rows.append((image_id, layer, K, variant, ari, f_b))
    if not rows:
        raise MissingReference(
            f"no prediction under {pred_dir} has a reference in {refs_dir}"
        )

    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w") as fh:
        fh.write("image,layer,K,variant,ari,f_b\n")
        for image_id, layer, K, variant, ari, f_b in sorted(rows):
            fh.write(f"{image_id},{layer},{K},{variant},"
                     f"{_fmt(ari)},{_fmt(f_b)}\n")
        # per-image maxima over K (and over layers for the "best" row)
        variants = sorted({r[3] for r in rows})
        images = sorted({r[0] for r in rows})
        for variant in variants:
            layers = sorted({r[1] for r in rows if r[3] == variant})
            for layer in layers:
                best_ari, best_fb = [], []
                for image_id in images:
                    cands = [r for r in rows
                             if r[0] == image_id and r[1] == layer
                             and r[3] == variant]
                    if cands:
                        best_ari.append(max(r[4] for r in cands))
                        best_fb.append(max(r[5] for r in cands))
                if best_ari:
                    fh.write(f"summary,{layer},best,{variant},"
                             f"{_fmt(float(np.mean(best_ari)))},"
                             f"{_fmt(float(np.mean(best_fb)))}\n")
            best_ari, best_fb = [], []
            for image_id in images:
                cands = [r for r in rows
                         if r[0] == image_id and r[3] == variant]
                if cands:
                    best_ari.append(max(r[4] for r in cands))
                    best_fb.append(max(r[5] for r in cands))
            fh.write(f"summary,best,best,{variant},"
                     f"{_fmt(float(np.mean(best_ari)))},"
                     f"{_fmt(float(np.mean(best_fb)))}\n")
    return out_csv


def cmd_export_synthesis(run_dir, components=None, variant=None,
                         layers=DEFAULT_SYNTHESIS_LAYERS,
                         output=None) -> Path:
    """Bundle per-(layer, component) masks and raw-feature statistics for
    the synthesis front-end."""
    run_dir = Path(run_dir)
    with open(run_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    runs = manifest["runs"]
    if components is not None:
        runs = [r for r in runs if r["components"] == components]
    if variant is not None:
        runs = [r for r in runs if r["variant"] == variant]
    if len(runs) != 1:
        raise ConfigError(
            f"run selection matched {len(runs)} fits; pass --components/"
            f"--variant to pick one"
        )
    run = runs[0]
    n_components = run["components"]
    tag = f"K{n_components}_{run['variant']}"
    stack = read_fmap(manifest["input"])
    n_export = min(layers, stack.n_layers)

    out_dir = Path(output) if output else run_dir / f"synthesis_{tag}"
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for h in range(1, n_export + 1):
        label_map = read_labelmap_pgm(run_dir / f"labels_{tag}_layer{h}.pgm")
        features = stack[h - 1].pixels()
        flat_labels = label_map.labels.ravel()
        for k in range(n_components):
            mask = label_map.labels == k
            mask_name = f"mask_layer{h}_component{k}.pgm"
            write_labelmap_pgm(
                LabelMap(label_map.height, label_map.width,
                         (mask * 255).astype(np.int64)),
                out_dir / mask_name,
            )
            selected = features[flat_labels == k]
            count = selected.shape[0]
            if count:
                mean = selected.mean(axis=0)
                diff = selected - mean
                cov = diff.T @ diff / count
            else:
                d = features.shape[1]
                mean = np.zeros(d)
                cov = np.zeros((d, d))
            stats_name = f"stats_layer{h}_component{k}.bin"
            write_segment_stats(out_dir / stats_name, h, k, count, mean, cov)
            entries.append({
                "layer": h,
                "component": k,
                "mask": mask_name,
                "stats": stats_name,
                "pixels": int(count),
            })
    bundle = {
        "tool": "dirmix",
        "version": _version(),
        "source_fmap": manifest["input"],
        "n_components": n_components,
        "variant": run["variant"],
        "layers": n_export,
        "grids": run["grids"][:n_export],
        "channels": [stack[h].channels for h in range(n_export)],
        "mask_value": 255,
        "entries": entries,
    }
    with open(out_dir / "bundle.json", "w") as fh:
        json.dump(bundle, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def cmd_info(path) -> str:
    stack = read_fmap(path)
    lines = [f"FMAP {path}: {stack.n_layers} layer(s)"]
    total = 0
    for h, layer in enumerate(stack, start=1):
        n = layer.height * layer.width * layer.channels
        total += n
        lines.append(
            f"  layer {h}: {layer.height}x{layer.width}x{layer.channels} "
            f"({n} floats)"
        )
    lines.append(f"  payload: {4 * total} bytes, dirmix {_version()}")
    return "\n".join(lines)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirmix",
        description="Multilayer mixture segmentation over feature stacks",
        epilog="DIRMIX_THREADS caps worker threads inside a fit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="fit and export segmentation maps")
    seg.add_argument("--config", help="JSON config file")
    seg.add_argument("--input", help="input FMAP path")
    seg.add_argument("--output-dir", dest="output_dir")
    seg.add_argument("--density", choices=["gaussian", "student"])
    seg.add_argument("--variant", choices=["a", "b", "c"])
    seg.add_argument("--components", help="K or comma-separated K grid")
    seg.add_argument("--iterations", type=int)
    seg.add_argument("--sigmas", help="comma-separated kernel widths")
    seg.add_argument("--pca-threshold", dest="pca_threshold", type=float)
    seg.add_argument("--dof-mode", dest="dof_mode",
                     choices=["estimate", "fixed"])
    seg.add_argument("--fixed-dof", dest="fixed_dof", type=float)
    seg.add_argument("--seed", type=int)

    ev = sub.add_parser("eval", help="score predictions against references")
    ev.add_argument("--pred-dir", required=True)
    ev.add_argument("--refs-dir", required=True)
    ev.add_argument("--out", required=True, help="CSV output path")
    ev.add_argument("--radius", type=float, default=None,
                    help="match radius in pixels (default: 0.0075 x diagonal)")

    ex = sub.add_parser("export-synthesis",
                        help="bundle masks + segment stats for synthesis")
    ex.add_argument("--run-dir", required=True)
    ex.add_argument("--components", type=int, default=None)
    ex.add_argument("--variant", choices=["a", "b", "c"], default=None)
    ex.add_argument("--layers", type=int, default=DEFAULT_SYNTHESIS_LAYERS)
    ex.add_argument("--output", default=None)

    info = sub.add_parser("info", help="describe an FMAP file")
    info.add_argument("path")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "segment":
            overrides = {
                "input": args.input,
                "output_dir": args.output_dir,
                "density": args.density,
                "variant": args.variant,
                "iterations": args.iterations,
                "pca_threshold": args.pca_threshold,
                "dof_mode": args.dof_mode,
                "fixed_dof": args.fixed_dof,
                "seed": args.seed,
            }
            if args.components is not None:
                overrides["components"] = [
                    int(t) for t in str(args.components).split(",") if t
                ]
            if args.sigmas is not None:
                overrides["sigmas"] = [
                    float(t) for t in str(args.sigmas).split(",") if t
                ]
            config = RunConfig.from_sources(args.config, overrides)
            out = cmd_segment(config)
            print(f"wrote {out}")
        elif args.command == "eval":
            out = cmd_eval(args.pred_dir, args.refs_dir, args.out, args.radius)
            print(f"wrote {out}")
        elif args.command == "export-synthesis":
            out = cmd_export_synthesis(
                args.run_dir, args.components, args.variant,
                args.layers, args.output,
            )
            print(f"wrote {out}")
        elif args.command == "info":
            print(cmd_info(args.path))
    except DirmixError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
