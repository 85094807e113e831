"""Command-line interface wiring the full workflow.

Subcommands: simgen, enhance, overlap, train, index, eval, report, and
pipeline. The pipeline executes simgen, enhance, train, index, and eval
in order (skipping a stage whose outputs already exist unless --force),
renders figures from the delimited outputs, and writes run_summary.json
capturing every effective parameter and seed. Any stage error exits
with code 2 and names the failed stage; partial artifacts are kept.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation, report
from .core import (
    DatasetManifest,
    SonarConfig,
    SonarPlaceError,
    ValidationError,
    load_images,
    load_manifest,
    save_manifest,
    write_image,
)
from .descriptor import (
    EncoderParams,
    RgpMatrix,
    describe_array,
    init_encoder,
    load_descriptor_db,
    load_weights,
    resize_array,
    save_descriptor_db,
    save_weights,
)
from .enhance import CfarParams, DwtParams, enhance_pipeline, insonification_pattern
from .geometry import DEFAULT_MAX_HEADING_DIFF, DEFAULT_N_ARC
from .simgen import GridSpec, Scene, builtin_scene, generate_dataset, load_scene
from .training import TripletConfig, train

PIPELINE_STAGES = ("simgen", "enhance", "train", "index", "eval", "report")


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a full run; defaults reproduce the builtin experiment."""

    out_dir: str = "runs/builtin"
    dataset_seed: int = 0
    builtin_scenes: tuple[int, ...] = (1, 2, 3)
    scene_files: tuple[str, ...] = ()
    max_range_m: float = 30.0
    aperture_rad: float = 2.0943951023931953
    n_beams: int = 64
    n_bins: int = 256
    grid_size_m: float = 16.0
    cell_size_m: float = 2.0
    noise_max_m: float = 0.75
    samples_per_anchor: int = 5
    cfar_mode: str = "goca"
    n_w: int = 40
    p_fa: float = 0.1
    guard: int = 2
    dwt_levels: int = 2
    skip_dwt: bool = False
    skip_cfar: bool = False
    enhance_for_training: bool = True
    input_h: int = 128
    input_w: int = 64
    channel_widths: tuple[int, ...] = (8, 16, 32)
    kernel: int = 3
    stride: int = 2
    encoder_seed: int = 0
    rgp_seed: int = 0
    train_assets: tuple[int, ...] = (2, 3)
    val_asset: int = 1
    margin: float = 0.5
    n_neg: int = 10
    n_pos: int = 5
    tau: float = 0.7
    max_heading_diff_rad: float = math.pi / 2.0
    learning_rate: float = 0.1
    epochs: int = 30
    train_seed: int = 0
    s_seconds: float = 3.0
    n_arc: int = DEFAULT_N_ARC

    def __post_init__(self):
        for name in ("builtin_scenes", "scene_files", "channel_widths", "train_assets"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    def sonar_config(self) -> SonarConfig:
        return SonarConfig(self.max_range_m, self.aperture_rad, self.n_beams, self.n_bins)

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.grid_size_m, self.cell_size_m, self.noise_max_m, self.samples_per_anchor)

    def cfar_params(self) -> CfarParams:
        return CfarParams(self.cfar_mode, self.n_w, self.p_fa, self.guard)

    def dwt_params(self) -> DwtParams:
        return DwtParams(levels=self.dwt_levels)

    def encoder_params(self) -> EncoderParams:
        return EncoderParams(
            self.input_h, self.input_w, self.channel_widths, self.kernel, self.stride, self.encoder_seed
        )

    def triplet_config(self) -> TripletConfig:
        return TripletConfig(
            margin=self.margin,
            n_neg=self.n_neg,
            n_pos=self.n_pos,
            tau=self.tau,
            max_heading_diff_rad=self.max_heading_diff_rad,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.train_seed,
        )


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _enhance_manifest(
    manifest: DatasetManifest,
    manifest_path: str | os.PathLike,
    out_dir: Path,
    cfar: CfarParams,
    dwt: DwtParams,
    skip_dwt: bool,
    skip_cfar: bool,
) -> DatasetManifest:
    """Enhance every image with a per-asset insonification pattern."""
    images = load_images(manifest, manifest_path)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    new_records = []
    for asset_id in sorted({r.asset_id for r in manifest.records}):
        asset_records = [r for r in manifest.records if r.asset_id == asset_id]
        pattern = insonification_pattern([images[r.id] for r in asset_records])
        for rec in asset_records:
            out = enhance_pipeline(
                images[rec.id], pattern, dwt, cfar, skip_dwt=skip_dwt, skip_cfar=skip_cfar
            )
            name = f"{rec.id:06d}.pgm"
            write_image(out, images_dir / name)
            new_records.append(dataclasses.replace(rec, image_path=f"images/{name}"))
    new_records.sort(key=lambda r: r.id)
    enhanced = DatasetManifest(manifest.config, tuple(new_records), manifest.generator_seed)
    save_manifest(enhanced, out_dir / "manifest.json")
    return enhanced


def _write_train_log(log, path: str | os.PathLike) -> None:
    lines = ["epoch,mean_loss,active_fraction,val_auc"]
    for entry in log:
        val = _fmt(entry.val_auc) if entry.val_auc is not None else "nan"
        lines.append(f"{entry.epoch},{_fmt(entry.mean_loss)},{_fmt(entry.active_fraction)},{val}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _index_manifest(
    manifest: DatasetManifest,
    manifest_path: str | os.PathLike,
    weights,
    rgp_seed: int,
    out_path: str | os.PathLike,
    resized: dict[int, np.ndarray] | None = None,
) -> None:
    """Describe every record of a manifest into a descriptor database."""
    if resized is None:
        images = load_images(manifest, manifest_path)
        h, w = weights.params.input_h, weights.params.input_w
        resized = {rid: resize_array(img.data, h, w) for rid, img in images.items()}
    matrix = RgpMatrix(rgp_seed, weights.params.feature_length)
    ids = [r.id for r in manifest.records]
    descriptors = [describe_array(resized[rid], weights, matrix) for rid in ids]
    save_descriptor_db(out_path, ids, descriptors, rgp_seed, weights.params.seed)


def _eval_descriptors(
    manifest: DatasetManifest,
    vectors: np.ndarray,
    s_seconds: float,
    tau: float,
    out_prefix: str,
    n_arc: int = DEFAULT_N_ARC,
) -> dict[str, float]:
    """Run the full metric suite and write the four delimited outputs."""
    gt = evaluation.gt_table(manifest, tau=tau, n_arc=n_arc)
    timestamps = np.array([r.pose.t for r in manifest.records])
    curve = evaluation.pr_curve(vectors, gt, timestamps=timestamps, s_seconds=s_seconds)
    auc_value = evaluation.auc(curve)
    r95 = evaluation.recall_at_precision(curve, 0.95)
    f1_point = evaluation.f1_optimal(curve)
    fractions = evaluation.precision_over_overlap(manifest, vectors, s_seconds, n_arc=n_arc)
    coords = evaluation.mds_2d(vectors)
    evaluation.write_pr_curve_csv(curve, f"{out_prefix}pr_curve.csv")
    evaluation.write_summary_csv(f"{out_prefix}summary.csv", auc_value, r95, f1_point)
    evaluation.write_overlap_precision_csv(fractions, f"{out_prefix}overlap_precision.csv")
    evaluation.write_descriptors_2d_csv(
        [r.id for r in manifest.records], coords, f"{out_prefix}descriptors_2d.csv"
    )
    return {"auc": auc_value, "r_at_95p": r95, "f1_threshold": f1_point[0]}


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_simgen(args) -> int:
    scenes: list[Scene] = []
    for path in args.scene_file or []:
        scenes.append(load_scene(path))
    for asset_id in args.builtin or []:
        scenes.append(builtin_scene(asset_id))
    if not scenes:
        raise ValidationError("simgen needs at least one --scene-file or --builtin")
    config = SonarConfig(args.max_range, math.radians(args.aperture_deg), args.n_beams, args.n_bins)
    spec = GridSpec(args.grid_size, args.cell_size, args.noise_max, args.samples_per_anchor)
    manifest = generate_dataset(scenes, spec, config, args.seed, args.out_dir)
    print(f"wrote {len(manifest.records)} records to {args.out_dir}")
    return 0


def _cmd_enhance(args) -> int:
    manifest = load_manifest(args.input_manifest)
    cfar = CfarParams(args.cfar_mode, args.nw, args.pfa, args.guard)
    dwt = DwtParams(levels=args.dwt_levels)
    out_dir = Path(args.output_dir)
    _enhance_manifest(manifest, args.input_manifest, out_dir, cfar, dwt, args.skip_dwt, args.skip_cfar)
    print(f"wrote {len(manifest.records)} enhanced images to {out_dir}")
    return 0


def _cmd_overlap(args) -> int:
    manifest = load_manifest(args.manifest, check_images=False)
    overlaps = evaluation.overlap_matrix(manifest, n_arc=args.n_arc)
    evaluation.write_overlap_csv(
        manifest, overlaps, args.out, tau=args.tau,
        max_heading_diff=math.radians(args.max_heading_diff_deg),
    )
    print(f"wrote pairwise overlap table to {args.out}")
    return 0


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    train_manifest = manifest.subset(args.train_assets)
    if not train_manifest.records:
        raise ValidationError(f"no records for train assets {args.train_assets}")
    images = load_images(train_manifest, args.manifest)
    val_manifest = val_images = None
    if args.val_asset.lower() != "none":
        val_manifest = manifest.subset([int(args.val_asset)])
        if not val_manifest.records:
            raise ValidationError(f"no records for validation asset {args.val_asset}")
        val_images = load_images(val_manifest, args.manifest)
    config = TripletConfig(
        margin=args.margin, n_neg=args.nneg, n_pos=args.npos, tau=args.tau,
        learning_rate=args.lr, epochs=args.epochs, seed=args.seed,
    )
    params = EncoderParams(
        input_h=args.input_h, input_w=args.input_w,
        channel_widths=args.widths, seed=args.encoder_seed,
    )
    result = train(
        train_manifest, images, config, params, args.rgp_seed,
        val_manifest=val_manifest, val_images=val_images, val_s_seconds=args.val_s,
    )
    save_weights(result.weights, args.out)
    if args.log:
        _write_train_log(result.log, args.log)
    last = result.log[-1]
    tail = f", val_auc={last.val_auc:.4f}" if last.val_auc is not None else ""
    print(f"trained {config.epochs} epochs: mean_loss={last.mean_loss:.4f}{tail}; weights in {args.out}")
    return 0


def _cmd_index(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.weights_file:
        weights = load_weights(args.weights_file)
    else:
        weights = init_encoder(EncoderParams(
            input_h=args.input_h, input_w=args.input_w,
            channel_widths=args.widths, seed=args.encoder_seed,
        ))
    _index_manifest(manifest, args.manifest, weights, args.rgp_seed, args.out)
    print(f"wrote {len(manifest.records)} descriptors to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest, check_images=False)
    ids, vectors, _, _ = load_descriptor_db(args.descriptors)
    aligned = evaluation.align_descriptors(manifest, ids, vectors)
    results = _eval_descriptors(manifest, aligned, args.s, args.tau, args.out_prefix)
    print(
        f"auc={_fmt(results['auc'])} r_at_95p={_fmt(results['r_at_95p'])}; "
        f"outputs under prefix {args.out_prefix!r}"
    )
    return 0


def _cmd_report(args) -> int:
    written = report.render_run_figures(args.run_dir, args.out_dir)
    if not written:
        raise ValidationError(f"no delimited outputs found under {args.run_dir}")
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def _stage_simgen(cfg: RunConfig, run_dir: Path) -> None:
    if cfg.scene_files:
        scenes = [load_scene(p) for p in cfg.scene_files]
    else:
        scenes = [builtin_scene(i) for i in cfg.builtin_scenes]
    generate_dataset(scenes, cfg.grid_spec(), cfg.sonar_config(), cfg.dataset_seed, run_dir / "dataset")


def _stage_enhance(cfg: RunConfig, run_dir: Path) -> None:
    manifest_path = run_dir / "dataset" / "manifest.json"
    manifest = load_manifest(manifest_path)
    _enhance_manifest(
        manifest, manifest_path, run_dir / "enhanced",
        cfg.cfar_params(), cfg.dwt_params(), cfg.skip_dwt, cfg.skip_cfar,
    )


def _train_source(cfg: RunConfig, run_dir: Path) -> Path:
    sub = "enhanced" if cfg.enhance_for_training else "dataset"
    return run_dir / sub / "manifest.json"


def _stage_train(cfg: RunConfig, run_dir: Path) -> None:
    manifest_path = _train_source(cfg, run_dir)
    manifest = load_manifest(manifest_path)
    train_manifest = manifest.subset(cfg.train_assets)
    if not train_manifest.records:
        raise ValidationError(f"no records for train assets {cfg.train_assets}")
    val_manifest = manifest.subset([cfg.val_asset])
    if not val_manifest.records:
        raise ValidationError(f"no records for validation asset {cfg.val_asset}")
    result = train(
        train_manifest,
        load_images(train_manifest, manifest_path),
        cfg.triplet_config(),
        cfg.encoder_params(),
        cfg.rgp_seed,
        val_manifest=val_manifest,
        val_images=load_images(val_manifest, manifest_path),
        val_s_seconds=cfg.s_seconds,
        n_arc=cfg.n_arc,
    )
    save_weights(result.weights, run_dir / "weights.senc")
    _write_train_log(result.log, run_dir / "train_log.csv")


def _stage_index(cfg: RunConfig, run_dir: Path) -> None:
    manifest_path = _train_source(cfg, run_dir)
    manifest = load_manifest(manifest_path).subset([cfg.val_asset])
    if not manifest.records:
        raise ValidationError(f"no records for validation asset {cfg.val_asset}")
    images = load_images(manifest, manifest_path)
    resized = {
        rid: resize_array(img.data, cfg.input_h, cfg.input_w) for rid, img in images.items()
    }
    trained = load_weights(run_dir / "weights.senc")
    _index_manifest(manifest, manifest_path, trained, cfg.rgp_seed, run_dir / "trained.sdpr", resized)
    random_init = init_encoder(cfg.encoder_params())
    _index_manifest(manifest, manifest_path, random_init, cfg.rgp_seed, run_dir / "random.sdpr", resized)


def _stage_eval(cfg: RunConfig, run_dir: Path) -> None:
    manifest_path = _train_source(cfg, run_dir)
    manifest = load_manifest(manifest_path, check_images=False).subset([cfg.val_asset])
    for db_name, prefix in (("trained.sdpr", ""), ("random.sdpr", "random_")):
        ids, vectors, _, _ = load_descriptor_db(run_dir / db_name)
        aligned = evaluation.align_descriptors(manifest, ids, vectors)
        _eval_descriptors(
            manifest, aligned, cfg.s_seconds, cfg.tau,
            os.path.join(str(run_dir), prefix), n_arc=cfg.n_arc,
        )


def _stage_report(cfg: RunConfig, run_dir: Path) -> None:
    report.render_run_figures(run_dir)


_STAGE_FUNCS = {
    "simgen": _stage_simgen,
    "enhance": _stage_enhance,
    "train": _stage_train,
    "index": _stage_index,
    "eval": _stage_eval,
    "report": _stage_report,
}


def _stage_outputs(cfg: RunConfig, run_dir: Path, stage: str) -> list[Path]:
    return {
        "simgen": [run_dir / "dataset" / "manifest.json"],
        "enhance": [run_dir / "enhanced" / "manifest.json"],
        "train": [run_dir / "weights.senc", run_dir / "train_log.csv"],
        "index": [run_dir / "trained.sdpr", run_dir / "random.sdpr"],
        "eval": [run_dir / "summary.csv", run_dir / "pr_curve.csv",
                 run_dir / "random_summary.csv", run_dir / "random_pr_curve.csv"],
        "report": [run_dir / "figures" / "pr_curve.png"],
    }[stage]


def _read_summary_results(run_dir: Path) -> dict:
    results = {}
    for prefix, label in (("", "trained"), ("random_", "random")):
        path = run_dir / f"{prefix}summary.csv"
        if path.exists():
            cols = report.read_csv_columns(path)
            results[label] = {name: float(col[0]) for name, col in cols.items()}
    return results


def _write_run_summary(cfg: RunConfig, run_dir: Path, statuses: dict[str, str]) -> None:
    summary = {
        "config": cfg.to_dict(),
        "stages": statuses,
        "results": _read_summary_results(run_dir),
    }
    with open(run_dir / "run_summary.json", "w", encoding="utf-8", newline="") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def run_pipeline(cfg: RunConfig, force: bool = False) -> int:
    """Execute every pipeline stage in order; 0 on success, 2 on failure."""
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    statuses: dict[str, str] = {}
    failed = False
    for stage in PIPELINE_STAGES:
        if failed:
            statuses[stage] = "not_run"
            continue
        if stage == "enhance" and not cfg.enhance_for_training:
            statuses[stage] = "disabled"
            continue
        if not force and all(p.exists() for p in _stage_outputs(cfg, run_dir, stage)):
            statuses[stage] = "ok"
            continue
        try:
            _STAGE_FUNCS[stage](cfg, run_dir)
        except Exception as exc:
            statuses[stage] = f"failed: {exc}"
            print(f"pipeline failed at stage {stage}: {exc}", file=sys.stderr)
            failed = True
            continue
        statuses[stage] = "ok"
    _write_run_summary(cfg, run_dir, statuses)
    return 2 if failed else 0


def _cmd_pipeline(args) -> int:
    if not args.config and not args.builtin_experiment:
        raise ValidationError("pipeline needs --config and/or --builtin-experiment")
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = {}
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    if args.no_enhance:
        overrides["enhance_for_training"] = False
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return run_pipeline(cfg, force=args.force)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonarplace",
        description="Sonar place recognition: synthesis, enhancement, descriptors, retrieval metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simgen", help="render a synthetic scan dataset from scene geometry")
    p.add_argument("--scene-file", action="append", help="scene JSON (repeatable)")
    p.add_argument("--builtin", action="append", type=int, choices=(1, 2, 3),
                   help="builtin scene id: 1 L-shaped wall, 2 U-shaped basin, 3 bent breakwater (repeatable)")
    p.add_argument("--grid-size", type=float, default=50.0, help="square grid side in meters (default 50)")
    p.add_argument("--cell-size", type=float, default=2.0, help="grid cell side in meters (default 2)")
    p.add_argument("--noise-max", type=float, default=0.75,
                   help="max perturbation radius in meters for samples (default 0.75)")
    p.add_argument("--samples-per-anchor", type=int, default=5,
                   help="perturbed scans per anchor (default 5)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--out-dir", required=True, help="output dataset directory")
    p.add_argument("--max-range", type=float, default=30.0, help="sonar range in meters (default 30)")
    p.add_argument("--aperture-deg", type=float, default=120.0,
                   help="horizontal aperture in degrees (default 120)")
    p.add_argument("--n-beams", type=int, default=64, help="beam count (default 64)")
    p.add_argument("--n-bins", type=int, default=256, help="range bin count (default 256)")
    p.set_defaults(func=_cmd_simgen)

    p = sub.add_parser("enhance", help="normalize, denoise, and CFAR-binarize a dataset")
    p.add_argument("--input-manifest", required=True, help="manifest of the raw dataset")
    p.add_argument("--output-dir", required=True, help="directory for enhanced images + manifest")
    p.add_argument("--cfar-mode", choices=("soca", "goca"), default="soca",
                   help="smallest-of or greatest-of cell averaging (default soca)")
    p.add_argument("--nw", type=int, default=40, help="cells per averaging window (default 40)")
    p.add_argument("--pfa", type=float, default=0.1, help="design false-alarm probability (default 0.1)")
    p.add_argument("--guard", type=int, default=2, help="guard cells beside the cell under test (default 2)")
    p.add_argument("--dwt-levels", type=int, default=2, help="wavelet decomposition levels (default 2)")
    p.add_argument("--skip-dwt", action="store_true", help="skip wavelet denoising")
    p.add_argument("--skip-cfar", action="store_true", help="skip CFAR binarization")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("overlap", help="export the pairwise FOV-overlap table of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output CSV (row_id, col_id, overlap, is_positive)")
    p.add_argument("--tau", type=float, default=0.7, help="positive-pair overlap threshold (default 0.7)")
    p.add_argument("--max-heading-diff-deg", type=float, default=90.0,
                   help="max heading difference for a positive pair (default 90)")
    p.add_argument("--n-arc", type=int, default=DEFAULT_N_ARC,
                   help="arc segments per sector polygon (default 64)")
    p.set_defaults(func=_cmd_overlap)

    p = sub.add_parser("train", help="train the descriptor encoder with triplet mining")
    p.add_argument("--manifest", required=True, help="manifest of (enhanced) training images")
    p.add_argument("--train-assets", type=_parse_int_list, default=(2, 3),
                   help="comma-separated asset ids to train on (default 2,3)")
    p.add_argument("--val-asset", default="1",
                   help="asset id held out for validation AUC, or 'none' (default 1)")
    p.add_argument("--margin", type=float, default=0.5, help="triplet margin (default 0.5)")
    p.add_argument("--nneg", type=int, default=10, help="negative pool size (default 10)")
    p.add_argument("--npos", type=int, default=5, help="positive pool size (default 5)")
    p.add_argument("--tau", type=float, default=0.7, help="positive-pair overlap threshold (default 0.7)")
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate (default 1e-3)")
    p.add_argument("--epochs", type=int, default=10, help="training epochs (default 10)")
    p.add_argument("--seed", type=int, default=0, help="training seed (default 0)")
    p.add_argument("--encoder-seed", type=int, default=0, help="weight init seed (default 0)")
    p.add_argument("--rgp-seed", type=int, default=0, help="random projection seed (default 0)")
    p.add_argument("--widths", type=_parse_int_list, default=(8, 16, 32),
                   help="encoder channel widths (default 8,16,32)")
    p.add_argument("--input-h", type=int, default=256,
                   help="encoder input height after resize (default 256)")
    p.add_argument("--input-w", type=int, default=200,
                   help="encoder input width after resize (default 200)")
    p.add_argument("--val-s", type=float, default=3.0,
                   help="temporal exclusion window for validation AUC (default 3)")
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--log", help="per-epoch CSV: epoch, mean_loss, active_fraction, val_auc")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("index", help="compute a descriptor database for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights-file", help="trained weights; omit for random-init descriptors")
    p.add_argument("--encoder-seed", type=int, default=0,
                   help="init seed when no weights file is given (default 0)")
    p.add_argument("--widths", type=_parse_int_list, default=(8, 16, 32),
                   help="random-init encoder channel widths (default 8,16,32)")
    p.add_argument("--input-h", type=int, default=256,
                   help="random-init encoder input height (default 256)")
    p.add_argument("--input-w", type=int, default=200,
                   help="random-init encoder input width (default 200)")
    p.add_argument("--rgp-seed", type=int, default=0, help="random projection seed (default 0)")
    p.add_argument("--out", required=True, help="output descriptor database")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("eval", help="retrieval metrics for a descriptor database")
    p.add_argument("--manifest", required=True)
    p.add_argument("--descriptors", required=True, help="descriptor database to evaluate")
    p.add_argument("--s", type=float, default=3.0,
                   help="temporal exclusion window in seconds, typically 0 or 3 (default 3)")
    p.add_argument("--tau", type=float, default=0.7, help="positive-pair overlap threshold (default 0.7)")
    p.add_argument("--out-prefix", default="",
                   help="prefix for pr_curve/summary/overlap_precision/descriptors_2d CSVs")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="render figures from a run directory's delimited outputs")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out-dir", help="figure directory (default <run-dir>/figures)")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("pipeline", help="run simgen, enhance, train, index, eval, report in order")
    p.add_argument("--config", help="JSON run configuration (unknown keys rejected)")
    p.add_argument("--builtin-experiment", action="store_true",
                   help="run the builtin three-scene experiment with default parameters")
    p.add_argument("--out-dir", help="override the configured output directory")
    p.add_argument("--force", action="store_true", help="rerun stages whose outputs already exist")
    p.add_argument("--no-enhance", action="store_true",
                   help="train and index on raw images instead of enhanced ones")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SonarPlaceError, OSError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
