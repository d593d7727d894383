"""Command-line entry point: train, sample, evaluate, ablate, render.

Every command is deterministic under a fixed seed and config. Exit codes:
0 success, 2 usage or config problems, 1 runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .checkpoint import load_denoiser
from .config import (
    RunConfig,
    guidance_from,
    load_dataset,
    load_run_config,
    run_config_to_json,
    train_config_from,
)
from .datagen import vocabulary_from_captions
from .errors import (
    IncompatibleCheckpointError,
    InvalidConfigError,
    InvalidInputError,
    MMDMError,
)
from .evaluation import EvalConfig, evaluate, train_evaluator
from .masking import sample_mask
from .motion import MotionSequence, load_motion_bundle, save_motion_bundle
from .report import (
    format_ablation_table,
    plot_ablation,
    plot_loss_curve,
    plot_metrics,
    write_ablation_tsv,
    write_metrics_tsv,
)
from .sampling import GuidanceConfig, p_sample_loop
from .schedule import make_cosine_schedule
from .trainer import train
from .evaluation import REPORT_FIELDS

MASK_RATIO_GRID = (0.1, 0.2, 0.3, 0.4)
ARCH_GRID = ((4, 2), (6, 2), (8, 4), (12, 4))


def _load_config(args) -> RunConfig:
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "out", None) is not None:
        overrides.append(f"out_dir={args.out}")
    return load_run_config(getattr(args, "config", None), overrides)


def run_train(run: RunConfig):
    """Train per config; returns (TrainResult, skeleton, vocabulary)."""
    motions, skeleton = load_dataset(run)
    vocabulary = vocabulary_from_captions(m.caption for m in motions)
    result = train(
        motions,
        skeleton,
        vocabulary,
        run.model,
        train_config_from(run),
        out_dir=run.out_dir,
    )
    out_dir = Path(run.out_dir)
    (out_dir / "config.json").write_text(run_config_to_json(run), encoding="utf-8")
    plot_loss_curve(result.history, out_dir / "loss_curve.png")
    return result, skeleton, vocabulary


def cmd_train(args) -> int:
    run = _load_config(args)
    result, _, _ = run_train(run)
    final = result.history[-1] if result.history else None
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    if final is not None:
        parts = ", ".join(f"{k}={v:.6f}" for k, v in final.as_dict().items())
        print(f"final loss: {parts}")
    return 0


def cmd_sample(args) -> int:
    model, meta, _ = load_denoiser(args.checkpoint)
    steps = args.diffusion_steps or meta.get("diffusion_steps")
    if steps is None:
        raise IncompatibleCheckpointError(
            f"{args.checkpoint}: no diffusion step count stored; pass --diffusion-steps"
        )
    if args.length > model.config.max_length:
        raise InvalidConfigError(
            f"length {args.length} exceeds checkpoint max_length {model.config.max_length}"
        )
    schedule = make_cosine_schedule(int(steps))
    guidance = GuidanceConfig(scale=args.guidance_scale)
    guidance.validate()

    mask = None
    if args.infer_mask_ratio > 0:
        strategy = model.config.strategy
        slots = args.length if strategy == "time_frames" else 5
        mask = sample_mask(strategy, slots, args.infer_mask_ratio, args.seed)

    condition = model.encode_text(args.caption)
    frames = p_sample_loop(
        model.denoise_fn(mask=mask),
        condition,
        args.length,
        schedule,
        guidance,
        args.seed,
        model.frame_shape,
    )
    motion = MotionSequence(frames, args.caption, args.fps)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sidecar = save_motion_bundle(out, motion, model.skeleton)
    print(f"wrote {out} ({args.length} frames, seed {args.seed}) + {sidecar}")
    print(f'caption: "{args.caption}", guidance scale {args.guidance_scale}')
    return 0


def _print_report(report) -> None:
    for name in REPORT_FIELDS:
        value = getattr(report, name)
        if value is None:
            print(f"{name:>20}: -")
        else:
            print(f"{name:>20}: {value.mean:.4f} ± {value.ci95:.4f}")


def run_evaluate(run: RunConfig, checkpoint=None, real_row=False, repeats=None):
    """Evaluate a checkpoint (or the ground truth) against the config dataset."""
    motions, _ = load_dataset(run)
    eval_cfg = run.eval
    if repeats is not None:
        eval_cfg = dataclasses.replace(eval_cfg, repeats=repeats)
    evaluator = train_evaluator(
        motions, seed=eval_cfg.seed, steps=eval_cfg.evaluator_steps,
        embed_dim=eval_cfg.evaluator_dim,
    )
    if real_row:
        model = None
        schedule = make_cosine_schedule(run.diffusion.steps)
    else:
        model, meta, _ = load_denoiser(checkpoint)
        schedule = make_cosine_schedule(int(meta.get("diffusion_steps", run.diffusion.steps)))
    mask = None
    if run.diffusion.infer_mask_ratio > 0 and not real_row:
        strategy = model.config.strategy
        slots = motions[0].length if strategy == "time_frames" else 5
        mask = sample_mask(strategy, slots, run.diffusion.infer_mask_ratio, eval_cfg.seed)
    return evaluate(
        model,
        evaluator,
        motions,
        schedule,
        guidance_from(run),
        eval_cfg,
        seed=eval_cfg.seed,
        real_row=real_row,
        infer_mask=mask,
    )


def cmd_evaluate(args) -> int:
    run = _load_config(args)
    if not args.real_row and not args.checkpoint:
        raise InvalidConfigError("--checkpoint required unless --real-row is given")
    report = run_evaluate(
        run, checkpoint=args.checkpoint, real_row=args.real_row, repeats=args.repeats
    )
    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_tsv(report, out_dir / "metrics.tsv")
    plot_metrics(report, out_dir / "metrics.png")
    _print_report(report)
    print(f"report: {out_dir / 'metrics.tsv'}")
    return 0


def _ablation_variants(run: RunConfig, sweep: str):
    if sweep == "mask_ratio":
        for ratio in MASK_RATIO_GRID:
            label = f"{ratio:g}"
            yield label, dataclasses.replace(
                run,
                train=dataclasses.replace(run.train, mask_ratio=ratio),
            )
    elif sweep == "arch":
        for enc, dec in ARCH_GRID:
            label = f"{enc:02d} Encoder+{dec} Decoder"
            yield label, dataclasses.replace(
                run,
                model=dataclasses.replace(run.model, encoder_layers=enc, decoder_layers=dec),
            )
    else:
        raise InvalidConfigError(f"unknown sweep {sweep!r}; use mask_ratio or arch")


def run_ablate(run: RunConfig, sweep: str, out_dir=None) -> list[dict]:
    """Train and evaluate every sweep variant with a shared seed; one row per
    variant, failures recorded per row without aborting the sweep."""
    out_dir = Path(out_dir if out_dir is not None else run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    motions, _ = load_dataset(run)
    evaluator = train_evaluator(
        motions, seed=run.eval.seed, steps=run.eval.evaluator_steps,
        embed_dim=run.eval.evaluator_dim,
    )
    rows = []
    for i, (label, variant_run) in enumerate(_ablation_variants(run, sweep)):
        variant_dir = out_dir / f"variant_{i:02d}"
        try:
            variant_run = dataclasses.replace(variant_run, out_dir=str(variant_dir))
            result, _, _ = run_train(variant_run)
            schedule = make_cosine_schedule(variant_run.diffusion.steps)
            report = evaluate(
                result.state.model,
                evaluator,
                motions,
                schedule,
                guidance_from(variant_run),
                variant_run.eval,
                seed=variant_run.eval.seed,
            )
            rows.append(
                {
                    "variant": label,
                    "fid": report.fid.mean,
                    "r_precision_top3": report.r_precision_top3.mean,
                    "mm_dist": report.mm_dist.mean,
                    "diversity": report.diversity.mean,
                    "multimodality": (
                        report.multimodality.mean if report.multimodality else None
                    ),
                    "error": "",
                }
            )
        except Exception as exc:  # per-row failure should not kill the sweep
            rows.append({"variant": label, "error": f"{type(exc).__name__}: {exc}"})
    write_ablation_tsv(rows, out_dir / "ablation.tsv")
    plot_ablation(rows, out_dir / "ablation.png", title=f"{sweep} sweep")
    return rows


def cmd_ablate(args) -> int:
    run = _load_config(args)
    rows = run_ablate(run, args.sweep)
    print(format_ablation_table(rows))
    print(f"table: {Path(run.out_dir) / 'ablation.tsv'}")
    return 0


def cmd_render(args) -> int:
    motion, skeleton = load_motion_bundle(args.motion, args.skeleton)
    try:
        height, width = (int(v) for v in args.size.split("x"))
    except ValueError as exc:
        raise InvalidConfigError(f"--size must look like 240x320, got {args.size!r}") from exc
    from .render import render_motion

    paths = render_motion(motion, skeleton, args.out, size=(height, width), axes=args.axes)
    print(f"wrote {len(paths)} frames to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmdm",
        description="Masked motion diffusion: train, sample, evaluate, ablate, render.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None, help="JSON run config path")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override any config key (repeatable); flags win over the file",
        )

    p_train = sub.add_parser("train", help="train a denoiser on the configured dataset")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sample = sub.add_parser("sample", help="sample one motion from a checkpoint")
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--caption", required=True)
    p_sample.add_argument("--length", type=int, default=32)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--guidance-scale", type=float, default=2.5)
    p_sample.add_argument("--infer-mask-ratio", type=float, default=0.0)
    p_sample.add_argument("--diffusion-steps", type=int, default=None)
    p_sample.add_argument("--fps", type=float, default=20.0)
    p_sample.add_argument("--out", default="sample.mmot")
    p_sample.set_defaults(func=cmd_sample)

    p_eval = sub.add_parser("evaluate", help="run the metric suite on a checkpoint")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--repeats", type=int, default=None)
    p_eval.add_argument(
        "--real-row", action="store_true",
        help="evaluate the ground truth against itself instead of a model",
    )
    p_eval.set_defaults(func=cmd_evaluate)

    p_ablate = sub.add_parser("ablate", help="sweep mask ratios or architectures")
    add_common(p_ablate)
    p_ablate.add_argument("--sweep", choices=("mask_ratio", "arch"), default="mask_ratio")
    p_ablate.set_defaults(func=cmd_ablate)

    p_render = sub.add_parser("render", help="render a motion file to PPM frames")
    p_render.add_argument("--motion", required=True)
    p_render.add_argument("--skeleton", default=None, help="sidecar path (default <motion>.skel)")
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--size", default="240x320")
    p_render.add_argument("--axes", default="xy", choices=("xy", "xz", "zy"))
    p_render.add_argument("--format", default="ppm", choices=("ppm",))
    p_render.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfigError, InvalidInputError, IncompatibleCheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MMDMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
