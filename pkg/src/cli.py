"""Command-line surface: ``pcdesc <command>`` or ``python -m src.cli <command>``.

Tabular results are comma-separated with a header row, written to ``--out``
or stdout. Exit codes: 0 success, 2 configuration or argument, 3 parse,
4 numeric, 5 insufficient data or matches.
"""

import argparse
import csv
import os
import sys

import numpy as np

from .config import DEFAULT_CONFIG_PATH, Config
from .errors import ConfigurationError, ParseError, ToolkitError
from .evaluation import (
    Perturbation,
    describe_cloud,
    evaluate_local,
    evaluate_retrieval,
    one_factor_sweep,
    register_descriptions,
)
from .evaluation.robustness import (
    REGISTRATION_COLUMNS,
    REPEATABILITY_COLUMNS,
    RETRIEVAL_COLUMNS,
    SWEEP_DOWNSAMPLE,
    SWEEP_NOISE,
    SWEEP_ROTATION,
)
from .fileio import generate_scenes, load_cloud, load_dataset, load_model, save_model, write_dataset
from .geometry import RigidTransform
from .registration import registration_success, rte_rre
from .training import (
    GLOBAL_LOG_COLUMNS,
    LOCAL_LOG_COLUMNS,
    run_gradcheck,
    train_global,
    train_local,
    write_loss_log,
)
from .utils.log import log, run_sink

REGISTER_COLUMNS = ["inliers", "iterations", "converged", "rte", "rre", "success", "transform"]
EXTRACT_COLUMNS = ["points", "keypoints", "local_dim", "global_dim", "degenerate"]
GRADCHECK_COLUMNS = ["block", "max_error", "worst", "passed"]


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(rows: list[dict], columns: list[str], out: str | None):
    handle = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])
    finally:
        if out:
            handle.close()
    if out:
        log.logger.info(f"Wrote {len(rows)} rows to {out}")


def _load_config(args) -> Config:
    config = Config(args.config)
    if args.seed is not None:
        config.pipeline.training.seed = args.seed
        config.pipeline.eval.seed = args.seed
    return config


def _model_dtype(config: Config):
    return np.float64 if config.pipeline.training.double_precision else np.float32


def _checkpointer(out: str):
    stem, suffix = os.path.splitext(out)

    def save(step, model):
        save_model(f"{stem}.step{step:06d}{suffix or '.dhmd'}", model)

    return save


def _run_log_path(out: str) -> str:
    return os.path.splitext(out)[0] + ".log"


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def cmd_synth(args) -> int:
    config = _load_config(args)
    seed = config.pipeline.training.seed
    points = args.points or config.pipeline.training.points_per_cloud
    scenes = generate_scenes(args.count, points, seed)
    write_dataset(scenes, args.out)
    return 0


def cmd_train_local(args) -> int:
    config = _load_config(args)
    pipeline = config.pipeline
    if args.steps is not None:
        pipeline.training.local_steps = args.steps
    dataset = load_dataset(args.data)
    model = load_model(args.init, pipeline.architecture, _model_dtype(config)) if args.init else None
    _ensure_parent(args.out)
    with run_sink(_run_log_path(args.out)):
        result = train_local(dataset, pipeline, model=model, on_checkpoint=_checkpointer(args.out))
        save_model(args.out, result.model)
        log.logger.info(f"Saved phase-1 model to {args.out}")
    if args.log:
        write_loss_log(args.log, result.history, LOCAL_LOG_COLUMNS)
    return 0


def cmd_train_global(args) -> int:
    config = _load_config(args)
    pipeline = config.pipeline
    if not args.model:
        raise ConfigurationError("global training needs a phase-1 model (--model)")
    if not os.path.exists(args.model):
        raise ConfigurationError(f"phase-1 model not found: {args.model}")
    if args.steps is not None:
        pipeline.training.global_steps = args.steps
    dataset = load_dataset(args.data)
    model = load_model(args.model, pipeline.architecture, _model_dtype(config))
    _ensure_parent(args.out)
    with run_sink(_run_log_path(args.out)):
        result = train_global(dataset, model, pipeline, on_checkpoint=_checkpointer(args.out))
        save_model(args.out, result.model)
        log.logger.info(f"Saved phase-2 model to {args.out}")
    if args.log:
        write_loss_log(args.log, result.history, GLOBAL_LOG_COLUMNS)
    return 0


def cmd_extract(args) -> int:
    config = _load_config(args)
    eval_cfg = config.pipeline.eval
    model = load_model(args.model, config.pipeline.architecture)
    cloud = load_cloud(args.cloud)
    description = describe_cloud(
        cloud,
        model,
        keypoints=args.keypoints or eval_cfg.keypoints,
        nms_radius=eval_cfg.nms_radius if args.nms is None else args.nms,
    )
    _ensure_parent(args.out)
    with open(args.out, "wb") as f:
        np.savez(
            f,
            descriptors=description.descriptors,
            saliency=description.saliency,
            keypoints=description.keypoints.indices,
            keypoint_scores=description.keypoints.scores,
            global_descriptor=description.global_descriptor,
        )
    log.logger.info(f"Wrote descriptors of {args.cloud} to {args.out}")
    row = {
        "points": cloud.count,
        "keypoints": len(description.keypoints),
        "local_dim": description.descriptors.shape[1],
        "global_dim": description.global_descriptor.shape[0],
        "degenerate": description.degenerate,
    }
    _write_rows([row], EXTRACT_COLUMNS, None)
    return 0


def _read_truth(path: str) -> RigidTransform:
    try:
        matrix = np.loadtxt(path, dtype=np.float64)
    except ValueError as e:
        raise ParseError(f"ground-truth transform is not a numeric matrix: {e}", offset=0, path=path)
    if matrix.shape != (4, 4):
        raise ParseError(f"ground-truth transform must be 4x4, got {matrix.shape}", offset=0, path=path)
    return RigidTransform.from_matrix(matrix)


def cmd_register(args) -> int:
    config = _load_config(args)
    eval_cfg = config.pipeline.eval
    if args.inlier_threshold is not None:
        eval_cfg.inlier_threshold = args.inlier_threshold
    if args.max_iter is not None:
        eval_cfg.ransac_max_iter = args.max_iter
    model = load_model(args.model, config.pipeline.architecture)
    keypoints = args.keypoints or eval_cfg.keypoints
    source = describe_cloud(load_cloud(args.source), model, keypoints, eval_cfg.nms_radius, with_global=False)
    target = describe_cloud(load_cloud(args.target), model, keypoints, eval_cfg.nms_radius, with_global=False)
    result = register_descriptions(source, target, eval_cfg, saliency_weighted=args.saliency_weighted)
    row = {
        "inliers": result.inliers,
        "iterations": result.iterations,
        "converged": result.converged,
        "rte": float("nan"),
        "rre": float("nan"),
        "success": "",
        "transform": " ".join(repr(float(v)) for v in result.transform.as_matrix().reshape(-1)),
    }
    if args.truth:
        rte, rre = rte_rre(result.transform, _read_truth(args.truth))
        row.update(rte=rte, rre=rre, success=registration_success(rte, rre, eval_cfg.rte_threshold, eval_cfg.rre_threshold))
    _write_rows([row], REGISTER_COLUMNS, args.out)
    return 0


def _sweep(args) -> list[Perturbation]:
    if args.noise is None and args.rotation is None and args.downsample is None:
        return one_factor_sweep(SWEEP_NOISE, SWEEP_ROTATION, SWEEP_DOWNSAMPLE)
    return one_factor_sweep(args.noise or (), args.rotation or (), args.downsample or ())


def cmd_eval(args) -> int:
    config = _load_config(args)
    eval_cfg = config.pipeline.eval
    model = load_model(args.model, config.pipeline.architecture)
    scenes = load_dataset(args.data)
    perturbations = _sweep(args)
    if args.task == "retrieval":
        rows = evaluate_retrieval(scenes, model, eval_cfg, perturbations, leave_one_out=args.leave_one_out)
        columns = RETRIEVAL_COLUMNS
    else:
        rows = evaluate_local(
            scenes,
            model,
            eval_cfg,
            perturbations,
            tasks=(args.task,),
            radius=args.radius,
            saliency_weighted=args.saliency_weighted,
        )
        columns = REPEATABILITY_COLUMNS if args.task == "repeatability" else REGISTRATION_COLUMNS
    _write_rows(rows, columns, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    reports = run_gradcheck(seed=seed, tolerance=args.tolerance)
    rows = [vars(r) for r in reports]
    _write_rows(rows, GRADCHECK_COLUMNS, args.out)
    return 0 if all(r.passed for r in reports) else 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcdesc", description="Point-cloud keypoints, local and global descriptors.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG_PATH, help="Pipeline configuration (YAML)")
    common.add_argument("--seed", type=int, default=None, help="Overrides training.seed and eval.seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic scene dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--points", type=int, default=None, help="Points per cloud (default: training.points_per_cloud)")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train-local", parents=[common], help="Phase 1: encoder and detector")
    p.add_argument("--data", required=True, help="Dataset directory")
    p.add_argument("--out", required=True, help="Output model file")
    p.add_argument("--init", default=None, help="Start from this model instead of a fresh initialization")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--log", default=None, help="Loss log CSV")
    p.set_defaults(handler=cmd_train_local)

    p = sub.add_parser("train-global", parents=[common], help="Phase 2: global assembler on a frozen encoder")
    p.add_argument("--data", required=True, help="Dataset directory")
    p.add_argument("--model", default=None, help="Phase-1 model")
    p.add_argument("--out", required=True, help="Output model file")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--log", default=None, help="Loss log CSV")
    p.set_defaults(handler=cmd_train_global)

    p = sub.add_parser("extract", parents=[common], help="Descriptors, saliency, keypoints and global descriptor")
    p.add_argument("--model", required=True)
    p.add_argument("--cloud", required=True, help=".dhpc or .xyz cloud")
    p.add_argument("--out", required=True, help="Output .npz")
    p.add_argument("--keypoints", type=int, default=None)
    p.add_argument("--nms", type=float, default=None, help="Keypoint suppression radius (m)")
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("register", parents=[common], help="Register two clouds with matched keypoint descriptors")
    p.add_argument("--model", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--truth", default=None, help="Text file with the 4x4 ground-truth transform")
    p.add_argument("--keypoints", type=int, default=None)
    p.add_argument("--inlier-threshold", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--saliency-weighted", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_register)

    p = sub.add_parser("eval", parents=[common], help="Robustness sweep over noise, rotation and downsampling")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", choices=["repeatability", "registration", "retrieval"], required=True)
    p.add_argument("--noise", type=_floats, default=None, help="Noise levels σ (m), comma-separated")
    p.add_argument("--rotation", type=_floats, default=None, help="Yaw angles (deg), comma-separated")
    p.add_argument("--downsample", type=_floats, default=None, help="Downsampling factors α >= 1, comma-separated")
    p.add_argument("--radius", type=float, default=None, help="Repeatability radius (m)")
    p.add_argument("--leave-one-out", action="store_true")
    p.add_argument("--saliency-weighted", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="Finite-difference check of every layer and loss")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ToolkitError as e:
        log.logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except OSError as e:
        log.logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
