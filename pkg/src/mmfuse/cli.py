"""Command-line surface: train, eval, ablate, gradcheck, gen-synth.

Exit codes: 0 ok, 1 verification failure, 2 config error, 3 data error,
4 numeric failure, 5 checkpoint/config mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as da
from . import verification
from .errors import (
    CheckpointMismatchError,
    ConfigError,
    DataError,
    DimensionMismatchError,
    MmfuseError,
)
from .model import (
    checkpoint_meta,
    config_digest,
    load_checkpoint,
    restore_params,
)
from .training import (
    METRIC_NAMES,
    TrainConfig,
    compute_metrics,
    confusion_on,
    multi_run,
    render_report,
    stratified_split,
)

logger = logging.getLogger("mmfuse")

LAMBDA_SWEEP = (0.0, 0.1, 0.2, 0.25, 0.3)
POOLING_SWEEP = ("asp", "mean", "max")
FUSION_SWEEP = ("at", "concat", "gmu", "mfb", "mfh")
LAYER_SWEEP = (3, 2, 1)

_OVERRIDE_KEYS = (
    "seed", "runs", "batch_size", "lr0", "lambda_mi", "patience",
    "step_size", "gamma", "max_epochs", "split_train_frac", "pooling",
    "fusion", "proj_dim", "precision",
)


def _add_override_flags(parser):
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--runs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    parser.add_argument("--lr", type=float, default=None, dest="lr0")
    parser.add_argument("--lambda-mi", type=float, default=None, dest="lambda_mi")
    parser.add_argument("--patience", type=int, default=None)
    parser.add_argument("--step-size", type=int, default=None, dest="step_size")
    parser.add_argument("--gamma", type=float, default=None)
    parser.add_argument("--max-epochs", type=int, default=None, dest="max_epochs")
    parser.add_argument("--split-frac", type=float, default=None,
                        dest="split_train_frac")
    parser.add_argument("--pooling", choices=POOLING_SWEEP, default=None)
    parser.add_argument("--fusion", choices=FUSION_SWEEP, default=None)
    parser.add_argument("--proj-dim", type=int, default=None, dest="proj_dim")
    parser.add_argument("--precision", choices=("double", "single"), default=None)


def _effective_config(args):
    """Defaults, then config-file values, then explicit CLI flags."""
    values = {}
    data_path = getattr(args, "data", None)
    out_path = getattr(args, "out", None)
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        data_path = data_path or file_values.pop("data", None)
        out_path = out_path or file_values.pop("out", None)
        values.update(file_values)
    for key in _OVERRIDE_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        config = TrainConfig.from_dict(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config, data_path, out_path


def _print_metrics(metrics):
    rounded = {name: round(metrics[name], 2) for name in METRIC_NAMES}
    print(json.dumps(rounded, sort_keys=True, indent=2))


# ---------------------------------------------------------------------------
# commands


def cmd_train(args):
    config, data_path, out_path = _effective_config(args)
    if not data_path:
        raise DataError("no data manifest given (use --data or config 'data')")
    if not out_path:
        raise ConfigError("no output directory given (use --out or config 'out')")
    train_records, test_records = da.load_dataset(data_path)
    out_dir = Path(out_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = multi_run(train_records, test_records, config, out_dir=out_dir)
    report["data"] = str(data_path)
    report_path = out_dir / "report.json"
    report_path.write_text(render_report(report), encoding="utf-8")
    print(f"report: {report_path}")
    for name in METRIC_NAMES:
        agg = report["aggregate"].get(name)
        if agg:
            print(f"{name:12s} {agg['mean']:6.2f} +- {agg['std']:.2f}")
    if not report["aggregate"]:
        # every run failed: surface the first failure's category
        code = next(
            (entry["error_code"] for entry in report["per_run"]
             if "error_code" in entry),
            1,
        )
        print("error: all runs failed; see the report for details",
              file=sys.stderr)
        return code
    return 0


def _dims_from_blobs(blobs, config):
    """Recover the data dims a checkpoint was trained with."""
    if "proj.w_t" not in blobs or "proj.w_a" not in blobs:
        raise CheckpointMismatchError("checkpoint lacks projection tensors")
    d_t = int(blobs["proj.w_t"].shape[1])
    pooled = int(blobs["proj.w_a"].shape[1])
    d_a = pooled // 2 if config.pooling == "asp" else pooled
    return d_a, d_t


def cmd_eval(args):
    config, data_path, _ = _effective_config(args)
    if not data_path:
        raise DataError("no data manifest given (use --data or config 'data')")
    digest_found, blobs = load_checkpoint(args.checkpoint)
    meta = checkpoint_meta(blobs)
    train_records, test_records = da.load_dataset(data_path)

    ref = train_records + test_records
    if not ref:
        raise DataError("dataset is empty")
    d_a_ckpt, d_t_ckpt = _dims_from_blobs(blobs, config)
    if (ref[0].d_a, ref[0].d_t) != (d_a_ckpt, d_t_ckpt):
        raise DimensionMismatchError(
            f"data dims ({ref[0].d_a}, {ref[0].d_t}) do not match the "
            f"checkpoint's ({d_a_ckpt}, {d_t_ckpt})"
        )
    mcfg = config.model_config(d_a_ckpt, d_t_ckpt)
    expected = config_digest(mcfg)
    params = restore_params(mcfg, blobs, expected_digest=expected,
                            found_digest=digest_found)

    if args.split == "test":
        records = test_records
    else:
        run_seed = int(meta.get("run_seed", config.seed))
        train_part, val_part = stratified_split(
            train_records, config.split_train_frac, run_seed
        )
        records = train_part if args.split == "train" else val_part
    if not records:
        raise DataError(f"split {args.split!r} has no records")
    metrics = compute_metrics(confusion_on(records, params, mcfg))
    _print_metrics(metrics)
    return 0


def cmd_ablate(args):
    config, data_path, out_path = _effective_config(args)
    if not data_path:
        raise DataError("no data manifest given (use --data or config 'data')")
    train_records, test_records = da.load_dataset(data_path)
    out_dir = Path(out_path) if out_path else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    if args.axis == "pooling":
        variants = [(name, {"pooling": name}) for name in POOLING_SWEEP]
    elif args.axis == "fusion":
        variants = [(name, {"fusion": name}) for name in FUSION_SWEEP]
    elif args.axis == "lambda":
        variants = [(str(lam), {"lambda_mi": lam}) for lam in LAMBDA_SWEEP]
    else:  # layers-meta: encoder-side policy, no runnable variant here
        print("axis layers-meta: layer-sum count is an extraction-time "
              "setting; rows below need re-extracted embeddings")
        rows = [{"variant": str(k), "status": "external-data"}
                for k in LAYER_SWEEP]
        for row in rows:
            print(f"{row['variant']:>8s}  {row['status']}")
        if out_dir:
            (out_dir / "ablation.json").write_text(
                json.dumps({"axis": args.axis, "rows": rows}, indent=2,
                           sort_keys=True) + "\n",
                encoding="utf-8",
            )
        return 0

    rows = []
    for name, override in variants:
        variant_config = dataclasses.replace(config, **override)
        try:
            report = multi_run(train_records, test_records, variant_config)
        except Exception as exc:
            logger.error("variant %s failed: %s", name, exc)
            rows.append({"variant": name, "status": "failed", "error": str(exc)})
            continue
        rows.append({
            "variant": name,
            "status": "partial" if report["partial"] else "ok",
            "aggregate": report["aggregate"],
        })

    header = f"{'variant':>10s}  " + "  ".join(f"{m:>16s}" for m in METRIC_NAMES)
    print(header)
    for row in rows:
        if row["status"] == "failed":
            print(f"{row['variant']:>10s}  failed: {row['error']}")
            continue
        cells = []
        for name in METRIC_NAMES:
            agg = row["aggregate"].get(name)
            cells.append(f"{agg['mean']:7.2f} +- {agg['std']:5.2f}" if agg
                         else " " * 16)
        print(f"{row['variant']:>10s}  " + "  ".join(cells))
    if out_dir:
        (out_dir / "ablation.json").write_text(
            json.dumps({"axis": args.axis, "rows": rows}, indent=2,
                       sort_keys=True) + "\n",
            encoding="utf-8",
        )
    if any(row["status"] == "failed" for row in rows):
        return 1
    return 0


def cmd_gradcheck(args):
    results = verification.run_suite(seed=args.seed)
    all_ok = True
    for name, err, ok in results:
        print(f"{name:24s} max_rel_err={err:.3e}  {'PASS' if ok else 'FAIL'}")
        all_ok &= ok
    if not all_ok:
        failed = ", ".join(name for name, _, ok in results if not ok)
        print(f"gradient check FAILED for: {failed}", file=sys.stderr)
        return 1
    print(f"all {len(results)} groups within {verification.TOLERANCE:g}")
    return 0


def cmd_gen_synth(args):
    manifest = da.gen_synthetic(
        n_per_class=args.n,
        d_t=args.d_t,
        d_a=args.d_a,
        separation=args.sep,
        seed=args.seed,
        out_dir=args.out,
        chunks_range=(args.min_chunks, args.max_chunks),
        frames_range=(args.min_frames, args.max_frames),
        test_frac=args.test_frac,
    )
    print(manifest)
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmfuse",
        description="multimodal audio-text fusion toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the multi-seed training protocol")
    p_train.add_argument("--config", default=None, help="JSON config file")
    p_train.add_argument("--data", default=None, help="dataset manifest path")
    p_train.add_argument("--out", default=None, help="output directory")
    _add_override_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", default=None)
    p_eval.add_argument("--split", choices=("train", "val", "test"),
                        default="test")
    p_eval.add_argument("--config", default=None)
    _add_override_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="sweep one configuration axis")
    p_abl.add_argument("--axis", required=True,
                       choices=("pooling", "fusion", "lambda", "layers-meta"))
    p_abl.add_argument("--config", default=None)
    p_abl.add_argument("--data", default=None)
    p_abl.add_argument("--out", default=None)
    _add_override_flags(p_abl)
    p_abl.set_defaults(func=cmd_ablate)

    p_gc = sub.add_parser("gradcheck", help="finite-difference verification")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.set_defaults(func=cmd_gradcheck)

    p_gen = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p_gen.add_argument("--n", type=int, default=50, help="records per class")
    p_gen.add_argument("--sep", type=float, default=4.0,
                       help="class separation (0 = chance-level data)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--d-t", type=int, default=16, dest="d_t")
    p_gen.add_argument("--d-a", type=int, default=16, dest="d_a")
    p_gen.add_argument("--min-chunks", type=int, default=1)
    p_gen.add_argument("--max-chunks", type=int, default=3)
    p_gen.add_argument("--min-frames", type=int, default=4)
    p_gen.add_argument("--max-frames", type=int, default=10)
    p_gen.add_argument("--test-frac", type=float, default=0.3, dest="test_frac")
    p_gen.set_defaults(func=cmd_gen_synth)

    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MmfuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
