"""Command-line interface: train, predict, eval, synth.

Exit codes: 0 success; train uses 1 for config errors, 2 for data errors
and 3 for training failures; predict/eval use 2 for bad or misaligned
inputs; synth uses 1 for unknown tasks. Every successful subcommand prints
a single machine-parsable summary line prefixed with "RESULT ".
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .data import SynthSpec, generate_synthetic, load_csv, save_csv, write_matrix_csv
from .metrics import compute_metrics
from .model_io import load_model, save_model
from .training import TrainConfig, evaluate, predict_targets, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_TRAINING = 3


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_train(args):
    try:
        with open(args.config, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as err:
        return _fail(EXIT_CONFIG, f"cannot read config: {err}")
    except json.JSONDecodeError as err:
        return _fail(EXIT_CONFIG, f"config is not valid JSON: {err}")
    try:
        config = TrainConfig.from_mapping(raw)
    except (ValueError, TypeError) as err:
        return _fail(EXIT_CONFIG, str(err))
    if args.seed is not None:
        config.seed = args.seed
    try:
        dataset = load_csv(args.data)
    except (OSError, ValueError) as err:
        return _fail(EXIT_DATA, str(err))
    try:
        model, report = train(dataset, config)
        save_model(model, args.out)
    except (ValueError, OSError, FloatingPointError) as err:
        return _fail(EXIT_TRAINING, f"training failed: {err}")
    report_path = f"{args.out}.report.json"
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=1)
        handle.write("\n")
    print(f"RESULT MAE {report.final_train_mae:.4f} model {args.out}")
    return EXIT_OK


def cmd_predict(args):
    try:
        model = load_model(args.model)
    except (OSError, ValueError) as err:
        return _fail(EXIT_DATA, str(err))
    try:
        dataset = load_csv(args.data, require_targets=False)
        if dataset.d_x != model.d_x:
            raise ValueError(
                f"input dimension mismatch: model expects {model.d_x} features, data has {dataset.d_x}"
            )
        predictions = predict_targets(model, dataset.features)
    except (OSError, ValueError) as err:
        return _fail(EXIT_DATA, str(err))
    names = [f"y_pred{i}" for i in range(model.d_y)]
    write_matrix_csv(args.out, predictions, names)
    print(f"RESULT rows {dataset.n_samples} out {args.out}")
    return EXIT_OK


def _load_named_columns(path, prefix):
    """Read the prefix0..prefixk-1 columns of a CSV into a matrix."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = [name.strip() for name in next(reader)]
        except StopIteration:
            raise ValueError(f"empty file: {path}") from None
        cols = [i for i, name in enumerate(header)
                if name.startswith(prefix) and name[len(prefix):].isdigit()]
        cols.sort(key=lambda i: int(header[i][len(prefix):]))
        if not cols:
            raise ValueError(f"missing column \"{prefix}0\" in {path}")
        rows = []
        for row_idx, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                rows.append([float(row[c]) for c in cols])
            except (ValueError, IndexError):
                raise ValueError(f"bad row {row_idx} in {path}") from None
    if not rows:
        raise ValueError(f"no data rows in {path}")
    return np.array(rows, dtype=np.float64)


def cmd_eval(args):
    try:
        predictions = _load_named_columns(args.pred, "y_pred")
        truths = _load_named_columns(args.truth, "y")
        if predictions.shape != truths.shape:
            raise ValueError(
                f"misaligned files: predictions {predictions.shape} vs truths {truths.shape}"
            )
        record = compute_metrics(predictions, truths, level=args.cs_level)
    except (OSError, ValueError) as err:
        return _fail(EXIT_DATA, str(err))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump({
                "mae": record.mae,
                "cs": record.cs,
                "cs_level": record.cs_level,
                "count": record.count,
                "within_count": record.within_count,
            }, handle, indent=1)
            handle.write("\n")
    print(f"RESULT MAE {record.mae:.4f}, CS {record.cs:.4f}")
    return EXIT_OK


def cmd_synth(args):
    spec = SynthSpec(task=args.task, n=args.n, noise=args.noise, seed=args.seed)
    try:
        dataset = generate_synthetic(spec)
    except ValueError as err:
        return _fail(EXIT_CONFIG, str(err))
    save_csv(dataset, args.out)
    print(f"RESULT rows {dataset.n_samples} out {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="drforest",
        description="Differentiable regression forests over tabular CSV data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config and CSV data")
    p_train.add_argument("--config", required=True, help="JSON file with training fields")
    p_train.add_argument("--data", required=True, help="training CSV (x0.., y0.. columns)")
    p_train.add_argument("--out", required=True, help="path for the model file")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.set_defaults(func=cmd_train)

    p_predict = sub.add_parser("predict", help="predict targets for a CSV of inputs")
    p_predict.add_argument("--model", required=True)
    p_predict.add_argument("--data", required=True, help="CSV with x0.. columns")
    p_predict.add_argument("--out", required=True, help="output CSV of y_pred columns")
    p_predict.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("eval", help="score predictions against ground truth")
    p_eval.add_argument("--pred", required=True, help="CSV with y_pred0.. columns")
    p_eval.add_argument("--truth", required=True, help="CSV with y0.. columns")
    p_eval.add_argument("--cs-level", type=float, default=5.0,
                        help="error level for the cumulative score (default 5)")
    p_eval.add_argument("--out", default=None, help="optional metrics JSON")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p_synth.add_argument("--task", required=True,
                         help="one of: piecewise, bimodal, hetero-noise")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--noise", type=float, default=0.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def entrypoint():
    sys.exit(main())
