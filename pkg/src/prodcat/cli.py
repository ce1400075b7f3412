"""Command-line entry point: ``prodcat {synth,train,evaluate,predict,inspect}``.

Exit codes are 0 on success, 1 on a pipeline error (bad data, bad config,
unreadable model) and 2 on a usage error. Diagnostics go to stderr; data goes
to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from typing import Sequence

from prodcat.config import MODEL_KINDS, parse_config
from prodcat.dataset import TARGETS, SyntheticConfig, generate_synthetic, load_table, split_rows, write_table
from prodcat.ensemble import (
    compare_models,
    evaluate_predictions,
    hierarchy_consistency,
    load_model,
    predict_products,
    save_model,
    train_ensemble,
)
from prodcat.errors import PipelineError
from prodcat.metrics import cross_target_average, emit_comparison, format_table

THREADS_ENV = "PRODCAT_THREADS"
log = logging.getLogger("prodcat")


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"fraction must lie in (0, 1), got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prodcat", description="Product categorisation pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def data_args(p, required=True):
        p.add_argument("--data", required=required, help="input table")
        p.add_argument("--format", choices=("csv", "parquet"), default="csv", help="table format (default csv)")

    def threads_arg(p):
        p.add_argument(
            "--threads", type=_positive_int, default=None,
            help=f"worker cap; results do not depend on it (default ${THREADS_ENV} or 1)",
        )

    p = sub.add_parser("synth", help="write a synthetic long-tail catalog")
    defaults = SyntheticConfig()
    p.add_argument("--rows", type=_positive_int, default=defaults.n_rows)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--top", type=_positive_int, default=defaults.n_top, help="number of top categories")
    p.add_argument("--bottoms", type=_positive_int, default=defaults.bottoms_per_top, help="bottom categories per top")
    p.add_argument("--colors", type=_positive_int, default=defaults.n_colors)
    p.add_argument("--zipf", type=float, default=defaults.zipf_exponent, help="Zipf exponent of the class frequencies")
    p.add_argument("--missing", type=float, default=defaults.missing_rate, help="MCAR rate for feature cells")
    p.add_argument("--noise", type=float, default=defaults.noise_rate, help="title word swap rate")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "parquet"), default="csv")

    p = sub.add_parser("train", help="fit the ensemble and save a model file")
    data_args(p)
    p.add_argument("--config", help="config file (default: built-in defaults)")
    p.add_argument("--out", required=True, help="model file to write")
    threads_arg(p)

    p = sub.add_parser("evaluate", help="score a model or a config on labelled data")
    data_args(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", help="saved model to score on --data")
    src.add_argument("--config", help="config to train on --data and then score")
    p.add_argument("--holdout", type=_fraction, help="train on the rest, score on this fraction of the rows")
    p.add_argument("--seed", type=int, default=0, help="row split seed for --holdout")
    p.add_argument(
        "--compare", action="store_true",
        help="train every model kind on every target instead of the configured routing",
    )
    p.add_argument("--report", help="comparison CSV to write")
    threads_arg(p)

    p = sub.add_parser("predict", help="predict the three targets for each row")
    data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="predictions CSV (default stdout)")
    threads_arg(p)

    p = sub.add_parser("inspect", help="print model metadata")
    p.add_argument("--model", required=True)
    return parser


def _threads(args) -> int:
    return args.threads if args.threads is not None else _default_threads()


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(
        n_rows=args.rows, n_top=args.top, bottoms_per_top=args.bottoms, n_colors=args.colors,
        zipf_exponent=args.zipf, missing_rate=args.missing, noise_rate=args.noise, seed=args.seed,
    )
    write_table(generate_synthetic(cfg), args.out, args.format)
    log.info("wrote %d rows to %s", cfg.n_rows, args.out)
    return 0


def cmd_train(args) -> int:
    config = parse_config(args.config)
    data = load_table(args.data, args.format)
    model = train_ensemble(data, config, threads=_threads(args))
    save_model(model, args.out)
    log.info("saved model to %s", args.out)
    return 0


def cmd_evaluate(args) -> int:
    threads = _threads(args)
    data = load_table(args.data, args.format)
    if args.model and (args.holdout is not None or args.compare):
        raise PipelineError("--holdout and --compare need --config (or no model), not a saved --model")

    if args.model:
        model = load_model(args.model)
        mode = f"saved model {args.model} scored on {args.data}"
        records = predict_products(model, data, threads)
        reports = evaluate_predictions(data, records, model)
        consistency = hierarchy_consistency(records, model.hierarchy)
    else:
        config = parse_config(args.config)
        if args.holdout is not None:
            # the scored rows' labels never reach training
            score_part, train_part = split_rows(data, args.holdout, args.seed)
            mode = f"holdout ({score_part.row_count} scored rows, {train_part.row_count} training rows)"
        else:
            train_part = score_part = data
            mode = "training set (scores are optimistic)"
        if args.compare:
            pairs = [(t, k) for t in TARGETS for k in MODEL_KINDS]
            eval_data = None if score_part is train_part else score_part
            reports = compare_models(train_part, config, pairs, eval_data, threads)
            consistency = None
        else:
            model = train_ensemble(train_part, config, threads)
            records = predict_products(model, score_part, threads)
            reports = evaluate_predictions(score_part, records, model)
            consistency = hierarchy_consistency(records, model.hierarchy)

    print(f"evaluation mode: {mode}")
    print(format_table(reports))
    if not args.compare:
        print(f"average macro f1: {cross_target_average([r.macro['f1'] for r in reports]):.2f}")
    if consistency is not None:
        print(f"hierarchy consistency: {consistency:.4f}")
    if args.report:
        emit_comparison(reports, args.report)
        log.info("wrote %s", args.report)
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = load_table(args.data, args.format)
    records = predict_products(model, data, _threads(args))
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("row_id",) + TARGETS)
        w.writerows(records)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    print(f"format_version: {model.format_version}")
    print(f"feature columns: {', '.join(f'{n} ({k.value})' for n, k in model.preprocessor.feature_columns)}")
    print(f"feature width: {model.preprocessor.width}")
    for target, m in model.models.items():
        line = f"{target}: {m.kind}, {len(m.label_vocab)} labels"
        if m.kind == "knn":
            line += f", {len(m.train_y)} stored rows, k={m.params.n_neighbors}"
        elif m.kind == "forest":
            line += f", {len(m.trees)} trees"
            if m.oob_score_value is not None:
                line += f", oob accuracy {m.oob_score_value:.4f}"
        else:
            line += f", {len(m.trees)} rounds, {m.n_splits} splits"
        print(line)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "inspect": cmd_inspect,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"prodcat: error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        # reader went away (e.g. piped into head); nothing left to report
        sys.stdout = open(os.devnull, "w")
        return 0
    except OSError as exc:
        print(f"prodcat: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
