"""Command-line surface for the four workflow stages.

Subcommands: gendata (make or convert a dataset), train (fit weights),
predict (MC-dropout evaluation), search / enumerate (part-mode design
space), estimate (hardware cost reports). Every subcommand writes CSV
reports plus a rendered PNG figure into --out, prints a one-line
summary per artifact, and is deterministic for a fixed seed. Errors
leave a single machine-parsable line on stderr: config problems exit
with status 2, runtime failures with 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import figures
from .data import (Dataset, LIFT_DFT, LIFT_ZERO_IMAG, SyntheticSpec,
                   generate_synthetic, load_dataset, load_mnist_complex,
                   save_dataset, write_csv)
from .errors import (ConfigError, EvaluationError, FormatError,
                     SearchInfeasible, ShapeError, TrainingDiverged)
from .hw import COST_COLUMNS, MappingScheme, compare_schemes, cost_rows
from .inference import DEFAULT_BINS, DEFAULT_SAMPLES, evaluate_dataset
from .layers import apply_genome, read_network_json
from .search import (Constraint, MAX_ACC, MIN_ECE, SearchConfig, enumerate_all,
                     genome_from_string, genome_to_string,
                     make_pipeline_evaluator, run_search, weighted)
from .train import TrainConfig, load_checkpoint, save_checkpoint, train

CONFIG_SCHEMA_VERSION = 1

TRACE_COLUMNS = ("epoch", "loss", "train_acc")
PREDICTION_COLUMNS = ("sample", "predicted_class", "label", "confidence", "mean_std")
HISTORY_COLUMNS = ("generation", "genome", "accuracy", "ece",
                   "dropout_count", "feasible", "fitness")
PARETO_COLUMNS = ("genome", "accuracy", "ece", "dropout_count", "fitness")


def _resolve_seed(value):
    if value is not None:
        return int(value)
    env = os.environ.get("BCVNN_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"BCVNN_SEED must be an integer, got {env!r}") from None


def _derived_rng(seed, *tags):
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


def _apply_config_file(args):
    """Fill unset argparse values from the --config document (flags win)."""
    if not getattr(args, "config", None):
        return
    with open(args.config, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"config file needs schema_version {CONFIG_SCHEMA_VERSION}")
    for key, value in doc.items():
        if key == "schema_version":
            continue
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in ("command", "config"):
            raise ConfigError(f"config key {key!r} is not a parameter of '{args.command}'")
        if getattr(args, dest) is None:
            setattr(args, dest, value)


def _fill_defaults(args, defaults):
    for dest, value in defaults.items():
        if getattr(args, dest) is None:
            setattr(args, dest, value)


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _load_network(args):
    spec = read_network_json(args.network)
    if getattr(args, "genome", None):
        spec = apply_genome(spec, genome_from_string(args.genome))
    return spec


def _train_config(args, seed) -> TrainConfig:
    return TrainConfig(epochs=int(args.epochs), batch_size=int(args.batch_size),
                       learning_rate=float(args.learning_rate),
                       momentum=float(args.momentum),
                       weight_decay=float(args.weight_decay), seed=seed)


def _objective(args):
    name = args.objective
    if name == "max-acc":
        return MAX_ACC
    if name == "min-ece":
        return MIN_ECE
    if name == "weighted":
        return weighted(args.w_acc, args.w_ece)
    raise ConfigError(f"unknown objective {name!r}")


def _constraint(args):
    if args.max_dropout is None and args.min_dropout is None:
        return None
    return Constraint(max_dropout=args.max_dropout, min_dropout=args.min_dropout)


def _timestamp(args) -> bool:
    return not args.no_timestamp


# --- subcommands -----------------------------------------------------------

TRAIN_DEFAULTS = {"epochs": 10, "batch_size": 32, "learning_rate": 0.05,
                  "momentum": 0.9, "weight_decay": 1e-4}


def cmd_train(args) -> int:
    _fill_defaults(args, TRAIN_DEFAULTS)
    seed = _resolve_seed(args.seed)
    spec = _load_network(args)
    dataset = load_dataset(args.data)
    weights, rows = train(spec, dataset, _train_config(args, seed))
    out = _out_dir(args)
    checkpoint = os.path.join(out, "checkpoint")
    save_checkpoint(checkpoint, spec, weights,
                    meta={"seed": seed, "epochs": int(args.epochs)})
    trace_csv = os.path.join(out, "trace.csv")
    write_csv(trace_csv, TRACE_COLUMNS,
              [(e, repr(l), repr(a)) for e, l, a in rows], timestamp=_timestamp(args))
    trace_png = os.path.join(out, "trace.png")
    figures.save_trace_figure(trace_png, rows)
    print(f"final epoch {rows[-1][0]}: loss {rows[-1][1]:.6f}, accuracy {rows[-1][2]:.4f}")
    print(f"wrote {checkpoint}, {trace_csv}, {trace_png}")
    return 0


PREDICT_DEFAULTS = {"samples": DEFAULT_SAMPLES, "bins": DEFAULT_BINS}


def cmd_predict(args) -> int:
    _fill_defaults(args, PREDICT_DEFAULTS)
    seed = _resolve_seed(args.seed)
    spec, weights, _ = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    report, pred = evaluate_dataset(spec, weights, dataset, t=int(args.samples),
                                    rng=_derived_rng(seed), n_bins=int(args.bins))
    out = _out_dir(args)
    mean_std = np.atleast_2d(pred.std_probs).mean(axis=-1)
    rows = [(i, int(p), int(label), repr(float(c)), repr(float(s)))
            for i, (p, label, c, s) in enumerate(
                zip(np.atleast_1d(pred.predicted_class), dataset.labels,
                    np.atleast_1d(pred.confidence), mean_std))]
    rows.append(("summary", "accuracy", repr(report.accuracy), "ece", repr(report.ece)))
    csv_path = os.path.join(out, "predictions.csv")
    write_csv(csv_path, PREDICTION_COLUMNS, rows, timestamp=_timestamp(args))
    png_path = os.path.join(out, "predictions.png")
    figures.save_prediction_figure(png_path, pred, dataset.labels)
    print(f"accuracy {report.accuracy:.4f}, ece {report.ece:.4f} "
          f"({report.n} samples, {pred.samples_used} passes)")
    print(f"wrote {csv_path}, {png_path}")
    return 0


SEARCH_DEFAULTS = {"iterations": 6, "population": 8, "mutation_portion": 0.5,
                   "mutation_prob": 0.5, "crossover_prob": 0.5,
                   "objective": "max-acc", "w_acc": 1.0, "w_ece": 1.0,
                   "holdout": 0.25, "samples": DEFAULT_SAMPLES,
                   "epochs": 3, "batch_size": 32, "learning_rate": 0.05,
                   "momentum": 0.9, "weight_decay": 1e-4}


def _search_setup(args):
    seed = _resolve_seed(args.seed)
    spec = read_network_json(args.network)
    if spec.bayesian_count == 0:
        raise ConfigError("network has no dropout layers to search over")
    dataset = load_dataset(args.data)
    n_holdout = int(round(len(dataset) * float(args.holdout)))
    if not 0 < n_holdout < len(dataset):
        raise ConfigError(f"holdout fraction {args.holdout} leaves no usable split")
    order = _derived_rng(seed, 1).permutation(len(dataset))
    eval_set = dataset.take(order[:n_holdout])
    train_set = dataset.take(order[n_holdout:])
    evaluator = make_pipeline_evaluator(spec, train_set, eval_set,
                                        _train_config(args, seed),
                                        samples=int(args.samples))
    return seed, spec, evaluator


def _record_row(record, generation=None):
    row = (genome_to_string(record.genome), repr(record.accuracy), repr(record.ece),
           record.dropout_count, int(record.feasible), repr(record.fitness))
    return row if generation is None else (generation,) + row


def cmd_search(args) -> int:
    _fill_defaults(args, SEARCH_DEFAULTS)
    seed, spec, evaluator = _search_setup(args)
    config = SearchConfig(population_size=int(args.population),
                          mutation_portion=float(args.mutation_portion),
                          mutation_prob=float(args.mutation_prob),
                          crossover_prob=float(args.crossover_prob),
                          iterations=int(args.iterations),
                          objective=_objective(args), constraint=_constraint(args),
                          seed=seed)
    result = run_search(config, evaluator, spec.bayesian_count)
    out = _out_dir(args)
    history_csv = os.path.join(out, "history.csv")
    write_csv(history_csv, HISTORY_COLUMNS,
              [(g,) + _record_row(r) for g, r in result.history], timestamp=_timestamp(args))
    pareto_csv = os.path.join(out, "pareto.csv")
    write_csv(pareto_csv, PARETO_COLUMNS,
              [_record_row(r) for r in result.pareto], timestamp=_timestamp(args))
    png_path = os.path.join(out, "search.png")
    figures.save_search_figure(png_path, [r for _, r in result.history],
                               list(result.pareto), result.best)
    best = result.best
    print(f"best genome {genome_to_string(best.genome)}: accuracy {best.accuracy:.4f}, "
          f"ece {best.ece:.4f}, dropout count {best.dropout_count}")
    print(f"wrote {history_csv}, {pareto_csv}, {png_path}")
    return 0


ENUMERATE_DEFAULTS = {k: v for k, v in SEARCH_DEFAULTS.items()
                      if k not in ("iterations", "population", "mutation_portion",
                                   "mutation_prob", "crossover_prob")}


def cmd_enumerate(args) -> int:
    _fill_defaults(args, ENUMERATE_DEFAULTS)
    seed, spec, evaluator = _search_setup(args)
    records = enumerate_all(spec.bayesian_count, evaluator,
                            objective=_objective(args), constraint=_constraint(args))
    out = _out_dir(args)
    space_csv = os.path.join(out, "space.csv")
    write_csv(space_csv, ("rank",) + PARETO_COLUMNS[:1] + HISTORY_COLUMNS[2:],
              [(rank,) + _record_row(r) for rank, r in enumerate(records)],
              timestamp=_timestamp(args))
    png_path = os.path.join(out, "space.png")
    figures.save_space_figure(png_path, records)
    top = records[0]
    print(f"{len(records)} genomes; top {genome_to_string(top.genome)}: "
          f"accuracy {top.accuracy:.4f}, ece {top.ece:.4f}")
    print(f"wrote {space_csv}, {png_path}")
    return 0


def cmd_estimate(args) -> int:
    _fill_defaults(args, {"scheme": "both"})
    spec = read_network_json(args.network)
    genome = genome_from_string(args.genome) if args.genome else None
    comparison = compare_schemes(spec, genome)
    rows = cost_rows(comparison)
    if args.scheme != "both":
        scheme = MappingScheme(args.scheme)
        rows = [r for r in rows if r[2] == scheme.value]
    out = _out_dir(args)
    csv_path = os.path.join(out, "costs.csv")
    write_csv(csv_path, COST_COLUMNS, rows, timestamp=_timestamp(args))
    png_path = os.path.join(out, "schemes.png")
    figures.save_scheme_figure(png_path, comparison)
    for net in (comparison.latency_opt, comparison.resource_opt):
        t = net.total
        print(f"{net.scheme.value}: latency {t.latency_units:.0f} units, "
              f"{t.engine_count} engines, {t.mac_ops} MACs, {t.memory_words} words")
    print(f"latency ratio {comparison.latency_ratio:.3f}")
    print(f"wrote {csv_path}, {png_path}")
    return 0


GENDATA_DEFAULTS = {"classes": 3, "per_class": 50, "features": "8",
                    "separation": 3.0, "lift": LIFT_ZERO_IMAG}


def cmd_gendata(args) -> int:
    _fill_defaults(args, GENDATA_DEFAULTS)
    seed = _resolve_seed(args.seed)
    if (args.mnist_images is None) != (args.mnist_labels is None):
        raise ConfigError("--mnist-images and --mnist-labels must be given together")
    if args.mnist_images is not None:
        dataset = load_mnist_complex(args.mnist_images, args.mnist_labels, args.lift)
        source = f"idx {args.mnist_images}"
    else:
        shape = tuple(int(s) for s in str(args.features).split(","))
        dataset = generate_synthetic(SyntheticSpec(
            classes=int(args.classes), samples_per_class=int(args.per_class),
            feature_shape=shape, class_separation=float(args.separation), seed=seed))
        source = "synthetic"
    out = _out_dir(args)
    save_dataset(out, dataset, timestamp=_timestamp(args))
    png_path = os.path.join(out, "preview.png")
    figures.save_preview_figure(png_path, dataset)
    print(f"{len(dataset)} samples, {dataset.classes} classes, "
          f"features {dataset.feature_shape} ({source})")
    print(f"wrote {os.path.join(out, 'images.bcvt')}, "
          f"{os.path.join(out, 'labels.csv')}, {png_path}")
    return 0


# --- argument parsing -------------------------------------------------------


def _add_common(p):
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (falls back to BCVNN_SEED, then 0)")
    p.add_argument("--config", default=None,
                   help="JSON parameter file (schema_version 1); flags override it")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the '# generated:' line for byte-identical reruns")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (only 1 is used; kept at 1 for reproducibility)")


def _add_train_params(p, epochs_help):
    p.add_argument("--epochs", type=int, default=None, help=epochs_help)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)


def _add_search_params(p):
    p.add_argument("--objective", choices=("max-acc", "min-ece", "weighted"), default=None)
    p.add_argument("--w-acc", type=float, default=None, help="accuracy weight (weighted objective)")
    p.add_argument("--w-ece", type=float, default=None, help="ece weight (weighted objective)")
    p.add_argument("--max-dropout", type=int, default=None,
                   help="constraint: maximum dropout count")
    p.add_argument("--min-dropout", type=int, default=None,
                   help="constraint: minimum dropout count")
    p.add_argument("--holdout", type=float, default=None,
                   help="fraction of --data held out for fitness evaluation")
    p.add_argument("--samples", type=int, default=None, help="MC passes per evaluation")
    _add_train_params(p, "training epochs per genome evaluation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bcvnn",
        description="Bayesian complex-valued networks: train, quantify uncertainty, "
                    "search dropout configurations, and estimate hardware costs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gendata", help="generate a synthetic dataset or convert IDX files")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--per-class", type=int, default=None, help="samples per class")
    p.add_argument("--features", default=None,
                   help="feature extents, comma-separated (e.g. '8' or '1,12,12')")
    p.add_argument("--separation", type=float, default=None, help="class separation factor")
    p.add_argument("--mnist-images", default=None, help="IDX image file to convert instead")
    p.add_argument("--mnist-labels", default=None, help="IDX label file to convert instead")
    p.add_argument("--lift", choices=(LIFT_ZERO_IMAG, LIFT_DFT), default=None,
                   help="complex lift for converted images")
    _add_common(p)
    p.set_defaults(fn=cmd_gendata)

    p = sub.add_parser("train", help="train a network on a saved dataset")
    p.add_argument("--network", required=True, help="network JSON document")
    p.add_argument("--data", required=True, help="dataset directory (from gendata)")
    p.add_argument("--genome", default=None,
                   help="part-mode string like R-B-I applied before training")
    _add_train_params(p, "training epochs")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="MC-dropout evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory from train")
    p.add_argument("--data", required=True, help="dataset directory to evaluate")
    p.add_argument("--samples", type=int, default=None, help="MC passes (default 3)")
    p.add_argument("--bins", type=int, default=None, help="calibration bins (default 15)")
    _add_common(p)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("search", help="evolutionary part-mode search")
    p.add_argument("--network", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--mutation-portion", type=float, default=None)
    p.add_argument("--mutation-prob", type=float, default=None)
    p.add_argument("--crossover-prob", type=float, default=None)
    _add_search_params(p)
    _add_common(p)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("enumerate", help="exhaustive design-space evaluation (N <= 10)")
    p.add_argument("--network", required=True)
    p.add_argument("--data", required=True)
    _add_search_params(p)
    _add_common(p)
    p.set_defaults(fn=cmd_enumerate)

    p = sub.add_parser("estimate", help="hardware cost model reports")
    p.add_argument("--network", required=True)
    p.add_argument("--genome", default=None, help="part-mode string like R-B-I")
    p.add_argument("--scheme", choices=("latency-opt", "resource-opt", "both"), default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_estimate)
    return parser


CONFIG_ERRORS = (ConfigError, FormatError, ShapeError, FileNotFoundError,
                 NotADirectoryError, IsADirectoryError, PermissionError)
RUNTIME_ERRORS = (TrainingDiverged, SearchInfeasible, EvaluationError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        _apply_config_file(args)
        return args.fn(args)
    except CONFIG_ERRORS as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # keep the single-line contract for anything unplanned
        print(f"error: runtime: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
