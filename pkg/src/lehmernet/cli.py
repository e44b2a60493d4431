"""Command line interface: transform, gradcheck, crossval, train-mnist.

Exit codes: 0 success, 1 a verification/benchmark check failed, 2 bad usage
or bad data (domain errors, malformed files, missing datasets).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict

import numpy as np

from .datasets import (
    DATA_ROOT_ENV,
    DataFormatError,
    find_mnist_pair,
    get_data_root,
    load_mnist_idx,
    load_named_tabular,
)
from .gradcheck import CHECKS, run_gradient_checks, total_cases
from .layers import save_checkpoint
from .training import (
    TrainConfig,
    TrainingDivergedError,
    build_conv_network,
    build_mlp_network,
    cross_validate,
    evaluate,
    metrics_records,
    train_model,
    write_metrics_records,
)
from .transforms import DomainError, lehmer_complex, lehmer_real

USAGE_ERROR = 2
CHECK_FAILED = 1


def _float_list(text):
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _add_train_args(parser, epochs, batch_size, units, learning_rate):
    parser.add_argument("--lau", choices=("real", "complex"), default="real",
                        help="activation unit variant")
    parser.add_argument("--units", type=int, default=units,
                        help="LAU width (default: %(default)s)")
    parser.add_argument("--epochs", type=int, default=epochs)
    parser.add_argument("--batch-size", type=int, default=batch_size)
    parser.add_argument("--learning-rate", type=float, default=learning_rate)
    parser.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--suddency-bound", type=float, default=0.0,
                        help="clamp |s| after each step (0 disables)")
    parser.add_argument("--data-root", default=None,
                        help=f"dataset directory (default: ${DATA_ROOT_ENV} or ./data)")
    parser.add_argument("--metrics", default=None,
                        help="write JSONL metrics to this path")
    parser.add_argument("--append", action="store_true",
                        help="append to the metrics file instead of truncating")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lehmernet",
        description="Lehmer-mean activation networks: transforms, gradient "
                    "verification and benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_tr = sub.add_parser("transform", help="evaluate one weighted Lehmer mean")
    p_tr.add_argument("--values", type=_float_list, required=True,
                      help="comma-separated positive values")
    p_tr.add_argument("--weights", type=_float_list, default=None,
                      help="comma-separated positive weights (default: unit)")
    p_tr.add_argument("--suddency", type=float, required=True,
                      help="real suddency moment s (or its real part)")
    p_tr.add_argument("--imag", type=float, default=None,
                      help="imaginary suddency part; enables the complex transform")

    p_gc = sub.add_parser("gradcheck",
                          help="finite-difference verification of all gradients")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--scale", type=float, default=1.0,
                      help="multiply per-check case counts")
    p_gc.add_argument("--check", action="append", choices=sorted(CHECKS),
                      default=None, help="run only the named check(s)")

    p_cv = sub.add_parser("crossval",
                          help="stratified k-fold benchmark on a tabular dataset")
    p_cv.add_argument("--dataset", choices=("iris", "wine", "wbc"), required=True)
    p_cv.add_argument("--folds", type=int, default=10)
    _add_train_args(p_cv, epochs=150, batch_size=16, units=3,
                    learning_rate=3e-2)

    p_mn = sub.add_parser("train-mnist",
                          help="train the image model on MNIST IDX files")
    p_mn.add_argument("--arch", choices=("conv", "mlp"), default="conv",
                      help="conv stack or flat squash+LAU model")
    p_mn.add_argument("--subset", type=int, default=None,
                      help="train on only the first N training images")
    p_mn.add_argument("--checkpoint", default=None,
                      help="save the trained network to this path")
    _add_train_args(p_mn, epochs=10, batch_size=64, units=32,
                    learning_rate=1e-3)
    return parser


def cmd_transform(args):
    if args.imag is None:
        value = lehmer_real(args.values, args.weights, args.suddency)
        print(f"L = {value:.12g}")
    else:
        value, singular = lehmer_complex(
            args.values, args.weights, args.suddency, args.imag,
            return_singular=True,
        )
        if singular:
            print("warning: near-singular denominator, result regularized",
                  file=sys.stderr)
        print(f"L = {value.real:.12g} {value.imag:+.12g}i")
    return 0


def cmd_gradcheck(args):
    names = set(args.check) if args.check else None
    reports = run_gradient_checks(seed=args.seed, scale=args.scale, names=names)
    for report in reports:
        print(report.line())
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed "
          f"({total_cases(reports)} randomized cases)")
    return CHECK_FAILED if failed else 0


def _config_from_args(args, lau_units, folds=10):
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        optimizer=args.optimizer,
        seed=args.seed,
        folds=folds,
        lau_kind=args.lau,
        lau_units=lau_units,
        suddency_bound=args.suddency_bound,
    )


def cmd_crossval(args):
    dataset = load_named_tabular(args.dataset, get_data_root(args.data_root))
    config = _config_from_args(args, args.units, folds=args.folds)
    run = cross_validate(dataset, config)
    for fold in run.folds:
        print(f"fold {fold.fold_index}: accuracy {fold.test_accuracy:.4f} "
              f"(train {fold.train_size}, test {fold.test_size}, "
              f"{fold.wall_time:.1f}s)")
    print(f"{dataset.name} ({config.lau_kind}): {run.summary()}")
    if args.metrics:
        write_metrics_records(metrics_records(run, command="crossval"),
                              args.metrics, append=args.append)
    return 0


def cmd_train_mnist(args):
    data_root = get_data_root(args.data_root)
    pairs = {split: find_mnist_pair(data_root, split)
             for split in ("train", "test")}
    missing = [split for split, pair in pairs.items() if pair is None]
    if missing:
        print(
            f"MNIST IDX files for {', '.join(missing)} not found under "
            f"{data_root}/mnist; run scripts/fetch_datasets.py --mnist or "
            f"point --data-root/${DATA_ROOT_ENV} at a directory that has them",
            file=sys.stderr,
        )
        return USAGE_ERROR

    train = load_mnist_idx(*pairs["train"])
    test = load_mnist_idx(*pairs["test"])
    if args.subset is not None:
        if args.subset < 1:
            print("--subset must be positive", file=sys.stderr)
            return USAGE_ERROR
        train.features = train.features[: args.subset]
        train.labels = train.labels[: args.subset]

    config = _config_from_args(args, args.units)
    rng = np.random.default_rng(config.seed)
    builder = build_conv_network if args.arch == "conv" else build_mlp_network
    net = builder(train.features.shape[1:], train.n_classes, config, rng)

    started = time.perf_counter()
    losses = train_model(net, train.features, train.labels, config, rng)
    for epoch, loss in enumerate(losses):
        print(f"epoch {epoch}: mean loss {loss:.6f}")
    accuracy = evaluate(net, test.features, test.labels)
    elapsed = time.perf_counter() - started
    print(f"test accuracy: {accuracy:.4f} "
          f"({train.features.shape[0]} train, {test.features.shape[0]} test, "
          f"{elapsed:.1f}s)")

    if args.checkpoint:
        save_checkpoint(net, args.checkpoint)
        print(f"checkpoint written to {args.checkpoint}")
    if args.metrics:
        records = [{
            "record": "run",
            "format": "lehmernet.metrics.v1",
            "command": "train-mnist",
            "dataset": "mnist",
            "variant": config.lau_kind,
            "arch": args.arch,
            "seed": config.seed,
            "subset": args.subset,
            "config": asdict(config),
        }]
        for epoch, loss in enumerate(losses):
            records.append({"record": "epoch", "epoch": epoch,
                            "mean_loss": loss})
        records.append({
            "record": "aggregate",
            "test_accuracy": accuracy,
            "n_train": int(train.features.shape[0]),
            "n_test": int(test.features.shape[0]),
            "wall_time": elapsed,
        })
        write_metrics_records(records, args.metrics, append=args.append)
    return 0


COMMANDS = {
    "transform": cmd_transform,
    "gradcheck": cmd_gradcheck,
    "crossval": cmd_crossval,
    "train-mnist": cmd_train_mnist,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (DomainError, DataFormatError, FileNotFoundError,
            TrainingDivergedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
