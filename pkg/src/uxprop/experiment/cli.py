"""Command line entry point: ``uxprop {train,explain,sweep,hist,diag,classify}``.

Exit status is 0 on success, 1 when some cells failed (or a run error
occurred) and 2 for an invalid configuration.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from ..datasets import MNIST
from ..explainers import METHODS, explain
from ..nn import CLASSIFICATION, accuracy, save_model
from ..uncertainty import (
    analytical_covariance, jacobian_from_evaluator, make_evaluator, mc_covariance_from_evaluator,
)
from .cases import classify_case, synthetic_fixtures
from .config import ConfigError, SweepConfig, load_config
from .export import export_diagonals, export_histograms, read_csv
from .sweep import (
    aggregate, cell_stream, load_data, make_spec, prepare, run_sweep, train_reference,
)

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _config(args):
    overrides = {"seed": args.seed, "output_dir": args.out, "data_dir": args.data_dir}
    if args.config:
        return load_config(args.config, **overrides)
    if not getattr(args, "dataset", None):
        raise ConfigError("either --config or --dataset is required")
    data = {"dataset": args.dataset, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return SweepConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"command line: {exc}") from None


def _sample(test_set, selection, index):
    i = selection.indices[0] if index is None else index
    if not 0 <= i < len(test_set):
        raise ValueError(f"sample index {i} outside the test split of {len(test_set)} rows")
    return int(i), test_set.features[i]


def cmd_train(args):
    cfg = _config(args)
    train_set, test_set = load_data(cfg.dataset, cfg.data_dir, cfg.seed)
    model = train_reference(cfg.dataset, train_set, cfg.seed, cfg.train_epochs, cfg.train_lr)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "model.bin")
    save_model(model, path)
    if model.task == CLASSIFICATION:
        metrics = {"test_accuracy": accuracy(model, test_set.features, test_set.targets)}
    else:
        pred = train_set.destandardize_targets(model.predict(test_set.features)[:, 0])
        metrics = {"test_mae": float(np.mean(np.abs(pred - test_set.targets)))}
    with open(os.path.join(cfg.output_dir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
    print(f"saved {path}; " + ", ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    return EXIT_OK


def cmd_explain(args):
    cfg = _config(args)
    train_set, test_set, model, selection = prepare(cfg)
    sample_id, x = _sample(test_set, selection, args.sample)
    e = explain(make_spec(args.explainer, train_set), model, x, sample_id=sample_id)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, f"explanation_{args.explainer}_{sample_id}.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "value"])
        writer.writerows((k, repr(float(v))) for k, v in enumerate(e.values))
    print(f"{args.explainer} sample {sample_id} target {e.target}: m={e.m} -> {path}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    result = run_sweep(cfg, progress=(lambda name, i: print(f"done {name} sample {i}",
                                                            file=sys.stderr))
                       if args.verbose else None)
    for name, label in result.case_labels.items():
        print(f"{name}: {label.label}")
    if result.n_errors:
        print(f"{result.n_errors} records flagged with errors", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_hist(args):
    cfg = _config(args)
    train_set, test_set, model, selection = prepare(cfg)
    sample_id, x = _sample(test_set, selection, args.sample)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, f"hist_{args.explainer}_{sample_id}.csv")
    ref, data = export_histograms(make_spec(args.explainer, train_set), model, x, cfg.target,
                                  cfg.sigmas, args.feature_index, args.n,
                                  cell_stream(cfg.seed, sample_id, args.explainer), path)
    print(f"reference value {ref!r}; {len(data)} sigmas x {args.n} draws -> {path}")
    return EXIT_OK


def cmd_diag(args):
    cfg = _config(args)
    train_set, test_set, model, selection = prepare(cfg)
    sample_id, x = _sample(test_set, selection, args.sample)
    ev = make_evaluator(make_spec(args.explainer, train_set), model, x, cfg.target)
    J = jacobian_from_evaluator(ev, cfg.delta, sample_id)
    cov_lin = analytical_covariance(J, args.sigma)
    cov_mc = mc_covariance_from_evaluator(ev, args.sigma, cfg.n_samples_mc,
                                          cell_stream(cfg.seed, sample_id, args.explainer))
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, f"diag_{args.explainer}_{sample_id}.csv")
    export_diagonals(J, cov_lin, cov_mc, path, (28, 28) if cfg.dataset == MNIST else None)
    print(f"J {J.shape}, sigma={args.sigma:g} -> {path}")
    return EXIT_OK


def _read_curves(path):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    if "flag" in header:
        return _curves_from_records(read_csv(path))
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    key = "sigma_sq" if "sigma_sq" in header else None
    curve = [(float(r[key]) if key else float(r["sigma"]) ** 2, float(r["mue_lin"]),
              float(r["mue_mc"])) for r in rows]
    return {os.path.basename(path): curve}


def _curves_from_records(records):
    curves = {}
    for a in aggregate(records):
        curves.setdefault(a.explainer, []).append((a.sigma ** 2, a.mue_lin, a.mue_mc))
    return curves


def cmd_classify(args):
    if args.fixtures or not args.paths:
        curves = synthetic_fixtures()
    else:
        curves = {}
        for p in args.paths:
            curves.update(_read_curves(p))
    for name, curve in curves.items():
        label = classify_case(curve)
        print(f"{name}: {label.label} (slope_mc={label.loglog_slope_mc:.3g}, "
              f"median_ratio={label.median_ratio:.3g}, plateau_span={label.plateau_span:.3g})")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="uxprop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, explainer=False):
        p.add_argument("--config", help="TOML sweep configuration")
        p.add_argument("--dataset", help="dataset name when no --config is given")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--data-dir", dest="data_dir")
        if explainer:
            p.add_argument("--explainer", required=True, choices=METHODS)
            p.add_argument("--sample", type=int, help="test-split row (default: first selected)")
        return p

    common(sub.add_parser("train", help="train the reference model")).set_defaults(fn=cmd_train)
    common(sub.add_parser("explain", help="explain one sample"), True).set_defaults(fn=cmd_explain)
    p = common(sub.add_parser("sweep", help="run a sigma sweep"))
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_sweep)
    p = common(sub.add_parser("hist", help="histogram data for one explanation feature"), True)
    p.add_argument("--feature-index", dest="feature_index", type=int, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.set_defaults(fn=cmd_hist)
    p = common(sub.add_parser("diag", help="Jacobian and covariance diagonals"), True)
    p.add_argument("--sigma", type=float, default=1e-2)
    p.set_defaults(fn=cmd_diag)
    p = sub.add_parser("classify", help="label MUE curves with a propagation case")
    p.add_argument("paths", nargs="*", help="results.csv or curve CSV files")
    p.add_argument("--fixtures", action="store_true", help="use the packaged synthetic curves")
    p.set_defaults(fn=cmd_classify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
