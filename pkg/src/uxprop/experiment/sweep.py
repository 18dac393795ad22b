"""Sigma sweeps over evaluation samples and explainers."""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from ..datasets import AUTO_MPG, MNIST, load_auto_mpg, load_mnist, select_samples
from ..explainers import METHODS, OCCLUSION, ExplainerSpec
from ..linalg import RngStream
from ..nn import (
    TrainParams, load_model, reference_cnn, reference_mlp, save_model, train,
    with_activation_mode,
)
from ..uncertainty import DegenerateReferenceError, MueRecord, uxai
from .cases import classify_case
from .export import DEGENERATE_FLAG, Aggregate, SweepResult, export_results


def _first_existing(*paths):
    for p in paths:
        if os.path.exists(p):
            return p
    raise FileNotFoundError(f"none of {[str(p) for p in paths]} exists")


def load_data(dataset, data_dir, seed=0):
    """``(train, test)`` for ``dataset`` from the standard file names under ``data_dir``."""
    root = Path(data_dir)
    if dataset == MNIST:
        def idx(stem):
            return _first_existing(root / "mnist" / f"{stem}.gz", root / "mnist" / stem,
                                   root / f"{stem}.gz", root / stem)
        train_set = load_mnist(idx("train-images-idx3-ubyte"), idx("train-labels-idx1-ubyte"),
                               "train")
        test_set = load_mnist(idx("t10k-images-idx3-ubyte"), idx("t10k-labels-idx1-ubyte"),
                              "test")
        return train_set, test_set
    if dataset == AUTO_MPG:
        return load_auto_mpg(_first_existing(root / "auto-mpg.data", root / "auto-mpg.csv"),
                             seed=seed)
    raise ValueError(f"unknown dataset {dataset!r}")


def train_reference(dataset, train_set, seed=0, epochs=None, lr=None):
    """Train the reference model for ``dataset`` with the default recipe."""
    if dataset == MNIST:
        params = TrainParams(lr=0.01 if lr is None else lr, epochs=epochs or 5, seed=seed)
        return train(reference_cnn(seed), train_set, params)
    params = TrainParams(lr=0.001 if lr is None else lr, epochs=epochs or 200, seed=seed)
    return train(reference_mlp(seed), replace(train_set, targets=train_set.standardized_targets()),
                 params)


def make_spec(method, train_set):
    if method == OCCLUSION and train_set.name == AUTO_MPG:
        return ExplainerSpec(method, fill_value=train_set.normalization["fill"])
    return ExplainerSpec(method)


def prepare(cfg):
    """Data, model and evaluation samples for a config (model trained if no path given)."""
    train_set, test_set = load_data(cfg.dataset, cfg.data_dir, cfg.seed)
    if cfg.model_path:
        model = load_model(cfg.model_path)
    else:
        model = train_reference(cfg.dataset, train_set, cfg.seed, cfg.train_epochs, cfg.train_lr)
        os.makedirs(cfg.output_dir, exist_ok=True)
        save_model(model, os.path.join(cfg.output_dir, "model.bin"))
    model = with_activation_mode(model, cfg.activation_mode)
    selection = select_samples(test_set, cfg.seed, cfg.n_eval_samples)
    return train_set, test_set, model, selection


def cell_stream(seed, sample_id, method):
    return RngStream(seed).child(sample_id).child(METHODS.index(method))


def _flagged(cfg, sample_id, method, m, flag):
    return [MueRecord(cfg.dataset, sample_id, method, cfg.target, s, math.nan, math.nan,
                      cfg.n_samples_mc, m, math.nan, flag) for s in cfg.sigmas]


def run_cell(cfg, model, spec, x, sample_id, on_jacobian=None):
    try:
        return uxai(spec, model, x, cfg.target, cfg.sigmas, cfg.n_samples_mc, cfg.delta,
                    cell_stream(cfg.seed, sample_id, spec.method), sample_id=sample_id,
                    dataset=cfg.dataset, on_jacobian=on_jacobian)
    except DegenerateReferenceError as exc:
        flag = f"{DEGENERATE_FLAG}: {exc}"
    except Exception as exc:  # one bad cell must not abort the sweep
        flag = f"error: {type(exc).__name__}: {exc}"
    m = 784 if cfg.dataset == MNIST else model.n_inputs
    return _flagged(cfg, sample_id, spec.method, m, flag.replace("\n", " "))


def canonical_order(records):
    return sorted(records, key=lambda r: (r.dataset, r.sample_id, r.explainer, r.sigma))


def aggregate(records):
    """Per (explainer, sigma) arithmetic mean of the non-flagged records."""
    groups = {}
    for r in records:
        if not r.flag:
            groups.setdefault((r.explainer, r.sigma), []).append(r)
    out = []
    for (name, sigma), rs in sorted(groups.items()):
        n = len(rs)
        out.append(Aggregate(name, sigma, math.fsum(r.mue_lin for r in rs) / n,
                             math.fsum(r.mue_mc for r in rs) / n, n))
    return out


def label_cases(aggregates):
    curves = {}
    for a in aggregates:
        curves.setdefault(a.explainer, []).append((a.sigma ** 2, a.mue_lin, a.mue_mc))
    labels = {}
    for name, curve in sorted(curves.items()):
        try:
            labels[name] = classify_case(curve)
        except ValueError:
            continue  # too few low-regime points to judge
    return labels


def run_sweep(cfg, prepared=None, write=True, progress=None, on_jacobian=None):
    """Run every (sample, explainer) cell of ``cfg`` and optionally write results.

    ``on_jacobian(method, sample_id, J, reference)`` sees each cell's Jacobian.
    """
    train_set, test_set, model, selection = prepared or prepare(cfg)
    specs = [make_spec(name, train_set) for name in cfg.explainers]
    cells = [(spec, int(i)) for i in selection.indices for spec in specs]

    def work(cell):
        spec, i = cell
        hook = None
        if on_jacobian is not None:
            def hook(J, ref):
                on_jacobian(spec.method, i, J, ref)
        recs = run_cell(cfg, model, spec, test_set.features[i], i, hook)
        if progress:
            progress(spec.method, i)
        return recs

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(work, cells))
    else:
        chunks = [work(c) for c in cells]
    records = canonical_order([r for chunk in chunks for r in chunk])
    aggregates = aggregate(records)
    result = SweepResult(cfg.digest(), cfg.to_dict(), records, aggregates,
                         label_cases(aggregates))
    if write:
        export_results(result, cfg.output_dir)
    return result
