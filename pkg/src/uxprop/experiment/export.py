"""Result files: CSV/JSON records, plot data, histograms and diagonal maps.

Floats are written with ``repr`` so every file round-trips exactly; missing
values (flagged records) are written as ``nan`` in CSV and ``null`` in JSON.
"""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..linalg import RngStream
from ..uncertainty import CovarianceEstimate, JacobianBlock, MueRecord, make_evaluator, mc_samples
from .cases import CaseLabel

CSV_HEADER = ["dataset", "sample_id", "explainer", "target", "sigma", "mue_lin", "mue_mc",
              "n_mc", "m", "ref_norm_sq", "flag"]
JSON_VERSION = 1
DEGENERATE_FLAG = "degenerate-reference"

_INT_FIELDS = {"sample_id", "n_mc", "m"}
_FLOAT_FIELDS = {"sigma", "mue_lin", "mue_mc", "ref_norm_sq"}


@dataclass(frozen=True)
class Aggregate:
    explainer: str
    sigma: float
    mue_lin: float
    mue_mc: float
    count: int


@dataclass
class SweepResult:
    config_hash: str
    config: dict
    records: list
    aggregates: list = field(default_factory=list)
    case_labels: dict = field(default_factory=dict)

    @property
    def n_errors(self):
        """Cells that failed for a reason other than a degenerate reference."""
        return sum(1 for r in self.records if r.flag and not r.flag.startswith(DEGENERATE_FLAG))


def _fmt(value):
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])


def _parse(key, text):
    if key in _INT_FIELDS:
        return int(text)
    if key in _FLOAT_FIELDS:
        return float(text)
    return text


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [MueRecord(**{k: _parse(k, v) for k, v in zip(header, row)}) for row in reader]


def _nan_to_none(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _none_to_nan(d, keys):
    return {k: (math.nan if v is None and k in keys else v) for k, v in d.items()}


def result_to_dict(result):
    return {
        "version": JSON_VERSION,
        "config_hash": result.config_hash,
        "config": result.config,
        "records": [{k: _nan_to_none(v) for k, v in asdict(r).items()} for r in result.records],
        "aggregates": [asdict(a) for a in result.aggregates],
        "case_labels": {name: {k: _nan_to_none(v) for k, v in label.to_dict().items()}
                        for name, label in result.case_labels.items()},
    }


def result_from_dict(data):
    if data.get("version") != JSON_VERSION:
        raise ValueError(f"unsupported result version {data.get('version')!r}")
    label_keys = {f.name for f in fields(CaseLabel)} - {"label"}
    return SweepResult(
        data["config_hash"],
        data["config"],
        [MueRecord(**_none_to_nan(r, _FLOAT_FIELDS)) for r in data["records"]],
        [Aggregate(**a) for a in data["aggregates"]],
        {name: CaseLabel(**_none_to_nan(d, label_keys))
         for name, d in data["case_labels"].items()},
    )


def write_json(result, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_to_dict(result), fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return result_from_dict(json.load(fh))


def write_plot_data(result, out_dir):
    """One ``plot_<explainer>.csv`` per explainer: sigma_sq, mue_lin, mue_mc, count."""
    paths = []
    by_name = {}
    for a in result.aggregates:
        by_name.setdefault(a.explainer, []).append(a)
    for name, aggs in sorted(by_name.items()):
        path = os.path.join(out_dir, f"plot_{name}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sigma", "sigma_sq", "mue_lin", "mue_mc", "count"])
            for a in aggs:
                writer.writerow([repr(a.sigma), repr(a.sigma ** 2), repr(a.mue_lin),
                                 repr(a.mue_mc), a.count])
        paths.append(path)
    return paths


def export_results(result, out_dir, formats=("CSV", "JSON")):
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "CSV":
            path = os.path.join(out_dir, "results.csv")
            write_csv(result.records, path)
        elif fmt == "JSON":
            path = os.path.join(out_dir, "results.json")
            write_json(result, path)
        else:
            raise ValueError(f"unknown export format {fmt!r}")
        written.append(path)
    return written + write_plot_data(result, out_dir)


def export_histograms(spec, model, x, kind, sigmas, feature_index, n=1000, rng=None, path=None,
                      class_index=None):
    """Values of explanation coordinate ``feature_index`` over ``n`` perturbations per sigma.

    Returns ``(reference_value, {sigma: values})``; with ``path`` also writes a
    CSV with columns sigma, draw, value, reference.
    """
    rng = rng if rng is not None else RngStream(0)
    ev = make_evaluator(spec, model, x, kind, class_index)
    ref = ev.reference()
    if not 0 <= feature_index < ref.size:
        raise ValueError(f"feature_index {feature_index} outside [0, {ref.size})")
    data = {}
    for j, sigma in enumerate(sigmas):
        data[float(sigma)] = mc_samples(ev, sigma, n, rng.child(j))[:, feature_index]
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sigma", "draw", "value", "reference"])
            for sigma, values in data.items():
                for k, v in enumerate(values):
                    writer.writerow([repr(sigma), k, repr(float(v)),
                                     repr(float(ref[feature_index]))])
    return float(ref[feature_index]), data


def jacobian_diagonal(J):
    """Diagonal of J; for an m x (m*c) input block the c channel entries are averaged."""
    matrix = J.matrix if isinstance(J, JacobianBlock) else np.asarray(J)
    m, d = matrix.shape
    if d % m:
        raise ValueError(f"Jacobian {matrix.shape} has no pixel diagonal")
    c = d // m
    cols = np.arange(m)[:, None] * c + np.arange(c)
    return matrix[np.arange(m)[:, None], cols].mean(axis=1)


def _cov_diag(cov):
    matrix = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"covariance must be square, got shape {matrix.shape}")
    return np.diag(matrix).copy()


def export_diagonals(J, cov_lin, cov_mc, path=None, image_shape=None):
    """Diagonals of J (when it has one), Sigma_lin and Sigma_MC.

    The CSV has columns index, row, col, jacobian, cov_lin, cov_mc; ``row`` and
    ``col`` locate the entry in ``image_shape`` (blank for tabular data).
    """
    lin, mc = _cov_diag(cov_lin), _cov_diag(cov_mc)
    if lin.size != mc.size:
        raise ValueError("covariances have different sizes")
    try:
        jac = jacobian_diagonal(J)
    except ValueError:
        jac = np.full(lin.size, np.nan)
    if jac.size != lin.size:
        raise ValueError("Jacobian rows do not match covariance size")
    out = {"jacobian": jac, "cov_lin": lin, "cov_mc": mc}
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "row", "col", "jacobian", "cov_lin", "cov_mc"])
            for k in range(lin.size):
                row, col = divmod(k, image_shape[1]) if image_shape else ("", "")
                writer.writerow([k, row, col, repr(float(jac[k])), repr(float(lin[k])),
                                 repr(float(mc[k]))])
    return out
