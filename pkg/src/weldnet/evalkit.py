"""Error metrics and CSV reports.

Errors are per-sample relative L2 errors ``||pred - truth|| / ||truth||``
averaged over test samples (a mean of ratios, not a ratio of means).
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ErrorReport:
    kind: str                       # "projection" or "operator"
    per_time: np.ndarray            # [T] mean relative error at each grid index
    params: np.ndarray              # [N_test]
    final_errors: np.ndarray        # [N_test] relative error at the final time
    model_tag: str = "model"
    per_sample: np.ndarray | None = field(default=None, repr=False)   # [N_test, T]

    def __post_init__(self):
        if self.kind not in ("projection", "operator"):
            raise ValueError(f"unknown report kind {self.kind!r}")
        if len(self.params) != len(self.final_errors):
            raise ValueError("parameter and error lists differ in length")

    @property
    def final(self) -> float:
        return float(self.per_time[-1])


def relative_error(pred, truth) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    nrm = np.linalg.norm(truth)
    if nrm == 0.0:
        raise ValueError("relative error undefined for a zero reference")
    return float(np.linalg.norm(np.asarray(pred, dtype=np.float64) - truth) / nrm)


def relative_errors(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Row-wise relative errors along the last axis."""
    truth = np.asarray(truth, dtype=np.float64)
    nrm = np.linalg.norm(truth, axis=-1)
    if np.any(nrm == 0.0):
        raise ValueError("relative error undefined for a zero reference")
    return np.linalg.norm(np.asarray(pred, dtype=np.float64) - truth, axis=-1) / nrm


def _report(kind, errs, params, tag):
    return ErrorReport(kind, errs.mean(axis=0), np.asarray(params, dtype=np.float64), errs[:, -1].copy(), tag,
                       errs)


def projection_error_vs_time(model, values: np.ndarray, params=None, tag: str = "model") -> ErrorReport:
    """Reconstruction error D^i(E^i(x)) using the window that owns each index (boundaries: earlier window)."""
    values = np.asarray(values, dtype=np.float64)
    n, t, _ = values.shape
    errs = np.empty((n, t))
    for k in range(t):
        wm = model.windows[model.layout.window_of(k)]
        errs[:, k] = relative_errors(wm.decode(wm.encode(values[:, k])), values[:, k])
    return _report("projection", errs, np.zeros(n) if params is None else params, tag)


def operator_error_vs_time(model, values: np.ndarray, params=None, tag: str = "model") -> ErrorReport:
    """Prediction from x(0) against the truth at every grid index; any model with ``rollout(x0)``."""
    values = np.asarray(values, dtype=np.float64)
    pred = model.rollout(values[:, 0])
    with np.errstate(over="ignore", invalid="ignore"):
        errs = relative_errors(pred, values)
    # a diverged rollout reports an infinite error instead of NaN
    errs = np.where(np.isfinite(errs), errs, np.inf)
    return _report("operator", errs, np.zeros(len(values)) if params is None else params, tag)


def error_vs_parameter(report: ErrorReport) -> list[tuple[float, float]]:
    """(parameter, final-time error) pairs sorted by parameter."""
    order = np.argsort(report.params, kind="stable")
    return [(float(report.params[i]), float(report.final_errors[i])) for i in order]


def _fmt(x: float) -> str:
    # shortest decimal string that round-trips to the same float
    return repr(float(x))


def _safe(tag: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", tag)


def emit_report_csv(reports, directory, times=None) -> list[Path]:
    """Write ``<tag>_<kind>_time.csv`` (and ``<tag>_<kind>_param.csv``) per report; returns the paths.

    ``times`` restricts the per-time file to the listed grid indices.
    """
    out = Path(directory)
    paths = []
    for rep in reports:
        out.mkdir(parents=True, exist_ok=True)
        base = f"{_safe(rep.model_tag)}_{rep.kind}"
        p = out / f"{base}_time.csv"
        idx = range(len(rep.per_time)) if times is None else times
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_index", "mean_relative_error"])
            for k in idx:
                w.writerow([k, _fmt(rep.per_time[k])])
        paths.append(p)
        p = out / f"{base}_param.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parameter", "final_relative_error"])
            for a, e in error_vs_parameter(rep):
                w.writerow([_fmt(a), _fmt(e)])
        paths.append(p)
    return paths


def read_report_csv(path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [(float(a), float(b)) for a, b in rows[1:]]
