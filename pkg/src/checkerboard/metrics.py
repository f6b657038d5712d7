"""Regression metrics shared by the linear and convolutional surrogates."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

PROPERTY_NAMES = ("modulus", "strength", "toughness")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PropertyReport:
    """Percentages are in percent; ``frac_gt_5pct`` is a fraction in [0, 1]."""

    mape: float
    max_error: float
    frac_gt_5pct: float
    count: int
    excluded: int = 0


def percentage_errors(y_true, y_pred) -> tuple[np.ndarray, int]:
    """``|y - yhat| / |y|`` in percent, skipping zero ground truth.

    Returns the errors and how many samples were skipped.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    keep = y_true != 0
    return 100.0 * np.abs(y_true[keep] - y_pred[keep]) / np.abs(y_true[keep]), int((~keep).sum())


def mape(y_true, y_pred) -> float:
    err, _ = percentage_errors(y_true, y_pred)
    if err.size == 0:
        raise MetricError("MAPE needs at least one nonzero ground-truth value")
    return float(err.mean())


def property_report(y_true, y_pred) -> PropertyReport:
    err, excluded = percentage_errors(y_true, y_pred)
    if err.size == 0:
        raise MetricError("no samples with nonzero ground truth to evaluate")
    return PropertyReport(float(err.mean()), float(err.max()), float(np.mean(err > 5.0)),
                          int(err.size), excluded)


def eval_report(y_true, y_pred) -> dict[str, PropertyReport]:
    y_true, y_pred = np.atleast_2d(y_true), np.atleast_2d(y_pred)
    if len(y_true) == 0:
        raise MetricError("cannot evaluate on an empty dataset")
    return {name: property_report(y_true[:, k], y_pred[:, k])
            for k, name in enumerate(PROPERTY_NAMES)}


def write_eval_report(path, report: dict[str, PropertyReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property", "mape", "max_error", "frac_gt_5pct"])
        for name, r in report.items():
            writer.writerow([name, repr(r.mape), repr(r.max_error), repr(r.frac_gt_5pct)])


def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    sse = np.sum((y_true - np.asarray(y_pred, dtype=float)) ** 2)
    sst = np.sum((y_true - y_true.mean()) ** 2)
    if sst == 0:
        return 1.0 if sse == 0 else -np.inf
    return float(1.0 - sse / sst)
