"""Affine baseline ``y = A x + B`` on the raw genome, one model per property."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import LabeledDataset
from .metrics import PROPERTY_NAMES, mape, r_squared as _r2
from .microstructure import Microstructure

RIDGE = 1e-8


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    target: str
    width: int
    height: int

    def predict(self, genomes) -> np.ndarray | float:
        """Prediction for a :class:`Microstructure`, one genome, or a ``(count, genes)`` array."""
        if isinstance(genomes, Microstructure):
            return float(genomes.bits @ self.weights + self.intercept)
        x = np.asarray(genomes, dtype=float)
        return x @ self.weights + self.intercept

    def weight_grid(self) -> np.ndarray:
        return self.weights.reshape(self.height, self.width)


def design_matrix(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=float)
    return np.hstack([bits, np.ones((len(bits), 1))])


def fit(dataset: LabeledDataset, target: str, ridge_fallback: bool = False) -> LinearModel:
    """Least-squares fit through the normal equations, solved by pivoted LU.

    A rank-deficient design raises :class:`RankDeficientError` unless
    ``ridge_fallback`` is set, in which case ``1e-8 * I`` is added.
    """
    if target not in PROPERTY_NAMES:
        raise ValueError(f"unknown property {target!r}")
    X = design_matrix(dataset.bits)
    y = dataset.column(target)
    gram = X.T @ X
    rhs = X.T @ y
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        if not ridge_fallback:
            raise RankDeficientError("design matrix is rank deficient; enable the ridge fallback")
        gram = gram + RIDGE * np.eye(gram.shape[0])
    coef = scipy.linalg.lu_solve(scipy.linalg.lu_factor(gram), rhs)
    return LinearModel(coef[:-1].copy(), float(coef[-1]), target, dataset.width, dataset.height)


def fit_all(dataset: LabeledDataset, ridge_fallback: bool = False) -> dict[str, LinearModel]:
    return {p: fit(dataset, p, ridge_fallback) for p in PROPERTY_NAMES}


def predict(model: LinearModel, microstructure) -> float | np.ndarray:
    return model.predict(microstructure)


def r_squared(model: LinearModel, dataset: LabeledDataset) -> float:
    return _r2(dataset.column(model.target), model.predict(dataset.bits))


def holdout_mape(model: LinearModel, dataset: LabeledDataset) -> float:
    return mape(dataset.column(model.target), model.predict(dataset.bits))


def training_mse(model: LinearModel, dataset: LabeledDataset) -> float:
    r = dataset.column(model.target) - model.predict(dataset.bits)
    return float(np.mean(r ** 2))


def rank_weights(model_or_weights) -> np.ndarray:
    """Signed ranks: ``+1`` for the largest positive weight, ``-1`` for the most negative.

    Zero weights get rank 0; ties go to the lower element index.
    """
    w = np.asarray(getattr(model_or_weights, "weights", model_or_weights), dtype=float)
    ranks = np.zeros(len(w), dtype=int)
    idx = np.arange(len(w))
    pos, neg = idx[w > 0], idx[w < 0]
    pos = pos[np.lexsort((pos, -w[pos]))]
    neg = neg[np.lexsort((neg, w[neg]))]
    ranks[pos] = np.arange(1, len(pos) + 1)
    ranks[neg] = -np.arange(1, len(neg) + 1)
    return ranks


def rank_grid(model: LinearModel) -> np.ndarray:
    return rank_weights(model).reshape(model.height, model.width)


def save_model_csv(path, model: LinearModel) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["element", "weight"])
        for i, w in enumerate(model.weights):
            writer.writerow([i, repr(float(w))])
        writer.writerow(["intercept", repr(model.intercept)])


def load_model_csv(path, target: str, width: int, height: int) -> LinearModel:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    if not rows or rows[-1][0] != "intercept":
        raise ValueError(f"{path}: missing intercept row")
    weights = np.array([float(r[1]) for r in rows[:-1]])
    return LinearModel(weights, float(rows[-1][1]), target, width, height)


def write_rank_grid_csv(path, model: LinearModel) -> None:
    """Rank grid with row 0 at the symmetry line, one CSV row per element row."""
    header = ",".join(f"col{j}" for j in range(model.width))
    np.savetxt(path, rank_grid(model), fmt="%d", delimiter=",", header=header, comments="")
