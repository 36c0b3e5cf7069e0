"""Cross-validated architecture and weight-decay selection."""

from __future__ import annotations

import csv
import io
import itertools
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import ArrayLike, NDArray

from .bspline import make_basis
from .data import LabeledDataset
from .fmodel import Model, count_params, model_to_dict
from .train import (
    TrainConfig,
    TrainingError,
    VariantSpec,
    Variant,
    features,
    model_features,
    train,
    train_on_features,
    unpack,
)

__all__ = ["Grid", "CVCell", "CVReport", "kfold_split", "grid_search", "evaluate", "misclassification"]

WAVEFORM_BASIS_SIZES = (5, 7, 10, 15, 20)
SPECTRA_BASIS_SIZES = (15, 20)


@dataclass(frozen=True)
class Grid:
    hidden_widths: tuple[int, ...] = (2, 3, 4)
    basis_sizes: tuple[int, ...] = WAVEFORM_BASIS_SIZES
    weight_decays: tuple[float, ...] = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)

    def __post_init__(self):
        for name in ("hidden_widths", "basis_sizes", "weight_decays"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"grid field {name} must be nonempty")
            object.__setattr__(self, name, values)
        if any(h < 1 for h in self.hidden_widths):
            raise ValueError("hidden widths must be >= 1")
        if any(wd <= 0 for wd in self.weight_decays):
            raise ValueError("weight decays must be positive")


def kfold_split(
    n: int, k: int, seed: int, labels: ArrayLike | None = None
) -> list[NDArray[np.int64]]:
    """Partition ``range(n)`` into ``k`` folds whose sizes differ by at most one.

    With ``labels``, each class is spread evenly over the folds.
    """
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    if labels is not None:
        labels = np.asarray(labels)
        if labels.size != n:
            raise ValueError("labels must have length n")
        # group by class, keeping the random order within each class
        order = order[np.argsort(labels[order], kind="stable")]
    folds = [np.sort(order[i::k]) for i in range(k)]
    return folds


def misclassification(outputs: NDArray, labels: ArrayLike) -> float:
    """Fraction of rows whose argmax (lowest index on ties) differs from the label."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(np.argmax(outputs, axis=1) != labels))


def evaluate(model: Model, dataset: LabeledDataset) -> float:
    """Test misclassification rate of ``model`` on a labelled dataset."""
    if len(dataset) == 0:
        raise ValueError("empty test set")
    if dataset.labels is None:
        raise ValueError("evaluation needs class labels")
    return misclassification(model.apply(model_features(model, dataset)), dataset.labels)


@dataclass
class CVCell:
    hidden: int
    basis_size: int | None
    weight_decay: float
    fold_errors: list[float]
    param_count: int
    failed: bool = False

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.fold_errors))

    def key(self):
        # exact rates are multiples of 1/fold_size; rounding guards summation noise
        return (round(self.mean_error, 12), self.param_count, self.weight_decay)


@dataclass
class CVReport:
    variant: str
    cells: list[CVCell]
    selected: CVCell
    model: Model = field(repr=False)
    param_count: int
    wall_time: float
    folds: int = 5

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "folds": self.folds,
            "cells": [
                {
                    "hidden": c.hidden,
                    "basis_size": c.basis_size,
                    "weight_decay": c.weight_decay,
                    "fold_errors": c.fold_errors,
                    "mean_error": c.mean_error,
                    "param_count": c.param_count,
                    "failed": c.failed,
                }
                for c in self.cells
            ],
            "selected": {
                "hidden": self.selected.hidden,
                "basis_size": self.selected.basis_size,
                "weight_decay": self.selected.weight_decay,
                "mean_error": self.selected.mean_error,
            },
            "param_count": self.param_count,
            "wall_time": self.wall_time,
            "model": model_to_dict(self.model),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            ["hidden", "basis", "decay"] + [f"fold{i + 1}" for i in range(self.folds)] + ["mean"]
        )
        for c in self.cells:
            writer.writerow(
                [c.hidden, "" if c.basis_size is None else c.basis_size, repr(c.weight_decay)]
                + [repr(e) for e in c.fold_errors]
                + [repr(c.mean_error)]
            )
        return buf.getvalue()


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=tuple(int(v) for v in key)).generate_state(1)[0])


def _fold_error(X, T, labels, train_idx, test_idx, hidden, config):
    try:
        theta, _, _, _ = train_on_features(X[train_idx], T[train_idx], hidden, config)
    except TrainingError:
        return None
    W, b, A, c = unpack(theta, hidden, X.shape[1], T.shape[1])
    out = np.tanh(X[test_idx] @ W.T + b) @ A.T + c
    return misclassification(out, labels[test_idx])


def grid_search(
    variant: Variant,
    dataset: LabeledDataset,
    grid: Grid,
    k: int = 5,
    config: TrainConfig | None = None,
    n_jobs: int = 1,
    order: int = 4,
) -> CVReport:
    """Select hidden width, basis size and weight decay by ``k``-fold CV.

    Each grid cell is scored by its mean misclassification over the folds
    (stratified by class). The best cell, with ties going to fewer
    parameters and then to the smaller weight decay, is retrained on the
    whole dataset. The naive MLP ignores ``grid.basis_sizes``.
    """
    start = time.perf_counter()
    config = config or TrainConfig()
    if dataset.labels is None:
        raise ValueError("grid search needs class labels")
    if len(dataset) < k:
        raise ValueError(f"dataset has {len(dataset)} curves, fewer than k={k} folds")
    folds = kfold_split(len(dataset), k, config.seed, dataset.labels)
    everything = np.arange(len(dataset))
    T = dataset.targets
    labels = dataset.labels
    o = dataset.n_outputs

    sizes = [None] if variant == "mlp" else list(grid.basis_sizes)
    feats = {
        p: features(variant, dataset, None if p is None else make_basis(p, order, dataset.domain))
        for p in sizes
    }
    cells = list(itertools.product(sizes, grid.hidden_widths, grid.weight_decays))

    tasks = []
    for ci, (p, hidden, wd) in enumerate(cells):
        for fi, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(everything, test_idx, assume_unique=True)
            cfg = replace(config, weight_decay=wd, seed=_derived_seed(config.seed, ci, fi))
            tasks.append((feats[p], train_idx, test_idx, hidden, cfg))
    if n_jobs == 1:
        errors = [_fold_error(X, T, labels, tr, te, h, cfg) for X, tr, te, h, cfg in tasks]
    else:
        errors = Parallel(n_jobs=n_jobs)(
            delayed(_fold_error)(X, T, labels, tr, te, h, cfg) for X, tr, te, h, cfg in tasks
        )

    report_cells = []
    for ci, (p, hidden, wd) in enumerate(cells):
        errs = errors[ci * k : (ci + 1) * k]
        failed = any(e is None for e in errs)
        errs = [1.0 if e is None else e for e in errs]
        d = feats[p].shape[1]
        report_cells.append(CVCell(hidden, p, wd, errs, count_params(hidden, d, o), failed))

    best_index = min(range(len(cells)), key=lambda i: report_cells[i].key())
    best = report_cells[best_index]
    spec = VariantSpec(
        variant, best.hidden, None if best.basis_size is None else make_basis(best.basis_size, order, dataset.domain)
    )
    final_cfg = replace(
        config, weight_decay=best.weight_decay, seed=_derived_seed(config.seed, best_index, k)
    )
    model = train(spec, dataset, final_cfg).model
    return CVReport(
        variant=variant,
        cells=report_cells,
        selected=best,
        model=model,
        param_count=best.param_count,
        wall_time=time.perf_counter() - start,
        folds=k,
    )
