"""Replication protocols shared by the command line and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .bspline import Measure, gram_matrix, make_basis
from .data import (
    LabeledDataset,
    WaveSpec,
    gen_waveform,
    load_tecator,
    random_spline_curves,
    sample_curves,
    second_derivative_preprocess,
    split_train_test,
)
from .fmodel import FunctionalMLP
from .select import Grid, evaluate, grid_search
from .train import TrainConfig, VariantSpec, train

__all__ = [
    "Record",
    "Teacher",
    "make_teacher",
    "teacher_student_trial",
    "waveform_replication",
    "tecator_replication",
    "derive_seed",
]


@dataclass(frozen=True)
class Record:
    """Outcome of one variant on one replication."""

    experiment: str
    replication: int
    variant: str
    seed: int
    error: float
    hidden: int
    basis_size: int | None
    weight_decay: float
    param_count: int
    wall_ms: float | None

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "replication": self.replication,
            "variant": self.variant,
            "seed": self.seed,
            "error": self.error,
            "hidden": self.hidden,
            "basis_size": self.basis_size,
            "weight_decay": self.weight_decay,
            "param_count": self.param_count,
            "wall_ms": self.wall_ms,
        }


def derive_seed(seed: int, *key: int) -> int:
    """A 32-bit seed derived from ``seed`` and an integer key path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(v) for v in key))
    return int(ss.generate_state(1)[0])


def _cv_records(
    experiment: str,
    replication: int,
    seed: int,
    train_ds: LabeledDataset,
    test_ds: LabeledDataset,
    variants,
    grid: Grid,
    folds: int,
    config: TrainConfig,
    record_wall_time: bool,
) -> list[Record]:
    out = []
    for variant in variants:
        start = time.perf_counter()
        report = grid_search(variant, train_ds, grid, folds, replace(config, seed=seed))
        error = evaluate(report.model, test_ds)
        elapsed = (time.perf_counter() - start) * 1e3
        sel = report.selected
        out.append(
            Record(
                experiment,
                replication,
                variant,
                seed,
                error,
                sel.hidden,
                sel.basis_size,
                sel.weight_decay,
                report.param_count,
                round(elapsed, 3) if record_wall_time else None,
            )
        )
    return out


def waveform_replication(
    replication: int,
    seed: int,
    variants=("mlp", "fmlp"),
    grid: Grid | None = None,
    folds: int = 5,
    config: TrainConfig | None = None,
    wave: WaveSpec | None = None,
    test_per_class: int = 250,
    record_wall_time: bool = True,
) -> list[Record]:
    """Fresh waves for training and testing, then CV selection for each variant.

    All variants see the same training and test curves.
    """
    wave = replace(wave or WaveSpec(), seed=seed)
    train_ds = gen_waveform(wave)
    test_ds = gen_waveform(replace(wave, n_per_class=test_per_class, seed=derive_seed(seed, 1)))
    return _cv_records(
        "waveform", replication, seed, train_ds, test_ds, variants, grid or Grid(),
        folds, config or TrainConfig(), record_wall_time,
    )


def tecator_replication(
    dataset: LabeledDataset,
    replication: int,
    seed: int,
    variants=("mlp", "fmlp", "fpmlp"),
    grid: Grid | None = None,
    folds: int = 5,
    config: TrainConfig | None = None,
    n_train: int = 160,
    stratified: bool = False,
    experiment: str = "tecator",
    record_wall_time: bool = True,
) -> list[Record]:
    """Random train/test split of the spectra followed by CV selection per variant."""
    train_ds, test_ds = split_train_test(dataset, n_train, seed, stratified)
    return _cv_records(
        experiment, replication, seed, train_ds, test_ds, variants, grid or Grid(basis_sizes=(15, 20)),
        folds, config or TrainConfig(), record_wall_time,
    )


def load_spectra(path: str | Path, derivative: bool = False, basis_size: int = 20) -> LabeledDataset:
    """Tecator spectra, optionally replaced by the second derivative of a cubic fit.

    Derivatives are taken with respect to wavelength rescaled to [0, 1], so
    they share the order of magnitude of the raw absorbances.
    """
    ds = load_tecator(path)
    if derivative:
        ds = second_derivative_preprocess(ds, make_basis(basis_size, 4, ds.domain), unit_range=True)
    return ds


# --------------------------------------------------------------------------
# Teacher-student regression


@dataclass(frozen=True, eq=False)
class Teacher:
    """A functional MLP whose outputs on in-span curves are computed exactly."""

    model: FunctionalMLP
    gram: NDArray[np.float64]

    def outputs(self, coefs: NDArray) -> NDArray[np.float64]:
        # integral of phi_l * g for g = sum_i alpha_i phi_i is (M alpha)_l
        return self.model.apply(np.atleast_2d(coefs) @ self.gram)


def make_teacher(
    rng: np.random.Generator, hidden: int = 2, p: int = 5, domain=(0.0, 1.0), weight_scale: float = 10.0
) -> Teacher:
    basis = make_basis(p, 4, domain)
    model = FunctionalMLP(
        weight_scale * rng.standard_normal((hidden, p)),
        0.5 * rng.standard_normal(hidden),
        rng.standard_normal((1, hidden)),
        0.1 * rng.standard_normal(1),
        basis=basis,
    )
    return Teacher(model, gram_matrix(basis, Measure(domain)))


def teacher_student_trial(
    n: int,
    m: int,
    seed: int,
    noise_sd: float = 0.1,
    n_test: int = 2000,
    config: TrainConfig | None = None,
    hidden: int = 2,
    p: int = 5,
) -> float:
    """Test MSE of a student fitted to ``n`` curves observed at ``m`` random points.

    Training curves are noisy random-point samplings of random in-span
    curves labelled by a fixed teacher. The student shares the teacher's
    architecture and is scored on fresh curves through exact integrals,
    so the score measures distance to the teacher rather than sampling
    noise in the test inputs.
    """
    teacher = make_teacher(np.random.default_rng(derive_seed(seed, 0)), hidden, p)
    basis = teacher.model.basis
    rng = np.random.default_rng(derive_seed(seed, 1))
    coefs = random_spline_curves(basis, n, rng)
    train_ds = sample_curves(basis, coefs, m, noise_sd, rng, targets=teacher.outputs(coefs))
    config = config or TrainConfig(restarts=5, seed=derive_seed(seed, 2))
    student = train(VariantSpec("fmlp", hidden, basis), train_ds, config).model
    test_coefs = random_spline_curves(basis, n_test, np.random.default_rng(derive_seed(seed, 3)))
    exact_moments = test_coefs @ teacher.gram
    diff = student.apply(exact_moments) - teacher.outputs(test_coefs)
    return float(np.mean(diff**2))
