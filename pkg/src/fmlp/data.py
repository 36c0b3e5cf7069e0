"""Datasets of sampled curves: Breiman waves, Tecator spectra, simulated observations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .bspline import BSplineBasis, Measure, design_matrix, fit_coefficients_batch, make_basis
from .fmodel import SampledFunction

__all__ = [
    "LabeledDataset",
    "DataError",
    "WaveSpec",
    "wave_h",
    "waveform_curve",
    "gen_waveform",
    "load_tecator",
    "write_tecator",
    "write_dataset_csv",
    "read_dataset_csv",
    "second_derivative_preprocess",
    "smooth_dataset",
    "split_train_test",
    "sample_under_He",
    "TECATOR_DOMAIN",
    "TECATOR_WAVELENGTHS",
]

TECATOR_DOMAIN = (850.0, 1050.0)
TECATOR_WAVELENGTHS = 850.0 + 2.0 * np.arange(100)
FAT_THRESHOLD = 20.0


class DataError(ValueError):
    """Malformed or missing input data."""


def one_hot(labels: ArrayLike, n_classes: int) -> NDArray[np.float64]:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Curves with target vectors and, for classification, integer labels.

    ``targets`` has shape ``(n, o)``. When ``labels`` is given, targets are
    the one-hot encoding of the labels.
    """

    functions: tuple[SampledFunction, ...]
    targets: NDArray[np.float64]
    labels: NDArray[np.int64] | None
    domain: tuple[float, float]

    def __post_init__(self):
        fns = tuple(self.functions)
        T = np.asarray(self.targets, dtype=float)
        if T.ndim == 1:
            # scalar targets, one per curve
            T = T.reshape(-1, 1)
        if T.ndim != 2 or T.shape[0] != len(fns):
            raise ValueError(f"{len(fns)} functions but {T.shape[0]} targets")
        a, b = (float(v) for v in self.domain)
        for f in fns:
            if f.points.min() < a or f.points.max() > b:
                raise ValueError(f"curve observed outside the dataset domain {self.domain}")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=int).ravel()
            if labels.size != len(fns):
                raise ValueError("labels and functions differ in length")
            if not np.array_equal(np.argmax(T, axis=1), labels) or not np.all(
                (T == 0) | (T == 1)
            ):
                raise ValueError("targets are not the one-hot encoding of the labels")
            labels.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "functions", fns)
        object.__setattr__(self, "targets", T)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "domain", (a, b))

    @classmethod
    def from_grid(
        cls,
        grid: ArrayLike,
        values: ArrayLike,
        labels: ArrayLike | None = None,
        domain: tuple[float, float] | None = None,
        n_classes: int | None = None,
        targets: ArrayLike | None = None,
    ) -> "LabeledDataset":
        """Dataset of curves all observed on ``grid``; ``values`` has one curve per row."""
        grid = np.asarray(grid, dtype=float)
        Y = np.atleast_2d(np.asarray(values, dtype=float))
        if domain is None:
            domain = (float(grid.min()), float(grid.max()))
        fns = tuple(SampledFunction(grid, y) for y in Y)
        if labels is not None:
            labels = np.asarray(labels, dtype=int)
            n_classes = n_classes or int(labels.max()) + 1
            targets = one_hot(labels, n_classes)
        elif targets is None:
            raise ValueError("need labels or targets")
        return cls(fns, targets, labels, domain)

    def __len__(self) -> int:
        return len(self.functions)

    @property
    def n_outputs(self) -> int:
        return self.targets.shape[1]

    @property
    def n_classes(self) -> int | None:
        return None if self.labels is None else self.targets.shape[1]

    def subset(self, index: ArrayLike) -> "LabeledDataset":
        index = np.asarray(index, dtype=int)
        labels = None if self.labels is None else self.labels[index]
        return LabeledDataset(
            tuple(self.functions[i] for i in index), self.targets[index], labels, self.domain
        )

    def shared_grid(self) -> NDArray[np.float64] | None:
        """The common observation grid, or ``None`` if curves are sampled differently."""
        if not self.functions:
            return None
        grid = self.functions[0].points
        for f in self.functions[1:]:
            if f.points is not grid and not np.array_equal(f.points, grid):
                return None
        return grid

    def values_matrix(self) -> NDArray[np.float64]:
        """Values as an ``(n, m)`` array; requires a shared grid."""
        if self.shared_grid() is None:
            raise ValueError("curves are not observed on a shared grid")
        return np.vstack([f.values for f in self.functions])


# --------------------------------------------------------------------------
# Breiman waves


@dataclass(frozen=True)
class WaveSpec:
    n_per_class: int = 150
    m: int = 101
    noise_sd: float = 1.0
    seed: int = 0
    domain: tuple[float, float] = (1.0, 21.0)

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")


def wave_h(t: ArrayLike, which: int) -> NDArray[np.float64] | float:
    """Triangular generating waveforms ``h1`` (peak at 11), ``h2`` (15), ``h3`` (7)."""
    shift = {1: 0.0, 2: 4.0, 3: -4.0}
    if which not in shift:
        raise ValueError(f"waveform index must be 1, 2 or 3, got {which}")
    t = np.asarray(t, dtype=float)
    out = np.maximum(6.0 - np.abs(t - shift[which] - 11.0), 0.0)
    return float(out) if out.ndim == 0 else out


# class -> (waveform weighted by u, waveform weighted by 1 - u)
WAVE_PAIRS = {0: (1, 2), 1: (1, 3), 2: (2, 3)}


def waveform_curve(label: int, u: float, t: ArrayLike) -> NDArray[np.float64]:
    """Noise-free curve ``u * h_a(t) + (1 - u) * h_b(t)`` of class ``label`` (0, 1 or 2)."""
    first, second = WAVE_PAIRS[label]
    return u * wave_h(t, first) + (1.0 - u) * wave_h(t, second)


def gen_waveform(spec: WaveSpec) -> LabeledDataset:
    """Generate ``n_per_class`` noisy waves per class on a uniform grid.

    Each curve gets its own ``u ~ U(0, 1)`` and i.i.d. Gaussian noise on
    every observation. Classes are balanced and presented in random order.
    """
    rng = np.random.default_rng(spec.seed)
    grid = np.linspace(*spec.domain, spec.m)
    labels = rng.permutation(np.repeat(np.arange(3), spec.n_per_class))
    u = rng.uniform(0.0, 1.0, size=labels.size)
    clean = np.vstack([waveform_curve(lab, ui, grid) for lab, ui in zip(labels, u)])
    noisy = clean + spec.noise_sd * rng.standard_normal(clean.shape)
    return LabeledDataset.from_grid(grid, noisy, labels, domain=spec.domain, n_classes=3)


# --------------------------------------------------------------------------
# CSV formats


def _tecator_header() -> list[str]:
    return [f"abs_{int(w)}" for w in TECATOR_WAVELENGTHS] + ["fat"]


def load_tecator(path: str | Path) -> LabeledDataset:
    """Read Tecator spectra from CSV.

    The file has a header row, 100 absorbance columns ``abs_850`` to
    ``abs_1048`` (2 nm spacing) and a ``fat`` column. Samples with fat
    strictly below 20% get label 0, all others label 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(
            f"Tecator data file not found at {path}; expected a CSV with header "
            "abs_850,...,abs_1048,fat (100 absorbances and the fat percentage)"
        )
    spectra, fats = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != _tecator_header():
            raise DataError(f"{path}: header must be abs_850,...,abs_1048,fat")
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 101:
                raise DataError(f"{path}: row {row_no} has {len(row)} columns, expected 101")
            try:
                vals = [float(cell) for cell in row]
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no} is not numeric ({exc})") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: row {row_no} contains non-finite values")
            spectra.append(vals[:100])
            fats.append(vals[100])
    if not spectra:
        raise DataError(f"{path}: no data rows")
    labels = (np.asarray(fats) >= FAT_THRESHOLD).astype(int)
    return LabeledDataset.from_grid(
        TECATOR_WAVELENGTHS, spectra, labels, domain=TECATOR_DOMAIN, n_classes=2
    )


def write_tecator(path: str | Path, spectra: ArrayLike, fat: ArrayLike) -> None:
    spectra = np.atleast_2d(np.asarray(spectra, dtype=float))
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_tecator_header())
        for row, f in zip(spectra, np.asarray(fat, dtype=float)):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(f))])


def write_dataset_csv(ds: LabeledDataset, path: str | Path, prefix: str = "x_") -> None:
    """Write a shared-grid classification dataset as CSV.

    One column per observation point (named ``prefix`` + point) followed by
    a ``label`` column.
    """
    grid = ds.shared_grid()
    if grid is None or ds.labels is None:
        raise ValueError("CSV export needs labelled curves on a shared grid")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{prefix}{float(x)!r}" for x in grid] + ["label"])
        for f, lab in zip(ds.functions, ds.labels):
            writer.writerow([repr(float(v)) for v in f.values] + [int(lab)])


def read_dataset_csv(
    path: str | Path, prefix: str = "x_", domain: tuple[float, float] | None = None
) -> LabeledDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise DataError(f"{path}: last header column must be 'label'")
        try:
            grid = np.array([float(h[len(prefix):]) for h in header[:-1]])
        except ValueError:
            raise DataError(f"{path}: value columns must be named {prefix}<point>") from None
        rows, labels = [], []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} columns, expected {len(header)}")
            try:
                rows.append([float(v) for v in row[:-1]])
                labels.append(int(row[-1]))
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
    return LabeledDataset.from_grid(grid, rows, labels, domain=domain)


# --------------------------------------------------------------------------
# Preprocessing and splitting


def _refit_on_grid(ds: LabeledDataset, basis: BSplineBasis, d: int) -> LabeledDataset:
    grid = ds.shared_grid()
    if grid is not None:
        alpha = fit_coefficients_batch(basis, grid, ds.values_matrix())
        new_vals = alpha @ design_matrix(basis, grid, d).T
        fns = tuple(SampledFunction(grid, v) for v in new_vals)
    else:
        fns = []
        for f in ds.functions:
            alpha = fit_coefficients_batch(basis, f.points, f.values[None, :])[0]
            fns.append(SampledFunction(f.points, design_matrix(basis, f.points, d) @ alpha))
    return LabeledDataset(tuple(fns), ds.targets, ds.labels, ds.domain)


def second_derivative_preprocess(
    ds: LabeledDataset, basis: BSplineBasis | None = None, unit_range: bool = False
) -> LabeledDataset:
    """Replace each curve by the exact second derivative of its least-squares spline.

    Parameters
    ----------
    ds : LabeledDataset
        Curves to differentiate. Points and labels are kept.
    basis : BSplineBasis, optional
        Basis of order 3 or more for the fit. Defaults to 20 cubic
        B-splines on the dataset domain.
    unit_range : bool, default False
        Differentiate with respect to ``t = (x - a) / (b - a)`` instead of
        ``x``, which multiplies every value by ``(b - a) ** 2``. Derivatives
        in the original units of a wide domain (nanometres for spectra) are
        orders of magnitude smaller than the curves, which leaves a weight
        decayed network unable to use them.

    Returns
    -------
    LabeledDataset
        The derivatives, evaluated at each curve's own observation points.
    """
    if basis is None:
        basis = make_basis(20, 4, ds.domain)
    if basis.order < 3:
        raise ValueError("second derivatives need a basis of order >= 3")
    out = _refit_on_grid(ds, basis, 2)
    if not unit_range:
        return out
    a, b = ds.domain
    scale = (b - a) ** 2
    fns = tuple(SampledFunction(f.points, scale * f.values) for f in out.functions)
    return LabeledDataset(fns, out.targets, out.labels, out.domain)


def smooth_dataset(ds: LabeledDataset, basis: BSplineBasis) -> LabeledDataset:
    """Replace each curve by its least-squares spline, resampled at the same points."""
    return _refit_on_grid(ds, basis, 0)


def split_train_test(
    ds: LabeledDataset, n_train: int, seed: int, stratified: bool = False
) -> tuple[LabeledDataset, LabeledDataset]:
    """Random train/test split with ``n_train`` training curves.

    With ``stratified=True`` each class contributes to the training set in
    proportion to its frequency (within one curve).
    """
    n = len(ds)
    if not 0 < n_train < n:
        raise ValueError(f"n_train must satisfy 0 < n_train < n={n}, got {n_train}")
    train_idx, test_idx = split_indices(n, n_train, seed, ds.labels if stratified else None)
    return ds.subset(train_idx), ds.subset(test_idx)


def split_indices(
    n: int, n_train: int, seed: int, labels: ArrayLike | None = None
) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    rng = np.random.default_rng(seed)
    if labels is None:
        perm = rng.permutation(n)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    labels = np.asarray(labels)
    classes = np.unique(labels)
    members = [rng.permutation(np.flatnonzero(labels == c)) for c in classes]
    exact = np.array([len(mem) * n_train / n for mem in members])
    quota = np.floor(exact).astype(int)
    # largest remainders get the leftover slots
    for j in np.argsort(-(exact - quota), kind="stable")[: n_train - quota.sum()]:
        quota[j] += 1
    train = np.concatenate([mem[:q] for mem, q in zip(members, quota)])
    test = np.concatenate([mem[q:] for mem, q in zip(members, quota)])
    return np.sort(train), np.sort(test)


def sample_under_He(
    g: Callable[[NDArray], NDArray],
    m: int,
    noise_sd: float,
    seed: int | np.random.Generator,
    measure: Measure,
) -> SampledFunction:
    """Observe ``g`` at ``m`` i.i.d. points drawn from ``measure`` with Gaussian noise."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    x = measure.sample(m, rng)
    y = np.asarray(g(x), dtype=float) + noise_sd * rng.standard_normal(m)
    return SampledFunction(x, y, measure.domain)


def random_spline_curves(
    basis: BSplineBasis, n: int, rng: np.random.Generator, scale: float = 1.0
) -> NDArray[np.float64]:
    """Coefficient vectors of ``n`` random curves in the span of ``basis``."""
    return scale * rng.standard_normal((n, basis.p))


def sample_curves(
    basis: BSplineBasis,
    coefs: NDArray,
    m: int,
    noise_sd: float,
    rng: np.random.Generator,
    measure: Measure | None = None,
    targets: NDArray | None = None,
) -> LabeledDataset:
    """Observe in-span curves at ``m`` random points each (independent per curve)."""
    measure = measure or Measure(basis.domain)
    fns = []
    for alpha in coefs:
        fns.append(
            sample_under_He(lambda x, a=alpha: design_matrix(basis, x) @ a, m, noise_sd, rng, measure)
        )
    if targets is None:
        targets = np.zeros((len(fns), 1))
    return LabeledDataset(tuple(fns), targets, None, basis.domain)


def stack_labels(datasets: Sequence[LabeledDataset]) -> NDArray[np.int64]:
    return np.concatenate([ds.labels for ds in datasets])
