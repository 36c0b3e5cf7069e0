"""Raw spectra against second derivatives on one Tecator split.

Needs ``data/tecator.csv`` (see ``fetch_tecator.py``). The fat signal sits
in the curvature of the spectra, which the second derivative of a cubic
spline fit exposes and a baseline shift cannot disturb.
"""

import sys

import numpy as np

from fmlp.data import split_train_test
from fmlp.experiments import load_spectra
from fmlp.select import Grid, evaluate, grid_search
from fmlp.train import TrainConfig

path = sys.argv[1] if len(sys.argv) > 1 else "data/tecator.csv"
grid = Grid(basis_sizes=(15, 20))
config = TrainConfig(restarts=10, seed=0)

for derivative in (False, True):
    ds = load_spectra(path, derivative=derivative)
    train_ds, test_ds = split_train_test(ds, 160, seed=0)
    report = grid_search("fmlp", train_ds, grid, k=5, config=config)
    label = "second derivative" if derivative else "raw absorbance"
    spread = np.ptp(ds.values_matrix(), axis=1).mean()
    print(
        f"{label:18s} mean range {spread:8.2e}  selected basis {report.selected.basis_size:2d}"
        f"  test error {evaluate(report.model, test_ds):.3f}"
    )
