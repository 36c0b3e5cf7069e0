"""Functional multi-layer perceptrons for curve-valued inputs."""

from .bspline import (
    BSplineBasis,
    Measure,
    RankError,
    eval_basis,
    eval_basis_derivative,
    fit_coefficients,
    gram_matrix,
    make_basis,
)
from .fmodel import (
    FunctionalMLP,
    NaiveMLP,
    ProjectionMLP,
    SampledFunction,
    approx_integral,
    equivalence_weights,
    forward_fmlp,
    forward_fpmlp,
    forward_naive,
    param_count,
)

__version__ = "0.1.0"
