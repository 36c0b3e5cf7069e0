"""Brute-force reference computations used to check the main code paths.

Nothing here touches :mod:`fmlp.bspline` evaluation or the empirical-mean
integral: splines are evaluated with :class:`scipy.interpolate.BSpline`
and integrals with composite Simpson quadrature.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import BSpline

from .bspline import Measure

__all__ = [
    "quadrature_integral",
    "fd_gradient",
    "dense_forward",
    "spline_function",
    "gradient_deviation",
]


def quadrature_integral(
    f: Callable[[NDArray], NDArray], measure: Measure, resolution: int = 10_001
) -> float:
    """Composite Simpson estimate of ``integral f dmu`` on ``resolution`` nodes."""
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError(f"Simpson's rule needs an odd resolution >= 3, got {resolution}")
    a, b = measure.domain
    x = np.linspace(a, b, resolution)
    y = np.asarray(f(x), dtype=float)
    h = (b - a) / (resolution - 1)
    total = y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()
    return float(total * h / 3.0 * measure.density)


def fd_gradient(loss: Callable[[NDArray], float], x: ArrayLike, h: float = 1e-5) -> NDArray:
    """Central-difference gradient of ``loss`` at ``x``."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        up, down = loss(x + e), loss(x - e)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"loss is not finite around coordinate {i}")
        grad[i] = (up - down) / (2.0 * h)
    return grad


def spline_function(knots: ArrayLike, coefs: ArrayLike, order: int) -> Callable[[NDArray], NDArray]:
    """The spline ``sum_i coefs[i] B_i`` as a callable, via SciPy."""
    spl = BSpline(np.asarray(knots, dtype=float), np.asarray(coefs, dtype=float), order - 1)
    return lambda x: spl(np.asarray(x, dtype=float))


def dense_forward(model, g: Callable[[NDArray], NDArray], resolution: int = 10_001) -> NDArray:
    """Functional MLP output with every integral computed by quadrature.

    ``model`` is a :class:`fmlp.fmodel.FunctionalMLP`; the integrals are
    taken against the normalized uniform measure on its basis domain.
    """
    basis = model.basis
    measure = Measure(basis.domain)
    pre = np.empty(model.k)
    for i in range(model.k):
        F = spline_function(basis.knots, model.W[i], basis.order)
        pre[i] = quadrature_integral(lambda x: F(x) * g(x), measure, resolution)
    return np.tanh(model.b + pre) @ model.A.T + model.c


def gradient_deviation(model, dataset, weight_decay: float = 0.0, h: float = 1e-5) -> float:
    """Relative max-norm gap between the analytic and central-difference gradients.

    The loss is re-evaluated from scratch at each perturbed parameter
    vector, so the finite differences never touch the analytic
    backward pass.
    """
    from .train import VariantSpec, empirical_error, gradient

    spec = VariantSpec.of(model)
    n_inputs, n_outputs = model.n_inputs, model.o

    def loss(theta):
        return empirical_error(spec.build(theta, n_inputs, n_outputs), dataset, weight_decay).total

    fd = fd_gradient(loss, model.flat(), h)
    exact = gradient(model, dataset, weight_decay)
    scale = np.max(np.abs(fd))
    if scale == 0.0:
        return float(np.max(np.abs(exact)))
    return float(np.max(np.abs(exact - fd)) / scale)
