"""Functional MLP, naive MLP on sampled values, and projection-based MLP.

All three models share one hidden layer of ``tanh`` units and an affine
output layer. They differ only in how a sampled curve becomes the numeric
vector fed to the hidden layer:

* ``FunctionalMLP``: hidden pre-activation ``b_i + (1/m) sum_j F_i(x_j) y_j``
  where ``F_i = sum_l W[i, l] phi_l`` is a B-spline weight function. The
  empirical mean stands in for the integral against the sampling measure.
* ``NaiveMLP``: the raw value vector ``(y_1, ..., y_m)`` on a shared grid.
* ``ProjectionMLP``: the least-squares B-spline coefficients of the curve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .bspline import BSplineBasis, Measure, design_matrix, fit_coefficients, gram_matrix

__all__ = [
    "SampledFunction",
    "FunctionalMLP",
    "NaiveMLP",
    "ProjectionMLP",
    "approx_integral",
    "basis_moments",
    "forward_fmlp",
    "forward_naive",
    "forward_fpmlp",
    "equivalence_weights",
    "naive_from_fmlp",
    "param_count",
    "model_to_json",
    "model_from_json",
]


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """A curve known through ``m`` (point, value) pairs."""

    points: NDArray[np.float64]
    values: NDArray[np.float64]
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        x = np.array(self.points, dtype=float).ravel()
        y = np.array(self.values, dtype=float).ravel()
        if x.size < 1:
            raise ValueError("a sampled function needs at least one observation")
        if x.size != y.size:
            raise ValueError(f"points and values differ in length ({x.size} != {y.size})")
        if self.domain is not None:
            a, b = self.domain
            if x.min() < a or x.max() > b:
                raise ValueError(f"observation points fall outside domain {self.domain}")
            object.__setattr__(self, "domain", (float(a), float(b)))
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "values", y)

    @property
    def m(self) -> int:
        return self.points.size


def _as_params(*arrays):
    out = []
    for arr in arrays:
        a = np.array(arr, dtype=float)
        if not np.all(np.isfinite(a)):
            raise ValueError("model parameters must be finite")
        a.setflags(write=False)
        out.append(a)
    return out


@dataclass(frozen=True, eq=False)
class _OneHiddenLayer:
    """Hidden weights ``W`` (k x d), biases ``b``, output weights ``A`` (o x k), biases ``c``."""

    W: NDArray[np.float64]
    b: NDArray[np.float64]
    A: NDArray[np.float64]
    c: NDArray[np.float64]

    def __post_init__(self):
        W, b, A, c = _as_params(self.W, self.b, self.A, self.c)
        W = np.atleast_2d(W)
        A = np.atleast_2d(A)
        b = np.atleast_1d(b)
        c = np.atleast_1d(c)
        k = W.shape[0]
        if k < 1:
            raise ValueError("hidden layer must have at least one neuron")
        if b.shape != (k,) or A.shape[1] != k or c.shape != (A.shape[0],):
            raise ValueError(
                f"inconsistent shapes W{W.shape} b{b.shape} A{A.shape} c{c.shape}"
            )
        for name, arr in zip("WbAc", (W, b, A, c)):
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def o(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.W.shape[1]

    def flat(self) -> NDArray[np.float64]:
        return np.concatenate([self.W.ravel(), self.b, self.A.ravel(), self.c])

    def apply(self, features: ArrayLike) -> NDArray[np.float64]:
        """Outputs for a batch of input vectors, shape ``(n, o)``."""
        X = np.atleast_2d(features)
        return np.tanh(X @ self.W.T + self.b) @ self.A.T + self.c


@dataclass(frozen=True, eq=False)
class NaiveMLP(_OneHiddenLayer):
    """Standard one-hidden-layer perceptron on a raw value vector."""


@dataclass(frozen=True, eq=False)
class FunctionalMLP(_OneHiddenLayer):
    """One-hidden-layer perceptron with B-spline weight functions.

    Row ``W[i]`` holds the coefficients of neuron ``i``'s weight function on
    ``basis``.
    """

    basis: BSplineBasis = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        if self.basis is None:
            raise ValueError("a functional MLP needs a basis")
        if self.W.shape[1] != self.basis.p:
            raise ValueError(f"weight functions have {self.W.shape[1]} coefficients, basis has {self.basis.p}")

    def weight_function(self, i: int, x: ArrayLike) -> NDArray[np.float64]:
        return design_matrix(self.basis, x) @ self.W[i]


@dataclass(frozen=True, eq=False)
class ProjectionMLP:
    """Numeric MLP fed with least-squares coefficients of the input curve."""

    basis: BSplineBasis
    net: NaiveMLP

    def __post_init__(self):
        if self.net.n_inputs != self.basis.p:
            raise ValueError(f"net expects {self.net.n_inputs} inputs, basis has {self.basis.p}")

    k = property(lambda self: self.net.k)
    o = property(lambda self: self.net.o)
    n_inputs = property(lambda self: self.net.n_inputs)

    def flat(self) -> NDArray[np.float64]:
        return self.net.flat()

    def apply(self, coefficients: ArrayLike) -> NDArray[np.float64]:
        return self.net.apply(coefficients)


Model = Union[FunctionalMLP, NaiveMLP, ProjectionMLP]


def basis_moments(basis: BSplineBasis, f: SampledFunction) -> NDArray[np.float64]:
    """Empirical moments ``(1/m) sum_j phi_l(x_j) y_j`` for every basis function."""
    return design_matrix(basis, f.points).T @ f.values / f.m


def approx_integral(basis: BSplineBasis, w: ArrayLike, f: SampledFunction) -> float:
    """Empirical-mean estimate of ``integral F(w, x) g(x) dmu``.

    ``F(w, .) = sum_i w_i phi_i`` and the estimate is the plain average
    ``(1/m) sum_j F(w, x_j) y_j`` over the observations of ``f``.
    """
    F = design_matrix(basis, f.points) @ np.asarray(w, dtype=float)
    return float(np.mean(F * f.values))


def forward_fmlp(model: FunctionalMLP, f: SampledFunction) -> NDArray[np.float64]:
    return model.apply(basis_moments(model.basis, f))[0]


def forward_naive(model: NaiveMLP, f: SampledFunction) -> NDArray[np.float64]:
    """Forward pass on the raw values of ``f``.

    The number of observations must equal the model's input dimension.
    """
    if f.m != model.n_inputs:
        raise ValueError(
            f"naive MLP expects {model.n_inputs} sampled values, curve has {f.m}"
        )
    return model.apply(f.values)[0]


def forward_fpmlp(basis: BSplineBasis, net: NaiveMLP, f: SampledFunction) -> NDArray[np.float64]:
    if net.n_inputs != basis.p:
        raise ValueError(f"net expects {net.n_inputs} inputs, basis has {basis.p}")
    return net.apply(fit_coefficients(basis, f))[0]


def equivalence_weights(
    basis: BSplineBasis, c: ArrayLike, measure: Measure | None = None
) -> NDArray[np.float64]:
    """Weight-function coefficients ``d`` solving ``M d = c``.

    With ``M`` the Gram matrix of ``basis``, the weight function
    ``sum_i d_i phi_i`` paired with a curve through the integral reproduces
    the linear combination ``sum_j c_j alpha_j`` of the curve's projection
    coefficients.
    """
    M = gram_matrix(basis, measure)
    return scipy.linalg.solve(M, np.asarray(c, dtype=float), assume_a="pos")


def naive_from_fmlp(model: FunctionalMLP, grid: ArrayLike) -> NaiveMLP:
    """Naive MLP reproducing ``model`` on curves observed at ``grid``.

    Hidden weights are ``c[i, j] = F_i(w_i, x_j) / m``.
    """
    grid = np.asarray(grid, dtype=float)
    C = (design_matrix(model.basis, grid) @ model.W.T).T / grid.size
    return NaiveMLP(W=C, b=model.b, A=model.A, c=model.c)


def param_count(model: Model) -> int:
    """Number of free numeric parameters, output biases included."""
    if isinstance(model, ProjectionMLP):
        model = model.net
    k, d, o = model.k, model.n_inputs, model.o
    return k * (d + 1) + o * (k + 1)


def count_params(k: int, d: int, o: int) -> int:
    """Parameter count of a one-hidden-layer net with ``d`` inputs (no model needed)."""
    if k < 1:
        raise ValueError("hidden width must be >= 1")
    return k * (d + 1) + o * (k + 1)


def _variant(model: Model) -> str:
    if isinstance(model, FunctionalMLP):
        return "fmlp"
    if isinstance(model, ProjectionMLP):
        return "fpmlp"
    if isinstance(model, NaiveMLP):
        return "mlp"
    raise TypeError(f"not a model: {type(model).__name__}")


def model_to_dict(model: Model, seed: int | None = None) -> dict:
    net = model.net if isinstance(model, ProjectionMLP) else model
    basis = getattr(model, "basis", None)
    return {
        "variant": _variant(model),
        "basis": basis.to_dict() if basis is not None else None,
        "k": net.k,
        "o": net.o,
        "weights": {
            "W": net.W.tolist(),
            "b": net.b.tolist(),
            "A": net.A.tolist(),
            "c": net.c.tolist(),
        },
        "seed": seed,
    }


def model_from_dict(data: dict) -> Model:
    w = data["weights"]
    parts = dict(W=w["W"], b=w["b"], A=w["A"], c=w["c"])
    variant = data["variant"]
    if variant == "mlp":
        return NaiveMLP(**parts)
    basis = BSplineBasis.from_dict(data["basis"])
    if variant == "fmlp":
        return FunctionalMLP(**parts, basis=basis)
    if variant == "fpmlp":
        return ProjectionMLP(basis=basis, net=NaiveMLP(**parts))
    raise ValueError(f"unknown model variant {variant!r}")


def model_to_json(model: Model, seed: int | None = None) -> str:
    """JSON document for ``model``; floats round-trip exactly."""
    return json.dumps(model_to_dict(model, seed))


def model_from_json(text: str) -> Model:
    return model_from_dict(json.loads(text))
