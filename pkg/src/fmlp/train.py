"""Penalized squared-error training with nonlinear conjugate gradients.

Every model variant reduces to the same numeric problem once each curve is
mapped to its input vector (see :func:`features`): functional MLPs see the
empirical basis moments ``(1/m) sum_j phi_l(x_j) y_j``, projection MLPs the
least-squares coefficients, naive MLPs the raw values. Training therefore
runs one shared loss/gradient routine on that feature matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .bspline import BSplineBasis, design_matrix, fit_coefficients_batch
from .data import LabeledDataset
from .fmodel import FunctionalMLP, Model, NaiveMLP, ProjectionMLP, basis_moments

__all__ = [
    "TrainConfig",
    "LossValue",
    "VariantSpec",
    "CGResult",
    "TrainResult",
    "TrainingError",
    "features",
    "empirical_error",
    "gradient",
    "minimize_cg",
    "train",
    "train_on_features",
    "minimize_cg_many",
    "batch_objective",
]

logger = logging.getLogger(__name__)

Variant = Literal["fmlp", "fpmlp", "mlp"]


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    weight_decay: float = 0.0
    restarts: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.weight_decay < 0 or self.grad_tol < 0:
            raise ValueError("weight_decay and grad_tol must be nonnegative")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")


@dataclass(frozen=True)
class LossValue:
    data_term: float
    penalty: float

    @property
    def total(self) -> float:
        return self.data_term + self.penalty


@dataclass(frozen=True)
class VariantSpec:
    """Architecture to train: model family, hidden width and (if used) basis."""

    variant: Variant
    hidden: int
    basis: BSplineBasis | None = None

    def __post_init__(self):
        if self.variant not in ("fmlp", "fpmlp", "mlp"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.hidden < 1:
            raise ValueError("hidden width must be >= 1")
        if self.variant != "mlp" and self.basis is None:
            raise ValueError(f"variant {self.variant} needs a basis")

    @classmethod
    def of(cls, model: Model) -> "VariantSpec":
        if isinstance(model, FunctionalMLP):
            return cls("fmlp", model.k, model.basis)
        if isinstance(model, ProjectionMLP):
            return cls("fpmlp", model.k, model.basis)
        return cls("mlp", model.k)

    def build(self, theta: NDArray, n_inputs: int, n_outputs: int) -> Model:
        W, b, A, c = unpack(theta, self.hidden, n_inputs, n_outputs)
        if self.variant == "fmlp":
            return FunctionalMLP(W, b, A, c, basis=self.basis)
        net = NaiveMLP(W, b, A, c)
        if self.variant == "fpmlp":
            return ProjectionMLP(self.basis, net)
        return net


# --------------------------------------------------------------------------
# Features


def features(variant: Variant, dataset: LabeledDataset, basis: BSplineBasis | None = None) -> NDArray:
    """Input vectors fed to the hidden layer, one row per curve."""
    grid = dataset.shared_grid()
    if variant == "mlp":
        ms = {f.m for f in dataset.functions}
        if len(ms) != 1:
            raise ValueError("naive MLP needs every curve to have the same number of observations")
        return np.vstack([f.values for f in dataset.functions])
    if basis is None:
        raise ValueError(f"variant {variant} needs a basis")
    if variant == "fmlp":
        if grid is not None:
            return dataset.values_matrix() @ design_matrix(basis, grid) / grid.size
        return np.vstack([basis_moments(basis, f) for f in dataset.functions])
    if variant == "fpmlp":
        if grid is not None:
            return fit_coefficients_batch(basis, grid, dataset.values_matrix())
        return np.vstack(
            [fit_coefficients_batch(basis, f.points, f.values[None, :])[0] for f in dataset.functions]
        )
    raise ValueError(f"unknown variant {variant!r}")


def model_features(model: Model, dataset: LabeledDataset) -> NDArray:
    spec = VariantSpec.of(model)
    return features(spec.variant, dataset, spec.basis)


# --------------------------------------------------------------------------
# Loss and gradient on features


def unpack(theta: NDArray, k: int, d: int, o: int):
    """Split a flat parameter vector into ``W, b, A, c``."""
    kd = k * d
    W = theta[:kd].reshape(k, d)
    b = theta[kd : kd + k]
    A = theta[kd + k : kd + k + o * k].reshape(o, k)
    c = theta[kd + k + o * k :]
    return W, b, A, c


def batch_objective(X: NDArray, T: NDArray, k: int, weight_decay: float):
    """Loss and gradient for a stack of parameter vectors sharing one dataset.

    The returned function maps ``Theta`` of shape ``(B, P)`` to ``(f, G)``
    with ``f`` of shape ``(B,)`` and ``G`` of shape ``(B, P)``. The hidden
    layers of all ``B`` nets are evaluated with one matrix product; the
    output layers through a block-diagonal matrix.
    """
    X = np.ascontiguousarray(X, dtype=float)
    T = np.ascontiguousarray(np.atleast_2d(T), dtype=float)
    n, d = X.shape
    o = T.shape[1]
    kd, ok = k * d, o * k
    lam2 = 2.0 * weight_decay
    tiled = {1: T}

    def fun(Theta):
        B = Theta.shape[0]
        if B not in tiled:
            tiled[B] = np.tile(T, B)
        blocks = np.arange(B)
        W = Theta[:, :kd].reshape(B * k, d)
        b = Theta[:, kd : kd + k].reshape(B * k)
        A = Theta[:, kd + k : kd + k + ok].reshape(B, o, k)
        c = Theta[:, kd + k + ok :].reshape(B * o)
        A_bd = np.zeros((B, o, B, k))
        A_bd[blocks, :, blocks, :] = A
        A_bd = A_bd.reshape(B * o, B * k)
        H = np.tanh(X @ W.T + b)
        R = H @ A_bd.T + c - tiled[B]
        f = np.square(R).sum(axis=0).reshape(B, o).sum(axis=1) / n
        R *= 2.0 / n
        gA = (R.T @ H).reshape(B, o, B, k)[blocks, :, blocks, :]
        dZ = (R @ A_bd) * (1.0 - H * H)
        gW = (dZ.T @ X).reshape(B, kd)
        if weight_decay:
            Wr = W.reshape(B, kd)
            f += weight_decay * (np.square(Wr).sum(axis=1) + np.square(A).reshape(B, ok).sum(axis=1))
            gW += lam2 * Wr
            gA += lam2 * A
        G = np.concatenate(
            [gW, dZ.sum(axis=0).reshape(B, k), gA.reshape(B, ok), R.sum(axis=0).reshape(B, o)],
            axis=1,
        )
        return f, G

    return fun


def make_objective(X: NDArray, T: NDArray, k: int, weight_decay: float):
    """``theta -> (total loss, gradient)`` for a one-hidden-layer tanh net on ``X``."""
    batch = batch_objective(X, T, k, weight_decay)

    def fun(theta):
        f, G = batch(np.asarray(theta, dtype=float)[None, :])
        return float(f[0]), G[0]

    return fun


def _loss_on_features(theta, X, T, k, weight_decay) -> LossValue:
    W, b, A, c = unpack(theta, k, X.shape[1], T.shape[1])
    R = np.tanh(X @ W.T + b) @ A.T + c - T
    data = float(np.sum(R * R) / X.shape[0])
    return LossValue(data, float(weight_decay * (np.sum(W * W) + np.sum(A * A))))


def _check_dataset(dataset: LabeledDataset, o: int) -> None:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if dataset.n_outputs != o:
        raise ValueError(f"targets have {dataset.n_outputs} components, model has {o} outputs")


def empirical_error(model: Model, dataset: LabeledDataset, weight_decay: float = 0.0) -> LossValue:
    """Mean squared distance between outputs and targets plus the weight penalty.

    Biases are not penalized.
    """
    _check_dataset(dataset, model.o)
    X = model_features(model, dataset)
    return _loss_on_features(model.flat(), X, dataset.targets, model.k, weight_decay)


def gradient(model: Model, dataset: LabeledDataset, weight_decay: float = 0.0) -> NDArray:
    """Gradient of the total loss with respect to ``model.flat()``."""
    _check_dataset(dataset, model.o)
    X = model_features(model, dataset)
    return make_objective(X, dataset.targets, model.k, weight_decay)(model.flat())[1]


# --------------------------------------------------------------------------
# Conjugate gradients
#
# The optimizer is written as a generator that yields the points it wants
# evaluated and receives ``(f, g)`` back. ``minimize_cg`` drives one such
# generator with a plain callable; ``minimize_cg_many`` advances several in
# lockstep so their evaluations can share one batched objective call.


@dataclass
class CGResult:
    x: NDArray
    fun: float
    trace: list[float]
    status: str
    n_iter: int
    n_evals: int


def _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi):
    d1 = d_lo + d_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi)
    rad = d1 * d1 - d_lo * d_hi
    if not np.isfinite(rad) or rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), a_hi - a_lo)
    den = d_hi - d_lo + 2.0 * d2
    if den == 0:
        return None
    a = a_hi - (a_hi - a_lo) * (d_hi + d2 - d1) / den
    return a if np.isfinite(a) else None


def _strong_wolfe(x, f0, g0, direction, alpha, c1, c2, max_evals=40):
    """Generator searching a step that meets the strong Wolfe conditions.

    Bracketing followed by a zoom phase with safeguarded cubic
    interpolation. Returns ``(step, f, g)``, or ``None`` on failure.
    """
    dphi0 = float(g0 @ direction)
    evals = 0

    def zoom(lo, hi):
        nonlocal evals
        a_lo, f_lo, d_lo = lo
        a_hi, f_hi, d_hi = hi
        while evals < max_evals:
            lo_b, hi_b = min(a_lo, a_hi), max(a_lo, a_hi)
            width = hi_b - lo_b
            if width <= 1e-16 * max(1.0, hi_b):
                return None
            a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
            if a is None or not (lo_b + 0.1 * width <= a <= hi_b - 0.1 * width):
                a = 0.5 * (a_lo + a_hi)
            f, g = yield x + a * direction
            evals += 1
            dphi = float(g @ direction)
            if not np.isfinite(f) or f > f0 + c1 * a * dphi0 or f >= f_lo:
                a_hi, f_hi, d_hi = a, f, dphi
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return a, f, g
                if dphi * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
                a_lo, f_lo, d_lo = a, f, dphi
        return None

    prev = (0.0, f0, dphi0)
    a = alpha
    first = True
    while evals < max_evals:
        f, g = yield x + a * direction
        evals += 1
        dphi = float(g @ direction)
        if not (np.isfinite(f) and np.isfinite(dphi)):
            # overflow: shrink toward the last good point
            a = prev[0] + 0.5 * (a - prev[0])
            continue
        if f > f0 + c1 * a * dphi0 or (not first and f >= prev[1]):
            return (yield from zoom(prev, (a, f, dphi)))
        if abs(dphi) <= -c2 * dphi0:
            return a, f, g
        if dphi >= 0:
            return (yield from zoom((a, f, dphi), prev))
        step = a - prev[0]
        nxt = a + 2.0 * step
        ext = _cubic_min(prev[0], prev[1], prev[2], a, f, dphi)
        if ext is not None and a + 0.1 * step <= ext <= a + 10.0 * step:
            nxt = max(ext, a + 0.5 * step)
        prev = (a, f, dphi)
        a = nxt
        first = False
    return None


def _cg_steps(x0, config: TrainConfig, c1: float, c2: float):
    x = np.array(x0, dtype=float)
    f, g = yield x
    n_evals = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise FloatingPointError("loss or gradient is not finite at the starting point")
    trace: list[float] = []
    if np.max(np.abs(g), initial=0.0) <= config.grad_tol:
        return CGResult(x, float(f), trace, "converged", 0, n_evals)

    dim = x.size
    counter = [0]

    def counted(search):
        # forward every request of the line search, counting evaluations
        try:
            request = next(search)
            while True:
                reply = yield request
                counter[0] += 1
                request = search.send(reply)
        except StopIteration as stop:
            return stop.value

    gg = float(g @ g)
    direction = -g
    alpha = min(1.0, 1.0 / np.sqrt(gg))
    since_reset = 0
    steepest = True
    status = "max_iters"
    it = 0
    while it < config.max_iters:
        gd = float(g @ direction)
        if gd >= 0:
            direction, gd, steepest, since_reset = -g, -gg, True, 0
        res = yield from counted(_strong_wolfe(x, f, g, direction, alpha, c1, c2))
        if res is None:
            if steepest:
                status = "line_search_failed"
                break
            direction, gd, steepest, since_reset = -g, -gg, True, 0
            alpha = min(1.0, 1.0 / np.sqrt(gg))
            continue
        step, f_new, g_new = res
        it += 1
        x = x + step * direction
        trace.append(float(f_new))
        if np.max(np.abs(g_new)) <= config.grad_tol:
            f, g = f_new, g_new
            status = "converged"
            break
        gg_new = float(g_new @ g_new)
        beta = max(0.0, float(g_new @ (g_new - g)) / gg)
        since_reset += 1
        if since_reset >= dim + 1:
            beta, since_reset = 0.0, 0
        new_direction = -g_new + beta * direction
        new_gd = float(g_new @ new_direction)
        # initial step for the next search: match the previous first-order decrease
        alpha = step * gd / new_gd if new_gd < 0 else 0.0
        if not (np.isfinite(alpha) and alpha > 0):
            alpha = min(1.0, 1.0 / np.sqrt(gg_new))
        f, g, gg, direction = f_new, g_new, gg_new, new_direction
        steepest = beta == 0.0
    return CGResult(x, float(f), trace, status, it, n_evals + counter[0])


def minimize_cg(
    fun: Callable[[NDArray], tuple[float, NDArray]],
    x0: ArrayLike,
    config: TrainConfig | None = None,
    c1: float = 1e-4,
    c2: float = 0.1,
) -> CGResult:
    """Minimize ``fun`` (returning value and gradient) by Polak-Ribiere+ CG.

    The direction is reset to steepest descent whenever the PR coefficient
    is negative, the direction is not a descent direction, or ``dim + 1``
    iterations have passed since the last reset. Steps satisfy the strong
    Wolfe conditions with constants ``c1`` and ``c2``. A failed line search
    is retried once along the steepest-descent direction; a second failure
    stops with status ``"line_search_failed"``.

    ``trace`` holds the loss after every accepted step, so it is empty when
    ``x0`` already meets the gradient tolerance (max-norm).
    """
    config = config or TrainConfig()
    steps = _cg_steps(x0, config, c1, c2)
    try:
        x = next(steps)
        while True:
            f, g = fun(x)
            x = steps.send((float(f), np.asarray(g, dtype=float)))
    except StopIteration as stop:
        return stop.value


def minimize_cg_many(
    batch_fun: Callable[[NDArray], tuple[NDArray, NDArray]],
    x0s: ArrayLike,
    config: TrainConfig | None = None,
    c1: float = 1e-4,
    c2: float = 0.1,
) -> list[CGResult | FloatingPointError]:
    """Run :func:`minimize_cg` from every row of ``x0s`` in lockstep.

    ``batch_fun`` evaluates a stack of points at once. Each run follows
    exactly the iteration it would follow alone; batching only groups the
    objective calls. A run whose start point is not finite yields its
    exception in place of a result.
    """
    config = config or TrainConfig()
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    runs = [_cg_steps(x0, config, c1, c2) for x0 in x0s]
    results: list = [None] * len(runs)
    pending = {i: next(run) for i, run in enumerate(runs)}
    while pending:
        order = sorted(pending)
        F, G = batch_fun(np.vstack([pending[i] for i in order]))
        for row, i in enumerate(order):
            try:
                pending[i] = runs[i].send((float(F[row]), G[row]))
            except StopIteration as stop:
                results[i] = stop.value
                del pending[i]
            except FloatingPointError as exc:
                results[i] = exc
                del pending[i]
    return results


# --------------------------------------------------------------------------
# Multi-restart training


@dataclass
class TrainResult:
    model: Model
    loss: LossValue
    restart_losses: list[float]
    statuses: list[str] = field(default_factory=list)


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    """Independent generator for one restart, keyed by ``(seed, restart)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(restart),)))


def init_params(k: int, d: int, o: int, scale: float, rng: np.random.Generator) -> NDArray:
    """Uniform initialization in ``+-scale / sqrt(fan_in)`` per layer, biases included."""
    r1 = scale / np.sqrt(d)
    r2 = scale / np.sqrt(k)
    hidden = rng.uniform(-r1, r1, size=k * (d + 1))
    output = rng.uniform(-r2, r2, size=o * (k + 1))
    return np.concatenate([hidden[: k * d], hidden[k * d :], output[: o * k], output[o * k :]])


def train_on_features(
    X: NDArray, T: NDArray, k: int, config: TrainConfig
) -> tuple[NDArray, LossValue, list[float], list[str]]:
    """Best-of-``restarts`` CG fit of a ``k``-unit net on a feature matrix.

    Returns the best parameter vector, its loss, and the final loss and
    status of every restart.
    """
    X = np.asarray(X, dtype=float)
    T = np.atleast_2d(np.asarray(T, dtype=float))
    d, o = X.shape[1], T.shape[1]
    x0s = np.vstack(
        [init_params(k, d, o, config.init_scale, restart_rng(config.seed, r)) for r in range(config.restarts)]
    )
    runs = minimize_cg_many(batch_objective(X, T, k, config.weight_decay), x0s, config)
    losses, statuses = [], []
    for r, res in enumerate(runs):
        if isinstance(res, Exception) or not np.isfinite(res.fun):
            logger.warning("restart %d failed: %s", r, res)
            losses.append(float("inf"))
            statuses.append("failed")
        else:
            losses.append(res.fun)
            statuses.append(res.status)
    best = int(np.argmin(losses))
    if not np.isfinite(losses[best]):
        raise TrainingError("all restarts failed")
    theta = runs[best].x
    return theta, _loss_on_features(theta, X, T, k, config.weight_decay), losses, statuses


def train(spec: VariantSpec, dataset: LabeledDataset, config: TrainConfig) -> TrainResult:
    """Train ``spec`` on ``dataset`` from ``config.restarts`` random starts; keep the best."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    X = features(spec.variant, dataset, spec.basis)
    theta, loss, losses, statuses = train_on_features(X, dataset.targets, spec.hidden, config)
    model = spec.build(theta, X.shape[1], dataset.n_outputs)
    return TrainResult(model, loss, losses, statuses)
