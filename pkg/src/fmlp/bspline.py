"""Clamped B-spline bases on a closed interval.

Bases are built with uniformly spaced interior knots and ``order``-fold
repeated boundary knots. Evaluation uses the Cox-de Boor recursion, and
derivatives come from differentiating that recursion exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "BSplineBasis",
    "Measure",
    "RankError",
    "make_basis",
    "eval_basis",
    "eval_basis_derivative",
    "design_matrix",
    "fit_coefficients",
    "fit_coefficients_batch",
    "gram_matrix",
]


class RankError(np.linalg.LinAlgError):
    """Least-squares design does not have full column rank."""


@dataclass(frozen=True)
class BSplineBasis:
    """A clamped B-spline basis.

    Attributes
    ----------
    order : int
        Polynomial degree plus one.
    p : int
        Number of basis functions.
    domain : tuple of float
        Closed interval ``(a, b)`` carrying the basis.
    knots : ndarray
        Knot vector of length ``p + order``.
    """

    order: int
    p: int
    domain: tuple[float, float]
    knots: NDArray[np.float64] = field(repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        t.setflags(write=False)
        object.__setattr__(self, "knots", t)

    def __eq__(self, other):
        if not isinstance(other, BSplineBasis):
            return NotImplemented
        return (
            self.order == other.order
            and self.p == other.p
            and self.domain == other.domain
            and np.array_equal(self.knots, other.knots)
        )

    def __hash__(self):
        return hash((self.order, self.p, self.domain))

    @property
    def a(self) -> float:
        return self.domain[0]

    @property
    def b(self) -> float:
        return self.domain[1]

    def __call__(self, x: ArrayLike, d: int = 0) -> NDArray[np.float64]:
        """Basis values (or ``d``-th derivatives) at ``x``, shape ``(len(x), p)``."""
        return design_matrix(self, x, d)

    def to_dict(self) -> dict:
        return {"order": self.order, "p": self.p, "domain": list(self.domain)}

    @classmethod
    def from_dict(cls, data: dict) -> "BSplineBasis":
        return make_basis(int(data["p"]), int(data["order"]), tuple(data["domain"]))


@dataclass(frozen=True)
class Measure:
    """Uniform measure on ``domain`` with total mass ``mass``.

    With the default mass of 1 this is the normalized Lebesgue measure,
    which is also the law of uniformly drawn observation points.
    """

    domain: tuple[float, float]
    mass: float = 1.0

    def __post_init__(self):
        a, b = self.domain
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ValueError(f"measure support must be a nondegenerate interval, got {self.domain}")
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ValueError(f"measure mass must be finite and positive, got {self.mass}")

    @property
    def density(self) -> float:
        a, b = self.domain
        return self.mass / (b - a)

    def sample(self, m: int, rng: np.random.Generator) -> NDArray[np.float64]:
        a, b = self.domain
        return rng.uniform(a, b, size=m)


def make_basis(p: int, order: int = 4, domain: tuple[float, float] = (0.0, 1.0)) -> BSplineBasis:
    """Build a clamped basis of ``p`` B-splines of the given order on ``domain``.

    Interior knots (``p - order`` of them) split the domain into equal spans.

    >>> make_basis(5, 4, (1, 21)).knots.tolist()
    [1.0, 1.0, 1.0, 1.0, 11.0, 21.0, 21.0, 21.0, 21.0]
    """
    p = int(p)
    order = int(order)
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if p < order:
        raise ValueError(f"number of basis functions p={p} must be >= order={order}")
    a, b = (float(v) for v in domain)
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError(f"domain must satisfy a < b, got {domain}")
    n_spans = p - order + 1
    breaks = np.linspace(a, b, n_spans + 1)
    knots = np.concatenate([np.full(order - 1, a), breaks, np.full(order - 1, b)])
    return BSplineBasis(order=order, p=p, domain=(a, b), knots=knots)


def _check_inside(basis: BSplineBasis, x: NDArray) -> None:
    if x.size and (np.any(~np.isfinite(x)) or x.min() < basis.a or x.max() > basis.b):
        bad = x[~((x >= basis.a) & (x <= basis.b))]
        raise ValueError(
            f"evaluation points outside the basis domain {basis.domain}: {bad[:5].tolist()}"
        )


def _order_one(knots: NDArray, order: int, p: int, x: NDArray) -> NDArray:
    # Indicator of the knot span holding x; right-continuous, x == b goes to the last span.
    span = np.searchsorted(knots, x, side="right") - 1
    span = np.clip(span, order - 1, p - 1)
    out = np.zeros((x.size, knots.size - 1))
    out[np.arange(x.size), span] = 1.0
    return out


def _ratio(num: NDArray, den: NDArray) -> NDArray:
    # 0/0 terms of the recursion are defined as 0.
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, num / safe, 0.0)


def design_matrix(basis: BSplineBasis, x: ArrayLike, d: int = 0) -> NDArray[np.float64]:
    """Matrix of ``d``-th derivatives of all basis functions at each point of ``x``.

    Returns an array of shape ``(len(x), p)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    d = int(d)
    if not 0 <= d < basis.order:
        raise ValueError(f"derivative order must satisfy 0 <= d < order={basis.order}, got {d}")
    _check_inside(basis, x)
    t = basis.knots
    B = _order_one(t, basis.order, basis.p, x)
    xc = x[:, None]
    for k in range(2, basis.order - d + 1):
        n = t.size - k
        left = _ratio(xc - t[None, :n], (t[k - 1 : k - 1 + n] - t[:n])[None, :])
        right = _ratio(t[None, k : k + n] - xc, (t[k : k + n] - t[1 : 1 + n])[None, :])
        B = left * B[:, :n] + right * B[:, 1 : n + 1]
    for k in range(basis.order - d + 1, basis.order + 1):
        n = t.size - k
        dl = t[k - 1 : k - 1 + n] - t[:n]
        dr = t[k : k + n] - t[1 : 1 + n]
        B = (k - 1) * (_ratio(B[:, :n], dl[None, :]) - _ratio(B[:, 1 : n + 1], dr[None, :]))
    return B


def eval_basis(basis: BSplineBasis, x: float) -> NDArray[np.float64]:
    """Values of the ``p`` basis functions at a single point ``x``."""
    return design_matrix(basis, [x], 0)[0]


def eval_basis_derivative(basis: BSplineBasis, x: float, d: int) -> NDArray[np.float64]:
    """Exact ``d``-th derivatives of the basis functions at ``x``.

    At interior knots the right limit is returned, at the right end of the
    domain the left limit.
    """
    return design_matrix(basis, [x], d)[0]


def _rank_check(basis: BSplineBasis, Phi: NDArray) -> None:
    m = Phi.shape[0]
    if m < basis.p:
        raise RankError(
            f"need at least p={basis.p} observation points for a least-squares fit, got {m} "
            f"(rank deficient by {basis.p - m})"
        )
    rank = np.linalg.matrix_rank(Phi)
    if rank < basis.p:
        raise RankError(
            f"design matrix has rank {rank} < p={basis.p} (rank deficient by {basis.p - rank})"
        )


def fit_coefficients_batch(
    basis: BSplineBasis, points: ArrayLike, values: ArrayLike
) -> NDArray[np.float64]:
    """Least-squares coefficients for several curves observed on one shared grid.

    Parameters
    ----------
    basis : BSplineBasis
    points : array_like, shape (m,)
    values : array_like, shape (n, m)
        One curve per row.

    Returns
    -------
    ndarray, shape (n, p)
    """
    Phi = design_matrix(basis, points)
    Y = np.atleast_2d(np.asarray(values, dtype=float))
    if Y.shape[1] != Phi.shape[0]:
        raise ValueError(f"values have {Y.shape[1]} columns for {Phi.shape[0]} points")
    _rank_check(basis, Phi)
    Q, R = scipy.linalg.qr(Phi, mode="economic")
    return scipy.linalg.solve_triangular(R, Q.T @ Y.T).T


def fit_coefficients(basis: BSplineBasis, f) -> NDArray[np.float64]:
    """Coefficients ``alpha`` minimizing the squared residual of ``f`` against the basis.

    ``f`` is a :class:`fmlp.fmodel.SampledFunction` (anything with ``points``
    and ``values``). The problem is solved through a QR factorization of the
    design matrix; rank-deficient designs raise :class:`RankError`.
    """
    return fit_coefficients_batch(basis, f.points, np.asarray(f.values)[None, :])[0]


def gram_matrix(basis: BSplineBasis, measure: Measure | None = None) -> NDArray[np.float64]:
    """Gram matrix ``M[i, j] = integral of phi_i * phi_j`` against ``measure``.

    Each nonempty knot span is integrated with an ``order``-node
    Gauss-Legendre rule, which is exact for the piecewise polynomial
    integrand.
    """
    if measure is None:
        measure = Measure(basis.domain)
    if measure.domain != basis.domain:
        raise ValueError(f"measure support {measure.domain} differs from basis domain {basis.domain}")
    nodes, weights = np.polynomial.legendre.leggauss(basis.order)
    breaks = np.unique(basis.knots)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    x = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
    w = (half[:, None] * weights[None, :]).ravel() * measure.density
    Phi = design_matrix(basis, x.ravel())
    M = (Phi * w[:, None]).T @ Phi
    return 0.5 * (M + M.T)
