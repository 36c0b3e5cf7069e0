import numpy as np
import pytest

from fmlp.bspline import make_basis
from fmlp.fmodel import FunctionalMLP, NaiveMLP, ProjectionMLP


def random_net(rng, k, d, o, scale=1.0):
    return dict(
        W=scale * rng.normal(size=(k, d)),
        b=rng.normal(size=k),
        A=rng.normal(size=(o, k)),
        c=rng.normal(size=o),
    )


def random_model(variant, rng, k=3, o=3, basis=None, m=12, scale=1.0):
    """A model of the requested variant with standard normal parameters."""
    if variant == "mlp":
        return NaiveMLP(**random_net(rng, k, m, o, scale))
    basis = basis or make_basis(5, 4, (1.0, 21.0))
    if variant == "fmlp":
        return FunctionalMLP(**random_net(rng, k, basis.p, o, scale), basis=basis)
    return ProjectionMLP(basis, NaiveMLP(**random_net(rng, k, basis.p, o, scale)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record the outcome of one acceptance criterion for the final summary."""

    def record(criterion: int, passed: bool | None, detail: str) -> None:
        tag = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        _VERDICTS[criterion] = f"[{tag}] criterion {criterion:2d}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[key])
