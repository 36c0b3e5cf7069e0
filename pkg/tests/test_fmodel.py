import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from fmlp.bspline import Measure, design_matrix, fit_coefficients, gram_matrix, make_basis
from fmlp.fmodel import (
    FunctionalMLP,
    NaiveMLP,
    ProjectionMLP,
    SampledFunction,
    approx_integral,
    count_params,
    equivalence_weights,
    forward_fmlp,
    forward_fpmlp,
    forward_naive,
    model_from_json,
    model_to_json,
    naive_from_fmlp,
    param_count,
)
from fmlp.oracle import dense_forward, quadrature_integral, spline_function

WAVE = (1.0, 21.0)


def smooth_g(x):
    return np.sin(x / 3.0) + 0.1 * x


class TestSampledFunction:
    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="differ in length"):
            SampledFunction([0.0, 1.0], [1.0])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            SampledFunction([], [])

    def test_rejects_points_outside_domain(self):
        with pytest.raises(ValueError, match="outside"):
            SampledFunction([0.0, 2.0], [1.0, 1.0], domain=(0.0, 1.0))

    def test_arrays_are_read_only(self):
        f = SampledFunction([0.0, 1.0], [2.0, 3.0])
        with pytest.raises(ValueError):
            f.values[0] = 1.0


class TestApproxIntegral:
    def test_constant_weight_and_curve(self):
        basis = make_basis(7, 4, WAVE)
        x = np.linspace(1, 21, 33)
        assert approx_integral(basis, np.ones(7), SampledFunction(x, np.full(33, 2.5))) == pytest.approx(2.5, abs=1e-14)

    def test_single_observation(self):
        basis = make_basis(5, 4, (0.0, 1.0))
        w = np.array([1.0, -2.0, 0.5, 3.0, 1.0])
        x, y = 0.3, 1.7
        F = design_matrix(basis, [x])[0] @ w
        assert approx_integral(basis, w, SampledFunction([x], [y])) == pytest.approx(F * y, rel=1e-14)

    def test_monte_carlo_matches_quadrature(self):
        rng = np.random.default_rng(0)
        basis = make_basis(10, 4, WAVE)
        w = rng.normal(size=10)
        F = spline_function(basis.knots, w, 4)
        truth = quadrature_integral(lambda x: F(x) * smooth_g(x), Measure(WAVE))
        x = rng.uniform(1, 21, 10_000)
        products = F(x) * smooth_g(x)
        sigma = products.std(ddof=1)
        got = approx_integral(basis, w, SampledFunction(x, smooth_g(x)))
        assert abs(got - truth) < 3 * sigma / np.sqrt(x.size)


class TestForward:
    def test_zero_weight_functions(self):
        basis = make_basis(5, 4, WAVE)
        model = FunctionalMLP(np.zeros((2, 5)), [0.3, -1.0], [[1.0, 2.0]], [0.5], basis=basis)
        expected = 0.5 + np.tanh(0.3) + 2 * np.tanh(-1.0)
        for seed in range(3):
            x = np.random.default_rng(seed).uniform(1, 21, 17)
            assert forward_fmlp(model, SampledFunction(x, np.cos(x)))[0] == pytest.approx(expected, abs=1e-15)

    def test_unit_network(self):
        basis = make_basis(5, 4, WAVE)
        model = FunctionalMLP(np.ones((1, 5)), [0.0], [[1.0]], [0.0], basis=basis)
        x = np.linspace(1, 21, 9)
        out = forward_fmlp(model, SampledFunction(x, np.full(9, 0.5)))
        assert out[0] == pytest.approx(0.46211715726, abs=1e-11)

    def test_naive_zero_weights_constant(self):
        net = NaiveMLP(np.zeros((2, 4)), [1.0, 2.0], [[1.0, -1.0]], [0.0])
        for y in ([0, 0, 0, 0], [5, -3, 2, 9]):
            assert forward_naive(net, SampledFunction(np.arange(4.0), y))[0] == pytest.approx(np.tanh(1) - np.tanh(2))

    def test_naive_cancellation(self):
        net = NaiveMLP([[1.0, 1.0]], [0.0], [[1.0]], [0.0])
        assert forward_naive(net, SampledFunction([0.0, 1.0], [0.1, -0.1]))[0] == 0.0

    def test_naive_rejects_other_sampling_size(self):
        net = NaiveMLP(np.ones((2, 4)), np.zeros(2), np.ones((1, 2)), [0.0])
        with pytest.raises(ValueError, match="expects 4"):
            forward_naive(net, SampledFunction(np.arange(5.0), np.zeros(5)))

    def test_matches_dense_quadrature_forward(self, rng):
        model = random_model("fmlp", rng, basis=make_basis(10, 4, WAVE))
        x = np.linspace(1, 21, 10_000)
        got = forward_fmlp(model, SampledFunction(x, smooth_g(x)))
        ref = dense_forward(model, smooth_g)
        assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) < 1e-3

    def test_zero_weights_match_dense_forward(self):
        basis = make_basis(5, 4, WAVE)
        model = FunctionalMLP(np.zeros((2, 5)), [0.1, 0.2], np.eye(2), [0.0, 1.0], basis=basis)
        x = np.array([2.0, 3.5, 20.0])
        np.testing.assert_allclose(forward_fmlp(model, SampledFunction(x, x)), dense_forward(model, np.cos), atol=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model("fmlp", rng)
        x = rng.uniform(1, 21, 40)
        y = rng.normal(size=40)
        perm = rng.permutation(40)
        a = forward_fmlp(model, SampledFunction(x, y))
        b = forward_fmlp(model, SampledFunction(x[perm], y[perm]))
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


class TestSharedGridEquivalence:
    def test_naive_reproduces_fmlp(self, rng):
        model = random_model("fmlp", rng, basis=make_basis(10, 4, WAVE), scale=5.0)
        grid = np.linspace(1, 21, 101)
        naive = naive_from_fmlp(model, grid)
        Y = rng.normal(size=(100, 101))
        pre_f = (Y @ design_matrix(model.basis, grid) / 101) @ model.W.T
        pre_n = Y @ naive.W.T
        assert np.max(np.abs(pre_f - pre_n)) < 1e-12
        for y in Y[:10]:
            f = SampledFunction(grid, y)
            np.testing.assert_allclose(forward_naive(naive, f), forward_fmlp(model, f), atol=1e-12)


class TestProjection:
    def test_in_span_equals_true_coefficients(self, rng):
        basis = make_basis(7, 4, WAVE)
        net = NaiveMLP(rng.normal(size=(3, 7)), rng.normal(size=3), rng.normal(size=(2, 3)), rng.normal(size=2))
        alpha = rng.normal(size=7)
        x = rng.uniform(1, 21, 50)
        got = forward_fpmlp(basis, net, SampledFunction(x, design_matrix(basis, x) @ alpha))
        np.testing.assert_allclose(got, net.apply(alpha)[0], atol=1e-10)

    def test_independent_of_sampling(self, rng):
        basis = make_basis(10, 4, WAVE)
        model = random_model("fpmlp", rng, basis=basis)
        alpha = rng.normal(size=10)
        outs = []
        for m in (30, 200):
            x = rng.uniform(1, 21, m)
            outs.append(forward_fpmlp(basis, model.net, SampledFunction(x, design_matrix(basis, x) @ alpha)))
        np.testing.assert_allclose(outs[0], outs[1], atol=1e-9)

    def test_rejects_input_size(self, rng):
        net = NaiveMLP(rng.normal(size=(2, 6)), np.zeros(2), np.ones((1, 2)), [0.0])
        with pytest.raises(ValueError):
            ProjectionMLP(make_basis(5, 4, WAVE), net)


class TestEquivalenceWeights:
    def test_identity_gram(self):
        basis = make_basis(4, 1, (0.0, 4.0))
        c = np.array([1.0, -2.0, 3.0, 0.5])
        np.testing.assert_allclose(equivalence_weights(basis, c, Measure((0.0, 4.0), mass=4.0)), c, atol=1e-14)

    def test_single_function(self):
        basis = make_basis(1, 1, (0.0, 1.0))
        # phi = 1, so s = integral phi^2 = mass
        np.testing.assert_allclose(equivalence_weights(basis, [3.0], Measure((0.0, 1.0), mass=2.0)), [1.5])

    @pytest.mark.parametrize("p", [5, 10, 20])
    def test_round_trip(self, p):
        basis = make_basis(p, 4, WAVE)
        c = np.random.default_rng(p).normal(size=p)
        d = equivalence_weights(basis, c)
        assert np.max(np.abs(gram_matrix(basis) @ d - c)) < 1e-10

    def test_fpmlp_and_fmlp_agree(self, rng):
        # linear output layer: compare the hidden pre-activations of both forms
        basis = make_basis(8, 4, WAVE)
        x = 1.0 + 20.0 * (np.arange(1001) + 0.5) / 1001
        f = SampledFunction(x, smooth_g(x))
        C = rng.normal(size=(3, 8))
        D = np.vstack([equivalence_weights(basis, row) for row in C])
        proj = C @ fit_coefficients(basis, f)
        func = np.array([approx_integral(basis, d, f) for d in D])
        assert np.max(np.abs(proj - func)) / np.max(np.abs(proj)) < 1e-2

    def test_endpoint_grid_gap_shrinks(self, rng):
        # with both endpoints sampled the plain mean overweights the boundary
        # by O(1/m); the gap still vanishes as the grid is refined
        basis = make_basis(8, 4, WAVE)
        c = rng.normal(size=8)
        d = equivalence_weights(basis, c)
        gaps = []
        for m in (251, 1001, 4001):
            f = SampledFunction(np.linspace(1, 21, m), smooth_g(np.linspace(1, 21, m)))
            gaps.append(abs(c @ fit_coefficients(basis, f) - approx_integral(basis, d, f)))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[1] / gaps[2] == pytest.approx(4.0, rel=0.2)


class TestParamCount:
    def test_functional(self):
        model = FunctionalMLP(np.zeros((2, 5)), np.zeros(2), np.zeros((3, 2)), np.zeros(3), basis=make_basis(5, 4, WAVE))
        assert param_count(model) == 21

    def test_naive(self):
        assert param_count(NaiveMLP(np.zeros((3, 101)), np.zeros(3), np.zeros((3, 3)), np.zeros(3))) == 318

    def test_projection_matches_functional(self, rng):
        basis = make_basis(7, 4, WAVE)
        assert param_count(random_model("fpmlp", rng, basis=basis)) == param_count(random_model("fmlp", rng, basis=basis))
        assert param_count(random_model("fpmlp", rng, basis=basis)) == 3 * 8 + 3 * 4

    def test_zero_hidden_rejected(self):
        with pytest.raises(ValueError):
            count_params(0, 5, 3)
        with pytest.raises(ValueError):
            NaiveMLP(np.zeros((0, 4)), np.zeros(0), np.zeros((1, 0)), [0.0])


class TestValidation:
    def test_non_finite_parameters(self):
        with pytest.raises(ValueError, match="finite"):
            NaiveMLP([[np.nan]], [0.0], [[1.0]], [0.0])

    def test_basis_required(self):
        with pytest.raises(ValueError, match="basis"):
            FunctionalMLP(np.zeros((1, 5)), [0.0], [[1.0]], [0.0])

    def test_basis_size_mismatch(self):
        with pytest.raises(ValueError, match="coefficients"):
            FunctionalMLP(np.zeros((1, 4)), [0.0], [[1.0]], [0.0], basis=make_basis(5, 4, WAVE))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="inconsistent"):
            NaiveMLP(np.zeros((2, 3)), np.zeros(3), np.zeros((1, 2)), [0.0])


class TestSerialization:
    @pytest.mark.parametrize("variant", ["mlp", "fmlp", "fpmlp"])
    def test_round_trip_is_exact(self, variant, rng):
        model = random_model(variant, rng)
        text = model_to_json(model, seed=7)
        back = model_from_json(text)
        assert type(back) is type(model)
        np.testing.assert_array_equal(back.flat(), model.flat())
        assert getattr(back, "basis", None) == getattr(model, "basis", None)
        doc = json.loads(text)
        assert doc["variant"] == variant and doc["seed"] == 7
        assert set(doc) == {"variant", "basis", "k", "o", "weights", "seed"}

    def test_unknown_variant(self, rng):
        doc = json.loads(model_to_json(random_model("fmlp", rng)))
        doc["variant"] = "rbf"
        with pytest.raises(ValueError, match="rbf"):
            model_from_json(json.dumps(doc))
