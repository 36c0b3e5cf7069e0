"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL/SKIP line that pytest prints in an
"acceptance criteria" section at the end of the run. The waveform study
(criteria 1 and 2) trains several thousand networks and takes roughly
half an hour on a single core. The Tecator criteria (3 and 4) run only when
the spectra file is available, via the ``FMLP_TECATOR_CSV`` environment
variable or ``data/tecator.csv`` at the repository root.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from conftest import random_model
from fmlp.bspline import Measure, design_matrix, fit_coefficients, gram_matrix, make_basis
from fmlp.cli import ExperimentConfig, run_experiment
from fmlp.data import LabeledDataset
from fmlp.experiments import teacher_student_trial
from fmlp.fmodel import SampledFunction, approx_integral, equivalence_weights
from fmlp.oracle import gradient_deviation, quadrature_integral, spline_function
from fmlp.train import TrainConfig, VariantSpec, model_features, train

REPLICATIONS = 10
ROOT = Path(__file__).resolve().parents[1]


def tecator_path() -> Path | None:
    candidate = os.environ.get("FMLP_TECATOR_CSV") or ROOT / "data" / "tecator.csv"
    candidate = Path(candidate)
    return candidate if candidate.is_file() else None


def by_variant(records, variant):
    recs = sorted((r for r in records if r["variant"] == variant), key=lambda r: r["replication"])
    return np.array([r["error"] for r in recs]), np.array([r["param_count"] for r in recs])


@pytest.fixture(scope="module")
def waveform_records(tmp_path_factory):
    out = tmp_path_factory.mktemp("waveform") / "records.jsonl"
    config = ExperimentConfig(
        experiment="waveform", output=str(out), replications=REPLICATIONS, variants=("mlp", "fmlp"), seed=0
    )
    return run_experiment(config)


@pytest.fixture(scope="module")
def tecator_records(tmp_path_factory):
    path = tecator_path()
    if path is None:
        return None
    out = tmp_path_factory.mktemp("tecator")
    results = {}
    for experiment, variants in (("tecator", ("fmlp", "fpmlp")), ("tecator-d2", ("fmlp",))):
        config = ExperimentConfig(
            experiment=experiment, output=str(out / f"{experiment}.jsonl"), replications=REPLICATIONS,
            variants=variants, seed=0, data=str(path),
        )
        results[experiment] = run_experiment(config)
    return results


def test_criterion_01_waveform_error(waveform_records, verdict):
    mlp, _ = by_variant(waveform_records, "mlp")
    fmlp, _ = by_variant(waveform_records, "fmlp")
    wins = int(np.sum(fmlp < mlp))
    ok = fmlp.mean() <= 0.085 and mlp.mean() >= fmlp.mean() and wins >= 8
    verdict(
        1, ok,
        f"FMLP mean {fmlp.mean():.4f} (<= 0.085), MLP mean {mlp.mean():.4f} (>= FMLP), "
        f"FMLP wins {wins}/{REPLICATIONS} (>= 8); FMLP {np.round(fmlp, 3).tolist()}, MLP {np.round(mlp, 3).tolist()}",
    )
    assert fmlp.mean() <= 0.085
    assert mlp.mean() >= fmlp.mean()
    assert wins >= 8


def test_criterion_02_parsimony(waveform_records, verdict):
    _, mlp_params = by_variant(waveform_records, "mlp")
    _, fmlp_params = by_variant(waveform_records, "fmlp")
    hits = int(np.sum(4 * fmlp_params <= mlp_params))
    verdict(
        2, hits >= 8,
        f"FMLP params <= MLP params / 4 in {hits}/{REPLICATIONS} (>= 8); "
        f"FMLP mean {fmlp_params.mean():.1f}, MLP mean {mlp_params.mean():.1f}",
    )
    assert hits >= 8


def test_criterion_03_tecator_raw(tecator_records, verdict):
    if tecator_records is None:
        verdict(3, None, "Tecator file not available (set FMLP_TECATOR_CSV)")
        pytest.skip("Tecator spectra not available")
    recs = tecator_records["tecator"]
    fp, _ = by_variant(recs, "fpmlp")
    fm, _ = by_variant(recs, "fmlp")
    ok = fp.mean() <= 0.05 and fm.mean() <= 0.06
    verdict(3, ok, f"FpMLP mean {fp.mean():.4f} (<= 0.05), FMLP mean {fm.mean():.4f} (<= 0.06)")
    assert fp.mean() <= 0.05
    assert fm.mean() <= 0.06


def test_criterion_04_tecator_second_derivative(tecator_records, verdict):
    if tecator_records is None:
        verdict(4, None, "Tecator file not available (set FMLP_TECATOR_CSV)")
        pytest.skip("Tecator spectra not available")
    d2, _ = by_variant(tecator_records["tecator-d2"], "fmlp")
    raw, _ = by_variant(tecator_records["tecator"], "fmlp")
    ok = d2.mean() <= 0.03 and d2.mean() <= raw.mean()
    verdict(4, ok, f"FMLP on second derivatives {d2.mean():.4f} (<= 0.03 and <= raw {raw.mean():.4f})")
    assert d2.mean() <= 0.03
    assert d2.mean() <= raw.mean()


def test_criterion_05_gradients(verdict):
    rng = np.random.default_rng(2024)
    worst = {}
    for variant in ("mlp", "fmlp", "fpmlp"):
        devs = []
        for _ in range(20):
            k, o, n = (int(v) for v in rng.integers((1, 1, 5), (5, 4, 25)))
            basis = make_basis(int(rng.integers(4, 12)), 4, (1.0, 21.0))
            m = int(rng.integers(basis.p + 2, 30))
            # jittered grid: random, yet dense enough for a full-rank projection
            grid = 1.0 + 20.0 * (np.arange(m) + rng.uniform(0.1, 0.9, m)) / m
            model = random_model(variant, rng, k=k, o=o, basis=basis, m=m)
            ds = LabeledDataset.from_grid(
                grid, rng.normal(size=(n, m)), domain=(1.0, 21.0), targets=rng.normal(size=(n, o))
            )
            devs.append(gradient_deviation(model, ds, float(rng.choice([0.0, 1e-3, 0.1])), h=1e-5))
        worst[variant] = max(devs)
    ok = max(worst.values()) < 1e-4
    verdict(5, ok, "max relative deviation " + ", ".join(f"{v} {d:.2e}" for v, d in worst.items()) + " (< 1e-4)")
    assert ok


def test_criterion_06_monte_carlo_rate(verdict):
    basis = make_basis(10, 4, (1.0, 21.0))
    measure = Measure(basis.domain)
    rng = np.random.default_rng(6)
    w = rng.normal(size=10)
    g = lambda t: np.sin(t / 3.0) + 0.05 * t
    F = spline_function(basis.knots, w, 4)
    truth = quadrature_integral(lambda t: F(t) * g(t), measure)

    def rms(m):
        errs = []
        for _ in range(200):
            x = measure.sample(m, rng)
            y = g(x) + 0.5 * rng.standard_normal(m)
            errs.append(approx_integral(basis, w, SampledFunction(x, y)) - truth)
        return float(np.sqrt(np.mean(np.square(errs))))

    r = {m: rms(m) for m in (100, 400, 1600)}
    ratios = [r[100] / r[400], r[400] / r[1600]]
    ok = all(1.5 <= q <= 2.7 for q in ratios)
    verdict(6, ok, f"RMS ratios m=100->400 {ratios[0]:.3f}, m=400->1600 {ratios[1]:.3f} (in [1.5, 2.7])")
    assert ok


def test_criterion_07_projection_equivalence(verdict):
    basis = make_basis(10, 4, (1.0, 21.0))
    m = 1001
    # uniform cell-centred grid on [1, 21]
    x = 1.0 + 20.0 * (np.arange(m) + 0.5) / m
    rng = np.random.default_rng(7)
    cs = rng.normal(size=(20, 10))
    ds = np.vstack([equivalence_weights(basis, c) for c in cs])
    worst = 0.0
    for _ in range(20):
        freq, phase, tilt = rng.uniform(0.5, 3.0), rng.uniform(0, 2 * np.pi), rng.normal()
        y = np.sin(freq * 2 * np.pi * (x - 1) / 20 + phase) + tilt * np.cos((x - 1) / 7)
        f = SampledFunction(x, y)
        alpha = fit_coefficients(basis, f)
        for c, d in zip(cs, ds):
            gap = abs(c @ alpha - approx_integral(basis, d, f))
            worst = max(worst, gap / (np.linalg.norm(c) * np.max(np.abs(y))))
    ok = worst <= 1e-2
    verdict(7, ok, f"max |c.alpha - mean(f_d g)| / (|c| |g|_inf) = {worst:.2e} (<= 1e-2)")
    assert ok


def test_criterion_08_universal_approximation(verdict):
    basis = make_basis(10, 4, (0.0, 1.0))
    integrals = gram_matrix(basis).sum(axis=1)
    grid = (np.arange(100) + 0.5) / 100
    Phi = design_matrix(basis, grid)
    rng = np.random.default_rng(8)

    def make(n):
        # bounded coefficients keep test curves inside the region the net was fit on
        coefs = rng.uniform(-2.75, 2.75, (n, 10))
        # integral of g is sum_i alpha_i * integral(phi_i), exact for in-span curves
        targets = np.sin(3.0 * coefs @ integrals)[:, None]
        return LabeledDataset.from_grid(grid, coefs @ Phi.T, domain=(0.0, 1.0), targets=targets)

    train_ds, test_ds = make(2000), make(1000)
    k = 4
    result = train(VariantSpec("fmlp", k, basis), train_ds, TrainConfig(restarts=5, max_iters=2000, seed=1))
    pred = result.model.apply(model_features(result.model, test_ds))
    mse = float(np.mean((pred - test_ds.targets) ** 2))
    verdict(8, mse < 1e-3, f"k={k}, p=10, 2000 curves: test MSE {mse:.2e} (< 1e-3)")
    assert mse < 1e-3


def test_criterion_09_consistency(verdict):
    sizes = [(50, 20), (200, 80), (800, 320)]
    table = {seed: [teacher_student_trial(n, m, seed) for n, m in sizes] for seed in range(3)}
    ok = all(b <= 1.2 * a for row in table.values() for a, b in zip(row, row[1:]))
    detail = "; ".join(f"seed {s}: " + " -> ".join(f"{v:.2e}" for v in row) for s, row in table.items())
    verdict(9, ok, f"test MSE along (n,m) with 20% slack: {detail}")
    assert ok


def test_criterion_10_spline_suite(verdict):
    rng = np.random.default_rng(10)
    partition = 0.0
    min_eig = np.inf
    second = 0.0
    idempotence = 0.0
    for p in (5, 7, 10, 15, 20):
        for order in (2, 3, 4, 5):
            if p < order:
                continue
            basis = make_basis(p, order, (1.0, 21.0))
            x = rng.uniform(1.0, 21.0, 2000)
            partition = max(partition, np.max(np.abs(design_matrix(basis, x).sum(axis=1) - 1.0)))
            min_eig = min(min_eig, np.linalg.eigvalsh(gram_matrix(basis)).min())
            alpha = rng.normal(size=p)
            grid = np.linspace(1.0, 21.0, 4 * p)
            fitted = fit_coefficients(basis, SampledFunction(grid, design_matrix(basis, grid) @ alpha))
            idempotence = max(idempotence, np.max(np.abs(fitted - alpha)))
            if order >= 3:
                grid = np.linspace(1.0, 21.0, 101)
                coefs = fit_coefficients(basis, SampledFunction(grid, grid**2))
                inner = np.linspace(1.05, 20.95, 97)
                second = max(second, np.max(np.abs(design_matrix(basis, inner, 2) @ coefs - 2.0)))
    ok = partition < 1e-12 and min_eig > 0 and second < 1e-8 and idempotence < 1e-9
    verdict(
        10, ok,
        f"partition {partition:.1e} (< 1e-12), min Gram eigenvalue {min_eig:.1e} (> 0), "
        f"quadratic second derivative {second:.1e} (< 1e-8), idempotence {idempotence:.1e} (< 1e-9)",
    )
    assert ok
