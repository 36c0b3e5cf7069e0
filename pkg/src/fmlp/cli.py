"""Command-line experiment runner.

Commands::

    fmlp gen-waves --n-per-class 150 --m 101 --noise-sd 1 --seed 0 --out waves.csv
    fmlp run --config experiment.json
    fmlp report --in results.jsonl
    fmlp selfcheck

Exit status is 0 on success, 2 for an invalid configuration or invalid
arguments, 3 for missing or malformed data, and 1 when ``selfcheck``
finds a failing check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed

from .data import DataError, WaveSpec, gen_waveform, write_dataset_csv
from .experiments import (
    Record,
    load_spectra,
    tecator_replication,
    teacher_student_trial,
    waveform_replication,
)
from .select import Grid, SPECTRA_BASIS_SIZES
from .fmodel import count_params
from .train import TrainConfig

__all__ = [
    "ConfigError",
    "ReportError",
    "ExperimentConfig",
    "run_experiment",
    "summarize",
    "read_records",
    "report",
    "selfcheck",
    "main",
]

logger = logging.getLogger(__name__)

EXPERIMENTS = ("waveform", "tecator", "tecator-d2", "teacher-student")
VARIANTS = ("mlp", "fmlp", "fpmlp")
RECORD_FIELDS = (
    "experiment",
    "replication",
    "variant",
    "seed",
    "error",
    "hidden",
    "basis_size",
    "weight_decay",
    "param_count",
    "wall_ms",
)
TECATOR_ENV = "FMLP_TECATOR_CSV"
TECATOR_FORMAT = "CSV with header abs_850,abs_852,...,abs_1048,fat (100 absorbances and the fat percentage)"


class ConfigError(ValueError):
    pass


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment bit for bit.

    ``grid`` may override any of ``hidden_widths``, ``basis_sizes`` and
    ``weight_decays``. Replication ``r`` uses seed ``seed + r`` for data
    generation (or the train/test split) and for training, shared by all
    variants.
    """

    experiment: str
    output: str
    replications: int = 10
    variants: tuple[str, ...] = ("mlp", "fmlp")
    seed: int = 0
    grid: dict = field(default_factory=dict)
    folds: int = 5
    restarts: int = 10
    max_iters: int = 500
    data: str | None = None
    n_train: int = 160
    stratified: bool = False
    derivative_basis_size: int = 20
    n_per_class: int = 150
    test_per_class: int = 250
    m: int = 101
    noise_sd: float = 1.0
    sizes: tuple[tuple[int, int], ...] = ((50, 20), (200, 80), (800, 320))
    n_jobs: int = 1
    record_wall_time: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError("replications must be an integer >= 1")
        variants = tuple(self.variants)
        if not variants:
            raise ConfigError("variants must be nonempty")
        bad = [v for v in variants if v not in VARIANTS]
        if bad:
            raise ConfigError(f"unknown variants {bad}; choose from {VARIANTS}")
        if len(set(variants)) != len(variants):
            raise ConfigError("variants must not repeat")
        if self.experiment == "teacher-student" and variants != ("fmlp",):
            raise ConfigError('teacher-student runs only the "fmlp" variant')
        object.__setattr__(self, "variants", variants)
        unknown = set(self.grid) - {"hidden_widths", "basis_sizes", "weight_decays"}
        if unknown:
            raise ConfigError(f"unknown grid keys {sorted(unknown)}")
        try:
            self.make_grid()
            self.train_config()
            WaveSpec(self.n_per_class, self.m, self.noise_sd, 0)
            sizes = tuple((int(n), int(m)) for n, m in self.sizes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        object.__setattr__(self, "sizes", sizes)
        if any(n < 1 or m < 1 for n, m in sizes):
            raise ConfigError("teacher-student sizes must be positive")
        if self.folds < 2 or self.n_jobs == 0 or self.test_per_class < 1:
            raise ConfigError("need folds >= 2, test_per_class >= 1 and nonzero n_jobs")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("experiment", "output"):
            if key not in data:
                raise ConfigError(f"config is missing {key!r}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def make_grid(self) -> Grid:
        defaults = {}
        if self.experiment in ("tecator", "tecator-d2"):
            defaults["basis_sizes"] = SPECTRA_BASIS_SIZES
        defaults.update({k: tuple(v) for k, v in self.grid.items()})
        return Grid(**defaults)

    def train_config(self) -> TrainConfig:
        return TrainConfig(restarts=self.restarts, max_iters=self.max_iters, seed=self.seed)

    def data_path(self) -> Path:
        path = self.data or os.environ.get(TECATOR_ENV)
        if not path:
            raise DataError(
                f"experiment {self.experiment} needs the Tecator file: set \"data\" in the config "
                f"or the {TECATOR_ENV} environment variable ({TECATOR_FORMAT})"
            )
        path = Path(path)
        if not path.is_file():
            raise DataError(f"Tecator file not found at {path}; expected {TECATOR_FORMAT}")
        return path

    @property
    def summary_path(self) -> Path:
        return Path(self.output).with_suffix(".summary.csv")

    @property
    def pairwise_path(self) -> Path:
        return Path(self.output).with_suffix(".pairwise.csv")


# --------------------------------------------------------------------------
# Running


def _teacher_student_records(config: ExperimentConfig, replication: int, seed: int) -> list[dict]:
    # the student copies the teacher's default architecture
    hidden, p = 2, 5
    out = []
    tc = config.train_config()
    for n, m in config.sizes:
        start = time.perf_counter()
        cfg = TrainConfig(restarts=tc.restarts, max_iters=tc.max_iters, seed=seed)
        mse = teacher_student_trial(n, m, seed, config=cfg, hidden=hidden, p=p)
        elapsed = (time.perf_counter() - start) * 1e3
        rec = Record(
            "teacher-student", replication, "fmlp", seed, mse, hidden, p, 0.0, count_params(hidden, p, 1),
            round(elapsed, 3) if config.record_wall_time else None,
        ).to_dict()
        rec.update(n=n, m=m)
        out.append(rec)
    return out


def _replication(config: ExperimentConfig, replication: int, dataset=None) -> list[dict]:
    seed = config.seed + replication
    if config.experiment == "teacher-student":
        return _teacher_student_records(config, replication, seed)
    common = dict(
        variants=config.variants,
        grid=config.make_grid(),
        folds=config.folds,
        config=config.train_config(),
        record_wall_time=config.record_wall_time,
    )
    if config.experiment == "waveform":
        wave = WaveSpec(config.n_per_class, config.m, config.noise_sd, seed)
        records = waveform_replication(
            replication, seed, wave=wave, test_per_class=config.test_per_class, **common
        )
    else:
        records = tecator_replication(
            dataset, replication, seed, n_train=config.n_train, stratified=config.stratified,
            experiment=config.experiment, **common,
        )
    done = [r.to_dict() for r in records]
    logger.info(
        "replication %d: %s", replication,
        ", ".join(f"{r['variant']} error {r['error']:.4f}" for r in done),
    )
    return done


def run_experiment(config: ExperimentConfig) -> list[dict]:
    """Run every replication, write the JSON-lines records and the CSV summaries.

    Records are written in (replication, variant) order whatever order the
    replications finish in.
    """
    dataset = None
    if config.experiment in ("tecator", "tecator-d2"):
        path = config.data_path()
        dataset = load_spectra(path, config.experiment == "tecator-d2", config.derivative_basis_size)
        if not 0 < config.n_train < len(dataset):
            raise ConfigError(f"n_train={config.n_train} must be below the {len(dataset)} spectra")
    reps = range(config.replications)
    if config.n_jobs == 1:
        per_rep = [_replication(config, r, dataset) for r in reps]
    else:
        per_rep = Parallel(n_jobs=config.n_jobs)(delayed(_replication)(config, r, dataset) for r in reps)
    records = [rec for block in per_rep for rec in block]

    out = Path(config.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(json.dumps(r) + "\n" for r in records))
    summary, pairwise = summarize(records)
    config.summary_path.write_text(_to_csv(summary))
    config.pairwise_path.write_text(_to_csv(pairwise))
    return records


# --------------------------------------------------------------------------
# Summaries and reports


def group_label(record: dict) -> str:
    """Variant name, qualified by sample sizes for teacher-student records."""
    if "n" in record and "m" in record:
        return f"{record['variant']}[n={record['n']},m={record['m']}]"
    return record["variant"]


def _groups(records: Sequence[dict]) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    for rec in records:
        groups.setdefault(group_label(rec), []).append(rec)
    return groups


def summarize(records: Sequence[dict]) -> tuple[list[dict], list[dict]]:
    """Per-variant error statistics and paired win/tie/loss counts.

    A variant wins a replication against another when its test error is
    strictly lower. Standard deviations use ``n - 1`` in the denominator
    (zero for a single replication).
    """
    if not records:
        raise ReportError("no records to summarize")
    groups = _groups(records)
    summary = []
    for label, recs in groups.items():
        err = np.array([r["error"] for r in recs], dtype=float)
        params = np.array([r["param_count"] for r in recs], dtype=float)
        q1, med, q3 = np.percentile(err, [25, 50, 75])
        summary.append(
            {
                "variant": label,
                "n": len(recs),
                "mean": float(err.mean()),
                "sd": float(err.std(ddof=1)) if len(recs) > 1 else 0.0,
                "min": float(err.min()),
                "q1": float(q1),
                "median": float(med),
                "q3": float(q3),
                "max": float(err.max()),
                "mean_params": float(params.mean()),
                "sd_params": float(params.std(ddof=1)) if len(recs) > 1 else 0.0,
            }
        )
    by_rep = {label: {r["replication"]: r["error"] for r in recs} for label, recs in groups.items()}
    labels = list(groups)
    pairwise = []
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            shared = sorted(set(by_rep[a]) & set(by_rep[b]))
            wins = sum(by_rep[a][r] < by_rep[b][r] for r in shared)
            losses = sum(by_rep[a][r] > by_rep[b][r] for r in shared)
            pairwise.append(
                {"variant_a": a, "variant_b": b, "wins": wins, "ties": len(shared) - wins - losses, "losses": losses}
            )
    return summary, pairwise


def _to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def _check_record(i: int, rec) -> None:
    if not isinstance(rec, dict):
        raise ReportError(f"record {i} is not a JSON object")
    missing = [k for k in RECORD_FIELDS if k not in rec]
    if missing:
        raise ReportError(f"record {i} is missing fields {missing}")
    for key in ("replication", "seed", "hidden", "param_count"):
        if not isinstance(rec[key], int) or isinstance(rec[key], bool):
            raise ReportError(f"record {i}: {key} must be an integer")
    if not isinstance(rec["error"], (int, float)) or not math.isfinite(rec["error"]):
        raise ReportError(f"record {i}: error must be a finite number")
    if rec["basis_size"] is not None and not isinstance(rec["basis_size"], int):
        raise ReportError(f"record {i}: basis_size must be an integer or null")
    if not isinstance(rec["variant"], str) or not isinstance(rec["experiment"], str):
        raise ReportError(f"record {i}: variant and experiment must be strings")


def read_records(path: str | Path) -> list[dict]:
    """Load and validate a JSON-lines results file."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ReportError(f"cannot read results {path}: {exc}") from exc
    records = []
    for i, line in enumerate(l for l in lines if l.strip()):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReportError(f"record {i} is not valid JSON: {exc}") from exc
        _check_record(i, rec)
        records.append(rec)
    if not records:
        raise ReportError(f"{path} contains no records")
    return records


def _table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    rows = [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(str(h)), *(len(r[j]) for r in rows)) if rows else len(h) for j, h in enumerate(header)]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    out = [line, "  ".join("-" * w for w in widths)]
    out += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(out)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}" if abs(v) >= 1 else f"{v:.4f}"
    return "-" if v is None else str(v)


def architecture_counts(records: Sequence[dict]) -> dict[str, Counter]:
    """How often each (hidden, basis size) architecture was selected, per variant."""
    counts: dict[str, Counter] = defaultdict(Counter)
    for rec in records:
        counts[group_label(rec)][(rec["hidden"], rec["basis_size"])] += 1
    return counts


def report(records: Sequence[dict]) -> str:
    """Plain-text tables: error rates, selected architectures, parameter counts, paired comparisons."""
    summary, pairwise = summarize(records)
    parts = ["Test error"]
    parts.append(
        _table(
            ["variant", "n", "mean", "sd", "min", "q1", "median", "q3", "max"],
            [[s[k] for k in ("variant", "n", "mean", "sd", "min", "q1", "median", "q3", "max")] for s in summary],
        )
    )
    parts.append("\nSelected architectures")
    rows = []
    for label, counter in architecture_counts(records).items():
        for (hidden, basis), count in sorted(counter.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
            rows.append([label, hidden, basis, count])
    parts.append(_table(["variant", "hidden", "basis", "count"], rows))
    parts.append("\nParameter counts")
    parts.append(
        _table(
            ["variant", "mean", "sd", "min", "max"],
            [
                [
                    label,
                    float(np.mean([r["param_count"] for r in recs])),
                    s["sd_params"],
                    min(r["param_count"] for r in recs),
                    max(r["param_count"] for r in recs),
                ]
                for (label, recs), s in zip(_groups(records).items(), summary)
            ],
        )
    )
    if pairwise:
        parts.append("\nPaired comparisons (a vs b, lower error wins)")
        parts.append(
            _table(
                ["a", "b", "wins", "ties", "losses"],
                [[p["variant_a"], p["variant_b"], p["wins"], p["ties"], p["losses"]] for p in pairwise],
            )
        )
    return "\n".join(parts) + "\n"


# --------------------------------------------------------------------------
# Self check


def selfcheck(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run the oracle cross-checks; returns ``(name, passed, detail)`` per check."""
    from .bspline import Measure, design_matrix, fit_coefficients, gram_matrix, make_basis
    from .data import LabeledDataset
    from .fmodel import FunctionalMLP, NaiveMLP, ProjectionMLP, SampledFunction, forward_fmlp
    from .oracle import dense_forward, gradient_deviation, quadrature_integral, spline_function

    rng = np.random.default_rng(seed)
    results = []

    def check(name, value, limit):
        results.append((name, bool(value < limit), f"{value:.3g} < {limit:g}"))

    basis = make_basis(10, 4, (1, 21))
    x = rng.uniform(1, 21, 2000)
    check("partition of unity", np.max(np.abs(design_matrix(basis, x).sum(axis=1) - 1)), 1e-12)

    M = gram_matrix(basis)
    measure = Measure(basis.domain)
    gaps = [
        abs(M[i].sum() - quadrature_integral(spline_function(basis.knots, np.eye(basis.p)[i], 4), measure))
        for i in range(basis.p)
    ]
    check("gram row sums vs Simpson", max(gaps), 1e-10)

    alpha = rng.normal(size=basis.p)
    grid = np.linspace(1, 21, 60)
    fitted = fit_coefficients(basis, SampledFunction(grid, design_matrix(basis, grid) @ alpha))
    check("projection idempotence", np.max(np.abs(fitted - alpha)), 1e-9)

    small = make_basis(5, 4, (1, 21))
    grid = np.linspace(1, 21, 12)
    labels = rng.integers(0, 3, 15)
    ds = LabeledDataset.from_grid(grid, rng.normal(size=(15, 12)), labels, n_classes=3)
    models = {
        "mlp": NaiveMLP(rng.normal(size=(3, 12)), rng.normal(size=3), rng.normal(size=(3, 3)), rng.normal(size=3)),
        "fmlp": FunctionalMLP(
            rng.normal(size=(3, 5)), rng.normal(size=3), rng.normal(size=(3, 3)), rng.normal(size=3), basis=small
        ),
        "fpmlp": ProjectionMLP(
            small, NaiveMLP(rng.normal(size=(3, 5)), rng.normal(size=3), rng.normal(size=(3, 3)), rng.normal(size=3))
        ),
    }
    for name, model in models.items():
        check(f"{name} gradient vs finite differences", gradient_deviation(model, ds, 1e-3), 1e-4)

    fm = models["fmlp"]
    dense = np.linspace(1, 21, 10_000)
    g = lambda t: np.sin(t / 3.0)
    ref = dense_forward(fm, g)
    got = forward_fmlp(fm, SampledFunction(dense, g(dense)))
    check("fmlp forward vs quadrature", np.max(np.abs(got - ref)) / np.max(np.abs(ref)), 1e-3)
    return results


# --------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmlp", description="Functional MLP experiments on sampled curves.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-waves", help="write a waveform dataset as CSV")
    gen.add_argument("--n-per-class", type=int, default=150)
    gen.add_argument("--m", type=int, default=101)
    gen.add_argument("--noise-sd", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run an experiment described by a JSON config")
    run.add_argument("--config", required=True)

    rep = sub.add_parser("report", help="print comparison tables for a results file")
    rep.add_argument("--in", dest="path", required=True)

    sub.add_parser("selfcheck", help="cross-check the numerics against brute-force oracles")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "gen-waves":
            try:
                spec = WaveSpec(args.n_per_class, args.m, args.noise_sd, args.seed)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            write_dataset_csv(gen_waveform(spec), args.out)
            print(f"wrote {3 * spec.n_per_class} curves to {args.out}")
        elif args.command == "run":
            config = ExperimentConfig.from_json(args.config)
            records = run_experiment(config)
            print(report(records), end="")
            print(f"records: {config.output}\nsummary: {config.summary_path}\npairwise: {config.pairwise_path}")
        elif args.command == "report":
            print(report(read_records(args.path)), end="")
        else:
            results = selfcheck()
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
            return 0 if all(ok for _, ok, _ in results) else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ReportError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
