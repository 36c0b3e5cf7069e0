"""Functional versus naive MLP on the three-class waveform curves.

One replication of the full comparison, with basis sizes capped at 15 to
save time. Both models pick their architecture and weight decay by 5-fold
cross-validation on 450 training curves and are scored on 750 fresh ones.
Expect a few minutes on one core.

    python gallery/waveform_demo.py
"""

from fmlp.data import WaveSpec, gen_waveform
from fmlp.select import Grid, evaluate, grid_search
from fmlp.train import TrainConfig

train_ds = gen_waveform(WaveSpec(n_per_class=150, seed=0))
test_ds = gen_waveform(WaveSpec(n_per_class=250, seed=1000))
grid = Grid(basis_sizes=(5, 7, 10, 15))
config = TrainConfig(restarts=10, seed=0)

for variant in ("mlp", "fmlp"):
    report = grid_search(variant, train_ds, grid, k=5, config=config)
    cell = report.selected
    print(
        f"{variant:5s} hidden={cell.hidden} basis={cell.basis_size} decay={cell.weight_decay:g} "
        f"params={report.param_count:4d}  cv={cell.mean_error:.3f}  test={evaluate(report.model, test_ds):.3f}"
        f"  ({report.wall_time:.0f} s)"
    )
