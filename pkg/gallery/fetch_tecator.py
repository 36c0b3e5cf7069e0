"""Export the Tecator meat spectra to the CSV layout that ``fmlp`` reads.

The 215 near-infrared absorbance spectra ship with the ``rdatasets``
package as ``modeldata::meats``. That package is not a dependency of
``fmlp``; install it just for this step::

    pip install rdatasets
    python gallery/fetch_tecator.py data/tecator.csv

Afterwards ``fmlp run`` finds the file through the ``data`` config key or
the ``FMLP_TECATOR_CSV`` environment variable, and the acceptance suite
picks up ``data/tecator.csv`` on its own.
"""

import sys
from pathlib import Path

import numpy as np

from fmlp.data import load_tecator, write_tecator


def main(out: str = "data/tecator.csv") -> None:
    import rdatasets

    meats = rdatasets.data("modeldata", "meats")
    spectra = meats[[f"x_{i:03d}" for i in range(1, 101)]].to_numpy(dtype=float)
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_tecator(path, spectra, meats["fat"].to_numpy(dtype=float))

    ds = load_tecator(path)
    counts = np.bincount(ds.labels, minlength=2)
    print(f"wrote {len(ds)} spectra to {path}: {counts[0]} lean (fat < 20%), {counts[1]} fatty")


if __name__ == "__main__":
    main(*sys.argv[1:])
