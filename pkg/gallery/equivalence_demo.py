"""Linear functionals of projection coefficients as weight-function integrals.

For every coefficient vector ``c`` there is a spline weight function whose
sample-mean pairing with a curve matches ``c`` dotted with the curve's
least-squares coefficients. The match is a quadrature statement, so its
accuracy depends on where the curve is observed: the mean over a
cell-centred grid is the midpoint rule, while a grid that includes both
endpoints over-weights them by half a cell.
"""

import numpy as np

from fmlp.bspline import fit_coefficients, make_basis
from fmlp.fmodel import SampledFunction, approx_integral, equivalence_weights

basis = make_basis(10, 4, (1.0, 21.0))
rng = np.random.default_rng(0)
c = rng.normal(size=basis.p)
d = equivalence_weights(basis, c)


def g(x):
    return np.sin(x / 2.0) + 0.3 * np.cos(x)


print(f"{'m':>6}  {'endpoints':>12}  {'cell-centred':>12}")
for m in (101, 401, 1001, 4001):
    row = []
    for x in (np.linspace(1.0, 21.0, m), 1.0 + 20.0 * (np.arange(m) + 0.5) / m):
        f = SampledFunction(x, g(x))
        row.append(abs(c @ fit_coefficients(basis, f) - approx_integral(basis, d, f)))
    print(f"{m:6d}  {row[0]:12.2e}  {row[1]:12.2e}")
