"""
Localized eigenvectors and frozen transport
===========================================

Strong disorder localizes every eigenvector of the finite-volume operator
around a centre, with a power-law profile, and the spread of an initially
localized wave packet stays bounded in time.  A weak-disorder nearest
neighbour chain serves as a contrast.
"""

import numpy as np
from scipy import stats

from fracanderson.anderson import (
    DisorderSpec,
    ModelParams,
    eigen_decay_analysis,
    moment_trajectory,
    sample_disorder,
    sample_rng,
    threshold_lambda0,
)
from fracanderson.laplacian import FracLaplacianParams, kernel_table
from fracanderson.lattice import BoxGeometry
from fracanderson.saw import saw_kernel_from_laplacian

disorder = DisorderSpec.uniform(1.0)
box = BoxGeometry(300, 1)

# %%
lap = FracLaplacianParams(1, 0.5)
table = kernel_table(lap, 600)
lam = 3 * threshold_lambda0(0.9, disorder, saw_kernel_from_laplacian(table, 0.9))
p = ModelParams(lap, disorder, lam, 0.9)
rep = eigen_decay_analysis(p, box, sample_disorder(disorder, box, sample_rng(0, 0)), table)
print(f"strong disorder: median eigenvector decay exponent {rep.median_t:.2f}, "
      f"{rep.fraction_passing:.0%} above {rep.threshold:.2f}")

# %%
weak = FracLaplacianParams(1, 1.0)
wt = kernel_table(weak, 600)
rep = eigen_decay_analysis(ModelParams(weak, disorder, 0.01, 0.9), box,
                           sample_disorder(disorder, box, sample_rng(0, 0)), wt)
print(f"weak disorder, nearest neighbour: median exponent {rep.median_t:.3f}")

# %%
# The moment sum_x |x|^beta |<x|exp(-itH)|0>|^2 over t in [0, 1000].
tg = np.linspace(0, 1000, 101)
tr = moment_trajectory(p, box, sample_disorder(disorder, box, sample_rng(0, 1)), table, 0.5, tg)
fit = stats.linregress(tg[1:], tr.moments[1:])
print(f"moment range [{tr.moments[1:].min():.3e}, {tr.moments.max():.3e}], trend {fit.slope:.1e} per unit time")
