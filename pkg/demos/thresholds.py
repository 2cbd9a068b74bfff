"""
Disorder thresholds for localization
====================================

For the Anderson model H = (-Delta)^alpha + lambda V with uniform disorder
on [-1, 1], three sufficient thresholds on lambda are available: one from a
self-avoiding-walk expansion (lambda_0), one from the classic
fractional-moment argument (lambda_AM) and one giving power-law decay with
an extra weight (1 + |x|)^beta (lambda_AG).  The first is always the
smallest.
"""

import numpy as np

from fracanderson.anderson import DisorderSpec, optimize_s, threshold_report
from fracanderson.laplacian import FracLaplacianParams, kernel_table

disorder = DisorderSpec.uniform(1.0)
table = kernel_table(FracLaplacianParams(1, 0.5), 200)

# %%
# beta = alpha_s, half the excess decay rate available at moment s.
print(" s    lambda_0   lambda_AM   lambda_AG")
for s in (0.7, 0.8, 0.9):
    r = threshold_report(s, s - 0.5, disorder, table)
    print(f"{s:.1f}  {r.lambda0:9.3f}  {r.lambda_am:9.3f}  {r.lambda_ag:9.3f}")

# %%
# The moment s is a free parameter; lambda_0 is minimised over a grid.
opt = optimize_s(disorder, table, np.linspace(0.6, 0.98, 20))
print(f"best s = {opt.s_star:.3f}, lambda_0 = {opt.lambda0_star:.3f}")
