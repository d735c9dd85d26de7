"""
Node counts: partition of unity against one global interpolant
===============================================================

A near-discontinuity at x = 0.25 forces a single Chebyshev series to tens
of thousands of terms. The partition-of-unity tree concentrates small
pieces around the front and keeps everything else coarse.
"""

import numpy as np

from pucheb import collect_point_sets, operator_matrices, refine, sparsity_ratio, total_nodes
from pucheb.chebcore import fit_global

sharp = lambda x: np.arctan((x - 0.25) / 0.001)  # noqa: E731

tree = refine(sharp, (-1.0, 1.0), n_max=128, t=0.1, tol=1e-14)
print("PU leaves:", len(tree.leaves()), " PU nodes:", total_nodes(tree))

# double the degree until the coefficients chop
p, tried = fit_global(sharp, tol=1e-14)
print("global degrees tried:", tried)
print("global nodes:", p.degree + 1)

# the first-derivative matrix couples only overlapping leaves
D = operator_matrices(collect_point_sets(tree), 1)[1]
print("D shape:", D.shape, " sparsity: %.3f" % sparsity_ratio(D))

# merging: a pole just outside the interval
pole = lambda x: 1.0 / (x - 1.0005)  # noqa: E731
x = np.linspace(-1.0, 1.0, 10_000)
for merge in (True, False):
    tr = refine(pole, (-1.0, 1.0), n_max=128, t=0.08, tol=1e-14, merge=merge)
    rel = np.max(np.abs(tr(x) - pole(x))) / np.max(np.abs(pole(x)))
    print(f"merge={merge!s:5} leaves={len(tr.leaves()):2d} nodes={total_nodes(tr)} rel err={rel:.1e}")
