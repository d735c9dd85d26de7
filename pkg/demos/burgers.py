"""
Viscous Burgers with Robin ends
===============================

nu u'' - u u' = 0 on [0, 1] has a tanh layer of width ~nu at x = 1/2.
The adaptive solver alternates Newton solves with tree refinement until
every piece of the solution chops.
"""

import numpy as np

from pucheb import burgers_exact, burgers_problem, refine_bvp
from pucheb.bvpsolve import global_cheb_bvp

nu, alpha, kappa = 5e-3, 1.0, 2.0
problem = burgers_problem(nu, alpha, kappa)

tree, F, report = refine_bvp(problem, n_max=128, t=0.1, tol=1e-10)
for i, p in enumerate(report.passes, 1):
    print(f"pass {i}: {p.leaves} leaves, {p.total_nodes} nodes, {p.newton_iterations} Newton steps, |R| = {p.residual_norm:.1e}")
print("final:", report.leaves, "leaves,", report.total_nodes, "nodes")
print("leaf intervals:", [(round(leaf.interval.a, 4), round(leaf.interval.b, 4)) for leaf in tree.leaves()])

beta, exact = burgers_exact(nu, alpha, kappa)
x = np.linspace(0.0, 1.0, 10_000)
print("beta =", beta, " sup error = %.2e" % np.max(np.abs(tree(x) - exact(x))))

# a single Chebyshev series needs several hundred points for the same layer
degree, nodes, _ = global_cheb_bvp(problem, tol=1e-10)
print("global Chebyshev:", nodes, "nodes (chopped degree", degree, ")")
