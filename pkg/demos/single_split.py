"""
One split, three overlaps
=========================

A steep arctan is resolved on [-1, 1] by two overlapping Chebyshev pieces.
The overlap parameter t trades blend accuracy in the derivative against
piece size: the weight derivative grows like 1/t^2.
"""

import numpy as np

from pucheb import refine, weight_deriv_maxnorm

f = lambda x: np.arctan(x / 0.1)  # noqa: E731
df = lambda x: 10.0 / (1.0 + 100.0 * x * x)  # noqa: E731
x = np.linspace(-1.0, 1.0, 10_000)

# with the default overlap the function needs exactly one split
tree = refine(f, (-1.0, 1.0), n_max=128, t=0.1, tol=1e-14)
print("leaves:", [(round(leaf.interval.a, 3), round(leaf.interval.b, 3)) for leaf in tree.leaves()])
print("degrees:", [leaf.interpolant.degree for leaf in tree.leaves()])

# value and derivative errors for three overlaps
print(f"{'t':>6} {'max|w_l`|':>10} {'value err':>10} {'deriv err':>10}")
for t in (0.2, 0.1, 0.05):
    tr = refine(f, (-1.0, 1.0), n_max=128, t=t, tol=1e-14)
    err = np.max(np.abs(tr(x) - f(x)))
    derr = np.max(np.abs(tr.deriv(x) - df(x)))
    print(f"{t:>6} {weight_deriv_maxnorm(t):>10.3f} {err:>10.2e} {derr:>10.2e}")

# the derivative error peaks at the domain ends, where Chebyshev derivatives
# amplify rounding by roughly n^2, not in the blended overlap
i = np.argmax(np.abs(tree.deriv(x) - df(x)))
print("worst derivative error at x =", x[i])
