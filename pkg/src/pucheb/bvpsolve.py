"""Collocation solves for second-order two-point boundary value problems on a PU tree.

The unknowns are the values at every leaf grid point. Interior rows impose
the differential equation through the assembled ``M``, ``D`` and ``D2``;
the two rows at the domain ends impose Robin conditions
``a1*u' + a0*u = value``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chebcore import DEFAULT_TOL, ChebInterpolant, Interval, cheb_points, chop
from .puops import collect_point_sets, duplicate_points, operator_matrices
from .putree import PuTree, sample, splitleaves, total_nodes

__all__ = [
    "BoundaryCondition",
    "BvpProblem",
    "NewtonResult",
    "PassRecord",
    "SolveReport",
    "SingularSystemError",
    "BvpRefinementError",
    "Discretization",
    "discretize",
    "solve_linear",
    "newton_solve",
    "refine_bvp",
    "burgers_problem",
    "burgers_exact",
    "poisson_problem",
    "global_cheb_bvp",
    "load_problem",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
BACKWARD_ERROR_TOL = 1e-10
RCOND = 1e-13
MIN_LEAF_DEGREE = 2
# steps below this (relative) size with a flat residual mean rounding noise
STALL_STEP = 1e-3


class SingularSystemError(np.linalg.LinAlgError):
    """Collocation matrix is singular or too ill-conditioned to trust."""

    def __init__(self, message: str, condition: float = math.inf, duplicates: int = 0):
        super().__init__(message)
        self.condition = condition
        self.duplicates = duplicates


class BvpRefinementError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundaryCondition:
    """``a1*u'(endpoint) + a0*u(endpoint) = value``; Dirichlet when ``a1 == 0``."""

    endpoint: str
    a0: float
    a1: float
    value: float

    def __post_init__(self):
        if self.endpoint not in ("left", "right"):
            raise ValueError(f"endpoint must be 'left' or 'right', got {self.endpoint!r}")
        if self.a0 == 0.0 and self.a1 == 0.0:
            raise ValueError("boundary condition needs a nonzero coefficient")

    @classmethod
    def dirichlet(cls, endpoint: str, value: float) -> "BoundaryCondition":
        return cls(endpoint, 1.0, 0.0, value)


def _const(c):
    return lambda x: np.full_like(x, float(c))


@dataclass(frozen=True)
class BvpProblem:
    """A second-order BVP ``r(x, u, u', u'') = 0`` with one condition per end.

    ``residual`` and ``jacobian_coeffs`` take the points and the three sample
    vectors; the latter returns ``(dr/du, dr/du', dr/du'')`` pointwise. For a
    linear problem the residual is ``c2 u'' + c1 u' + c0 u - rhs(x)``.
    """

    interval: Interval
    residual: Callable
    jacobian_coeffs: Callable
    boundary_conditions: tuple[BoundaryCondition, BoundaryCondition]
    rhs: Optional[Callable] = None
    is_linear: bool = False

    def __post_init__(self):
        if not isinstance(self.interval, Interval):
            object.__setattr__(self, "interval", Interval(*self.interval))
        ends = sorted(bc.endpoint for bc in self.boundary_conditions)
        if ends != ["left", "right"]:
            raise ValueError("need exactly one boundary condition per endpoint")

    @classmethod
    def linear(cls, interval, bcs, rhs: Callable, c2=1.0, c1=0.0, c0=0.0) -> "BvpProblem":
        """``c2 u'' + c1 u' + c0 u = rhs``; coefficients may be constants or functions of x."""
        f2, f1, f0 = (c if callable(c) else _const(c) for c in (c2, c1, c0))

        def residual(x, u, du, d2u):
            return f2(x) * d2u + f1(x) * du + f0(x) * u - rhs(x)

        def jac(x, u, du, d2u):
            return f0(x), f1(x), f2(x)

        return cls(interval, residual, jac, tuple(bcs), rhs, True)

    def bc(self, endpoint: str) -> BoundaryCondition:
        return next(b for b in self.boundary_conditions if b.endpoint == endpoint)


def poisson_problem(rhs: Callable, interval=(-1.0, 1.0), left=0.0, right=0.0) -> BvpProblem:
    """``u'' = rhs`` with Dirichlet data."""
    return BvpProblem.linear(
        interval,
        (BoundaryCondition.dirichlet("left", left), BoundaryCondition.dirichlet("right", right)),
        rhs,
    )


def burgers_problem(nu: float = 5e-3, alpha: float = 1.0, kappa: float = 2.0) -> BvpProblem:
    """Stationary viscous Burgers ``nu u'' - u u' = 0`` on [0, 1] with Robin ends.

    ``nu u'(0) - kappa (u(0) - alpha) = 0`` and ``nu u'(1) + kappa (u(1) + alpha) = 0``.
    """
    if nu <= 0 or kappa <= 0:
        raise ValueError("nu and kappa must be positive")

    def residual(x, u, du, d2u):
        return nu * d2u - u * du

    def jac(x, u, du, d2u):
        return -du, -u, np.full_like(u, nu)

    bcs = (
        BoundaryCondition("left", -kappa, nu, -kappa * alpha),
        BoundaryCondition("right", kappa, nu, -kappa * alpha),
    )
    return BvpProblem(Interval(0.0, 1.0), residual, jac, bcs, None, False)


def _sech2(z):
    # 4 e^{-2|z|} / (1 + e^{-2|z|})^2 never overflows
    e = np.exp(-2.0 * np.abs(z))
    return 4.0 * e / (1.0 + e) ** 2


def burgers_exact(nu: float, alpha: float, kappa: float, xtol: float = 0.0):
    """Closed-form Burgers solution; returns ``(beta, u)``.

    ``beta`` solves ``-beta^2 sech^2(beta/(4 nu))/2 + kappa (alpha - beta tanh(beta/(4 nu))) = 0``
    on ``[0, 2|alpha|]`` by bisection, run to adjacent floats unless ``xtol``
    (relative) stops it sooner.
    """
    if nu <= 0 or kappa <= 0 or alpha == 0:
        raise ValueError("need nu > 0, kappa > 0 and alpha != 0")

    def h(b):
        z = b / (4.0 * nu)
        return -0.5 * b * b * _sech2(z) + kappa * (alpha - b * math.tanh(z))

    lo, hi = 0.0, 2.0 * abs(alpha)
    flo, fhi = h(lo), h(hi)
    if flo == 0.0:
        beta = lo
    elif fhi == 0.0:
        beta = hi
    else:
        if np.sign(flo) == np.sign(fhi):
            raise ValueError(f"no sign change for beta on [{lo}, {hi}]")
        while hi - lo > xtol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            fm = h(mid)
            if fm == 0.0:
                lo = hi = mid
                break
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        beta = 0.5 * (lo + hi)

    def u(x):
        return -beta * np.tanh(0.5 * beta / nu * (np.asarray(x, dtype=float) - 0.5))

    return beta, u


@dataclass
class Discretization:
    """Assembled operators and boundary bookkeeping for one tree shape."""

    x: np.ndarray
    M: sp.csr_matrix
    D: sp.csr_matrix
    D2: sp.csr_matrix
    left: int
    right: int
    interior: np.ndarray
    duplicates: int

    @property
    def size(self) -> int:
        return self.x.size


def discretize(tree: PuTree) -> Discretization:
    ps = collect_point_sets(tree)
    M, D, D2 = operator_matrices(ps, 2)
    x = ps.leafpoints
    iv = tree.interval
    left = int(np.flatnonzero(x == iv.a)[0])
    right = int(np.flatnonzero(x == iv.b)[-1])
    # a leaf edge that touches the domain end contributes one point there per leaf
    ends = np.flatnonzero((x == iv.a) | (x == iv.b))
    if ends.size != 2:
        raise SingularSystemError(f"expected 2 boundary points, found {ends.size}")
    interior = np.setdiff1d(np.arange(x.size), ends)
    return Discretization(x, M, D, D2, left, right, interior, int(duplicate_points(ps).size))


def _bc_rows(disc: Discretization, problem: BvpProblem):
    rows, rhs = [], []
    for idx, end in ((disc.left, "left"), (disc.right, "right")):
        bc = problem.bc(end)
        rows.append(bc.a1 * disc.D[idx] + bc.a0 * disc.M[idx])
        rhs.append(bc.value)
    return rows, np.array(rhs)


def _stack(disc: Discretization, interior_op: sp.csr_matrix, bc_rows) -> sp.csr_matrix:
    """Replace the two boundary rows of ``interior_op`` by the condition rows."""
    n = disc.size
    keep = np.ones(n)
    keep[[disc.left, disc.right]] = 0.0
    # build the selector that places the two condition rows where they belong
    place = sp.csr_matrix((np.ones(2), ([disc.left, disc.right], [0, 1])), shape=(n, 2))
    bmat = sp.vstack([r for r in bc_rows]).tocsr()
    return (sp.diags(keep) @ interior_op + place @ bmat).tocsr()


def _solve(A: sp.csr_matrix, b: np.ndarray, duplicates: int = 0, check: bool = True) -> np.ndarray:
    """Direct solve; dense systems use a truncated minimum-norm least-squares solve.

    Overlapping leaves make the collocation matrix numerically rank deficient:
    leaf values can move along directions that leave the blend unchanged. An
    LU solve lets those components grow without bound, so the dense path
    discards singular values below ``RCOND`` relative to the largest.
    """
    n = A.shape[0]
    hint = f"; {duplicates} duplicate grid coordinates may make it rank deficient" if duplicates else ""
    try:
        if n <= DENSE_LIMIT:
            dense = A.toarray()
            # equilibrate rows so the cutoff does not drop the O(1) condition rows
            scale = np.max(np.abs(dense), axis=1)
            scale[scale == 0.0] = 1.0
            x, _, rank, _ = sla.lstsq(dense / scale[:, None], b / scale, cond=RCOND, lapack_driver="gelsd")
            if rank < n:
                log.debug("collocation matrix has numerical rank %d of %d", rank, n)
        else:
            x = spla.spsolve(A.tocsc(), b)
    except (sla.LinAlgError, RuntimeError, ValueError) as exc:
        raise SingularSystemError(f"collocation system is singular ({exc}){hint}", duplicates=duplicates) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(f"collocation solve produced non-finite values{hint}", _cond(A), duplicates)
    if not check:
        return x
    anorm = spla.norm(A, np.inf)
    denom = anorm * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)
    berr = np.linalg.norm(A @ x - b, np.inf) / denom if denom > 0.0 else 0.0
    if berr > BACKWARD_ERROR_TOL:
        cond = _cond(A)
        raise SingularSystemError(
            f"collocation system is inconsistent or singular: backward error {berr:.3g}, "
            f"condition {cond:.3g}{hint}",
            cond,
            duplicates,
        )
    return x


def _cond(A) -> float:
    if A.shape[0] <= DENSE_LIMIT:
        return float(np.linalg.cond(A.toarray(), 1))
    lu = spla.splu(A.tocsc())
    inv_norm = spla.onenormest(spla.LinearOperator(A.shape, matvec=lu.solve, rmatvec=lambda v: lu.solve(v, "T")))
    return float(spla.norm(A, 1) * inv_norm)


def solve_linear(tree: PuTree, problem: BvpProblem, disc: Optional[Discretization] = None) -> np.ndarray:
    """Values at all leaf grid points solving the collocated linear problem."""
    if not problem.is_linear:
        raise ValueError("solve_linear needs a linear problem; use newton_solve")
    disc = disc or discretize(tree)
    x = disc.x
    z = np.zeros_like(x)
    c0, c1, c2 = (np.broadcast_to(c, x.shape) for c in problem.jacobian_coeffs(x, z, z, z))
    L = sp.diags(c2) @ disc.D2 + sp.diags(c1) @ disc.D + sp.diags(c0) @ disc.M
    rows, vals = _bc_rows(disc, problem)
    A = _stack(disc, L, rows)
    b = np.asarray(problem.rhs(x), dtype=float).copy()
    b[disc.left], b[disc.right] = vals
    return _solve(A, b, disc.duplicates)


def residual_vector(disc: Discretization, problem: BvpProblem, F: np.ndarray) -> np.ndarray:
    """Interior equation residuals with the two condition residuals in the boundary slots."""
    u, du, d2u = disc.M @ F, disc.D @ F, disc.D2 @ F
    r = np.asarray(problem.residual(disc.x, u, du, d2u), dtype=float).copy()
    for idx, end in ((disc.left, "left"), (disc.right, "right")):
        bc = problem.bc(end)
        r[idx] = bc.a1 * du[idx] + bc.a0 * u[idx] - bc.value
    return r


def jacobian(disc: Discretization, problem: BvpProblem, F: np.ndarray) -> sp.csr_matrix:
    u, du, d2u = disc.M @ F, disc.D @ F, disc.D2 @ F
    ru, rdu, rd2u = (np.broadcast_to(c, u.shape) for c in problem.jacobian_coeffs(disc.x, u, du, d2u))
    J = sp.diags(rd2u) @ disc.D2 + sp.diags(rdu) @ disc.D + sp.diags(ru) @ disc.M
    rows, _ = _bc_rows(disc, problem)
    return _stack(disc, J, rows)


@dataclass
class NewtonResult:
    F: np.ndarray = field(repr=False)
    converged: bool
    iterations: int
    residual_norm: float
    history: list[float] = field(default_factory=list)
    status: str = "residual"
    steps: list[float] = field(default_factory=list)


def newton_solve(
    tree: PuTree,
    problem: BvpProblem,
    F0: np.ndarray,
    *,
    tol: float = 1e-11,
    step_tol: float = 1e-13,
    max_iter: int = 50,
    max_halvings: int = 8,
    stall_window: int = 5,
    disc: Optional[Discretization] = None,
) -> NewtonResult:
    """Damped Newton with Armijo backtracking on the collocation residual.

    Stops when ``|R|_inf <= tol`` or the accepted step is below ``step_tol``
    relative to ``max(1, |F|_inf)``. If the residual has not halved over
    ``stall_window`` iterations of small steps it has hit the rounding floor
    of the discretization and the solve stops with status ``"stalled"``. On any
    failure the iterate with the smallest residual is returned with
    ``converged=False``.
    """
    disc = disc or discretize(tree)
    F = np.array(F0, dtype=float)
    if F.shape != (disc.size,):
        raise ValueError(f"initial values have shape {F.shape}, expected ({disc.size},)")
    R = residual_vector(disc, problem, F)
    rnorm = float(np.linalg.norm(R, np.inf))
    hist = [rnorm]
    steps: list[float] = []
    best = (rnorm, F.copy())
    for it in range(1, max_iter + 1):
        if rnorm <= tol:
            return NewtonResult(F, True, it - 1, rnorm, hist, "residual", steps)
        J = jacobian(disc, problem, F)
        # the line search guards against inexact steps; no backward-error gate here
        dF = _solve(J, -R, disc.duplicates, check=False)
        r2 = np.linalg.norm(R)
        lam, trial = 1.0, None
        tried = []
        for _ in range(max_halvings + 1):
            Ft = F + lam * dF
            Rt = residual_vector(disc, problem, Ft)
            rt2 = np.linalg.norm(Rt)
            tried.append((rt2, lam, Ft, Rt))
            if np.isfinite(rt2) and rt2 <= (1.0 - 1e-4 * lam) * r2:
                trial = tried[-1]
                break
            lam *= 0.5
        if trial is None:
            trial = min(tried, key=lambda p: p[0] if np.isfinite(p[0]) else math.inf)
        _, lam, F, R = trial
        rnorm = float(np.linalg.norm(R, np.inf))
        hist.append(rnorm)
        if rnorm < best[0]:
            best = (rnorm, F.copy())
        step = lam * float(np.linalg.norm(dF, np.inf))
        steps.append(step)
        if rnorm <= tol:
            return NewtonResult(F, True, it, rnorm, hist, "residual", steps)
        if step <= step_tol * max(1.0, float(np.linalg.norm(F, np.inf))):
            return NewtonResult(F, True, it, rnorm, hist, "step", steps)
        if (
            len(hist) > stall_window
            and min(hist[-stall_window:]) > 0.5 * min(hist[:-stall_window])
            and max(steps[-stall_window:]) <= STALL_STEP * max(1.0, float(np.linalg.norm(F, np.inf)))
        ):
            return NewtonResult(best[1], False, it, best[0], hist, "stalled", steps)
    log.warning("Newton did not converge in %d iterations (|R| = %.3g)", max_iter, best[0])
    return NewtonResult(best[1], False, max_iter, best[0], hist, "max_iter", steps)


@dataclass
class PassRecord:
    leaves: int
    total_nodes: int
    newton_iterations: int
    residual_norm: float
    newton_converged: bool = True


@dataclass
class SolveReport:
    passes: list[PassRecord]
    total_nodes: int
    leaves: int
    residual_norm: float
    wall_time: float
    converged: bool
    duplicates: int = 0

    @property
    def newton_iterations(self) -> list[int]:
        return [p.newton_iterations for p in self.passes]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["newton_iterations"] = self.newton_iterations
        return d


def _leaf_values(tree: PuTree) -> np.ndarray:
    return np.concatenate([leaf.interpolant.values for leaf in tree.leaves()])


def _set_leaf_values(tree: PuTree, F: np.ndarray) -> None:
    at = 0
    for leaf in tree.leaves():
        g = leaf.interpolant.grid if leaf.interpolant is not None else cheb_points(tree.n_max, leaf.interval)
        k = g.n + 1
        leaf.interpolant = ChebInterpolant.from_values(F[at : at + k], leaf.interval)
        leaf.values = leaf.interpolant.values
        at += k
    if at != F.size:
        raise ValueError(f"{F.size} values for {at} grid points")


def _seed(tree: PuTree, g: Callable) -> None:
    """Give leaves without an interpolant a provisional degree-n_max one sampled from ``g``."""
    for leaf in tree.leaves():
        if leaf.interpolant is None:
            grid = cheb_points(tree.n_max, leaf.interval)
            leaf.interpolant = ChebInterpolant.from_values(np.asarray(g(grid.points), dtype=float), leaf.interval)


def _pad_degrees(tree: PuTree, min_degree: int = MIN_LEAF_DEGREE) -> None:
    """Raise very low-degree leaves so each keeps both end points and a second derivative."""
    for leaf in tree.leaves():
        p = leaf.interpolant
        if p is not None and p.degree < min_degree:
            c = np.zeros(min_degree + 1)
            c[: p.coeffs.size] = p.coeffs
            leaf.interpolant = ChebInterpolant.from_coeffs(c, leaf.interval)
            leaf.values = leaf.interpolant.values


def _inner_solve(tree, problem, newton_opts):
    disc = discretize(tree)
    if problem.is_linear:
        F = solve_linear(tree, problem, disc)
        r = float(np.linalg.norm(residual_vector(disc, problem, F), np.inf))
        return F, 0, r, disc, True
    res = newton_solve(tree, problem, _leaf_values(tree), disc=disc, **newton_opts)
    return res.F, res.iterations, res.residual_norm, disc, res.converged


def refine_bvp(
    problem: BvpProblem,
    n_max: int = 128,
    t: float = 0.1,
    tol: float = 1e-10,
    *,
    weight_family: str = "bump",
    max_passes: int = 30,
    initial: Optional[Callable] = None,
    newton_opts: Optional[dict] = None,
):
    """Adaptively solve ``problem``; returns ``(tree, F, report)``.

    Each pass solves on the current tree, freezes the blended solution,
    resamples the leaves from it and splits or merges them. The loop stops when
    every leaf resolves; a final solve on that tree gives the returned values.
    """
    start = time.perf_counter()
    newton_opts = dict(newton_opts or {})
    tree = PuTree.single(problem.interval, t=t, n_max=n_max, tol=tol, weight_family=weight_family, merge=True)
    guess = initial or (lambda x: np.zeros_like(x))
    _seed(tree, guess)
    passes = []
    for _ in range(max_passes):
        F, its, rnorm, _, ok = _inner_solve(tree, problem, newton_opts)
        if not ok:
            # an unresolved tree can leave Newton above tolerance; refinement continues
            log.info("pass %d: Newton stopped at |R| = %.3g", len(passes) + 1, rnorm)
        _set_leaf_values(tree, F)
        passes.append(PassRecord(len(tree.leaves()), total_nodes(tree), its, rnorm, ok))
        log.info("pass %d: %d leaves, %d nodes, |R| = %.3g", len(passes), passes[-1].leaves, passes[-1].total_nodes, rnorm)
        s = tree.copy()
        for leaf in tree.leaves():
            leaf.resolved = False
        sample(tree, s)
        splitleaves(tree.root, n_max, t, tol=tol, weight_family=weight_family, sibling_merge=True)
        _pad_degrees(tree)
        if not tree.has_unresolved():
            break
        # new leaves start from the frozen solution
        _seed(tree, s)
    else:
        raise BvpRefinementError(f"solution not resolved after {max_passes} passes")

    F, its, rnorm, disc, ok = _inner_solve(tree, problem, newton_opts)
    if not ok:
        raise BvpRefinementError(f"Newton failed on the final {disc.size}-point tree (|R| = {rnorm:.3g})")
    _set_leaf_values(tree, F)
    report = SolveReport(
        passes=passes,
        total_nodes=total_nodes(tree),
        leaves=len(tree.leaves()),
        residual_norm=rnorm,
        wall_time=time.perf_counter() - start,
        converged=True,
        duplicates=disc.duplicates,
    )
    return tree, F, report


def global_cheb_bvp(
    problem: BvpProblem,
    tol: float = 1e-10,
    n0: int = 128,
    growth: float = 1.5,
    n_cap: int = 4096,
    newton_opts: Optional[dict] = None,
):
    """Single-interval baseline: raise the degree by ``growth`` until the solution chops.

    Returns ``(degree, nodes, tree)`` for the first resolved degree.
    """
    newton_opts = dict(newton_opts or {})
    n = n0
    prev = None
    while n <= n_cap:
        tree = PuTree.single(problem.interval, n_max=128, tol=tol, merge=False)
        grid = cheb_points(n, problem.interval)
        vals = prev(grid.points) if prev is not None else np.zeros(n + 1)
        tree.root.interpolant = ChebInterpolant.from_values(vals, problem.interval)
        F, _, _, _, _ = _inner_solve(tree, problem, newton_opts)
        fit = ChebInterpolant.from_values(F, problem.interval)
        cut = chop(fit.coeffs, tol)
        if cut is not None:
            return cut - 1, n + 1, tree
        prev = fit
        n = int(math.floor(growth * n))
    raise BvpRefinementError(f"global Chebyshev solution unresolved up to degree {n_cap}")


def load_problem(source) -> tuple[BvpProblem, dict]:
    """Read a JSON problem description; returns the problem and solver settings.

    Either ``{"preset": "burgers", "nu": ..., "alpha": ..., "kappa": ...}`` or
    ``{"interval": [a, b], "c2": expr, "c1": expr, "c0": expr, "rhs": expr,
    "bcs": [{"endpoint": "left", "a0": 1, "a1": 0, "value": 0}, ...]}`` with
    expressions in x. Optional ``t``, ``nmax`` and ``tol`` are passed back,
    along with the Burgers parameters under ``"burgers"`` for the preset.
    """
    from .cli import compile_expr

    data = json.loads(source) if isinstance(source, str) else json.load(source)
    settings = {k: data[k] for k in ("t", "nmax", "tol") if k in data}
    if data.get("preset") == "burgers":
        params = {k: float(data.get(k, d)) for k, d in (("nu", 5e-3), ("alpha", 1.0), ("kappa", 2.0))}
        settings["burgers"] = params
        return burgers_problem(**params), settings
    if "preset" in data:
        raise ValueError(f"unknown preset {data['preset']!r}")
    coeffs = [compile_expr(str(data.get(k, d))) for k, d in (("c2", 1), ("c1", 0), ("c0", 0))]
    bcs = tuple(BoundaryCondition(**b) for b in data["bcs"])
    rhs = compile_expr(str(data.get("rhs", 0)))
    return BvpProblem.linear(Interval(*data["interval"]), bcs, rhs, *coeffs), settings
