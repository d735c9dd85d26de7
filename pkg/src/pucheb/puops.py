"""Sparse interpolation and differentiation matrices over a partition-of-unity tree.

Columns index the concatenated leaf grids (the values that define the leaf
interpolants), rows index every one of those points again, now as places
where the blended approximant is evaluated. For each node the block that maps
the values under it to the points inside its interval is built from the two
child blocks:

    M = sum_k diag(w_k) M_k
    D = sum_k diag(w_k) D_k + diag(w_k') M_k

with the weights evaluated at the child's rows. Leaves contribute a dense
barycentric block and its product with the Chebyshev differentiation matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np
import scipy.sparse as sp

from .chebcore import ChebGrid, bary_matrix, cheb_points, diff_matrix
from .putree import PuNode, PuTree

__all__ = [
    "PointSets",
    "collect_point_sets",
    "assemble",
    "operator_matrices",
    "sparsity_ratio",
    "boundary_and_interior_selectors",
    "duplicate_points",
    "export_triplets",
    "leaf_grids",
]

log = logging.getLogger(__name__)


def leaf_grids(tree: PuTree) -> list[ChebGrid]:
    """Current grid of every leaf; leaves without an interpolant use degree ``n_max``."""
    out = []
    for leaf in tree.root.leaves():
        if leaf.interpolant is not None:
            out.append(leaf.interpolant.grid)
        else:
            out.append(cheb_points(tree.n_max, leaf.interval))
    return out


@dataclass(eq=False)
class PointSets:
    """Point bookkeeping for one node, mirroring the tree shape.

    ``points`` are the leaf grid points under the node, in leaf order, and
    ``cols`` their positions in the root's column numbering. ``leafpoints``
    are all root points inside the node interval, ``rows`` their root
    positions. ``pointindex`` and ``leafpointindex`` locate this node's sets
    within its parent's.
    """

    node: PuNode
    points: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    leafpoints: np.ndarray = field(repr=False)
    rows: np.ndarray = field(repr=False)
    pointindex: Optional[np.ndarray] = field(default=None, repr=False)
    leafpointindex: Optional[np.ndarray] = field(default=None, repr=False)
    children: Optional[tuple["PointSets", "PointSets"]] = None
    grid: Optional[ChebGrid] = None
    weight_family: str = "bump"

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.size, self.cols.size


def collect_point_sets(tree: PuTree) -> PointSets:
    """Build the point hierarchy for a tree whose leaves all have grids.

    Coincident coordinates on different leaves are kept as separate entries;
    they are reported through :func:`duplicate_points`.
    """
    grids = iter(leaf_grids(tree))
    X = np.concatenate([g.points for g in leaf_grids(tree)])
    counter = [0]

    def build(node: PuNode, parent: Optional[PointSets]) -> PointSets:
        rows = np.flatnonzero(node.interval.contains(X))
        if node.is_leaf:
            g = next(grids)
            start = counter[0]
            counter[0] += g.n + 1
            cols = np.arange(start, counter[0])
            ps = PointSets(node, X[cols], cols, X[rows], rows, grid=g, weight_family=tree.weight_family)
        else:
            ps = PointSets(node, None, None, X[rows], rows, weight_family=tree.weight_family)
            kids = tuple(build(c, ps) for c in node.children)
            ps.children = kids
            ps.cols = np.concatenate([k.cols for k in kids])
            ps.points = X[ps.cols]
            for k in kids:
                k.pointindex = k.cols - ps.cols[0]
                k.leafpointindex = np.searchsorted(ps.rows, k.rows)
        return ps

    root = build(tree.root, None)
    dups = duplicate_points(root)
    if dups.size:
        log.warning("%d grid coordinates appear on more than one leaf", dups.size)
    return root


def duplicate_points(ps: PointSets) -> np.ndarray:
    """Coordinates that occur more than once among the root points."""
    vals, counts = np.unique(ps.points, return_counts=True)
    return vals[counts > 1]


def _scale_rows(v: np.ndarray, a: sp.coo_matrix):
    return v[a.row] * a.data


def _assemble(ps: PointSets, order: int) -> list[sp.coo_matrix]:
    shape = ps.shape
    if ps.is_leaf:
        m = bary_matrix(ps.grid, ps.leafpoints)
        mats = [m]
        if order >= 1:
            mats.append(m @ diff_matrix(ps.grid, 1))
        if order >= 2:
            mats.append(m @ diff_matrix(ps.grid, 2))
        return [sp.coo_matrix(a) for a in mats]

    rows, cols = [[] for _ in range(order + 1)], [[] for _ in range(order + 1)]
    data = [[] for _ in range(order + 1)]
    for kid, w in zip(ps.children, ps.node.weights):
        sub = _assemble(kid, order)
        x = kid.leafpoints
        wv = [w(x)] + [w.deriv(x, k) for k in range(1, order + 1)]
        for j in range(order + 1):
            terms = [(wv[0], sub[j])]
            if j >= 1:
                terms.append((j * wv[1], sub[j - 1]))
            if j >= 2:
                terms.append((wv[2], sub[0]))
            for v, a in terms:
                rows[j].append(kid.leafpointindex[a.row])
                cols[j].append(kid.pointindex[a.col])
                data[j].append(_scale_rows(v, a))
    out = []
    for j in range(order + 1):
        a = sp.coo_matrix(
            (np.concatenate(data[j]), (np.concatenate(rows[j]), np.concatenate(cols[j]))), shape=shape
        )
        a.sum_duplicates()
        a.eliminate_zeros()
        out.append(a)
    return out


def operator_matrices(ps: PointSets, order: int = 1) -> list[sp.csr_matrix]:
    """``[M, D]`` (or ``[M, D, D2]`` for ``order=2``) for the subtree at ``ps``."""
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    if order == 2 and ps.weight_family == "cubic":
        raise ValueError("second-derivative matrices need C2 weights; the cubic family is only C1")
    return [a.tocsr() for a in _assemble(ps, order)]


def assemble(ps: PointSets, order: int = 1) -> sp.csr_matrix:
    """Interpolation (order 0), first or second derivative matrix for the subtree at ``ps``."""
    return operator_matrices(ps, order)[order]


def _iter_leaves(ps: PointSets):
    if ps.is_leaf:
        yield ps
    else:
        for k in ps.children:
            yield from _iter_leaves(k)


def sparsity_ratio(m) -> float:
    """Fraction of entries that are exactly zero."""
    rows, cols = m.shape
    if rows == 0 or cols == 0:
        raise ValueError("sparsity ratio of an empty matrix is undefined")
    if sp.issparse(m):
        nnz = int(np.count_nonzero(m.tocoo().data))
    else:
        nnz = int(np.count_nonzero(np.asarray(m)))
    return 1.0 - nnz / (rows * cols)


def boundary_and_interior_selectors(ps: PointSets) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of interior points and of points on the root interval's ends."""
    iv = ps.node.interval
    eps = 1e-14 * iv.width
    x = ps.leafpoints
    on_edge = (np.abs(x - iv.a) <= eps) | (np.abs(x - iv.b) <= eps)
    return np.flatnonzero(~on_edge), np.flatnonzero(on_edge)


def export_triplets(m, stream: TextIO) -> None:
    """Write ``row col value`` lines, sorted by row then column."""
    a = sp.coo_matrix(m)
    order = np.lexsort((a.col, a.row))
    for i in order:
        stream.write(f"{a.row[i]} {a.col[i]} {a.data[i]:.17g}\n")
