"""Adaptive binary tree of overlapping Chebyshev patches.

Leaves carry Chebyshev interpolants; every internal node carries the weight
pair that blends its two children. Refinement alternates between sampling the
target function on every leaf and a recursive pass that resolves, splits and
merges leaves. The product of weights along each root-to-leaf path forms a
partition of unity over the leaves, so evaluating the tree is a smooth blend
of local interpolants.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .chebcore import (
    DEFAULT_TOL,
    ChebInterpolant,
    Interval,
    _sample,
    cheb_points,
    degree_ladder,
    fit_from_values,
)
from .puweights import FAMILIES, WeightFn, extend_weight, make_weight_pair

__all__ = [
    "PuNode",
    "PuTree",
    "RefinementError",
    "MAX_DEPTH",
    "MAX_LEAVES",
    "refine",
    "splitleaves",
    "merge",
    "sample",
    "evaluate",
    "evaluate_deriv",
    "implicit_leaf_weights",
    "leaf_intervals",
    "total_nodes",
    "tree_stats",
]

MAX_DEPTH = 40
# breadth-first splitting of a function that nowhere resolves doubles the leaves each pass
MAX_LEAVES = 4096


class RefinementError(RuntimeError):
    """Refinement could not resolve the function within the depth limit."""


@dataclass(eq=False)
class PuNode:
    interval: Interval
    children: Optional[tuple["PuNode", "PuNode"]] = None
    weights: Optional[tuple[WeightFn, WeightFn]] = None
    interpolant: Optional[ChebInterpolant] = None
    values: Optional[np.ndarray] = field(default=None, repr=False)
    resolved: bool = False

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def leaves(self) -> Iterator["PuNode"]:
        if self.is_leaf:
            yield self
        else:
            for child in self.children:
                yield from child.leaves()

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(c.depth() for c in self.children)

    def make_leaf(self, interpolant: Optional[ChebInterpolant], resolved: bool):
        self.children = None
        self.weights = None
        self.interpolant = interpolant
        self.values = None
        self.resolved = resolved


@dataclass(eq=False)
class PuTree:
    """A refined (or partially refined) partition-of-unity approximant."""

    root: PuNode
    t: float = 0.1
    n_max: int = 128
    tol: float = DEFAULT_TOL
    weight_family: str = "bump"
    merge: bool = True

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"overlap parameter must lie in (0, 1), got {self.t}")
        degree_ladder(self.n_max)
        if self.weight_family not in FAMILIES:
            raise ValueError(f"unknown weight family {self.weight_family!r}")

    @classmethod
    def single(cls, interval: Interval, **kwargs) -> "PuTree":
        if not isinstance(interval, Interval):
            interval = Interval(*interval)
        return cls(PuNode(interval), **kwargs)

    @property
    def interval(self) -> Interval:
        return self.root.interval

    def leaves(self) -> list[PuNode]:
        return list(self.root.leaves())

    def has_unresolved(self) -> bool:
        return any(not leaf.resolved for leaf in self.root.leaves())

    def copy(self) -> "PuTree":
        return copy.deepcopy(self)

    def __call__(self, x):
        return evaluate(self.root, x)

    def deriv(self, x, order: int = 1):
        return evaluate_deriv(self.root, x, order)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "n_max": self.n_max,
            "tol": self.tol,
            "weight_family": self.weight_family,
            "merge": self.merge,
            "root": _node_to_dict(self.root),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PuTree":
        return cls(
            _node_from_dict(d["root"]),
            t=d["t"],
            n_max=d["n_max"],
            tol=d["tol"],
            weight_family=d["weight_family"],
            merge=d.get("merge", True),
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "PuTree":
        return cls.from_dict(json.loads(text))


def _weight_to_dict(w: WeightFn) -> dict:
    return {
        "kind": w.kind,
        "family": w.family,
        "parent": [w.parent.a, w.parent.b],
        "t": w.t,
        "support": [w.support.a, w.support.b],
        "extension_boundary": w.extension_boundary,
    }


def _weight_from_dict(d: dict) -> WeightFn:
    return WeightFn(
        d["kind"], d["family"], Interval(*d["parent"]), d["t"], Interval(*d["support"]), d["extension_boundary"]
    )


def _node_to_dict(node: PuNode) -> dict:
    out = {"interval": [node.interval.a, node.interval.b]}
    if node.is_leaf:
        out["resolved"] = node.resolved
        p = node.interpolant
        if p is not None:
            out["degree"] = p.degree
            out["coefficients"] = p.coeffs.tolist()
            out["values"] = p.values.tolist()
    else:
        out["weights"] = [_weight_to_dict(w) for w in node.weights]
        out["children"] = [_node_to_dict(c) for c in node.children]
    return out


def _node_from_dict(d: dict) -> PuNode:
    node = PuNode(Interval(*d["interval"]))
    if "children" in d:
        node.children = tuple(_node_from_dict(c) for c in d["children"])
        node.weights = tuple(_weight_from_dict(w) for w in d["weights"])
        return node
    node.resolved = d.get("resolved", False)
    if "coefficients" in d:
        c = np.array(d["coefficients"], dtype=float)
        v = np.array(d["values"], dtype=float) if "values" in d else None
        if v is None:
            node.interpolant = ChebInterpolant.from_coeffs(c, node.interval)
        else:
            c.setflags(write=False)
            v.setflags(write=False)
            node.interpolant = ChebInterpolant(cheb_points(c.size - 1, node.interval), v, c)
    return node


# -- refinement ---------------------------------------------------------------


def sample(tree: PuTree, g: Callable) -> None:
    """Set every leaf's ``values`` to ``g`` on the top grid of the degree ladder."""
    for leaf in tree.root.leaves():
        grid = cheb_points(tree.n_max, leaf.interval)
        leaf.values = _sample(g, grid.points)


def _split(node: PuNode, t: float, family: str) -> None:
    left_w, right_w = make_weight_pair(node.interval, t, family)
    node.children = (PuNode(left_w.support), PuNode(right_w.support))
    node.weights = (left_w, right_w)
    node.interpolant = None
    node.values = None
    node.resolved = False


def splitleaves(
    node: PuNode,
    n_max: int,
    t: float,
    *,
    tol: float = DEFAULT_TOL,
    weight_family: str = "bump",
    merge_leaves: bool = True,
    sibling_merge: bool = False,
    max_depth: int = MAX_DEPTH,
    _depth: int = 0,
) -> None:
    """One resolve/split/merge pass over the subtree rooted at ``node``.

    Unresolved leaves must already hold ``values`` from :func:`sample`.
    A leaf that chops gets its minimum-degree interpolant; one that does not
    is split into two fresh leaves. Internal nodes recurse and then try to
    merge.
    """
    if node.is_leaf:
        if node.resolved:
            return
        if node.values is None:
            raise RuntimeError(f"leaf on {node.interval} has not been sampled")
        p = fit_from_values(node.values, node.interval, tol)
        if p is not None and p.degree < n_max:
            node.interpolant = p
            node.resolved = True
            return
        if _depth >= max_depth:
            raise RefinementError(
                f"exceeded {max_depth} levels of splitting near {node.interval}; "
                "the function is not smooth at this resolution"
            )
        _split(node, t, weight_family)
        return
    for child in node.children:
        splitleaves(
            child,
            n_max,
            t,
            tol=tol,
            weight_family=weight_family,
            merge_leaves=merge_leaves,
            sibling_merge=sibling_merge,
            max_depth=max_depth,
            _depth=_depth + 1,
        )
    if merge_leaves:
        merge(node, n_max, tol=tol, sibling=sibling_merge)


def _resolved_leaf(node: PuNode) -> bool:
    return node.is_leaf and node.resolved and node.interpolant is not None


def _blend(w0: WeightFn, p0: ChebInterpolant, w1: WeightFn, p1: ChebInterpolant):
    def s(x):
        out = np.zeros_like(x)
        for w, p in ((w0, p0), (w1, p1)):
            m = p.interval.contains(x)
            out[m] += w(x[m]) * p(x[m])
        return out

    return s


def _fit_blend(s, interval: Interval, n_max: int, tol: float) -> Optional[ChebInterpolant]:
    vals = _sample(s, cheb_points(n_max, interval).points)
    p = fit_from_values(vals, interval, tol)
    if p is None or p.degree >= n_max:
        return None
    return p


def merge(node: PuNode, n_max: int, *, tol: float = DEFAULT_TOL, sibling: bool = False) -> bool:
    """Try to merge a leaf child with the adjacent grandchild leaf.

    With ``sibling=True`` two resolved leaf children may also collapse back
    into their parent. Returns True if the tree changed.
    """
    if node.is_leaf:
        return False
    c0, c1 = node.children
    w0, w1 = node.weights

    if sibling and _resolved_leaf(c0) and _resolved_leaf(c1):
        p = _fit_blend(_blend(w0, c0.interpolant, w1, c1.interpolant), node.interval, n_max, tol)
        if p is not None:
            node.make_leaf(p, resolved=True)
            return True
        return False

    if _resolved_leaf(c0) and not c1.is_leaf and _resolved_leaf(c1.children[0]):
        g0, g1 = c1.children
        union = Interval(c0.interval.a, g0.interval.b)
        p = _fit_blend(_blend(w0, c0.interpolant, w1, g0.interpolant), union, n_max, tol)
        if p is None:
            return False
        merged = PuNode(union, interpolant=p, resolved=True)
        node.weights = (extend_weight(c1.weights[0], union), c1.weights[1])
        node.children = (merged, g1)
        return True

    if _resolved_leaf(c1) and not c0.is_leaf and _resolved_leaf(c0.children[1]):
        g0, g1 = c0.children
        union = Interval(g1.interval.a, c1.interval.b)
        p = _fit_blend(_blend(w0, g1.interpolant, w1, c1.interpolant), union, n_max, tol)
        if p is None:
            return False
        merged = PuNode(union, interpolant=p, resolved=True)
        node.weights = (c0.weights[0], extend_weight(c0.weights[1], union))
        node.children = (g0, merged)
        return True
    return False


def refine(
    f: Callable,
    interval: Interval,
    n_max: int = 128,
    t: float = 0.1,
    tol: float = DEFAULT_TOL,
    *,
    weight_family: str = "bump",
    merge: bool = True,
    max_depth: int = MAX_DEPTH,
    max_leaves: int = MAX_LEAVES,
) -> PuTree:
    """Build a partition-of-unity approximant of ``f`` on ``interval``.

    ``f`` is called with numpy arrays. Raises :class:`RefinementError` if a
    patch still needs splitting after ``max_depth`` levels or the tree grows
    past ``max_leaves`` leaves (typically a tolerance below the noise in
    ``f``).

    >>> import numpy as np
    >>> tree = refine(np.exp, (-1, 1))
    >>> len(tree.leaves()), float(tree(0.0))
    (1, 1.0)
    """
    tree = PuTree.single(interval, t=t, n_max=n_max, tol=tol, weight_family=weight_family, merge=merge)
    while tree.has_unresolved():
        sample(tree, f)
        splitleaves(
            tree.root,
            n_max,
            t,
            tol=tol,
            weight_family=weight_family,
            merge_leaves=merge,
            max_depth=max_depth,
        )
        n = len(tree.leaves())
        if n > max_leaves:
            raise RefinementError(
                f"{n} leaves exceed the limit of {max_leaves}; tol={tol:g} may be below the accuracy of f"
            )
    return tree


# -- evaluation ---------------------------------------------------------------


def _jet(node: PuNode, x: np.ndarray, order: int) -> list[np.ndarray]:
    if node.is_leaf:
        p = node.interpolant
        if p is None:
            raise RuntimeError(f"leaf on {node.interval} has no interpolant")
        return [p.deriv(x, k) for k in range(order + 1)]
    out = [np.zeros_like(x) for _ in range(order + 1)]
    for child, w in zip(node.children, node.weights):
        m = child.interval.contains(x)
        if not m.any():
            continue
        xs = x[m]
        s = _jet(child, xs, order)
        wv = [w(xs)] + [w.deriv(xs, k) for k in range(1, order + 1)]
        out[0][m] += wv[0] * s[0]
        if order >= 1:
            out[1][m] += wv[0] * s[1] + wv[1] * s[0]
        if order >= 2:
            out[2][m] += wv[0] * s[2] + 2.0 * wv[1] * s[1] + wv[2] * s[0]
    return out


def _prepare(node: PuNode, x):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x).ravel()
    if not node.interval.contains(x).all():
        raise ValueError(f"evaluation point outside {node.interval}")
    return x, scalar


def evaluate(node: PuNode, x):
    """Blend of leaf interpolants at ``x``, recursing only into patches containing ``x``."""
    xs, scalar = _prepare(node, x)
    v = _jet(node, xs, 0)[0]
    return float(v[0]) if scalar else v.reshape(np.shape(x))


def evaluate_deriv(node: PuNode, x, order: int = 1):
    """Derivative of the blend by the product rule with analytic weight derivatives."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    xs, scalar = _prepare(node, x)
    v = _jet(node, xs, order)[order]
    return float(v[0]) if scalar else v.reshape(np.shape(x))


def implicit_leaf_weights(tree: PuTree, x) -> np.ndarray:
    """Products of weights along each root-to-leaf path.

    Returns an array with one row per leaf (left to right); for scalar ``x``
    a 1-d array. Rows sum to one wherever ``x`` lies in the root interval.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    rows = []

    def walk(node, acc):
        if node.is_leaf:
            rows.append(np.where(node.interval.contains(xs), acc, 0.0))
            return
        for child, w in zip(node.children, node.weights):
            walk(child, acc * w(xs))

    walk(tree.root, np.ones_like(xs))
    out = np.array(rows)
    return out[:, 0] if np.ndim(x) == 0 else out


def leaf_intervals(tree: PuTree) -> list[Interval]:
    return [leaf.interval for leaf in tree.root.leaves()]


def _leaf_degree(leaf: PuNode, n_max: int) -> int:
    return leaf.interpolant.degree if leaf.interpolant is not None else n_max


def total_nodes(tree: PuTree) -> int:
    """Total number of grid points, summed over leaves."""
    return sum(_leaf_degree(leaf, tree.n_max) + 1 for leaf in tree.root.leaves())


def tree_stats(tree: PuTree) -> dict:
    leaves = tree.leaves()
    return {
        "leaves": len(leaves),
        "depth": tree.root.depth(),
        "total_nodes": total_nodes(tree),
        "degrees": [_leaf_degree(leaf, tree.n_max) for leaf in leaves],
        "intervals": [[leaf.interval.a, leaf.interval.b] for leaf in leaves],
        "t": tree.t,
        "n_max": tree.n_max,
        "tol": tree.tol,
        "weight_family": tree.weight_family,
    }
