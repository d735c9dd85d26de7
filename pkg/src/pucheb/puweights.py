"""Partition-of-unity weight pairs for an overlapping two-way split.

A split of ``[a, b]`` with overlap parameter ``t`` produces the children
``[a, a + delta]`` and ``[b - delta, b]`` with ``delta = (b - a)(1 + t)/2``.
The two weights sum to one on ``[a, b]``, equal 1 or 0 outside the overlap
``[b - delta, a + delta]``, and blend smoothly inside it.

The smooth-bump family is the Shepard ratio of two copies of

    psi(x) = exp(1 - 1/(1 - x^2)),  |x| < 1

centred on ``a`` and ``b`` with radius ``delta``. Written as a ratio of
exponentials it collapses to a logistic function of

    g(x) = 1/(1 - u_r^2) - 1/(1 - u_l^2),   u_l = (x - a)/delta, u_r = (x - b)/delta

so ``w_left = expit(g)``. That form never divides two underflowed numbers and
makes ``w_left' = -w_right'`` hold bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .chebcore import Interval

__all__ = [
    "WeightFn",
    "shape_psi",
    "shape_psi_prime",
    "make_weight_pair",
    "make_cubic_weight_pair",
    "weight_eval",
    "weight_deriv",
    "weight_deriv_maxnorm",
    "extend_weight",
    "FAMILIES",
]

FAMILIES = ("bump", "cubic")

# closed form for max |w'| is only valid below this overlap
_CLOSED_FORM_T_LIMIT = 0.4


def shape_psi(x):
    """Compactly supported C-infinity bump, 1 at the origin and 0 for ``|x| >= 1``."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    xi = np.where(inside, x, 0.0)
    out = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - xi * xi)), 0.0)
    return out[()] if out.ndim == 0 else out


def shape_psi_prime(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    xi = np.where(inside, x, 0.0)
    q = 1.0 - xi * xi
    out = np.where(inside, np.exp(1.0 - 1.0 / q) * (-2.0 * xi) / (q * q), 0.0)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class WeightFn:
    """One member of a two-element partition of unity.

    ``parent`` is the interval that was split, ``support`` the region where the
    weight may be nonzero. A merge can extend ``support`` past ``parent`` on
    the side where the weight is identically 1; ``extension_boundary`` then
    records the overlap edge from which the weight is clamped to 1.
    """

    kind: str
    family: str
    parent: Interval
    t: float
    support: Interval
    extension_boundary: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("left", "right"):
            raise ValueError(f"kind must be 'left' or 'right', got {self.kind!r}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown weight family {self.family!r}")
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"overlap parameter must lie in (0, 1), got {self.t}")

    @property
    def delta(self) -> float:
        return self.parent.halfwidth * (1.0 + self.t)

    @property
    def overlap(self) -> Interval:
        return Interval(self.parent.b - self.delta, self.parent.a + self.delta)

    def __call__(self, x):
        return weight_eval(self, x)

    def deriv(self, x, order: int = 1):
        return weight_deriv(self, x, order)


def _check_t(t):
    if not 0.0 < t < 1.0:
        raise ValueError(f"overlap parameter must lie in (0, 1), got {t}")


def _pair(parent: Interval, t: float, family: str):
    _check_t(t)
    if not isinstance(parent, Interval):
        parent = Interval(*parent)
    delta = parent.halfwidth * (1.0 + t)
    left = WeightFn("left", family, parent, t, Interval(parent.a, parent.a + delta))
    right = WeightFn("right", family, parent, t, Interval(parent.b - delta, parent.b))
    return left, right


def make_weight_pair(parent: Interval, t: float, family: str = "bump"):
    """Left and right weights for splitting ``parent`` with overlap ``t``."""
    return _pair(parent, t, family)


def make_cubic_weight_pair(parent: Interval, t: float):
    """C1 piecewise-cubic pair; ``max|w'| = 3/(4t)`` on ``[-1, 1]``."""
    return _pair(parent, t, "cubic")


def _bump_jet(w: WeightFn, x: np.ndarray, order: int):
    """Value and derivatives of the left weight at points inside the open overlap."""
    p, d = w.parent, w.delta
    ul = (x - p.a) / d
    ur = (x - p.b) / d
    ql = 1.0 - ul * ul
    qr = 1.0 - ur * ur
    g = 1.0 / qr - 1.0 / ql
    s = expit(g)
    if order == 0:
        return s
    s1 = expit(g) * expit(-g)
    g1 = (2.0 * ur / (qr * qr) - 2.0 * ul / (ql * ql)) / d
    live = s1 > 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        if order == 1:
            return np.where(live, s1 * g1, 0.0)
        g2 = ((2.0 + 6.0 * ur * ur) / qr**3 - (2.0 + 6.0 * ul * ul) / ql**3) / (d * d)
        out = s1 * ((1.0 - 2.0 * s) * g1 * g1 + g2)
    return np.where(live, out, 0.0)


def _cubic_jet(w: WeightFn, x: np.ndarray, order: int):
    p, t = w.parent, w.t
    h = p.halfwidth
    y = (x - p.mid) / h
    if order == 0:
        return y**3 / (4.0 * t**3) - 3.0 * y / (4.0 * t) + 0.5
    if order == 1:
        return (3.0 * y * y / (4.0 * t**3) - 3.0 / (4.0 * t)) / h
    return (1.5 * y / t**3) / (h * h)


def _jet(w: WeightFn, x, order: int):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    ov = w.overlap
    # the left weight's profile; the right one is its complement
    if order == 0:
        # points within rounding distance of an overlap edge take that edge's value
        base = np.where(x <= ov.mid, 1.0, 0.0)
    else:
        base = np.zeros_like(x)
    pad = 1e-14 * w.parent.width
    mid = (x > ov.a + pad) & (x < ov.b - pad)
    if mid.any():
        jet = _bump_jet if w.family == "bump" else _cubic_jet
        base[mid] = jet(w, x[mid], order)
    if w.kind == "right":
        base = 1.0 - base if order == 0 else -base
    # an extended support already covers the clamped-to-1 region
    out = np.where(w.support.contains(x), base, 0.0)
    return out[0] if scalar else out


def weight_eval(w: WeightFn, x):
    """Weight value; exactly 0.0 or 1.0 outside the overlap."""
    return _jet(w, x, 0)


def weight_deriv(w: WeightFn, x, order: int = 1):
    """Analytic first or second derivative; exactly 0 outside the overlap."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if order == 2 and w.family == "cubic":
        raise ValueError("cubic weights are only C1; their second derivative jumps at the overlap edges")
    return _jet(w, x, order)


def weight_deriv_maxnorm(t: float) -> float:
    """``max|w_left'|`` for the smooth-bump split of ``[-1, 1]``; grows like t^-2.

    Below t = 0.4 the maximum sits at the centre of the overlap and has the
    closed form ``(1+t)^2 / (t^2 (2+t)^2)``; otherwise it is found by sampling.
    """
    _check_t(t)
    if t < _CLOSED_FORM_T_LIMIT:
        return (1.0 + t) ** 2 / (t * t * (2.0 + t) ** 2)
    left, _ = make_weight_pair(Interval(-1.0, 1.0), t)
    x = np.linspace(-t, t, 200_001)
    return float(np.max(np.abs(weight_deriv(left, x))))


def extend_weight(w: WeightFn, new_interval: Interval) -> WeightFn:
    """Extend ``w`` by the constant 1 over ``new_interval``.

    ``new_interval`` must contain the weight's support and may only reach past
    it on the side where ``w`` already equals 1 (left of the overlap for a left
    weight, right of it for a right weight). The result is still smooth because
    the junction lies inside the region where ``w`` is identically 1.
    """
    if not isinstance(new_interval, Interval):
        new_interval = Interval(*new_interval)
    s = w.support
    slack = 1e-12 * max(s.width, new_interval.width)
    if new_interval.a > s.a + slack or new_interval.b < s.b - slack:
        raise ValueError(f"{new_interval} does not contain the weight support {s}")
    ov = w.overlap
    if w.kind == "left":
        if new_interval.b > s.b + slack:
            raise ValueError("a left weight can only be extended to the left")
        junction = ov.a
        support = Interval(min(new_interval.a, s.a), s.b)
    else:
        if new_interval.a < s.a - slack:
            raise ValueError("a right weight can only be extended to the right")
        junction = ov.b
        support = Interval(s.a, max(new_interval.b, s.b))
    if support == s:
        return w
    if not (s.a <= junction <= s.b) or math.isclose(junction, s.b if w.kind == "left" else s.a):
        raise ValueError("extension junction is outside the region where the weight equals 1")
    return replace(w, support=support, extension_boundary=junction)
