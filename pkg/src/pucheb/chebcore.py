"""Chebyshev grids, barycentric interpolation and coefficient chopping.

Everything here works on second-kind Chebyshev points, stored in ascending
order on an arbitrary interval ``[a, b]``. Values and coefficients are plain
float arrays; the Chebyshev coefficients are in the T_k basis of the interval
mapped to ``[-1, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as C
import scipy.fft

__all__ = [
    "Interval",
    "ChebGrid",
    "ChebInterpolant",
    "NonFiniteSampleError",
    "cheb_points",
    "vals_to_coeffs",
    "coeffs_to_vals",
    "chop",
    "plateau_start",
    "fit_adaptive",
    "fit_from_values",
    "fit_global",
    "degree_ladder",
    "bary_weights",
    "bary_eval",
    "bary_matrix",
    "diff_matrix",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-13

# chop needs this many coefficients before it will call anything resolved
MIN_CHOP_LENGTH = 17
# decades of log-envelope tilt across the whole series when placing the cut
_CHOP_TILT = 3.0


class NonFiniteSampleError(ValueError):
    """A sampled function returned inf or nan."""

    def __init__(self, x: float, value: float):
        self.x = float(x)
        self.value = float(value)
        super().__init__(f"function returned non-finite value {self.value!r} at x={self.x!r}")


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[a, b]`` with ``a < b``."""

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"interval endpoints must be finite, got [{a}, {b}]")
        if not a < b:
            raise ValueError(f"degenerate interval [{a}, {b}]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def width(self) -> float:
        return self.b - self.a

    @property
    def mid(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.b - self.a)

    def contains(self, x):
        """Inclusive membership test, vectorised over ``x``."""
        x = np.asarray(x)
        return (x >= self.a) & (x <= self.b)

    def to_reference(self, x):
        """Affine map from ``[a, b]`` onto ``[-1, 1]``."""
        return (np.asarray(x, dtype=float) - self.mid) / self.halfwidth

    def __iter__(self):
        yield self.a
        yield self.b


REFERENCE = Interval(-1.0, 1.0)


@dataclass(frozen=True)
class ChebGrid:
    interval: Interval
    n: int
    points: np.ndarray = field(repr=False, compare=False)

    def __len__(self):
        return self.n + 1


def _reference_points(n: int) -> np.ndarray:
    if n == 0:
        return np.zeros(1)
    # sine form gives exact symmetry about 0
    return np.sin(np.pi * np.arange(-n, n + 1, 2) / (2 * n))


def cheb_points(n: int, interval: Interval = REFERENCE, *, differentiable: bool = False) -> ChebGrid:
    """Second-kind Chebyshev grid of degree ``n`` (``n + 1`` points) on ``interval``.

    Points run from ``interval.a`` to ``interval.b``. With ``differentiable=True``
    a degree-0 grid is rejected, since it cannot carry a derivative.
    """
    n = int(n)
    if n < 0 or (differentiable and n < 1):
        raise ValueError(f"invalid grid degree {n}")
    if not isinstance(interval, Interval):
        interval = Interval(*interval)
    x = interval.mid + interval.halfwidth * _reference_points(n)
    if n > 0:
        x[0], x[-1] = interval.a, interval.b
    x.setflags(write=False)
    return ChebGrid(interval, n, x)


def vals_to_coeffs(values) -> np.ndarray:
    """Chebyshev coefficients of the interpolant through ``values``.

    ``values`` are samples at ascending second-kind points. Uses a type-I DCT.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("vals_to_coeffs needs a non-empty 1-d sequence")
    n = v.size - 1
    if n == 0:
        return v.copy()
    # DCT-I expects samples at cos(pi j / n), i.e. descending order
    c = scipy.fft.dct(v[::-1], type=1) / n
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


def coeffs_to_vals(coeffs) -> np.ndarray:
    """Inverse of :func:`vals_to_coeffs`."""
    c = np.array(coeffs, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("coeffs_to_vals needs a non-empty 1-d sequence")
    if c.size == 1:
        return c
    c[0] *= 2.0
    c[-1] *= 2.0
    return (0.5 * scipy.fft.dct(c, type=1))[::-1].copy()


def plateau_start(coeffs, tol: float = DEFAULT_TOL) -> Optional[int]:
    """First index where the monotone envelope of ``|coeffs|`` drops to ``tol * max``.

    Returns ``None`` when that never happens with at least two coefficients
    left over, or when the series is shorter than 17.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    a = np.abs(np.asarray(coeffs, dtype=float))
    if a.size < MIN_CHOP_LENGTH:
        return None
    scale = a.max()
    if scale == 0.0:
        return 1
    env = np.maximum.accumulate(a[::-1])[::-1]
    below = np.flatnonzero(env <= tol * scale)
    if below.size == 0 or below[0] > a.size - 2:
        return None
    return max(int(below[0]), 1)


def chop(coeffs, tol: float = DEFAULT_TOL) -> Optional[int]:
    """Number of coefficients worth keeping, or ``None`` if unresolved.

    Resolution is decided by :func:`plateau_start`. The cut itself is then
    moved right, at most to where the envelope falls below ``tol**(7/6)``,
    onto the minimum of ``log10(env) + 3 j / len``: the point where the
    coefficients stop decaying faster than a gentle linear tilt. Dropping only
    coefficients that sit on the rounding plateau keeps derivatives of the
    truncated interpolant accurate.

    The cutoff never increases when ``tol`` increases.
    """
    k = plateau_start(coeffs, tol)
    if k is None:
        return None
    a = np.abs(np.asarray(coeffs, dtype=float))
    scale = a.max()
    if scale == 0.0:
        return 1
    env = np.maximum.accumulate(a[::-1])[::-1] / scale
    if env[k] == 0.0:
        return k
    floor = tol ** (7.0 / 6.0)
    hi = min(max(int(np.count_nonzero(env >= floor)), k), a.size - 1)
    j = np.arange(k, hi + 1)
    phi = np.log10(np.maximum(env[j], floor)) + _CHOP_TILT * j / a.size
    return max(int(j[np.argmin(phi)]), 1)


def degree_ladder(n_max: int) -> list[int]:
    """Grid degrees tried by the adaptive fit: 8, 16, ..., n_max."""
    n_max = int(n_max)
    if n_max < 16 or n_max & (n_max - 1):
        raise ValueError(f"n_max must be a power of two >= 16, got {n_max}")
    return [2**k for k in range(3, n_max.bit_length())]


@dataclass(frozen=True)
class ChebInterpolant:
    """Polynomial interpolant stored by its values on a Chebyshev grid."""

    grid: ChebGrid
    values: np.ndarray = field(repr=False)
    coeffs: np.ndarray = field(repr=False)

    @classmethod
    def from_values(cls, values, interval: Interval) -> "ChebInterpolant":
        v = np.array(values, dtype=float)
        v.setflags(write=False)
        c = vals_to_coeffs(v)
        c.setflags(write=False)
        return cls(cheb_points(v.size - 1, interval), v, c)

    @classmethod
    def from_coeffs(cls, coeffs, interval: Interval) -> "ChebInterpolant":
        c = np.array(coeffs, dtype=float)
        c.setflags(write=False)
        v = coeffs_to_vals(c)
        v.setflags(write=False)
        return cls(cheb_points(c.size - 1, interval), v, c)

    @property
    def degree(self) -> int:
        return self.grid.n

    @property
    def interval(self) -> Interval:
        return self.grid.interval

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    @cached_property
    def deriv_values(self) -> np.ndarray:
        """First derivative of the interpolant at its own grid points."""
        return self._deriv_on_grid(1)

    @cached_property
    def deriv2_values(self) -> np.ndarray:
        return self._deriv_on_grid(2)

    def _deriv_on_grid(self, order: int) -> np.ndarray:
        # differentiating the series keeps rounding proportional to k|c_k|
        # rather than to n^2 max|v|, which matters for decaying coefficients
        if self.degree < order:
            return np.zeros(self.degree + 1)
        dc = C.chebder(self.coeffs, order) / self.grid.interval.halfwidth**order
        return C.chebval(_reference_points(self.degree), dc)

    def __call__(self, x):
        return bary_eval(self, x)

    def deriv(self, x, order: int = 1):
        """Evaluate a derivative by interpolating differentiated grid values."""
        if order == 0:
            return bary_eval(self, x)
        vals = {1: self.deriv_values, 2: self.deriv2_values}[order]
        return _bary(self.grid, vals, x)


def _sample(f: Callable, x: np.ndarray) -> np.ndarray:
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape).astype(float)
    bad = ~np.isfinite(y)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteSampleError(x[i], y[i])
    return y


def fit_from_values(values, interval: Interval, tol: float = DEFAULT_TOL) -> Optional[ChebInterpolant]:
    """Run the degree ladder on samples taken at the top grid of the ladder.

    Second-kind grids of degree ``2^j`` nest, so every rung is a strided
    subset of ``values``. Returns the interpolant truncated to the chopped
    length, or ``None`` when no rung resolves.
    """
    v = np.asarray(values, dtype=float)
    n_top = v.size - 1
    for n in degree_ladder(n_top):
        sub = v[:: n_top // n]
        c = vals_to_coeffs(sub)
        cut = chop(c, tol)
        if cut is not None:
            return ChebInterpolant.from_coeffs(c[:cut], interval)
    return None


def fit_adaptive(
    f: Callable, interval: Interval, n_max: int = 128, tol: float = DEFAULT_TOL
) -> Optional[ChebInterpolant]:
    """Sample ``f`` on grids of degree 8, 16, ..., n_max until chop succeeds.

    ``f`` must accept a numpy array. Returns ``None`` if unresolved.
    """
    if not isinstance(interval, Interval):
        interval = Interval(*interval)
    degree_ladder(n_max)
    grid = cheb_points(n_max, interval)
    return fit_from_values(_sample(f, grid.points), interval, tol)


def fit_global(
    f: Callable, interval: Interval = REFERENCE, tol: float = DEFAULT_TOL, n_start: int = 16, n_cap: int = 2**16
) -> tuple[Optional[ChebInterpolant], list[int]]:
    """Single-interval fit by degree doubling, with no cap at ``n_max``.

    Returns the chopped interpolant (or ``None`` if ``n_cap`` is reached)
    and the list of degrees tried.
    """
    if not isinstance(interval, Interval):
        interval = Interval(*interval)
    tried = []
    n = n_start
    while n <= n_cap:
        tried.append(n)
        c = vals_to_coeffs(_sample(f, cheb_points(n, interval).points))
        cut = chop(c, tol)
        if cut is not None:
            return ChebInterpolant.from_coeffs(c[:cut], interval), tried
        n *= 2
    return None, tried


def bary_weights(n: int) -> np.ndarray:
    """Barycentric weights for the degree-``n`` second-kind grid."""
    w = np.ones(n + 1)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _bary(grid: ChebGrid, values: np.ndarray, x):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if grid.n == 0:
        out = np.full(x.shape, float(values[0]))
        return out[0] if scalar else out
    w = bary_weights(grid.n)
    diff = x[:, None] - grid.points[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        c = w / diff
        out = (c @ values) / c.sum(axis=1)
    hit_rows, hit_cols = np.nonzero(exact)
    out[hit_rows] = values[hit_cols]
    return out[0] if scalar else out


def bary_eval(p: ChebInterpolant, x):
    """Evaluate ``p`` at ``x`` (scalar or array) with the barycentric formula.

    Points outside ``p.interval`` are allowed and give the polynomial's value.
    """
    return _bary(p.grid, p.values, x)


def bary_matrix(source: ChebGrid, targets) -> np.ndarray:
    """Dense matrix taking grid values on ``source`` to interpolant values at ``targets``."""
    x = np.atleast_1d(np.asarray(targets, dtype=float))
    if source.n == 0:
        return np.ones((x.size, 1))
    w = bary_weights(source.n)
    diff = x[:, None] - source.points[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        m = w / diff
        m /= m.sum(axis=1, keepdims=True)
    rows = np.flatnonzero(exact.any(axis=1))
    m[rows] = exact[rows].astype(float)
    return m


def _reference_diff_matrix(n: int) -> np.ndarray:
    theta = np.pi * np.arange(n, -1, -1) / n  # ascending points cos(theta)
    # x_i - x_j via the product-of-sines identity, for accuracy near the ends
    dx = 2.0 * np.sin(0.5 * (theta[None, :] + theta[:, None])) * np.sin(
        0.5 * (theta[None, :] - theta[:, None])
    )
    w = bary_weights(n)
    np.fill_diagonal(dx, 1.0)
    d = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def diff_matrix(grid: ChebGrid, order: int = 1) -> np.ndarray:
    """Chebyshev differentiation matrix on ``grid``; order 2 is ``D @ D``."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if grid.n == 0:
        return np.zeros((1, 1))
    d = _reference_diff_matrix(grid.n) / grid.interval.halfwidth
    return d if order == 1 else d @ d
