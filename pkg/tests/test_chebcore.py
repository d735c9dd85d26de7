import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import chebyshev as C

from pucheb.chebcore import (
    ChebInterpolant,
    Interval,
    NonFiniteSampleError,
    bary_eval,
    bary_matrix,
    cheb_points,
    chop,
    coeffs_to_vals,
    degree_ladder,
    diff_matrix,
    fit_adaptive,
    fit_from_values,
    fit_global,
    plateau_start,
    vals_to_coeffs,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestInterval:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Interval(1.0, 1.0)

    def test_reference_map(self):
        iv = Interval(2.0, 6.0)
        np.testing.assert_allclose(iv.to_reference([2.0, 4.0, 6.0]), [-1.0, 0.0, 1.0])


class TestChebPoints:
    @pytest.mark.parametrize("n", [1, 2, 7, 8, 64, 129])
    def test_matches_cosine_formula(self, n):
        x = cheb_points(n).points
        np.testing.assert_allclose(x, -np.cos(np.pi * np.arange(n + 1) / n), atol=1e-15)

    @pytest.mark.parametrize("n", [5, 16, 33])
    def test_symmetric_and_ascending(self, n):
        x = cheb_points(n).points
        assert np.all(np.diff(x) > 0)
        np.testing.assert_array_equal(x, -x[::-1])

    def test_endpoints_exact_on_mapped_interval(self):
        g = cheb_points(16, Interval(0.1, 0.7))
        assert g.points[0] == 0.1 and g.points[-1] == 0.7

    def test_degree_zero(self):
        assert cheb_points(0).points.tolist() == [0.0]
        with pytest.raises(ValueError):
            cheb_points(0, differentiable=True)

    def test_negative_degree(self):
        with pytest.raises(ValueError):
            cheb_points(-1)


class TestTransforms:
    @pytest.mark.parametrize("n", [1, 2, 9, 32])
    def test_against_vandermonde_solve(self, n, rng):
        """DCT coefficients agree with a direct interpolation solve."""
        x = cheb_points(n).points
        v = rng.standard_normal(n + 1)
        ref = np.linalg.solve(C.chebvander(x, n), v)
        np.testing.assert_allclose(vals_to_coeffs(v), ref, atol=1e-12)

    @pytest.mark.parametrize("k", [0, 1, 5, 16])
    def test_single_polynomial(self, k):
        n = 16
        v = C.chebval(cheb_points(n).points, np.eye(n + 1)[k])
        e = np.zeros(n + 1)
        e[k] = 1.0
        np.testing.assert_allclose(vals_to_coeffs(v), e, atol=1e-14)

    @given(st.lists(finite, min_size=1, max_size=70))
    def test_round_trip(self, vals):
        v = np.array(vals)
        back = coeffs_to_vals(vals_to_coeffs(v))
        np.testing.assert_allclose(back, v, atol=1e-12 * max(1.0, np.max(np.abs(v))))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            vals_to_coeffs([])


class TestChop:
    def test_exp_sin_degree(self):
        """Frozen: the smooth test function resolves at degree 49 for tol 1e-14."""
        c = vals_to_coeffs(np.exp(np.sin(np.pi * cheb_points(128).points)))
        assert chop(c, 1e-14) - 1 == 49

    def test_all_zero(self):
        assert chop(np.zeros(40)) == 1

    def test_geometric_decay_too_short(self):
        # 2^-39 is far above 1e-14, so the series never reaches the plateau
        assert chop(2.0 ** -np.arange(40), 1e-14) is None

    def test_geometric_decay_resolved(self):
        c = 2.0 ** -np.arange(80)
        cut = chop(c, 1e-14)
        assert cut is not None
        # the first coefficient below tol is 2^-47
        assert cut >= 47

    def test_short_series(self):
        assert chop(np.ones(16)) is None
        assert plateau_start(np.r_[1.0, np.zeros(15)]) is None

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            chop(np.ones(20), 0.0)

    @given(st.floats(1e-15, 1e-3), st.floats(1e-15, 1e-3), st.integers(0, 2**31 - 1))
    def test_monotone_in_tol(self, t1, t2, seed):
        lo, hi = min(t1, t2), max(t1, t2)
        rng = np.random.default_rng(seed)
        c = np.exp(-0.4 * np.arange(120)) * (1 + 0.5 * rng.standard_normal(120))
        c += 1e-16 * rng.standard_normal(120)
        a, b = chop(c, lo), chop(c, hi)
        if a is not None:
            assert b is not None and b <= a


class TestLadder:
    def test_values(self):
        assert degree_ladder(128) == [8, 16, 32, 64, 128]

    @pytest.mark.parametrize("bad", [8, 100, 0])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            degree_ladder(bad)


class TestBarycentric:
    @pytest.mark.parametrize("n", [0, 1, 4, 20])
    def test_polynomial_exact(self, n, rng):
        iv = Interval(-0.3, 2.0)
        c = rng.standard_normal(n + 1)
        g = cheb_points(n, iv)
        p = ChebInterpolant.from_values(C.chebval(iv.to_reference(g.points), c), iv)
        x = rng.uniform(iv.a, iv.b, 300)
        np.testing.assert_allclose(bary_eval(p, x), C.chebval(iv.to_reference(x), c), atol=1e-13)

    def test_exact_at_nodes(self, rng):
        v = rng.standard_normal(17)
        p = ChebInterpolant.from_values(v, Interval(-1.0, 1.0))
        np.testing.assert_array_equal(p(p.points), v)

    def test_scalar(self):
        p = ChebInterpolant.from_coeffs([0.0, 1.0], Interval(0.0, 2.0))
        assert isinstance(p(1.5), float)
        assert p(1.5) == pytest.approx(0.5)

    def test_matrix_matches_eval(self, rng):
        g = cheb_points(12, Interval(1.0, 3.0))
        v = rng.standard_normal(13)
        x = np.r_[rng.uniform(1.0, 3.0, 50), g.points[3]]
        p = ChebInterpolant.from_values(v, g.interval)
        np.testing.assert_allclose(bary_matrix(g, x) @ v, p(x), atol=1e-13)


class TestDifferentiation:
    @pytest.mark.parametrize("n", [1, 3, 16, 40])
    def test_diff_matrix_polynomial(self, n, rng):
        iv = Interval(-2.0, 1.0)
        g = cheb_points(n, iv)
        c = rng.standard_normal(n + 1)
        s = iv.to_reference(g.points)
        for order in (1, 2):
            ref = C.chebval(s, C.chebder(c, order)) / iv.halfwidth**order
            got = diff_matrix(g, order) @ C.chebval(s, c)
            np.testing.assert_allclose(got, ref, atol=1e-9 * n**2 * max(1.0, np.max(np.abs(ref))))

    def test_finite_difference_oracle(self):
        p = fit_adaptive(np.sin, Interval(0.0, 3.0), 64, 1e-14)
        x = np.linspace(0.1, 2.9, 40)
        h = 1e-5
        fd = (p(x + h) - p(x - h)) / (2 * h)
        np.testing.assert_allclose(p.deriv(x), fd, atol=1e-9)
        np.testing.assert_allclose(p.deriv(x), np.cos(x), atol=1e-13)
        np.testing.assert_allclose(p.deriv(x, 2), -np.sin(x), atol=1e-11)

    def test_low_degree(self):
        p = ChebInterpolant.from_values([3.0], Interval(0.0, 1.0))
        assert p.deriv(0.5) == 0.0
        assert diff_matrix(p.grid).shape == (1, 1)


class TestFitting:
    def test_resolves_entire_function(self):
        p = fit_adaptive(np.exp, Interval(-1.0, 1.0), 128, 1e-13)
        x = np.linspace(-1, 1, 1001)
        assert p.degree < 20
        np.testing.assert_allclose(p(x), np.exp(x), rtol=1e-14)

    def test_unresolved_returns_none(self):
        assert fit_adaptive(lambda x: np.arctan(x / 1e-3), Interval(-1.0, 1.0), 128) is None

    def test_non_finite_sample(self):
        with pytest.raises(NonFiniteSampleError) as info:
            with np.errstate(divide="ignore"):
                fit_adaptive(lambda x: 1.0 / x, Interval(-1.0, 1.0), 16)
        assert info.value.x == 0.0

    def test_constant_function_broadcasts(self):
        p = fit_adaptive(lambda x: 2.5, Interval(-1.0, 1.0), 16)
        assert p.degree == 0 and p(0.3) == 2.5

    def test_from_values_uses_nested_grids(self):
        g = cheb_points(64)
        p = fit_from_values(np.cos(g.points), g.interval, 1e-13)
        assert p is not None and p.degree < 32

    def test_fit_global_doubles(self):
        p, tried = fit_global(lambda x: np.arctan(x / 0.01), tol=1e-13)
        assert tried == [16 * 2**k for k in range(len(tried))]
        x = np.linspace(-1, 1, 2001)
        # coefficients decay like exp(-k/100), so the discarded tail sums to ~100 x tol
        assert np.max(np.abs(p(x) - np.arctan(x / 0.01))) < 1e-9

    def test_fit_global_cap(self):
        p, tried = fit_global(lambda x: np.abs(x), n_cap=256)
        assert p is None and tried[-1] == 256
