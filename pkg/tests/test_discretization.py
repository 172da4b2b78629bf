import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cell_probs
from hothand.discretization import (
    StateGrid,
    build_grid,
    discretize_gaussian,
    initial_with_derivatives,
    transition_matrix,
    transition_stack,
)
from hothand.ou import GaussianLaw, OUParams, conditional_law, stationary_law

NBA_FIT = OUParams(0.042, 0.101)


class TestGrid:
    def test_default_grid(self):
        g = build_grid(-2, 2, 100)
        assert g.width == pytest.approx(0.04)
        assert g.midpoints[0] == pytest.approx(-1.98)
        assert g.midpoints[-1] == pytest.approx(1.98)
        assert len(g.boundaries) == 101

    def test_defaults(self):
        g = StateGrid()
        assert (g.lower, g.upper, g.m) == (-2.0, 2.0, 100)

    def test_single_cell(self):
        np.testing.assert_array_equal(build_grid(-1, 1, 1).midpoints, [0.0])

    def test_four_cells(self):
        np.testing.assert_allclose(build_grid(-2, 2, 4).midpoints, [-1.5, -0.5, 0.5, 1.5])

    @pytest.mark.parametrize("lo,hi,m", [(-1, 1, 0), (1, 1, 3), (2, -2, 3), (-1, 1, 2.5)])
    def test_invalid(self, lo, hi, m):
        with pytest.raises(ValueError):
            build_grid(lo, hi, m)

    def test_immutable_arrays(self):
        g = build_grid()
        with pytest.raises(ValueError):
            g.midpoints[0] = 1.0


class TestDiscretizeGaussian:
    def test_symmetric_stationary(self):
        g = build_grid()
        p = discretize_gaussian(g, stationary_law(NBA_FIT))
        np.testing.assert_allclose(p, p[::-1], atol=1e-12, rtol=0)
        assert p.sum() == pytest.approx(1.0, abs=1e-14)

    def test_point_mass_at_midpoint(self):
        g = build_grid(-2, 2, 10)
        p = discretize_gaussian(g, GaussianLaw(float(g.midpoints[3]), 0.0))
        np.testing.assert_array_equal(p, np.eye(10)[3])

    def test_point_mass_on_boundary_goes_up(self):
        g = build_grid(-2, 2, 4)
        np.testing.assert_array_equal(discretize_gaussian(g, GaussianLaw(0.0, 0.0)), [0, 0, 1, 0])
        np.testing.assert_array_equal(discretize_gaussian(g, GaussianLaw(-2.0, 0.0)), [1, 0, 0, 0])
        np.testing.assert_array_equal(discretize_gaussian(g, GaussianLaw(2.0, 0.0)), [0, 0, 0, 1])

    def test_point_mass_outside_range_folds(self):
        g = build_grid(-2, 2, 4)
        np.testing.assert_array_equal(discretize_gaussian(g, GaussianLaw(-7.0, 0.0)), [1, 0, 0, 0])
        np.testing.assert_array_equal(discretize_gaussian(g, GaussianLaw(9.0, 0.0)), [0, 0, 0, 1])

    def test_tail_folding(self):
        g = build_grid(-1, 1, 2)
        p = discretize_gaussian(g, GaussianLaw(0.0, 100.0))
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-15)

    def test_matches_scipy_oracle(self):
        g = build_grid()
        p = discretize_gaussian(g, GaussianLaw(0.3, 0.2))
        np.testing.assert_allclose(p, cell_probs(g.boundaries, 0.3, math.sqrt(0.2)), atol=1e-15)

    def test_monte_carlo(self):
        g = build_grid()
        sd = stationary_law(NBA_FIT).sd
        p = discretize_gaussian(g, stationary_law(NBA_FIT))
        n = 10_000_000
        draws = np.random.default_rng(99).normal(0.0, sd, n)
        idx = np.clip(np.searchsorted(g.boundaries, draws, side="right") - 1, 0, g.m - 1)
        freq = np.bincount(idx, minlength=g.m) / n
        se = np.sqrt(p * (1 - p) / n)
        # cells with p ~ 1e-9 have se ~ 1e-8; allow one count of slack there
        assert np.all(np.abs(freq - p) <= 3 * se + 1.0 / n)


class TestTransitionMatrix:
    def test_zero_gap_identity(self):
        g = build_grid(-2, 2, 17)
        np.testing.assert_array_equal(transition_matrix(g, OUParams(0.7, 2.0), 0.0).matrix, np.eye(17))

    def test_rejects_negative_gap(self):
        with pytest.raises(ValueError):
            transition_matrix(build_grid(), NBA_FIT, -0.5)

    def test_huge_gap_is_stationary(self):
        g = build_grid()
        T = transition_matrix(g, NBA_FIT, 1e4).matrix
        stat = discretize_gaussian(g, stationary_law(NBA_FIT))
        tv = 0.5 * np.abs(T - stat[None, :]).sum(axis=1)
        assert tv.max() < 1e-6

    def test_rows_match_conditional_law(self):
        g = build_grid(-2, 2, 9)
        p = OUParams(0.3, 0.7)
        T = transition_matrix(g, p, 2.5).matrix
        for i, x in enumerate(g.midpoints):
            law = conditional_law(p, float(x), 2.5)
            np.testing.assert_allclose(T[i], cell_probs(g.boundaries, law.mean, law.sd), atol=1e-15)

    def test_monte_carlo_rows(self):
        g = build_grid(-2, 2, 5)
        p = OUParams(0.5, 0.3)
        T = transition_matrix(g, p, 1.0).matrix
        rng = np.random.default_rng(5)
        n = 1_000_000
        for i, x in enumerate(g.midpoints):
            law = conditional_law(p, float(x), 1.0)
            draws = rng.normal(law.mean, law.sd, n)
            idx = np.clip(np.searchsorted(g.boundaries, draws, side="right") - 1, 0, g.m - 1)
            freq = np.bincount(idx, minlength=g.m) / n
            se = np.sqrt(T[i] * (1 - T[i]) / n)
            assert np.all(np.abs(freq - T[i]) <= 3 * se + 1.0 / n)

    def test_stack_matches_single(self):
        g = build_grid(-2, 2, 12)
        gaps = np.array([0.01, 0.5, 3.0, 40.0])
        stack = transition_stack(g, 0.2, 0.4, gaps)
        for gap, T in zip(gaps, stack):
            np.testing.assert_allclose(T, transition_matrix(g, OUParams(0.2, 0.4), gap).matrix, atol=1e-15)

    def test_chapman_kolmogorov_improves_with_m(self):
        p = OUParams(0.3, 0.5)
        errs = []
        for m in (25, 50, 100, 200):
            g = build_grid(-4, 4, m)
            T1 = transition_matrix(g, p, 0.7).matrix
            T2 = transition_matrix(g, p, 1.9).matrix
            T12 = transition_matrix(g, p, 2.6).matrix
            # edge rows carry folded tail mass, which no refinement removes
            interior = np.abs(g.midpoints) <= 2
            errs.append(0.5 * np.abs(T1 @ T2 - T12).sum(axis=1)[interior].max())
        assert all(b < a for a, b in zip(errs, errs[1:])), errs
        assert errs[-1] < 1e-4


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.01, 3.0),
    st.floats(0.01, 3.0),
    st.floats(1e-6, 100.0),
    st.integers(1, 60),
    st.floats(0.1, 5.0),
)
def test_rows_stochastic(theta, sigma, gap, m, half):
    g = build_grid(-half, half, m)
    T = transition_matrix(g, OUParams(theta, sigma), gap).matrix
    assert np.all((T >= 0) & (T <= 1))
    np.testing.assert_allclose(T.sum(axis=1), 1.0, atol=1e-12, rtol=0)


def test_derivatives_match_finite_differences():
    g = build_grid(-2, 2, 15)
    gaps = np.array([0.05, 1.3, 9.0])
    lt, ls = math.log(0.4), math.log(0.6)
    _, dT_t, dT_s = transition_stack(g, 0.4, 0.6, gaps, derivatives=True)
    h = 1e-6

    def stack(a, b):
        return transition_stack(g, math.exp(a), math.exp(b), gaps)

    fd_t = (stack(lt + h, ls) - stack(lt - h, ls)) / (2 * h)
    fd_s = (stack(lt, ls + h) - stack(lt, ls - h)) / (2 * h)
    np.testing.assert_allclose(dT_t, fd_t, atol=1e-8)
    np.testing.assert_allclose(dT_s, fd_s, atol=1e-8)

    _, di_t, di_s = initial_with_derivatives(g, 0.4, 0.6)
    init = lambda a, b: initial_with_derivatives(g, math.exp(a), math.exp(b))[0]
    np.testing.assert_allclose(di_t, (init(lt + h, ls) - init(lt - h, ls)) / (2 * h), atol=1e-8)
    np.testing.assert_allclose(di_s, (init(lt, ls + h) - init(lt, ls - h)) / (2 * h), atol=1e-8)
