import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hothand.ou import GaussianLaw, OUParams, conditional_law, simulate_paths, simulate_trajectory, stationary_law

NBA_FIT = OUParams(theta=0.042, sigma=0.101)


class TestConditionalLaw:
    def test_worked_example_short_gap(self):
        law = conditional_law(NBA_FIT, -0.092, 1.65)
        assert round(law.mean, 3) == -0.086
        assert round(law.variance, 3) == 0.016

    def test_worked_example_long_gap(self):
        law = conditional_law(NBA_FIT, -0.084, 12.22)
        assert round(law.mean, 3) == -0.050
        assert round(law.variance, 3) == 0.078

    def test_zero_gap_is_point_mass(self):
        law = conditional_law(NBA_FIT, 0.3, 0.0)
        assert law == GaussianLaw(0.3, 0.0)

    def test_long_gap_reaches_stationary(self):
        law = conditional_law(OUParams(0.5, 1.0), 5.0, 200.0)
        assert abs(law.mean) < 1e-12
        assert law.variance == pytest.approx(1.0, abs=1e-12)

    def test_huge_gap_matches_stationary_law(self):
        law = conditional_law(NBA_FIT, 1.7, 1e4)
        stat = stationary_law(NBA_FIT)
        assert abs(law.mean - stat.mean) < 1e-9
        assert abs(law.variance - stat.variance) < 1e-9

    @pytest.mark.parametrize("delta", [-1e-9, -1.0, math.nan])
    def test_rejects_bad_delta(self, delta):
        with pytest.raises(ValueError):
            conditional_law(NBA_FIT, 0.0, delta)

    @pytest.mark.parametrize("s", [math.inf, -math.inf, math.nan])
    def test_rejects_non_finite_state(self, s):
        with pytest.raises(ValueError):
            conditional_law(NBA_FIT, s, 1.0)


class TestParams:
    @pytest.mark.parametrize("theta,sigma", [(0, 1), (-1, 1), (1, 0), (1, -2), (math.nan, 1), (1, math.inf)])
    def test_invalid(self, theta, sigma):
        with pytest.raises(ValueError):
            OUParams(theta, sigma)

    def test_mu_is_zero(self):
        assert NBA_FIT.mu == 0.0

    def test_stationary_sd_nba_fit(self):
        assert round(stationary_law(NBA_FIT).sd, 3) == 0.348

    def test_stationary_unit(self):
        assert stationary_law(OUParams(0.5, 1.0)).variance == pytest.approx(1.0)


params_st = st.builds(OUParams, st.floats(0.01, 3.0), st.floats(0.01, 3.0))


@settings(max_examples=200, deadline=None)
@given(params_st, st.floats(-3, 3), st.floats(0, 50), st.floats(0, 50))
def test_variance_monotone_and_bounded(params, s, d1, d2):
    lo, hi = sorted((d1, d2))
    v_lo = conditional_law(params, s, lo).variance
    v_hi = conditional_law(params, s, hi).variance
    assert v_lo <= v_hi + 1e-15
    assert v_hi <= params.stationary_variance * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(params_st, st.floats(-3, 3).filter(lambda s: s != 0), st.floats(0, 50), st.floats(0, 50))
def test_mean_shrinks_and_keeps_sign(params, s, d1, d2):
    lo, hi = sorted((d1, d2))
    m_lo = conditional_law(params, s, lo).mean
    m_hi = conditional_law(params, s, hi).mean
    assert abs(m_hi) <= abs(m_lo)
    assert m_hi == 0 or math.copysign(1, m_hi) == math.copysign(1, s)


@settings(max_examples=200, deadline=None)
@given(params_st, st.floats(-3, 3), st.floats(0.0, 20), st.floats(0.0, 20))
def test_semigroup(params, s, d1, d2):
    first = conditional_law(params, s, d1)
    decay2 = math.exp(-params.theta * d2)
    second = conditional_law(params, 0.0, d2)
    # mean propagates linearly; variance by the law of total variance
    mean = decay2 * first.mean
    var = decay2**2 * first.variance + second.variance
    both = conditional_law(params, s, d1 + d2)
    assert mean == pytest.approx(both.mean, abs=1e-10)
    assert var == pytest.approx(both.variance, abs=1e-10)


def test_variance_equals_stationary_when_theta_delta_large():
    p = OUParams(0.8, 0.6)
    assert conditional_law(p, 1.0, 40 / 0.8).variance == pytest.approx(p.stationary_variance, abs=1e-9)


class TestSimulation:
    def test_length(self):
        path = simulate_trajectory(NBA_FIT, 0.0, 48.0, 0.01, seed=1)
        assert len(path) == 4801
        assert path[0] == (0.0, 0.0)
        assert path[-1][0] == pytest.approx(48.0)

    def test_length_uneven(self):
        assert len(simulate_trajectory(NBA_FIT, 0.0, 1.0, 0.3, seed=1)) == math.ceil(1.0 / 0.3) + 1

    def test_noiseless_decay(self):
        path = simulate_trajectory(NBA_FIT, 1.0, 48.0, 0.01, seed=3, sigma_override=0.0)
        t = np.array([p[0] for p in path])
        s = np.array([p[1] for p in path])
        assert np.max(np.abs(s - np.exp(-0.042 * t))) < 0.042 * 0.01

    def test_fixed_point(self):
        path = simulate_trajectory(NBA_FIT, 0.0, 10.0, 0.01, seed=3, sigma_override=0.0)
        assert all(s == 0.0 for _, s in path)

    def test_seed_determinism(self):
        a = simulate_trajectory(NBA_FIT, 0.0, 48.0, 0.01, seed=11)
        b = simulate_trajectory(NBA_FIT, 0.0, 48.0, 0.01, seed=11)
        c = simulate_trajectory(NBA_FIT, 0.0, 48.0, 0.01, seed=12)
        assert a == b
        assert a != c

    @pytest.mark.parametrize("t_end,dt", [(0, 0.1), (-1, 0.1), (1, 0), (1, -0.1), (1, 2)])
    def test_rejects_bad_steps(self, t_end, dt):
        with pytest.raises(ValueError):
            simulate_trajectory(NBA_FIT, 0.0, t_end, dt, seed=0)

    def test_terminal_variance(self):
        _, states = simulate_paths(NBA_FIT, 0.0, 48.0, 0.01, 10_000, seed=5)
        var = states[:, -1].var(ddof=1)
        assert abs(var / NBA_FIT.stationary_variance - 1) < 0.05
