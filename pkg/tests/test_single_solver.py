import numpy as np
import pytest

from distdetect.model import make_sensor
from distdetect.oracles import exhaustive_min_risk
from distdetect.posterior import posterior_update
from distdetect.single_solver import (ConstantRule, NoConvergence, PiGrid, ThresholdRule, bellman_backup,
                                      policy_risk_exact, policy_risk_posterior_form, solve_finite_horizon,
                                      solve_fixed_point, stop_region, stopping_payoff)

from helpers import TWO_STATE, OTHER_TWO_STATE, random_sensor

GRID = PiGrid.uniform(101)


def hand_backup(v, model, grid, x, pi):
    """One Bellman step at a single (x, pi), written out term by term."""
    c, p = model.delay_cost, model.prior.p
    total = c * pi
    for y in range(model.states):
        f0, f1 = model.pre.probs[x, y], model.post.probs[x, y]
        w = (pi + (1 - pi) * (1 - p)) * f1 + (1 - pi) * p * f0
        if w == 0:
            continue
        total += w * np.interp(posterior_update(pi, x, y, model), grid.points, v[y])
    return min(1 - pi, total)


class TestGrid:
    @pytest.mark.parametrize("pts", [[0.0, 0.5], [0.1, 1.0], [0.0, 0.6, 0.4, 1.0], [1.0]])
    def test_invalid(self, pts):
        with pytest.raises(ValueError):
            PiGrid(np.array(pts))

    def test_reachable_contains_prior(self):
        g = PiGrid.reachable(TWO_STATE, 3)
        assert TWO_STATE.prior.pi0 in g.points

    def test_reachable_closed_under_filter(self):
        g = PiGrid.reachable(TWO_STATE, 2)
        pi1 = posterior_update(TWO_STATE.prior.pi0, 0, 1, TWO_STATE)
        assert posterior_update(pi1, 1, 1, TWO_STATE) in g.points


class TestBellman:
    def test_certain_disorder_row_is_zero(self):
        v = bellman_backup(stopping_payoff(TWO_STATE, GRID), TWO_STATE, GRID)
        np.testing.assert_array_equal(v[:, -1], 0.0)

    def test_zero_value(self):
        v = bellman_backup(np.zeros((2, len(GRID))), TWO_STATE, GRID)
        expected = np.minimum(1 - GRID.points, TWO_STATE.delay_cost * GRID.points)
        np.testing.assert_allclose(v, np.tile(expected, (2, 1)), rtol=0, atol=1e-15)

    def test_hand_expansion(self):
        rng = np.random.default_rng(0)
        v = rng.random((2, len(GRID)))
        got = bellman_backup(v, TWO_STATE, GRID)
        for x in range(2):
            for j in range(0, len(GRID), 7):
                assert got[x, j] == pytest.approx(hand_backup(v, TWO_STATE, GRID, x, GRID.points[j]), abs=1e-14)

    def test_never_above_stopping(self):
        v = bellman_backup(np.ones((2, len(GRID))), OTHER_TWO_STATE, GRID)
        assert np.all(v <= 1 - GRID.points + 1e-15)


class TestFixedPoint:
    def test_large_cost_stops_everywhere(self):
        m = make_sensor(TWO_STATE.pre.probs, TWO_STATE.post.probs, 0.05, 0.9, 10.0)
        sol = solve_fixed_point(m, GRID)
        # at pi = 0 waiting is free, so only pi > 0 is forced to stop
        assert sol.region.stop[:, 1:].all()
        np.testing.assert_array_equal(sol.values[:, 1:], stopping_payoff(m, GRID)[:, 1:])

    def test_uninformative_value_ignores_state(self):
        k = [[0.6, 0.4], [0.2, 0.8]]
        m = make_sensor(k, k, 0.1, 0.9, 0.1)
        sol = solve_fixed_point(m, GRID, tol=1e-12)
        assert np.max(np.ptp(sol.values, axis=0)) <= 1e-9

    def test_residual(self):
        sol = solve_fixed_point(TWO_STATE, GRID, tol=1e-10)
        assert np.max(np.abs(bellman_backup(sol.values, TWO_STATE, GRID) - sol.values)) <= 1e-9
        assert sol.residual <= 1e-10

    def test_region_is_upper_set(self):
        sol = solve_fixed_point(TWO_STATE, PiGrid.uniform(501))
        assert sol.region.upper_sets
        assert all(t is not None for t in sol.region.thresholds)

    def test_no_convergence(self):
        with pytest.raises(NoConvergence):
            solve_fixed_point(TWO_STATE, GRID, tol=1e-15, max_iter=3)

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            solve_fixed_point(TWO_STATE, GRID, tol=0.0)

    def test_finite_horizon_approaches_fixed_point(self):
        fp = solve_fixed_point(OTHER_TWO_STATE, GRID, tol=1e-9)
        fh = solve_finite_horizon(OTHER_TWO_STATE, GRID, 50)
        assert np.max(np.abs(fh.values[50] - fp.values)) <= 1e-6

    def test_horizon_gap_shrinks(self):
        # slow hazard: 50 steps is not yet 1e-6 close, but the gap keeps closing
        fp = solve_fixed_point(TWO_STATE, GRID, tol=1e-12)
        fh = solve_finite_horizon(TWO_STATE, GRID, 150)
        gaps = [np.max(np.abs(fh.values[k] - fp.values)) for k in (25, 50, 100, 150)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 1e-6


class TestStopRegion:
    def test_non_upper_set_flagged(self, caplog):
        g = PiGrid.uniform(5)
        r = stop_region(np.array([[False, True, False, True, True]]), g)
        assert not r.upper_sets and r.thresholds == [None]
        assert "upper set" in caplog.text

    def test_thresholds(self):
        g = PiGrid.uniform(5)
        r = stop_region(np.array([[False, False, True, True, True], [False] * 5]), g)
        assert r.thresholds == [0.5, None]


class TestFiniteHorizon:
    def test_zero_horizon_stops(self):
        sol = solve_finite_horizon(TWO_STATE, GRID, 0)
        assert sol.value_at(0, 0.05) == pytest.approx(0.95)
        assert sol.decide(0, 0, 0.05)

    def test_certain_disorder_costs_nothing(self):
        m = make_sensor(TWO_STATE.pre.probs, TWO_STATE.post.probs, 1.0, 0.9, 0.1)
        sol = solve_finite_horizon(m, PiGrid.reachable(m, 5), 5)
        assert sol.value_at(0, 1.0) == 0.0
        assert policy_risk_exact(m, sol, 5)[2] == 0.0

    def test_negative_horizon(self):
        with pytest.raises(ValueError):
            solve_finite_horizon(TWO_STATE, GRID, -1)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_exhaustive_search(self, seed):
        m = random_sensor(np.random.default_rng(seed), 2)
        n = 3
        sol = solve_finite_horizon(m, PiGrid.reachable(m, n), n)
        best, _ = exhaustive_min_risk(m, n)
        v = sol.value_at(m.initial_state, m.prior.pi0)
        assert abs(v - best) <= 1e-10
        assert abs(policy_risk_exact(m, sol, n)[2] - v) <= 1e-12

    def test_monotone_in_horizon(self):
        sol = solve_finite_horizon(TWO_STATE, GRID, 10)
        for a, b in zip(sol.values[:-1], sol.values[1:]):
            assert np.all(b <= a + 1e-15)


class TestPolicyRisk:
    def test_always_stop(self):
        fa, dl, risk = policy_risk_exact(TWO_STATE, ConstantRule(True), 6)
        assert fa == pytest.approx(1 - TWO_STATE.prior.pi0, abs=1e-15)
        assert dl == 0.0

    def test_never_stop_is_forced_at_horizon(self):
        n = 6
        fa, dl, risk = policy_risk_exact(TWO_STATE, ConstantRule(False), n)
        prior = TWO_STATE.prior
        assert fa == pytest.approx((1 - prior.pi0) * prior.p ** n, abs=1e-14)
        # E(n - theta)^+ from the prior
        pmf = [prior.pi0] + [(1 - prior.pi0) * prior.p ** (j - 1) * prior.q for j in range(1, n + 1)]
        assert dl == pytest.approx(sum(w * (n - j) for j, w in enumerate(pmf)), abs=1e-12)
        assert risk == pytest.approx(fa + TWO_STATE.delay_cost * dl, abs=1e-14)

    def test_two_forms_agree(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m = random_sensor(rng, int(rng.integers(2, 4)))
            rule = ThresholdRule(rng.random(m.states))
            a = policy_risk_exact(m, rule, 5)[2]
            b = policy_risk_posterior_form(m, rule, 5)
            assert abs(a - b) <= 1e-12

    def test_dp_value_is_its_own_risk(self):
        sol = solve_finite_horizon(TWO_STATE, PiGrid.reachable(TWO_STATE, 8), 8)
        assert abs(policy_risk_exact(TWO_STATE, sol, 8)[2] - sol.value_at(0, TWO_STATE.prior.pi0)) <= 1e-12

    def test_dp_beats_thresholds(self):
        n = 8
        sol = solve_finite_horizon(TWO_STATE, PiGrid.reachable(TWO_STATE, n), n)
        v = sol.value_at(0, TWO_STATE.prior.pi0)
        rng = np.random.default_rng(6)
        for _ in range(30):
            assert policy_risk_exact(TWO_STATE, ThresholdRule(rng.random(2)), n)[2] >= v - 1e-12


def test_reachable_grid_limit():
    from distdetect.tree import TreeTooLarge

    with pytest.raises(TreeTooLarge):
        PiGrid.reachable(TWO_STATE, 30, limit=1000)
