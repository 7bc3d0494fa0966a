import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from distdetect.model import (GeometricPrior, ModelError, NegativeEntry, NetModel, NonStochasticRow,
                              make_sensor, prior_pmf, sample_disorder, sensor_rng, simulate_net,
                              simulate_paths, simulate_sensor, validate_kernel)

from helpers import TWO_STATE, OTHER_TWO_STATE


class TestKernel:
    def test_identity_is_valid(self):
        k = validate_kernel([[1, 0], [0, 1]])
        assert k.states == 2

    def test_stochastic_rows(self):
        k = validate_kernel([[0.5, 0.5], [0.3, 0.7]])
        np.testing.assert_array_equal(k.probs, [[0.5, 0.5], [0.3, 0.7]])

    def test_row_sum_rejected(self):
        with pytest.raises(NonStochasticRow) as exc:
            validate_kernel([[0.5, 0.6], [0.3, 0.7]])
        assert exc.value.row == 0
        assert exc.value.total == pytest.approx(1.1)

    def test_negative_entry(self):
        with pytest.raises(NegativeEntry):
            validate_kernel([[1.5, -0.5], [0.3, 0.7]])

    @pytest.mark.parametrize("bad", [[[1.0]], [[0.5, 0.5]], [[[0.5]]]])
    def test_shape(self, bad):
        with pytest.raises(ModelError):
            validate_kernel(bad)

    def test_immutable(self):
        k = validate_kernel([[0.5, 0.5], [0.3, 0.7]])
        with pytest.raises(ValueError):
            k.probs[0, 0] = 1.0


class TestPrior:
    prior = GeometricPrior(0.1, 0.9)

    @pytest.mark.parametrize("j, expected", [(0, 0.1), (1, 0.09), (3, 0.0729)])
    def test_pmf(self, j, expected):
        assert prior_pmf(self.prior, j) == pytest.approx(expected, abs=1e-15)

    def test_q(self):
        assert self.prior.q == 1 - 0.9

    @given(pi0=st.floats(0.001, 0.999), p=st.floats(0.01, 0.99))
    @settings(max_examples=50, deadline=None)
    def test_mass_sums_to_one(self, pi0, p):
        prior = GeometricPrior(pi0, p)
        # enough terms for the geometric tail p**J to drop below 1e-12
        terms = int(np.ceil(np.log(1e-12) / np.log(p))) + 2
        total = sum(prior_pmf(prior, j) for j in range(terms))
        assert abs(total - 1.0) <= 1e-9

    @pytest.mark.parametrize("pi0, p", [(-0.1, 0.5), (1.1, 0.5), (0.1, 0.0), (0.1, 1.0)])
    def test_invalid(self, pi0, p):
        with pytest.raises(ModelError):
            GeometricPrior(pi0, p)


class TestSampling:
    def test_concentrated_at_zero(self):
        th = sample_disorder(GeometricPrior(0.999999, 0.5), sensor_rng(1, 0), 10**6)
        assert abs(np.mean(th == 0) - 0.999999) < 5e-6

    def test_empirical_pmf(self):
        prior = GeometricPrior(0.1, 0.9)
        n = 10**6
        th = sample_disorder(prior, sensor_rng(2, 0), n)
        for j in range(21):
            pj = prior_pmf(prior, j)
            se = np.sqrt(pj * (1 - pj) / n)
            assert abs(np.mean(th == j) - pj) <= 3 * se, j

    def test_chi_square(self):
        prior = GeometricPrior(0.1, 0.9)
        n = 10**5
        th = sample_disorder(prior, sensor_rng(3, 0), n)
        probs = np.array([prior_pmf(prior, j) for j in range(21)])
        observed = np.array([np.sum(th == j) for j in range(21)] + [np.sum(th > 20)])
        expected = np.append(probs, 1 - probs.sum()) * n
        assert stats.chisquare(observed, expected).pvalue > 1e-3

    def test_deterministic(self):
        prior = GeometricPrior(0.1, 0.9)
        a = sample_disorder(prior, sensor_rng(5, 0), 100)
        b = sample_disorder(prior, sensor_rng(5, 0), 100)
        np.testing.assert_array_equal(a, b)

    def test_scalar(self):
        assert isinstance(sample_disorder(GeometricPrior(0.1, 0.9), sensor_rng(0, 0)), int)


class TestSimulateSensor:
    def test_starts_at_initial_state(self):
        m = make_sensor([[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]], 0.1, 0.9, 0.1, x0=1)
        path = simulate_sensor(m, 3, 10, sensor_rng(0, 0))
        assert path.observations[0] == 1 and len(path.observations) == 11

    def test_pre_only_when_theta_beyond_horizon(self):
        # pre cycles 0 -> 1 -> 0, post stays put
        m = make_sensor([[0, 1], [1, 0]], [[1, 0], [0, 1]], 0.1, 0.9, 0.1)
        path = simulate_sensor(m, 11, 10, sensor_rng(0, 0))
        np.testing.assert_array_equal(path.observations, np.arange(11) % 2)

    def test_post_only_when_theta_zero(self):
        m = make_sensor([[0, 1], [1, 0]], [[1, 0], [0, 1]], 0.1, 0.9, 0.1)
        path = simulate_sensor(m, 0, 10, sensor_rng(0, 0))
        np.testing.assert_array_equal(path.observations, np.zeros(11))

    @pytest.mark.parametrize("theta, expected", [(1, [0, 0, 0, 0]), (2, [0, 1, 1, 1]), (3, [0, 1, 0, 0])])
    def test_switch_point(self, theta, expected):
        # transition into X_n is post-change iff n >= theta
        m = make_sensor([[0, 1], [1, 0]], [[1, 0], [0, 1]], 0.1, 0.9, 0.1)
        np.testing.assert_array_equal(simulate_sensor(m, theta, 3, sensor_rng(0, 0)).observations, expected)

    def test_pre_counts_match_kernel(self):
        # long pre-change run: transition frequencies vs the pre kernel (G-test)
        x = simulate_paths(TWO_STATE, [10**6], 10**5, sensor_rng(4, 0))[0]
        counts = np.zeros((2, 2))
        np.add.at(counts, (x[:-1], x[1:]), 1)
        g = 0.0
        for a in range(2):
            exp = counts[a].sum() * TWO_STATE.pre.probs[a]
            g += 2 * np.sum(counts[a] * np.log(counts[a] / exp))
        assert stats.chi2.sf(g, df=2) > 1e-3

    def test_invariant_in_theta_when_kernels_equal(self):
        k = [[0.6, 0.4], [0.2, 0.8]]
        m = make_sensor(k, k, 0.1, 0.9, 0.1)
        n, h = 10**5, 5
        a = simulate_paths(m, np.zeros(n, dtype=int), h, sensor_rng(1, 0))
        b = simulate_paths(m, np.full(n, h + 1), h, sensor_rng(2, 0))
        codes_a = a @ (2 ** np.arange(h + 1))
        codes_b = b @ (2 ** np.arange(h + 1))
        bins = np.arange(2 ** (h + 1) + 1)
        ca, cb = np.histogram(codes_a, bins)[0], np.histogram(codes_b, bins)[0]
        keep = (ca + cb) > 0
        assert stats.chi2_contingency(np.vstack([ca[keep], cb[keep]]))[1] > 1e-3


class TestSimulateNet:
    net = NetModel([TWO_STATE, OTHER_TWO_STATE, TWO_STATE], 12)

    def test_shapes(self):
        paths, thetas = simulate_net(self.net, 9)
        assert len(paths) == 3 and len(thetas) == 3
        assert all(len(p.observations) == 13 for p in paths)

    def test_removing_a_sensor_keeps_the_others(self):
        full, th_full = simulate_net(self.net, 11)
        part, th_part = simulate_net(NetModel(self.net.sensors[:2], 12), 11)
        for a, b in zip(full[:2], part):
            np.testing.assert_array_equal(a.observations, b.observations)
        assert th_full[:2] == th_part

    def test_single_sensor_matches_simulate_sensor(self):
        paths, thetas = simulate_net(NetModel([TWO_STATE], 8), 4)
        rng = sensor_rng(4, 0)
        theta = sample_disorder(TWO_STATE.prior, rng)
        ref = simulate_sensor(TWO_STATE, theta, 8, rng)
        assert thetas[0] == theta
        np.testing.assert_array_equal(paths[0].observations, ref.observations)

    def test_thetas_uncorrelated(self):
        _, th = simulate_net(NetModel([TWO_STATE, OTHER_TWO_STATE], 1), 13, reps=10**5)
        r = np.corrcoef(th[:, 0], th[:, 1])[0, 1]
        assert abs(r) <= 3 / np.sqrt(10**5)

    def test_deterministic(self):
        a = simulate_net(self.net, 17, reps=50)
        b = simulate_net(self.net, 17, reps=50)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
