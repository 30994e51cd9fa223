"""Grids, priors (including the Whittaker special function), Bayes updates
and posterior summary metrics."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import adaptrate as ar
from adaptrate import bayes, chains
from adaptrate.chains import Observation


@pytest.fixture(scope="module")
def grid1():
    return ar.uniform_grid(1)


@pytest.fixture(scope="module")
def grid2():
    return ar.uniform_grid(2)


@pytest.fixture(scope="module")
def gamma_prior(grid1):
    return ar.prior_density(ar.GammaPrior(2, 1), grid1)


@pytest.fixture(scope="module")
def bivariate_prior(grid2):
    return ar.prior_density(ar.BivariateGammaPrior(), grid2)


class TestRateGrid:
    def test_weights_reproduce_span(self):
        for nodes in (51, 201, 400):
            g = ar.uniform_grid(1, 10.0, nodes)
            assert abs(g.axis_weights(0).sum() - 10.0) < 1e-12
            assert np.all(g.axis_weights(0) > 0)

    def test_axes_must_start_at_zero(self):
        with pytest.raises(ValueError):
            ar.RateGrid((np.linspace(1.0, 5.0, 10),))

    def test_axes_must_increase(self):
        with pytest.raises(ValueError):
            ar.RateGrid((np.array([0.0, 2.0, 1.0]),))

    def test_weight_mesh_total(self, grid2):
        assert abs(grid2.weight_mesh().sum() - 100.0) < 1e-9


class TestWhittaker:
    def test_reduces_to_exponential(self):
        # at (0, 1/2) the integral collapses to a pure exponential
        assert_allclose(ar.whittaker_w(0.0, 0.5, 2.0), math.exp(-1.0), rtol=1e-8)
        assert_allclose(ar.whittaker_w(0.0, 0.5, 1.0), math.exp(-0.5), rtol=1e-8)

    def test_against_refined_fixed_quadrature(self):
        # independent oracle: composite Gauss-Legendre at two resolutions
        lam, mu, a = 1.0, 1.5, 3.0

        def gauss(n_panels):
            xs, ws = np.polynomial.legendre.leggauss(12)
            total = 0.0
            edges = np.linspace(0.0, 1.0, n_panels + 1)
            for lo, hi in zip(edges, edges[1:]):
                u = 0.5 * (hi - lo) * xs + 0.5 * (hi + lo)
                t = u / (1.0 - u)
                f = (1.0 + t) ** 2 * np.exp(-a * t) / (1.0 - u) ** 2
                total += 0.5 * (hi - lo) * np.dot(ws, f)
            return a ** 2 * math.exp(-a / 2.0) * total

        coarse, fine = gauss(40), gauss(80)
        assert abs(fine - coarse) < 1e-10  # oracle self-consistent
        assert_allclose(ar.whittaker_w(lam, mu, a), fine, atol=1e-6)

    def test_precondition_enforced(self):
        with pytest.raises(ValueError):
            ar.whittaker_w(2.0, 1.0, 1.0)  # mu - lam + 1/2 = -1/2

    def test_vectorized_matches_scalar(self):
        a = np.array([0.3, 1.0, 2.5, 7.0])
        vec = bayes._whittaker_w_on_array(1.0, 1.5, a)
        for k, av in enumerate(a):
            assert_allclose(vec[k], ar.whittaker_w(1.0, 1.5, av), rtol=1e-7)


class TestPriors:
    def test_gamma_mode_and_mean(self, gamma_prior):
        assert_allclose(ar.map_estimate(gamma_prior), [1.0], atol=1e-12)
        assert abs(ar.posterior_mean(gamma_prior)[0] - 2.0) < 2e-2

    def test_gamma_variance(self, gamma_prior):
        assert abs(ar.posterior_variance(gamma_prior) - 2.0) < 5e-2

    def test_bivariate_symmetric(self, bivariate_prior):
        assert_allclose(bivariate_prior.density, bivariate_prior.density.T,
                        atol=0)

    def test_bivariate_moments_match_factorized_sampler(self, bivariate_prior):
        # The a=b=1 density factorizes exactly (gamma mixture x beta), giving
        # an independent route to the restricted-domain moments.
        rng = np.random.default_rng(99)
        draws = np.array([bayes.sample_prior(ar.BivariateGammaPrior(), rng)
                          for _ in range(120_000)])
        mean = ar.posterior_mean(bivariate_prior)
        cov = ar.posterior_covariance(bivariate_prior)
        # grid quadrature carries a small bias from the integrable density
        # singularity along the diagonal; tolerances reflect it
        assert_allclose(mean, draws.mean(axis=0), atol=5e-2)
        assert_allclose(np.diag(cov), draws.var(axis=0), atol=8e-2)
        assert_allclose(cov[0, 1], np.cov(draws.T)[0, 1], atol=8e-2)

    def test_truncated_zero_mass_on_forbidden_region(self, grid2):
        post = ar.prior_density(ar.TruncatedBivariateGammaPrior(), grid2)
        H0, H1 = grid2.meshes()
        assert np.all(post.density[H0 >= H1] == 0.0)
        assert abs(post.mass() - 1.0) < 1e-12

    def test_truncated_sampler_respects_constraint(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            lam, mu = bayes.sample_prior(ar.TruncatedBivariateGammaPrior(), rng)
            assert lam < mu

    def test_bernoulli_uniform_at_half(self):
        post = ar.prior_density(ar.BernoulliStructurePrior(0.5, 3))
        assert post.density.size == 64
        assert_allclose(post.density, 1.0 / 64.0, atol=1e-15)

    def test_bernoulli_product_probabilities(self):
        post = ar.prior_density(ar.BernoulliStructurePrior(0.3, 2))
        bits = post.configs
        expected = (0.3 ** bits.sum(axis=1)) * (0.7 ** (2 - bits.sum(axis=1)))
        assert_allclose(post.density, expected, rtol=1e-12)

    def test_structure_prior_size_limit(self):
        with pytest.raises(ValueError):
            ar.BernoulliStructurePrior(0.5, 5)

    def test_grid_dimension_checked(self, grid1):
        with pytest.raises(ValueError):
            ar.prior_density(ar.BivariateGammaPrior(), grid1)


class TestBayesUpdate:
    def test_unidirectional_stay_observation(self, gamma_prior, grid1):
        t = 0.8
        post = ar.bayes_update(gamma_prior, chains.two_state_unidirectional(),
                               0, Observation(t, 0))
        expected = gamma_prior.density * np.exp(-grid1.axes[0] * t)
        expected /= np.sum(expected * grid1.axis_weights(0))
        assert_allclose(post.density, expected, atol=1e-12)

    def test_point_mass_is_fixed_point(self, grid1):
        dens = np.zeros(grid1.shape)
        dens[40] = 1.0 / grid1.axis_weights(0)[40]
        point = ar.Posterior(bayes.GRID, dens, grid1)
        post = ar.bayes_update(point, chains.two_state_unidirectional(),
                               0, Observation(1.0, 1))
        assert_allclose(post.density, point.density, rtol=1e-12)

    def test_mass_one_after_updates(self, bivariate_prior):
        model = chains.two_state_bidirectional()
        rng = np.random.default_rng(1)
        post, x, t = bivariate_prior, 0, 0.0
        for _ in range(30):
            x_new = chains.sample_transition(model, [1.0, 2.0], x, 0.4, rng)
            post = ar.bayes_update(post, model, x, Observation(t + 0.4, x_new),
                                   prev_time=t)
            assert abs(post.mass() - 1.0) < 1e-9
            t, x = t + 0.4, x_new

    def test_update_order_invariance(self, gamma_prior):
        # reset-protocol likelihoods commute
        model = chains.two_state_unidirectional()
        obs = [Observation(0.3, 0), Observation(1.0, 1), Observation(2.2, 0),
               Observation(0.7, 1)]
        fwd = gamma_prior
        for o in obs:
            fwd = ar.bayes_update(fwd, model, 0, o)
        rev = gamma_prior
        for o in reversed(obs):
            rev = ar.bayes_update(rev, model, 0, o)
        assert_allclose(fwd.density, rev.density, atol=1e-12)

    def test_sequential_equals_product_likelihood(self, bivariate_prior, grid2):
        model = chains.two_state_bidirectional()
        rng = np.random.default_rng(5)
        H0, H1 = grid2.meshes()
        post, x, t = bivariate_prior, 0, 0.0
        lik = np.ones(grid2.shape)
        for _ in range(40):
            dt = 0.35
            x_new = chains.sample_transition(model, [1.0, 1.0], x, dt, rng)
            probs = chains.two_state_bidirectional_probs(H0, H1, dt)
            lik = lik * probs[2 * x + x_new]
            lik /= lik.max()
            post = ar.bayes_update(post, model, x, Observation(t + dt, x_new),
                                   prev_time=t)
            t, x = t + dt, x_new
        direct = ar.Posterior(bayes.GRID, bivariate_prior.density * lik,
                              grid2).normalized()
        assert_allclose(post.density, direct.density, atol=1e-10)

    def test_repeated_stay_crushes_rate_to_zero(self, bivariate_prior, grid2):
        # long runs of X=0 make the forward rate collapse toward the origin;
        # oracle is the directly computed likelihood power
        model = chains.two_state_bidirectional()
        post = bivariate_prior
        for n in range(50):
            post = ar.bayes_update(post, model, 0,
                                   Observation(0.5 * (n + 1), 0),
                                   prev_time=0.5 * n)
        marg = ar.posterior_marginal(post, 0)
        H0, H1 = grid2.meshes()
        stay = chains.two_state_bidirectional_probs(H0, H1, 0.5)[0]
        direct = bivariate_prior.density * stay ** 50
        direct_marg = np.tensordot(direct, grid2.axis_weights(1), axes=([1], [0]))
        assert np.argmax(marg) == np.argmax(direct_marg)
        # the smallest node with prior support (the prior vanishes at 0)
        assert np.argmax(marg) <= 1

    def test_impossible_observation_rejected(self, grid1):
        dens = np.zeros(grid1.shape)
        dens[0] = 1.0 / grid1.axis_weights(0)[0]  # all mass at h = 0
        point = ar.Posterior(bayes.GRID, dens, grid1)
        with pytest.raises(ValueError):
            ar.bayes_update(point, chains.two_state_unidirectional(),
                            0, Observation(1.0, 1))

    def test_out_of_range_state_rejected(self, gamma_prior):
        with pytest.raises(ValueError):
            ar.bayes_update(gamma_prior, chains.two_state_unidirectional(),
                            0, Observation(1.0, 5))


class TestMoments:
    def test_product_prior_covariance_diagonal(self, grid2):
        g1 = ar.uniform_grid(1)
        gamma = ar.prior_density(ar.GammaPrior(2, 1), g1)
        dens = np.outer(gamma.density, gamma.density)
        post = ar.Posterior(bayes.GRID, dens, grid2).normalized()
        cov = ar.posterior_covariance(post)
        var = ar.posterior_variance(gamma)
        assert_allclose(cov, np.diag([var, var]), atol=1e-9)
        assert_allclose(np.linalg.det(cov), var * var, rtol=1e-6)

    def test_bernoulli_covariance_determinant(self):
        for p in (0.25, 0.5, 0.75):
            post = ar.prior_density(ar.BernoulliStructurePrior(p, 3))
            det = np.linalg.det(ar.posterior_covariance(post))
            assert_allclose(det, (p * (1 - p)) ** 6, rtol=1e-10)

    def test_covariance_psd_after_updates(self, bivariate_prior):
        model = chains.two_state_bidirectional()
        rng = np.random.default_rng(8)
        post, x, t = bivariate_prior, 0, 0.0
        for _ in range(20):
            x_new = chains.sample_transition(model, [0.5, 1.5], x, 0.6, rng)
            post = ar.bayes_update(post, model, x, Observation(t + 0.6, x_new),
                                   prev_time=t)
            cov = ar.posterior_covariance(post)
            assert_allclose(cov, cov.T, atol=1e-12)
            assert np.min(np.linalg.eigvalsh(cov)) > -1e-10
            t, x = t + 0.6, x_new


class TestMetrics:
    def test_mse_point_mass_at_truth(self, grid1):
        dens = np.zeros(grid1.shape)
        idx = 20  # h = 1.0
        dens[idx] = 1.0 / grid1.axis_weights(0)[idx]
        post = ar.Posterior(bayes.GRID, dens, grid1)
        assert ar.mse(post, [1.0], 0) < 1e-20

    def test_mse_point_mass_offset_by_one(self, grid1):
        dens = np.zeros(grid1.shape)
        idx = 40  # h = 2.0
        dens[idx] = 1.0 / grid1.axis_weights(0)[idx]
        post = ar.Posterior(bayes.GRID, dens, grid1)
        assert_allclose(ar.mse(post, [1.0], 0), 1.0, rtol=1e-12)

    def test_mse_uniform_posterior(self):
        g = ar.RateGrid((np.linspace(0.0, 2.0, 2001),))
        post = ar.Posterior(bayes.GRID, np.full(2001, 0.5), g)
        assert_allclose(ar.mse(post, [1.0], 0), 1.0 / 3.0, atol=1e-6)

    def test_mae_examples(self):
        assert ar.mae([1, 0, 1], [1, 0, 1], 6) == 0.0
        assert_allclose(ar.mae([1, 0, 1, 0, 0, 0], [0, 0, 1, 0, 0, 0], 6),
                        1.0 / 6.0)
        assert ar.mae(np.ones(6), np.zeros(6), 6) == 1.0

    def test_map_tie_break_lexicographic(self, grid1):
        post = ar.Posterior(bayes.GRID, np.ones(grid1.shape), grid1).normalized()
        assert_allclose(ar.map_estimate(post), [0.0])

    def test_map_tie_break_configs(self):
        post = ar.prior_density(ar.BernoulliStructurePrior(0.5, 2))
        assert_allclose(ar.map_estimate(post), [0.0, 0.0])

    def test_posterior_csv_round_trip_grid(self, bivariate_prior):
        text = ar.posterior_to_csv(bivariate_prior)
        back = ar.posterior_from_csv(text)
        assert np.array_equal(back.density, bivariate_prior.density)
        assert back.mass() == bivariate_prior.mass()
        for k in range(2):
            assert np.array_equal(back.grid.axes[k], bivariate_prior.grid.axes[k])

    def test_posterior_csv_round_trip_configs(self):
        post = ar.prior_density(ar.BernoulliStructurePrior(0.3, 2))
        back = ar.posterior_from_csv(ar.posterior_to_csv(post))
        assert back.kind == bayes.CONFIGS
        assert np.array_equal(back.density, post.density)
        assert np.array_equal(back.configs, post.configs)

    def test_map_after_run_matches_brute_force(self, bivariate_prior, grid2):
        model = chains.two_state_bidirectional()
        rng = np.random.default_rng(5)
        H0, H1 = grid2.meshes()
        post, x, t = bivariate_prior, 0, 0.0
        lik = np.ones(grid2.shape)
        for _ in range(100):
            dt = 0.35
            x_new = chains.sample_transition(model, [1.0, 1.0], x, dt, rng)
            probs = chains.two_state_bidirectional_probs(H0, H1, dt)
            lik = lik * probs[2 * x + x_new]
            lik /= lik.max()
            post = ar.bayes_update(post, model, x, Observation(t + dt, x_new),
                                   prev_time=t)
            t, x = t + dt, x_new
        brute = np.unravel_index(np.argmax(bivariate_prior.density * lik),
                                 grid2.shape)
        est = ar.map_estimate(post)
        node = np.array([grid2.axes[0][brute[0]], grid2.axes[1][brute[1]]])
        spacing = grid2.axes[0][1] - grid2.axes[0][0]
        assert np.max(np.abs(est - node)) <= spacing + 1e-12
