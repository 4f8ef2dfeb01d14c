import math

import numpy as np
import pytest

from vecgames.bandit_core import (
    LearnerState,
    SimplexPoint,
    expix_step,
    ix_estimate,
    omd_entropy_step,
    sample,
)

from _oracles import kl_step_numeric

ROOT2 = math.sqrt(2.0)


class TestSimplexPoint:
    def test_negative_entry_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            SimplexPoint(np.array([1.1, -0.1]))

    def test_bad_sum_rejected(self):
        with pytest.raises(ValueError, match="sum"):
            SimplexPoint(np.array([0.5, 0.4]))

    def test_uniform_and_point_mass(self):
        assert np.array_equal(SimplexPoint.uniform(4).probs, np.full(4, 0.25))
        pm = SimplexPoint.point_mass(3, 1)
        assert np.array_equal(pm.probs, [0.0, 1.0, 0.0])
        assert not pm.strictly_positive


class TestSample:
    def test_point_mass_always_chosen(self):
        rng = np.random.default_rng(0)
        pm = SimplexPoint.point_mass(5, 2)
        assert all(sample(pm, rng) == 2 for _ in range(100))

    def test_uniform_two_arm_frequency(self):
        rng = np.random.default_rng(42)
        dist = SimplexPoint(np.array([0.5, 0.5]))
        draws = 10**6
        zeros = sum(sample(dist, rng) == 0 for _ in range(draws))
        assert 0.497 <= zeros / draws <= 0.503

    def test_skewed_frequency(self):
        rng = np.random.default_rng(43)
        dist = SimplexPoint(np.array([0.9, 0.1]))
        draws = 10**5
        zeros = sum(sample(dist, rng) == 0 for _ in range(draws))
        assert 0.897 <= zeros / draws <= 0.903

    def test_deterministic_given_seed(self):
        dist = SimplexPoint(np.array([0.3, 0.3, 0.4]))
        seq1 = [sample(dist, np.random.default_rng(9)) for _ in range(1)]
        rng_a, rng_b = np.random.default_rng(9), np.random.default_rng(9)
        seq_a = [sample(dist, rng_a) for _ in range(50)]
        seq_b = [sample(dist, rng_b) for _ in range(50)]
        assert seq_a == seq_b and seq_a[0] == seq1[0]

    def test_consumes_exactly_one_draw(self):
        dist = SimplexPoint(np.array([0.5, 0.5]))
        rng_used = np.random.default_rng(123)
        rng_skip = np.random.default_rng(123)
        sample(dist, rng_used)
        rng_skip.random()
        assert rng_used.random() == rng_skip.random()


class TestIxEstimate:
    def test_handbook_value(self):
        dist = SimplexPoint(np.array([0.5, 0.5]))
        est = ix_estimate(dist, 0, ROOT2, 0.2)
        expected = -ROOT2 / (0.5 + 0.2)
        assert est[0] == expected
        assert est[1] == 0.0
        assert est[0] == pytest.approx(-2.02031, abs=1e-5)

    def test_zero_reward_gives_zero_vector(self):
        dist = SimplexPoint(np.array([0.25, 0.25, 0.5]))
        assert np.array_equal(ix_estimate(dist, 2, 0.0, 0.3), np.zeros(3))

    def test_point_mass_without_exploration(self):
        est = ix_estimate(SimplexPoint.point_mass(3, 1), 1, 1.7, 0.0)
        assert np.array_equal(est, [0.0, -1.7, 0.0])

    def test_zero_mass_zero_gamma_rejected(self):
        with pytest.raises(ZeroDivisionError):
            ix_estimate(SimplexPoint.point_mass(2, 0), 1, 1.0, 0.0)

    def test_out_of_range_chosen(self):
        with pytest.raises(IndexError):
            ix_estimate(SimplexPoint.uniform(2), 5, 1.0, 0.1)

    def test_magnitude_bound(self):
        # |estimate| <= sqrt(d) * U / gamma when the reward is a unit-weight
        # scalarization of a bounded payoff vector.
        rng = np.random.default_rng(77)
        for _ in range(500):
            d = int(rng.integers(1, 6))
            n = int(rng.integers(2, 5))
            cap = 1.0
            u = rng.uniform(-cap, cap, size=d)
            psi = rng.normal(size=d)
            psi /= np.linalg.norm(psi)
            gamma = float(rng.uniform(0.05, 1.0))
            probs = rng.dirichlet(np.ones(n))
            dist = SimplexPoint(probs / probs.sum())
            chosen = int(rng.integers(n))
            est = ix_estimate(dist, chosen, float(psi @ u), gamma)
            assert np.max(np.abs(est)) <= math.sqrt(d) * cap / gamma + 1e-9

    def test_unbiased_at_zero_gamma_by_exact_expectation(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            probs = rng.dirichlet(np.ones(3))
            probs = np.maximum(probs, 1e-3)
            dist = SimplexPoint(probs / probs.sum())
            rewards = rng.uniform(-2, 2, size=3)
            expectation = np.zeros(3)
            for a in range(3):
                expectation += dist.probs[a] * ix_estimate(dist, a, rewards[a], 0.0)
            assert np.allclose(expectation, -rewards, rtol=1e-10, atol=1e-12)


class TestOmdEntropyStep:
    def test_zero_loss_is_identity(self):
        dist = SimplexPoint(np.array([0.5, 0.25, 0.25]))
        out = omd_entropy_step(dist, np.zeros(3), 0.7)
        assert np.array_equal(out.probs, dist.probs)

    def test_matches_numeric_minimizer(self):
        dist = SimplexPoint(np.array([0.5, 0.5]))
        out = omd_entropy_step(dist, np.array([-1.0, 0.0]), 0.1)
        numeric = kl_step_numeric(dist.probs, np.array([-1.0, 0.0]), 0.1)
        assert np.max(np.abs(out.probs - numeric)) <= 1e-8
        assert out.probs[0] == pytest.approx(0.524979, abs=1e-6)
        assert out.probs[1] == pytest.approx(0.475021, abs=1e-6)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        probs = rng.dirichlet(np.ones(4))
        probs /= probs.sum()
        loss = rng.uniform(-3, 3, size=4)
        perm = rng.permutation(4)
        out = omd_entropy_step(SimplexPoint(probs), loss, 0.4)
        out_perm = omd_entropy_step(SimplexPoint(probs[perm]), loss[perm], 0.4)
        # Equality up to the reduction-order rounding of the normalizer.
        assert np.allclose(out.probs[perm], out_perm.probs, rtol=0, atol=1e-15)

    def test_large_losses_do_not_overflow(self):
        dist = SimplexPoint(np.array([0.5, 0.5]))
        out = omd_entropy_step(dist, np.array([-5000.0, 5000.0]), 1.0)
        assert np.all(np.isfinite(out.probs))
        assert out.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_nonfinite_loss_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            omd_entropy_step(SimplexPoint.uniform(2), np.array([np.inf, 0.0]), 0.1)

    def test_simplex_preserved_over_one_million_chained_updates(self):
        rng = np.random.default_rng(2024)
        dist = SimplexPoint(np.array([0.5, 0.5]))
        eta = 1e-4
        for _ in range(10**6):
            loss = rng.uniform(-50.0, 50.0, size=2)
            dist = omd_entropy_step(dist, loss, eta)
        assert np.min(dist.probs) > 0.0
        assert abs(float(dist.probs.sum()) - 1.0) <= 1e-12

    def test_closed_form_matches_numeric_on_random_instances(self):
        # A smaller version of the acceptance sweep, for quick feedback.
        rng = np.random.default_rng(99)
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(2, 7))
            probs = np.maximum(rng.dirichlet(np.ones(n) * 2), 1e-6)
            dist = SimplexPoint(probs / probs.sum())
            loss = rng.uniform(-10, 10, size=n)
            eta = float(10 ** rng.uniform(-2, 0.3))
            closed = omd_entropy_step(dist, loss, eta).probs
            numeric = kl_step_numeric(dist.probs, loss, eta)
            worst = max(worst, float(np.max(np.abs(closed - numeric))))
        assert worst <= 1e-6


class TestExpixStep:
    def test_zero_reward_keeps_distribution(self):
        state = LearnerState(SimplexPoint(np.array([0.5, 0.5])), eta=0.1, gamma=0.2)
        out = expix_step(state, 0, 0.0)
        assert np.array_equal(out.dist.probs, state.dist.probs)

    def test_composition_of_estimate_and_step(self):
        state = LearnerState(SimplexPoint(np.array([0.5, 0.5])), eta=0.1, gamma=0.2)
        out = expix_step(state, 0, ROOT2)
        oracle = omd_entropy_step(
            state.dist, ix_estimate(state.dist, 0, ROOT2, 0.2), 0.1
        )
        assert np.array_equal(out.dist.probs, oracle.probs)
        assert out.dist.probs[0] == pytest.approx(0.55034, abs=1e-4)
        assert out.dist.probs[1] == pytest.approx(0.44966, abs=1e-4)

    def test_positivity_preserved(self):
        rng = np.random.default_rng(31)
        state = LearnerState(SimplexPoint.uniform(3), eta=0.3, gamma=0.1)
        for _ in range(2000):
            arm = int(rng.integers(3))
            state = expix_step(state, arm, float(rng.uniform(-2, 2)))
            assert state.dist.strictly_positive

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            LearnerState(SimplexPoint.uniform(2), eta=0.0, gamma=0.1)
        with pytest.raises(ValueError):
            LearnerState(SimplexPoint.uniform(2), eta=0.1, gamma=-0.1)
