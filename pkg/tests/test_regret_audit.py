import math

import numpy as np
import pytest

from vecgames.bandit_core import SimplexPoint
from vecgames.bilevel import BlockSchedule, RunHistory, simulate_run
from vecgames.cones import normalize_weight
from vecgames.games import bos4d
from vecgames.regret_audit import (
    BoundViolation,
    audit_run,
    bilevel_regret,
    inner_block_regret,
    inner_hindsight,
    outer_hindsight,
    outer_regret,
    recompute_estimates,
    verify_omd_lemma,
)

PSI_OBJ = normalize_weight([1.0, 1.0, 0.0, 0.0])
PHI_OBJ = normalize_weight([0.0, 0.0, 1.0, 1.0])
CANDIDATES = (
    PSI_OBJ,
    normalize_weight([1.0, 1.0, 1.0, 1.0]),
    normalize_weight([1.0, 1.0, -1.0, -1.0]),
)


def experiment_run(seed=101, horizon=10_000, block_len=500):
    return simulate_run(
        bos4d(), CANDIDATES, PSI_OBJ, PHI_OBJ,
        BlockSchedule(horizon, block_len),
        eta_p=0.1, eta_q=0.1, gamma_p=0.2, gamma_q=0.2,
        opponent_eta=0.003, opponent_gamma=0.2, seed=seed,
    )


def synthetic_history(estimates, dists, deployed, outer_estimates, outer_dists,
                      block_len, payoffs=None, block_rewards=None):
    """A hand-built history; defaults keep every consistency check happy."""
    estimates = np.asarray(estimates, dtype=float)
    horizon, n_actions = estimates.shape
    deployed = np.asarray(deployed, dtype=np.int64)
    blocks = deployed.shape[0]
    m = np.asarray(outer_dists).shape[1]
    if payoffs is None:
        payoffs = np.zeros((horizon, 2))
    if block_rewards is None:
        block_rewards = np.zeros(blocks)
    candidates = np.eye(2)[:m] if m <= 2 else np.eye(m)[:, :2]
    return RunHistory(
        horizon=horizon,
        block_len=block_len,
        payoff_bound=1.0,
        eta_p=0.1, eta_q=0.1, gamma_p=0.2, gamma_q=0.2,
        candidates=np.asarray(candidates, dtype=float),
        objective=np.array([1.0, 0.0]),
        actions=np.zeros(horizon, dtype=np.int64),
        opp_actions=np.zeros(horizon, dtype=np.int64),
        payoffs=np.asarray(payoffs, dtype=float),
        dists=np.asarray(dists, dtype=float),
        estimates=estimates,
        deployed=deployed,
        outer_dists=np.asarray(outer_dists, dtype=float),
        block_rewards=np.asarray(block_rewards, dtype=float),
        outer_estimates=np.asarray(outer_estimates, dtype=float),
        outer_final=np.asarray(outer_dists, dtype=float)[-1],
        policy_final=np.full((m, n_actions), 1.0 / n_actions),
        obj_reward_table=np.zeros((n_actions, 2)),
    )


class TestInnerHindsight:
    def test_minimum_sum_wins(self):
        point = inner_hindsight([[-1.0, -1.0], [-2.0, 0.0]])
        assert np.array_equal(point.probs, [1.0, 0.0])

    def test_tie_breaks_to_lowest_index(self):
        point = inner_hindsight([[0.0, 0.0]])
        assert np.array_equal(point.probs, [1.0, 0.0])

    def test_single_round_interior_minimum(self):
        point = inner_hindsight([[0.0, -5.0, 0.0]])
        assert np.array_equal(point.probs, [0.0, 1.0, 0.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            inner_hindsight(np.zeros((0, 2)))

    def test_vertex_never_worse_than_uniform(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            ests = rng.uniform(-4, 4, size=(rng.integers(1, 30), 3))
            sums = ests.sum(axis=0)
            vertex = inner_hindsight(ests)
            assert float(vertex.probs @ sums) <= float(sums.mean()) + 1e-12


class TestInnerBlockRegret:
    def test_zero_estimates_zero_regret(self):
        history = synthetic_history(
            estimates=np.zeros((4, 2)),
            dists=np.full((4, 2), 0.5),
            deployed=[0, 0],
            outer_estimates=np.zeros((2, 1)),
            outer_dists=np.ones((2, 1)),
            block_len=2,
        )
        value, bound = inner_block_regret(history, 1)
        assert value == 0.0 and bound > 0.0

    def test_experiment_scale_bound_value(self):
        history = experiment_run(seed=7, horizon=1000, block_len=500)
        _, bound = inner_block_regret(history, 1)
        expected = (math.sqrt(4) * 1.0 / 0.2) * math.sqrt(2 * 500 * math.log(2))
        assert bound == expected
        assert bound == pytest.approx(263.30, abs=0.05)

    def test_every_block_within_bound_on_real_run(self):
        history = experiment_run(seed=8, horizon=4000, block_len=500)
        for k in range(1, history.block_count + 1):
            value, bound = inner_block_regret(history, k)
            assert value <= bound + 1e-9

    def test_violation_raises_when_strict(self):
        bad = synthetic_history(
            estimates=np.tile([1e6, 0.0], (4, 1)),
            dists=np.tile([1.0, 0.0], (4, 1)),
            deployed=[0, 0],
            outer_estimates=np.zeros((2, 1)),
            outer_dists=np.ones((2, 1)),
            block_len=2,
        )
        with pytest.raises(BoundViolation):
            inner_block_regret(bad, 1)
        value, bound = inner_block_regret(bad, 1, strict=False)
        assert value > bound


class TestOuterRegret:
    def test_zero_estimates_any_comparator(self):
        history = synthetic_history(
            estimates=np.zeros((4, 2)),
            dists=np.full((4, 2), 0.5),
            deployed=[0, 1],
            outer_estimates=np.zeros((2, 2)),
            outer_dists=np.full((2, 2), 0.5),
            block_len=2,
        )
        value, _ = outer_regret(history, SimplexPoint.uniform(2))
        assert value == 0.0

    def test_experiment_scale_bound_value(self):
        history = experiment_run(seed=9, horizon=10_000, block_len=500)
        _, bound = outer_regret(history)
        expected = (math.sqrt(4) / 0.2) * math.sqrt(2 * 20 * math.log(3))
        assert bound == expected
        assert bound == pytest.approx(66.29, abs=0.05)

    def test_single_candidate_has_zero_regret(self):
        history = simulate_run(
            bos4d(), (PSI_OBJ,), PSI_OBJ, PHI_OBJ, BlockSchedule(600, 200),
            eta_p=0.1, eta_q=0.1, gamma_p=0.2, gamma_q=0.2,
            opponent_eta=0.01, opponent_gamma=0.2, seed=10,
        )
        value, bound = outer_regret(history)
        assert abs(value) <= 1e-12 and bound == 0.0

    def test_hindsight_vertex_maximizes_regret(self):
        history = experiment_run(seed=11, horizon=3000, block_len=300)
        best = outer_hindsight(history)
        best_value, _ = outer_regret(history, best)
        for j in range(history.num_candidates):
            value, _ = outer_regret(
                history, SimplexPoint.point_mass(history.num_candidates, j)
            )
            assert value <= best_value + 1e-12


class TestBilevelRegret:
    def test_single_block_single_candidate_reduces_to_inner(self):
        history = simulate_run(
            bos4d(), (PSI_OBJ,), PSI_OBJ, PHI_OBJ, BlockSchedule(300, 300),
            eta_p=0.1, eta_q=0.1, gamma_p=0.2, gamma_q=0.2,
            opponent_eta=0.01, opponent_gamma=0.2, seed=12,
        )
        bi_value, _ = bilevel_regret(history)
        inner_value, _ = inner_block_regret(history, 1)
        assert bi_value == pytest.approx(inner_value, abs=1e-12)

    def test_experiment_scale_bound_value(self):
        history = experiment_run(seed=13)
        _, bound = bilevel_regret(history)
        expected = math.sqrt(4) * (
            math.sqrt(2 * 20 * math.log(3)) / 0.2
            + math.sqrt(2 * 20 * 10_000 * math.log(2)) / 0.2
        )
        assert bound == expected
        assert bound == pytest.approx(5332.3, abs=0.5)

    def test_decomposition_identity(self):
        history = experiment_run(seed=14, horizon=2000, block_len=250)
        bi_value, _ = bilevel_regret(history)
        outer_value, _ = outer_regret(history)
        inner_total = sum(
            inner_block_regret(history, k)[0]
            for k in range(1, history.block_count + 1)
        )
        assert abs(bi_value - (outer_value + inner_total)) <= 1e-9


class TestOmdLemma:
    def test_zero_losses_zero_regret(self):
        report = verify_omd_lemma(np.zeros((50, 3)), eta=0.1)
        assert report.regret == 0.0 and report.ok

    def test_alternating_adversarial_losses(self):
        rounds, dim = 100, 2
        losses = np.zeros((rounds, dim))
        losses[::2, 0] = 1.0
        losses[1::2, 0] = -1.0
        losses[::2, 1] = -1.0
        losses[1::2, 1] = 1.0
        eta = math.sqrt(2 * math.log(dim) / rounds)  # tuned for max_loss = 1
        report = verify_omd_lemma(losses, eta)
        simplified = math.sqrt(2 * rounds * math.log(dim))
        assert report.bound == pytest.approx(simplified, abs=1e-9)
        assert report.regret <= simplified + 1e-9
        assert report.ok

    def test_random_sequences_never_violate(self):
        rng = np.random.default_rng(15)
        for _ in range(150):
            dim = int(rng.integers(2, 6))
            rounds = int(rng.integers(1, 200))
            cap = float(rng.uniform(0.1, 3.0))
            losses = rng.uniform(-cap, cap, size=(rounds, dim))
            max_loss = float(np.max(np.abs(losses)))
            eta = math.sqrt(2 * math.log(dim) / rounds) / max_loss
            assert verify_omd_lemma(losses, eta).ok


class TestAuditRun:
    def test_full_report_on_conforming_run(self):
        history = experiment_run(seed=16, horizon=5000, block_len=500)
        report = audit_run(history)
        assert report.ok
        assert report.estimates_match and report.block_rewards_match
        assert report.decomposition_gap <= 1e-9
        assert len(report.inner) == history.block_count
        assert report.realized["regret"] == report.realized["best_fixed_total"] - (
            report.realized["algorithm_total"]
        )

    def test_recomputed_estimates_bit_identical(self):
        history = experiment_run(seed=17, horizon=1500, block_len=300)
        assert np.array_equal(recompute_estimates(history), history.estimates)

    def test_tampered_log_is_flagged(self):
        history = experiment_run(seed=18, horizon=1000, block_len=250)
        history.estimates[3, 0] += 1e-6
        report = audit_run(history)
        assert not report.estimates_match
        assert not report.ok

    def test_json_payload_shape(self):
        history = experiment_run(seed=19, horizon=600, block_len=200)
        payload = audit_run(history).to_json_dict()
        assert payload["ok"] is True
        assert {"constants", "inner", "outer", "bilevel", "realized"} <= set(payload)
