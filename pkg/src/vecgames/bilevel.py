"""The block protocol: an outer weight learner driving an inner action learner.

The horizon is cut into length-``L`` blocks.  At each block start the outer
learner samples a candidate scalarization index from its distribution ``p``;
the inner learner then plays the whole block with the policy row attached to
that candidate, updating only that row from bandit feedback shaped by the
deployed weight.  At block end the outer learner receives the block-average
reward under the fixed objective weight, forms an IX loss estimate for the
sampled index, and takes one entropy mirror step on ``p``.

The environment is part of the loop: the opponent observes the realized joint
action each round, updates its own learner from its scalarized payoff, and
thereby makes the trajectory depend on the deployed weight.

Everything a run produces is logged into a :class:`RunHistory` rich enough to
replay every update and recompute every regret quantity offline.

Randomness discipline: one master seed per run, split into three independent
child streams (outer sampling, focal action sampling, opponent sampling), so
reordering pure computation or adding logging can never perturb trajectories.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .bandit_core import SimplexPoint, omd_entropy_raw, sample_from_uniform
from .cones import WeightVector
from .games import VectorGame

#: Slack allowed when asserting the estimate magnitude cap sqrt(d)*U/gamma.
ESTIMATE_TOL = 1e-9

HISTORY_FORMAT = "vecgames-history-v1"


@dataclass(frozen=True)
class BlockSchedule:
    """Partition of rounds ``1..horizon`` into blocks of length ``block_len``.

    Only the last block may be short.
    """

    horizon: int
    block_len: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.block_len < 1:
            raise ValueError("block_len must be positive")

    @property
    def block_count(self) -> int:
        return -(-self.horizon // self.block_len)


def block_indices(k: int, schedule: BlockSchedule) -> tuple[int, int]:
    """Inclusive 1-based round interval of block ``k`` (blocks are 1-based)."""
    if not 1 <= k <= schedule.block_count:
        raise ValueError(f"block index {k} out of range 1..{schedule.block_count}")
    start = (k - 1) * schedule.block_len + 1
    stop = min(k * schedule.block_len, schedule.horizon)
    return start, stop


@dataclass(frozen=True, eq=False)
class BilevelState:
    """Outer distribution over candidates plus one policy row per candidate.

    Both levels require strictly positive initial distributions, and every
    candidate weight is unit norm by construction.
    """

    outer: SimplexPoint
    policy: tuple[SimplexPoint, ...]
    candidates: tuple[WeightVector, ...]
    objective: WeightVector
    eta_p: float
    eta_q: float
    gamma_p: float
    gamma_q: float

    def __post_init__(self):
        object.__setattr__(self, "policy", tuple(self.policy))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        m = len(self.candidates)
        if m < 1:
            raise ValueError("need at least one candidate weight")
        if len(self.outer) != m or len(self.policy) != m:
            raise ValueError("outer distribution and policy must have one entry "
                             "per candidate")
        if not self.outer.strictly_positive:
            raise ValueError("outer distribution must have no zero entries")
        n_actions = len(self.policy[0])
        for row in self.policy:
            if len(row) != n_actions:
                raise ValueError("policy rows must share one action set")
            if not row.strictly_positive:
                raise ValueError("policy rows must have no zero entries")
        dim = self.objective.dim
        if any(c.dim != dim for c in self.candidates):
            raise ValueError("candidates and objective must share one dimension")
        if not (self.eta_p > 0 and self.eta_q > 0):
            raise ValueError("step sizes must be positive")
        if self.gamma_p < 0 or self.gamma_q < 0:
            raise ValueError("IX parameters must be nonnegative")

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    @property
    def num_actions(self) -> int:
        return len(self.policy[0])

    @classmethod
    def uniform_init(
        cls,
        candidates: Sequence[WeightVector],
        objective: WeightVector,
        num_actions: int,
        *,
        eta_p: float,
        eta_q: float,
        gamma_p: float,
        gamma_q: float,
    ) -> "BilevelState":
        m = len(candidates)
        return cls(
            outer=SimplexPoint.uniform(m),
            policy=tuple(SimplexPoint.uniform(num_actions) for _ in range(m)),
            candidates=tuple(candidates),
            objective=objective,
            eta_p=eta_p,
            eta_q=eta_q,
            gamma_p=gamma_p,
            gamma_q=gamma_q,
        )


def _estimate_cap(payoff_dim: int, payoff_bound: float, gamma: float) -> float:
    if gamma <= 0:
        return math.inf
    return math.sqrt(payoff_dim) * payoff_bound / gamma


def _check_estimate(value: float, cap: float, where: str) -> None:
    if abs(value) > cap + ESTIMATE_TOL:
        raise AssertionError(
            f"{where} IX estimate {value!r} exceeds the magnitude cap {cap!r}"
        )


def _two_player(game: VectorGame) -> None:
    if game.players != 2:
        raise ValueError("environments model exactly one opponent (2-player game)")


class FixedOpponentEnv:
    """An opponent that samples from one stationary policy every round."""

    def __init__(
        self,
        game: VectorGame,
        policy: SimplexPoint,
        rng: np.random.Generator,
        focal_player: int = 0,
    ):
        _two_player(game)
        opp = 1 - focal_player
        if len(policy) != game.action_counts[opp]:
            raise ValueError("policy does not match the opponent's action count")
        self.game = game
        self.focal_player = focal_player
        self._policy = policy
        self._rng = rng
        self._focal_tensor = game.payoffs[focal_player]

    def step(self, focal_action: int):
        a = int(focal_action)
        if not 0 <= a < self.game.action_counts[self.focal_player]:
            raise IndexError(f"focal action {a} out of range")
        b = int(sample_from_uniform(self._policy.probs, self._rng.random()))
        profile = (a, b) if self.focal_player == 0 else (b, a)
        return self._focal_tensor[profile].copy(), b


class ExpIXOpponentEnv:
    """An opponent running Exp-IX on its own scalarized payoff.

    Each step samples the opponent's action, looks up the realized payoff
    vectors, updates the opponent's distribution from its scalar reward, and
    returns the focal player's payoff vector together with the opponent's
    action.  Focal and opponent learners thus update simultaneously from the
    same realized round.
    """

    def __init__(
        self,
        game: VectorGame,
        weight: WeightVector,
        eta: float,
        gamma: float,
        rng: np.random.Generator,
        init_policy: SimplexPoint | None = None,
        focal_player: int = 0,
    ):
        _two_player(game)
        if not eta > 0:
            raise ValueError("opponent eta must be positive")
        if gamma < 0:
            raise ValueError("opponent gamma must be nonnegative")
        opp = 1 - focal_player
        n_opp = game.action_counts[opp]
        if weight.dim != game.payoff_dims[opp]:
            raise ValueError("opponent weight does not match its payoff dimension")
        if init_policy is None:
            init_policy = SimplexPoint.uniform(n_opp)
        if len(init_policy) != n_opp or not init_policy.strictly_positive:
            raise ValueError("opponent initial policy must be strictly positive "
                             "over its action set")
        self.game = game
        self.focal_player = focal_player
        self._eta = eta
        self._gamma = gamma
        self._rng = rng
        self._probs = init_policy.probs.copy()
        self._focal_tensor = game.payoffs[focal_player]
        self._reward_table = scalar_reward_table(game, opp, weight, focal_player)
        self._cap = _estimate_cap(game.payoff_dims[opp], game.payoff_bound, gamma)

    @property
    def policy(self) -> SimplexPoint:
        return SimplexPoint(self._probs.copy())

    def step(self, focal_action: int):
        a = int(focal_action)
        if not 0 <= a < self.game.action_counts[self.focal_player]:
            raise IndexError(f"focal action {a} out of range")
        b = int(sample_from_uniform(self._probs, self._rng.random()))
        reward = self._reward_table[a, b]
        ghat = -reward / (self._probs[b] + self._gamma)
        _check_estimate(ghat, self._cap, "opponent")
        loss = np.zeros(self._probs.shape[0])
        loss[b] = ghat
        self._probs = omd_entropy_raw(self._probs, loss, self._eta)
        profile = (a, b) if self.focal_player == 0 else (b, a)
        return self._focal_tensor[profile].copy(), b


def env_step(env, focal_action: int):
    """Advance the environment one round; returns (payoff vector, opp action)."""
    return env.step(focal_action)


@dataclass(eq=False)
class RunHistory:
    """Complete log of one run: every round, every block, final state.

    Candidate indices are 0-based; block and round numbering in
    :meth:`block_slice` follows the 1-based convention of
    :func:`block_indices`.  Per-round distributions and outer distributions
    are the values in force *before* that round's (block's) update.
    """

    horizon: int
    block_len: int
    payoff_bound: float
    eta_p: float
    eta_q: float
    gamma_p: float
    gamma_q: float
    candidates: np.ndarray      # (m, d)
    objective: np.ndarray       # (d,)
    actions: np.ndarray         # (T,) focal action per round
    opp_actions: np.ndarray     # (T,)
    payoffs: np.ndarray         # (T, d) realized payoff vectors
    dists: np.ndarray           # (T, n_actions) deployed row before update
    estimates: np.ndarray       # (T, n_actions) inner IX estimates
    deployed: np.ndarray        # (h,) sampled candidate index per block
    outer_dists: np.ndarray     # (h, m) outer distribution before update
    block_rewards: np.ndarray   # (h,) block-average objective reward
    outer_estimates: np.ndarray  # (h, m) outer IX estimates
    outer_final: np.ndarray     # (m,) outer distribution after the last block
    policy_final: np.ndarray    # (m, n_actions)
    obj_reward_table: np.ndarray  # (n_focal, n_opp) objective reward per profile
    seed: int | None = None

    def __post_init__(self):
        T, h = self.horizon, self.schedule.block_count
        if self.actions.shape != (T,) or self.opp_actions.shape != (T,):
            raise ValueError("per-round action logs must have length horizon")
        if self.payoffs.shape[0] != T or self.dists.shape[0] != T:
            raise ValueError("per-round logs must have length horizon")
        if self.deployed.shape != (h,) or self.block_rewards.shape != (h,):
            raise ValueError("per-block logs must have one entry per block")

    @property
    def schedule(self) -> BlockSchedule:
        return BlockSchedule(self.horizon, self.block_len)

    @property
    def block_count(self) -> int:
        return self.schedule.block_count

    @property
    def num_candidates(self) -> int:
        return self.candidates.shape[0]

    @property
    def num_actions(self) -> int:
        return self.dists.shape[1]

    @property
    def payoff_dim(self) -> int:
        return self.objective.shape[0]

    def block_slice(self, k: int) -> slice:
        """0-based array slice covering 1-based block ``k``."""
        start, stop = block_indices(k, self.schedule)
        return slice(start - 1, stop)

    _ARRAY_FIELDS = (
        "candidates", "objective", "actions", "opp_actions", "payoffs",
        "dists", "estimates", "deployed", "outer_dists", "block_rewards",
        "outer_estimates", "outer_final", "policy_final", "obj_reward_table",
    )

    def to_json_dict(self) -> dict:
        out = {
            "format": HISTORY_FORMAT,
            "horizon": self.horizon,
            "block_len": self.block_len,
            "payoff_bound": self.payoff_bound,
            "eta_p": self.eta_p,
            "eta_q": self.eta_q,
            "gamma_p": self.gamma_p,
            "gamma_q": self.gamma_q,
            "seed": self.seed,
        }
        for name in self._ARRAY_FIELDS:
            out[name] = getattr(self, name).tolist()
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunHistory":
        if data.get("format") != HISTORY_FORMAT:
            raise ValueError(f"unrecognized history format {data.get('format')!r}")
        kwargs = {
            "horizon": int(data["horizon"]),
            "block_len": int(data["block_len"]),
            "payoff_bound": float(data["payoff_bound"]),
            "eta_p": float(data["eta_p"]),
            "eta_q": float(data["eta_q"]),
            "gamma_p": float(data["gamma_p"]),
            "gamma_q": float(data["gamma_q"]),
            "seed": data.get("seed"),
        }
        int_fields = {"actions", "opp_actions", "deployed"}
        for name in cls._ARRAY_FIELDS:
            dtype = np.int64 if name in int_fields else float
            kwargs[name] = np.asarray(data[name], dtype=dtype)
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load(cls, path) -> "RunHistory":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(eq=False)
class InnerLog:
    """Per-round records produced by one inner-learner block."""

    actions: np.ndarray
    opp_actions: np.ndarray
    payoffs: np.ndarray
    dists: np.ndarray
    estimates: np.ndarray


def inner_alg(
    j: int,
    state: BilevelState,
    block: tuple[int, int],
    env,
    rng: np.random.Generator,
) -> tuple[BilevelState, float, InnerLog]:
    """Play one block with candidate row ``j`` deployed (0-based index).

    Each round samples an action from row ``j``, steps the environment,
    accumulates the objective-weight reward, and applies one IX + mirror step
    to row ``j`` only.  All other rows are untouched.  Returns the updated
    state, the block-average objective reward, and the per-round log.
    """
    if not 0 <= j < state.num_candidates:
        raise IndexError(f"candidate index {j} out of range")
    start, stop = block
    length = stop - start + 1
    if length < 1:
        raise ValueError(f"empty block interval {block}")
    psi_j = state.candidates[j].coords
    psi_obj = state.objective.coords
    eta_q, gamma_q = state.eta_q, state.gamma_q
    q = state.policy[j].probs.copy()
    n_actions = q.shape[0]
    dim = psi_obj.shape[0]
    cap = _estimate_cap(dim, env.game.payoff_bound, gamma_q)

    actions = np.empty(length, dtype=np.int64)
    opp_actions = np.empty(length, dtype=np.int64)
    payoffs = np.empty((length, dim))
    dists = np.empty((length, n_actions))
    estimates = np.zeros((length, n_actions))
    s_obj = 0.0
    for idx in range(length):
        a = int(sample_from_uniform(q, rng.random()))
        try:
            u_vec, b = env.step(a)
        except (IndexError, ValueError) as exc:
            raise RuntimeError(
                f"environment failed at round {start + idx}: {exc}"
            ) from exc
        s_obj += float(np.dot(psi_obj, u_vec))
        r = float(np.dot(psi_j, u_vec))
        ghat = -r / (q[a] + gamma_q)
        _check_estimate(ghat, cap, "inner")
        actions[idx] = a
        opp_actions[idx] = b
        payoffs[idx] = u_vec
        dists[idx] = q
        estimates[idx, a] = ghat
        q = omd_entropy_raw(q, estimates[idx], eta_q)
    r_obj = s_obj / length
    policy = list(state.policy)
    policy[j] = SimplexPoint(q)
    new_state = replace(state, policy=tuple(policy))
    log = InnerLog(actions, opp_actions, payoffs, dists, estimates)
    return new_state, r_obj, log


def _resolve_streams(rng) -> tuple[np.random.Generator, np.random.Generator]:
    if isinstance(rng, tuple):
        outer_rng, focal_rng = rng
        return outer_rng, focal_rng
    if isinstance(rng, np.random.Generator):
        return rng, rng
    raise TypeError("rng must be a Generator or an (outer, focal) pair")


def scalar_reward_table(
    game: VectorGame, player: int, weight: WeightVector, focal_player: int = 0
) -> np.ndarray:
    """``player``'s scalarized reward at every joint profile of a 2-player game.

    Indexed ``(focal action, opponent action)`` regardless of which seat the
    focal player occupies.  Entries are exact inner products of the weight
    with the stored payoff vectors, so table lookups and per-round dot
    products agree bit for bit.
    """
    _two_player(game)
    opp = 1 - focal_player
    n_focal, n_opp = game.action_counts[focal_player], game.action_counts[opp]
    tensor = game.payoffs[player]
    table = np.empty((n_focal, n_opp))
    for a in range(n_focal):
        for b in range(n_opp):
            profile = (a, b) if focal_player == 0 else (b, a)
            table[a, b] = float(np.dot(weight.coords, tensor[profile]))
    return table


def outer_alg(
    state: BilevelState,
    schedule: BlockSchedule,
    env,
    rng,
) -> RunHistory:
    """Run the full block protocol and log everything.

    ``rng`` is either a single Generator (shared by outer and focal sampling)
    or an ``(outer, focal)`` pair of Generators; the opponent's stream lives
    inside ``env``.
    """
    outer_rng, focal_rng = _resolve_streams(rng)
    T, h = schedule.horizon, schedule.block_count
    m, n_actions = state.num_candidates, state.num_actions
    dim = state.objective.dim
    eta_p, gamma_p = state.eta_p, state.gamma_p
    cap = _estimate_cap(dim, env.game.payoff_bound, gamma_p)

    actions = np.empty(T, dtype=np.int64)
    opp_actions = np.empty(T, dtype=np.int64)
    payoffs = np.empty((T, dim))
    dists = np.empty((T, n_actions))
    estimates = np.empty((T, n_actions))
    deployed = np.empty(h, dtype=np.int64)
    outer_dists = np.empty((h, m))
    block_rewards = np.empty(h)
    outer_estimates = np.zeros((h, m))

    p = state.outer.probs.copy()
    for k in range(1, h + 1):
        start, stop = block_indices(k, schedule)
        jk = int(sample_from_uniform(p, outer_rng.random()))
        state, r_obj, log = inner_alg(jk, state, (start, stop), env, focal_rng)
        sl = slice(start - 1, stop)
        actions[sl] = log.actions
        opp_actions[sl] = log.opp_actions
        payoffs[sl] = log.payoffs
        dists[sl] = log.dists
        estimates[sl] = log.estimates
        deployed[k - 1] = jk
        outer_dists[k - 1] = p
        block_rewards[k - 1] = r_obj
        ghat = -r_obj / (p[jk] + gamma_p)
        _check_estimate(ghat, cap, "outer")
        outer_estimates[k - 1, jk] = ghat
        p = omd_entropy_raw(p, outer_estimates[k - 1], eta_p)

    return RunHistory(
        horizon=T,
        block_len=schedule.block_len,
        payoff_bound=env.game.payoff_bound,
        eta_p=eta_p,
        eta_q=state.eta_q,
        gamma_p=gamma_p,
        gamma_q=state.gamma_q,
        candidates=np.stack([c.coords for c in state.candidates]),
        objective=state.objective.coords.copy(),
        actions=actions,
        opp_actions=opp_actions,
        payoffs=payoffs,
        dists=dists,
        estimates=estimates,
        deployed=deployed,
        outer_dists=outer_dists,
        block_rewards=block_rewards,
        outer_estimates=outer_estimates,
        outer_final=p,
        policy_final=np.stack([row.probs for row in state.policy]),
        obj_reward_table=scalar_reward_table(
            env.game, env.focal_player, state.objective, env.focal_player
        ),
    )


def stream_seeds(seed: int) -> tuple:
    """Child seed sequences (outer, focal, opponent) for one run seed."""
    return tuple(np.random.SeedSequence(int(seed)).spawn(3))


def simulate_run(
    game: VectorGame,
    candidates: Sequence[WeightVector],
    objective: WeightVector,
    opponent_weight: WeightVector,
    schedule: BlockSchedule,
    *,
    eta_p: float,
    eta_q: float,
    gamma_p: float,
    gamma_q: float,
    opponent_eta: float,
    opponent_gamma: float,
    seed: int,
    opponent_init: SimplexPoint | None = None,
    focal_player: int = 0,
) -> RunHistory:
    """One seeded bilevel-vs-Exp-IX run, from uniform initial distributions."""
    outer_ss, focal_ss, opp_ss = stream_seeds(seed)
    env = ExpIXOpponentEnv(
        game,
        opponent_weight,
        opponent_eta,
        opponent_gamma,
        rng=np.random.default_rng(opp_ss),
        init_policy=opponent_init,
        focal_player=focal_player,
    )
    state = BilevelState.uniform_init(
        candidates,
        objective,
        game.action_counts[focal_player],
        eta_p=eta_p,
        eta_q=eta_q,
        gamma_p=gamma_p,
        gamma_q=gamma_q,
    )
    history = outer_alg(
        state,
        schedule,
        env,
        (np.random.default_rng(outer_ss), np.random.default_rng(focal_ss)),
    )
    history.seed = int(seed)
    return history
