"""Normal-form games with vector payoffs and small-instance equilibrium checks.

A :class:`VectorGame` stores one dense payoff tensor per player; scalarizing
through a profile of weight vectors yields a :class:`ScalarGame` whose pure
Nash equilibria are enumerated by brute force.  Profiles can also be tested
directly for the weak cone-order equilibrium property (no player has a
strictly cone-better unilateral pure deviation), and the inclusion "every
scalarized-game equilibrium is a weak equilibrium" can be certified over a
finite grid of weight profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cones import (
    DimensionMismatch,
    PolyhedralCone,
    WeightVector,
    cone_order_strict,
)

#: Deviation-gain tolerance: ties count as equilibria.
NASH_TOL = 1e-9

#: Brute-force enumeration limit on the number of joint profiles.
MAX_PROFILES = 10**6


@dataclass(frozen=True, eq=False)
class VectorGame:
    """An n-player game whose stage payoffs are vectors.

    ``payoffs[i]`` has shape ``(*action_counts, payoff_dims[i])`` and every
    coordinate is bounded by ``payoff_bound`` in absolute value.
    """

    payoffs: tuple[np.ndarray, ...]
    payoff_bound: float
    action_labels: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        if not self.payoffs:
            raise ValueError("need at least one player")
        tensors = tuple(np.asarray(p, dtype=float) for p in self.payoffs)
        n = len(tensors)
        counts = tensors[0].shape[:-1]
        if len(counts) != n:
            raise ValueError(
                f"payoff tensor rank {tensors[0].ndim} does not match {n} players"
            )
        for i, t in enumerate(tensors):
            if t.ndim != n + 1 or t.shape[:-1] != counts:
                raise ValueError(f"player {i} payoff tensor has shape {t.shape}, "
                                 f"expected leading dims {counts}")
            if t.shape[-1] < 1:
                raise ValueError(f"player {i} payoff dimension must be positive")
        if not self.payoff_bound > 0:
            raise ValueError("payoff_bound must be positive")
        for i, t in enumerate(tensors):
            if np.max(np.abs(t)) > self.payoff_bound:
                raise ValueError(
                    f"player {i} payoffs exceed the bound {self.payoff_bound}"
                )
        object.__setattr__(self, "payoffs", tensors)
        if self.action_labels is not None:
            labels = tuple(tuple(lab) for lab in self.action_labels)
            if len(labels) != n or any(
                len(lab) != counts[i] for i, lab in enumerate(labels)
            ):
                raise ValueError("action_labels do not match the action counts")
            object.__setattr__(self, "action_labels", labels)

    @property
    def players(self) -> int:
        return len(self.payoffs)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.payoffs[0].shape[:-1]

    @property
    def payoff_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[-1] for t in self.payoffs)


@dataclass(frozen=True, eq=False)
class ScalarGame:
    """The scalar-payoff game induced by fixing one weight per player."""

    payoffs: tuple[np.ndarray, ...]

    def __post_init__(self):
        tensors = tuple(np.asarray(p, dtype=float) for p in self.payoffs)
        n = len(tensors)
        if n == 0:
            raise ValueError("need at least one player")
        counts = tensors[0].shape
        for i, t in enumerate(tensors):
            if t.ndim != n or t.shape != counts:
                raise ValueError(f"player {i} scalar tensor has shape {t.shape}, "
                                 f"expected {counts}")
        object.__setattr__(self, "payoffs", tensors)

    @property
    def players(self) -> int:
        return len(self.payoffs)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.payoffs[0].shape


def _check_profile(game, joint_action) -> tuple[int, ...]:
    profile = tuple(int(a) for a in joint_action)
    counts = game.action_counts
    if len(profile) != len(counts):
        raise ValueError(f"profile {profile} does not cover {len(counts)} players")
    for i, a in enumerate(profile):
        if not 0 <= a < counts[i]:
            raise IndexError(f"action {a} out of range for player {i}")
    return profile


def payoff(game: VectorGame, joint_action: Sequence[int], player: int) -> np.ndarray:
    """The stored payoff vector for ``player`` at the given joint action.

    Returns a fresh copy so callers can never alias the game's tensors.
    """
    if not 0 <= player < game.players:
        raise IndexError(f"player index {player} out of range")
    profile = _check_profile(game, joint_action)
    return game.payoffs[player][profile].copy()


def average_payoff(history: Sequence) -> np.ndarray:
    """Coordinate-wise mean of a nonempty sequence of payoff vectors."""
    if len(history) == 0:
        raise ValueError("cannot average an empty payoff history")
    arr = np.asarray(history, dtype=float)
    if arr.ndim != 2:
        raise ValueError("payoff history must be a sequence of equal-length vectors")
    return arr.mean(axis=0)


def scalarized_game(game: VectorGame, weights: Sequence[WeightVector]) -> ScalarGame:
    """Scalarize every player's payoff tensor through that player's weight."""
    if len(weights) != game.players:
        raise ValueError(f"need one weight per player ({game.players})")
    dims = game.payoff_dims
    tensors = []
    for i, w in enumerate(weights):
        coords = w.coords if isinstance(w, WeightVector) else np.asarray(w, float)
        if coords.shape != (dims[i],):
            raise DimensionMismatch(
                f"weight for player {i} has shape {coords.shape}, expected ({dims[i]},)"
            )
        tensors.append(np.tensordot(game.payoffs[i], coords, axes=([-1], [0])))
    return ScalarGame(tuple(tensors))


def pure_nash(scalar_game: ScalarGame, tol: float = NASH_TOL) -> set[tuple[int, ...]]:
    """All pure profiles where no player gains more than ``tol`` by deviating.

    Exhaustive enumeration, limited to ``MAX_PROFILES`` joint profiles.
    """
    counts = scalar_game.action_counts
    if math.prod(counts) > MAX_PROFILES:
        raise ValueError(f"game has more than {MAX_PROFILES} joint profiles")
    mask = np.ones(counts, dtype=bool)
    for i, pay in enumerate(scalar_game.payoffs):
        best = pay.max(axis=i, keepdims=True)
        mask &= pay >= best - tol
    return {tuple(int(a) for a in idx) for idx in np.argwhere(mask)}


def is_weak_nash(
    game: VectorGame,
    cones: Sequence[PolyhedralCone],
    profile: Sequence[int],
) -> bool:
    """Whether no player has a strictly cone-better unilateral pure deviation.

    Every cone must carry a half-space representation (interior test).
    """
    if len(cones) != game.players:
        raise ValueError(f"need one cone per player ({game.players})")
    prof = _check_profile(game, profile)
    for i in range(game.players):
        base = payoff(game, prof, i)
        for alt in range(game.action_counts[i]):
            if alt == prof[i]:
                continue
            deviated = prof[:i] + (alt,) + prof[i + 1:]
            if cone_order_strict(cones[i], base, payoff(game, deviated, i)):
                return False
    return True


@dataclass
class InclusionReport:
    """Result of certifying scalarized equilibria against the weak-order test.

    ``checked`` holds every (weight profile, equilibrium profile) pair that was
    tested; ``violations`` the subset that failed.  Only the inclusion
    direction is certified: a finite grid cannot witness equality.
    """

    checked: list[tuple[tuple[WeightVector, ...], tuple[int, ...]]]
    violations: list[tuple[tuple[WeightVector, ...], tuple[int, ...]]]

    @property
    def ok(self) -> bool:
        return not self.violations


def certify_prop1_inclusion(
    game: VectorGame,
    cones: Sequence[PolyhedralCone],
    candidate_weights,
) -> InclusionReport:
    """Check that every pure equilibrium of every scalarized game is weak Nash.

    ``candidate_weights`` is an iterable of weight profiles (one weight per
    player).  Weak-Nash verdicts are memoized per profile since they do not
    depend on the weights.
    """
    checked = []
    violations = []
    weak_cache: dict[tuple[int, ...], bool] = {}
    for wp in candidate_weights:
        wp = tuple(wp)
        sg = scalarized_game(game, wp)
        for x in sorted(pure_nash(sg)):
            checked.append((wp, x))
            verdict = weak_cache.get(x)
            if verdict is None:
                verdict = is_weak_nash(game, cones, x)
                weak_cache[x] = verdict
            if not verdict:
                violations.append((wp, x))
    return InclusionReport(checked=checked, violations=violations)


def profile_label(game: VectorGame, profile: Sequence[int]) -> str:
    """Concatenated action labels for a joint profile, e.g. ``'BB'``."""
    prof = _check_profile(game, profile)
    if game.action_labels is None:
        return "".join(str(a) for a in prof)
    return "".join(game.action_labels[i][a] for i, a in enumerate(prof))


def bos4d() -> VectorGame:
    """Built-in two-player, two-action game with a shared 4-D payoff vector.

    Both players read the same payoff table; they differ only in how they
    scalarize it.  Coordinates are bounded by 1.
    """
    table = np.array(
        [
            [[1, 1, 1, 0], [-1, 1, 1, -1]],
            [[1, -1, -1, 1], [0, 1, 1, 1]],
        ],
        dtype=float,
    )
    labels = (("B", "S"), ("B", "S"))
    return VectorGame(payoffs=(table, table.copy()), payoff_bound=1.0,
                      action_labels=labels)


GAME_PRESETS = {"bos4d": bos4d}
