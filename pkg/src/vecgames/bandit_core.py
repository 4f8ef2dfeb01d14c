"""Simplex sampling, IX-stabilized loss estimates, and entropy mirror steps.

These three primitives are shared by the inner action learner, the outer
weight learner, and the Exp-IX baseline: sample an index from a distribution
using exactly one uniform draw, turn one observed scalar reward into an
importance-weighted loss vector with an implicit-exploration offset in the
denominator, and apply one mirror-descent step under the negative-entropy
regularizer (a multiplicative-weights update in closed form).

The ``*_raw``/``*_from_uniform`` helpers operate on bare arrays and accept a
leading batch axis; the public operations wrap them with validation.  Keeping
a single arithmetic path means the batched experiment engine and the
round-by-round reference engine run identical formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

#: Simplex membership tolerance on the probability sum.
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """A probability vector over a finite index set."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise ValueError("probs must be a nonempty one-dimensional vector")
        if np.min(arr) < 0.0:
            raise ValueError("probabilities must be nonnegative")
        if abs(float(arr.sum()) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"probabilities sum to {arr.sum()!r}, not 1")
        object.__setattr__(self, "probs", arr)

    def __len__(self) -> int:
        return self.probs.shape[0]

    @property
    def strictly_positive(self) -> bool:
        return bool(np.min(self.probs) > 0.0)

    @classmethod
    def uniform(cls, n: int) -> "SimplexPoint":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, index: int) -> "SimplexPoint":
        probs = np.zeros(n)
        probs[index] = 1.0
        return cls(probs)


@dataclass(frozen=True, eq=False)
class LearnerState:
    """An exponential-weights learner: distribution, step size, IX parameter."""

    dist: SimplexPoint
    eta: float
    gamma: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


def sample_from_uniform(probs: np.ndarray, u) -> np.ndarray:
    """Index with cumulative mass just above ``u``; vectorized over rows.

    ``probs`` has shape ``(..., n)`` and ``u`` shape ``(...)``; the result is
    the integer index per row, clipped to ``n - 1`` so a draw at the very top
    of the range cannot fall off the end.
    """
    cdf = np.cumsum(probs, axis=-1)
    idx = (np.expand_dims(np.asarray(u), -1) >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample(dist: SimplexPoint, rng: np.random.Generator) -> int:
    """Draw one index from ``dist``, consuming exactly one uniform draw."""
    return int(sample_from_uniform(dist.probs, rng.random()))


def ix_estimate(dist: SimplexPoint, chosen: int, reward: float, gamma: float) -> np.ndarray:
    """Importance-weighted loss estimate from one observed reward.

    Only the chosen index is nonzero: ``-reward / (p(chosen) + gamma)``.  The
    estimate uses the distribution in force when the action was sampled, never
    a post-update one.
    """
    n = len(dist)
    if not 0 <= int(chosen) < n:
        raise IndexError(f"chosen index {chosen} out of range for {n} arms")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    denom = float(dist.probs[chosen]) + gamma
    if denom == 0.0:
        raise ZeroDivisionError(
            "ix_estimate with gamma = 0 requires positive mass on the chosen index"
        )
    out = np.zeros(n)
    out[chosen] = -float(reward) / denom
    return out


def omd_entropy_raw(probs: np.ndarray, loss: np.ndarray, eta: float) -> np.ndarray:
    """Multiplicative-weights step ``p(a) * exp(-eta * loss(a)) / Z``.

    The exponent is shifted by its row maximum before exponentiation so long
    loss streaks cannot overflow; the shift cancels in the normalization.
    Accepts a leading batch axis.
    """
    z = -eta * loss
    z = z - z.max(axis=-1, keepdims=True)
    w = probs * np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def omd_entropy_step(dist: SimplexPoint, loss, eta: float) -> SimplexPoint:
    """One entropy-regularized mirror-descent step over the simplex.

    This closed form is the exact minimizer of ``<q, loss> + KL(q || dist)/eta``
    over the simplex.  A strictly positive input yields a strictly positive
    output.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    loss_arr = np.asarray(loss, dtype=float)
    if loss_arr.shape != dist.probs.shape:
        raise ValueError(
            f"loss has shape {loss_arr.shape}, expected {dist.probs.shape}"
        )
    if not np.all(np.isfinite(loss_arr)):
        raise ValueError("loss must be finite")
    return SimplexPoint(omd_entropy_raw(dist.probs, loss_arr, eta))


def expix_step(state: LearnerState, chosen: int, reward: float) -> LearnerState:
    """One Exp-IX update: IX estimate of the observed reward, then an OMD step.

    This composition is the baseline learner and also the body of both levels
    of the block protocol.
    """
    ghat = ix_estimate(state.dist, chosen, reward, state.gamma)
    return replace(state, dist=omd_entropy_step(state.dist, ghat, state.eta))
