"""Polyhedral preference cones, dual-cone membership, and linear scalarization.

A cone can be described by a finite list of generators (conic-hull form), by a
list of half-space normals ``h`` encoding ``<h, x> >= 0`` (intersection form),
or by both.  Membership tests use the half-space form when it is available and
fall back to a nonnegative least-squares fit against the generators otherwise.
Interior (strict-order) tests require the half-space form.

All values are immutable after construction and every operation is a pure
function, so everything here is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from scipy.optimize import nnls

#: Default slack/residual tolerance for membership tests.
DEFAULT_TOL = 1e-9

#: Tolerance on the Euclidean norm of a weight vector.
UNIT_TOL = 1e-12


class DimensionMismatch(ValueError):
    """A vector's length does not match the ambient dimension."""


class UnsupportedRepresentation(ValueError):
    """The operation needs a cone representation that was not supplied."""


def _vector(v, dim: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"{name} has length {arr.shape[0]}, expected {dim}")
    return arr


def _matrix(rows, dim: int, name: str) -> np.ndarray:
    rows = list(rows)
    if not rows:
        return np.zeros((0, dim))
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatch(f"every {name} vector must have length {dim}")
    return arr


@dataclass(frozen=True, eq=False)
class PolyhedralCone:
    """A polyhedral cone in ``R^dim``.

    ``generators`` is a (possibly empty) list of vectors whose nonnegative
    combinations span the cone.  ``halfspaces`` is an optional list of normals
    ``h`` encoding the constraints ``<h, x> >= 0``.  At least one of the two
    representations must be nonempty, and when both are given every generator
    must satisfy every half-space constraint up to ``tol``.
    """

    dim: int
    generators: np.ndarray = ()
    halfspaces: np.ndarray | None = None
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        gens = _matrix(self.generators, self.dim, "generator")
        if gens.shape[0] and np.any(np.all(gens == 0.0, axis=1)):
            raise ValueError("generators must not contain the zero vector")
        object.__setattr__(self, "generators", gens)
        if self.halfspaces is not None:
            half = _matrix(self.halfspaces, self.dim, "halfspace")
            if half.shape[0] == 0:
                raise ValueError("halfspaces, when given, must be nonempty")
            object.__setattr__(self, "halfspaces", half)
            if gens.shape[0] and np.min(gens @ half.T) < -self.tol:
                raise ValueError(
                    "inconsistent representations: a generator violates a halfspace"
                )
        elif gens.shape[0] == 0:
            raise ValueError("generators may be empty only if halfspaces are given")

    @property
    def has_halfspaces(self) -> bool:
        return self.halfspaces is not None

    @property
    def has_generators(self) -> bool:
        return self.generators.shape[0] > 0


def orthant(dim: int, tol: float = DEFAULT_TOL) -> PolyhedralCone:
    """The nonnegative orthant of ``R^dim``, carrying both representations."""
    eye = np.eye(dim)
    return PolyhedralCone(dim, generators=eye, halfspaces=eye, tol=tol)


def cone_contains(cone: PolyhedralCone, v) -> bool:
    """Whether ``v`` lies in the cone.

    With half-spaces present this checks every slack ``<h, v> >= -tol``.
    Otherwise it solves a nonnegative least-squares fit against the generators
    and accepts residual norms up to ``tol``.
    """
    vec = _vector(v, cone.dim, "v")
    if cone.has_halfspaces:
        return bool(np.min(cone.halfspaces @ vec) >= -cone.tol)
    _, residual = nnls(cone.generators.T, vec)
    return bool(residual <= cone.tol)


def dual_contains(cone: PolyhedralCone, psi) -> bool:
    """Whether ``psi`` lies in the dual cone.

    Needs the generator list: ``psi`` is dual-feasible iff it has nonnegative
    inner product with every generator.
    """
    if not cone.has_generators:
        raise UnsupportedRepresentation(
            "dual membership needs a generator list; halfspace-only cones are unsupported"
        )
    vec = _vector(psi, cone.dim, "psi")
    return bool(np.min(cone.generators @ vec) >= -cone.tol)


def cone_order_leq(cone: PolyhedralCone, a, b) -> bool:
    """Weak cone order: ``a <= b`` iff ``b - a`` lies in the cone."""
    av = _vector(a, cone.dim, "a")
    bv = _vector(b, cone.dim, "b")
    return cone_contains(cone, bv - av)


def cone_order_strict(cone: PolyhedralCone, a, b) -> bool:
    """Strict cone order: ``a < b`` iff ``b - a`` lies in the cone's interior.

    Interior tests need the half-space representation; a generators-only cone
    raises rather than silently approximating.
    """
    if not cone.has_halfspaces:
        raise UnsupportedRepresentation(
            "strict order needs the halfspace representation"
        )
    av = _vector(a, cone.dim, "a")
    bv = _vector(b, cone.dim, "b")
    return bool(np.min(cone.halfspaces @ (bv - av)) > cone.tol)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """A unit-norm scalarization direction.

    ``dual_checked`` is set only by :func:`check_dual_membership`; a freshly
    constructed weight is unit-norm but not yet tied to any cone.
    """

    coords: np.ndarray
    dual_checked: bool = False

    def __post_init__(self):
        arr = _vector(self.coords, name="coords")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > UNIT_TOL:
            raise ValueError(f"weight vector must have unit norm, got {norm!r}")
        object.__setattr__(self, "coords", arr)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]


def normalize_weight(v) -> WeightVector:
    """Scale ``v`` to unit Euclidean norm.  The zero vector is rejected."""
    vec = _vector(v, name="v")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    coords = vec / norm
    # Idempotence: renormalizing keeps an already-unit vector bit-identical.
    if abs(norm - 1.0) <= UNIT_TOL:
        coords = vec
    return WeightVector(coords)


def check_dual_membership(cone: PolyhedralCone, weight: WeightVector) -> WeightVector:
    """Return a copy of ``weight`` tagged as dual-feasible for ``cone``.

    Raises ``ValueError`` if the weight is not in the dual cone.
    """
    if weight.dim != cone.dim:
        raise DimensionMismatch(
            f"weight has dimension {weight.dim}, cone has {cone.dim}"
        )
    if not dual_contains(cone, weight.coords):
        raise ValueError("weight is not in the dual cone")
    return replace(weight, dual_checked=True)


def scalarize(psi, u) -> float:
    """Inner product of a weight vector with a payoff vector."""
    pv = psi.coords if isinstance(psi, WeightVector) else _vector(psi, name="psi")
    uv = _vector(u, name="u")
    if pv.shape[0] != uv.shape[0]:
        raise DimensionMismatch(
            f"weight has length {pv.shape[0]}, payoff has length {uv.shape[0]}"
        )
    return float(np.dot(pv, uv))


def _compositions(total: int, parts: int) -> Iterable[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def weight_grid(dim: int, points_per_axis: int = 11) -> list[WeightVector]:
    """Normalized nonnegative weight directions on a regular simplex grid.

    Enumerates all nonnegative integer compositions of ``points_per_axis - 1``
    into ``dim`` parts and normalizes each; with 11 points per axis in
    dimension 2 this is the classic ``(k/10, 1 - k/10)`` grid.
    """
    if dim < 1 or points_per_axis < 2:
        raise ValueError("need dim >= 1 and points_per_axis >= 2")
    return [
        normalize_weight(np.array(comp, dtype=float))
        for comp in _compositions(points_per_axis - 1, dim)
    ]
