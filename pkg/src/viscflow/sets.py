"""Convex geometry in R^d: membership, sampling, and nearest-point maps.

Every set kind carries a closed-form projection, except intersections, which
are handled by cyclic alternating projections and documented as approximate.
Projecting a point that already belongs to the set returns its coordinates
unchanged; downstream code relies on this when it needs ``P(x) == x`` to hold
exactly.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MembershipViolation, NonConvergence

# Slack for "does x belong to K" questions.
MEMBERSHIP_TOL = 1e-9
# Slack for projection arithmetic identities.
PROJECTION_TOL = 1e-12

# Stop rule and sweep cap for alternating projections onto intersections.
_ALTPROJ_TOL = 1e-10
_ALTPROJ_MAX_SWEEPS = 10_000


def as_point(x, dim=None):
    """Validate and return a finite 1-d float vector."""
    p = np.asarray(x, dtype=float)
    if p.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got array of shape {p.shape}")
    if dim is not None and p.size != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise ValueError("vector has non-finite coordinates")
    return p


def inner(x, y):
    """Euclidean inner product; row-wise when given stacked vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatch(
            f"inner product between dimensions {x.shape[-1]} and {y.shape[-1]}"
        )
    return np.sum(x * y, axis=-1)


def norm(x):
    """Euclidean norm; row-wise when given stacked vectors."""
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


def _rows(x, dim):
    """View ``x`` as an (n, dim) stack; report whether it was a single vector."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.size != dim:
            raise DimensionMismatch(f"expected dimension {dim}, got {arr.size}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatch(f"expected shape (*, {dim}), got {arr.shape}")
    return arr, False


class ConvexSet(abc.ABC):
    """A nonempty closed convex subset of R^d."""

    kind = "abstract"

    @property
    @abc.abstractmethod
    def dim(self):
        ...

    @abc.abstractmethod
    def project(self, x):
        """Nearest point of the set; accepts a vector or a stack of vectors."""

    @abc.abstractmethod
    def sample(self, rng, scale=5.0):
        """One random member point. ``scale`` sizes draws on unbounded sets."""

    def distance(self, x):
        return norm(np.asarray(x, dtype=float) - self.project(x))

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return self.distance(x) <= tol

    def sample_many(self, rng, n, scale=5.0):
        return np.stack([self.sample(rng, scale=scale) for _ in range(n)])


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self):
        return self.center.size

    def project(self, x):
        X, single = _rows(x, self.dim)
        delta = X - self.center
        dist = np.linalg.norm(delta, axis=1)
        out = X.copy()
        far = dist > self.radius
        if np.any(far):
            out[far] = self.center + delta[far] * (self.radius / dist[far])[:, None]
        return out[0] if single else out

    def sample(self, rng, scale=5.0):
        direction = rng.standard_normal(self.dim)
        direction /= np.linalg.norm(direction)
        r = self.radius * rng.uniform() ** (1.0 / self.dim)
        return self.center + r * direction


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """The set {x : <normal, x> <= offset}."""

    normal: np.ndarray
    offset: float
    kind = "halfspace"

    def __post_init__(self):
        object.__setattr__(self, "normal", as_point(self.normal))
        object.__setattr__(self, "offset", float(self.offset))
        sq = float(self.normal @ self.normal)
        if sq == 0.0:
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "_normal_sq", sq)

    @property
    def dim(self):
        return self.normal.size

    def project(self, x):
        X, single = _rows(x, self.dim)
        excess = X @ self.normal - self.offset
        out = X.copy()
        bad = excess > 0
        if np.any(bad):
            out[bad] = X[bad] - (excess[bad] / self._normal_sq)[:, None] * self.normal
        return out[0] if single else out

    def sample(self, rng, scale=5.0):
        base = self.normal * (self.offset / self._normal_sq)
        z = base + scale * rng.standard_normal(self.dim)
        excess = float(z @ self.normal) - self.offset
        if excess > 0:
            # reflect across the boundary hyperplane; lands strictly inside
            z = z - 2.0 * (excess / self._normal_sq) * self.normal
        return z


@dataclass(frozen=True, eq=False)
class AffineSubspace(ConvexSet):
    """anchor + span(basis rows); an empty basis is the singleton {anchor}."""

    anchor: np.ndarray
    basis: np.ndarray
    kind = "affine_subspace"

    def __post_init__(self):
        anchor = as_point(self.anchor)
        basis = np.asarray(self.basis, dtype=float)
        if basis.size == 0:
            basis = np.zeros((0, anchor.size))
        if basis.ndim != 2 or basis.shape[1] != anchor.size:
            raise DimensionMismatch(
                f"basis must have shape (k, {anchor.size}), got {basis.shape}"
            )
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "basis", basis)
        if basis.shape[0] == 0:
            onb = np.zeros((anchor.size, 0))
        else:
            q, r = np.linalg.qr(basis.T)
            diag = np.abs(np.diag(r))
            if np.min(diag) <= 1e-12 * max(1.0, np.max(diag)):
                raise ValueError("basis vectors are not linearly independent")
            onb = q
        object.__setattr__(self, "_onb", onb)

    @property
    def dim(self):
        return self.anchor.size

    def project(self, x):
        X, single = _rows(x, self.dim)
        delta = X - self.anchor
        proj = self.anchor + (delta @ self._onb) @ self._onb.T
        # snap members back to their own coordinates so P(x) == x holds exactly
        close = np.linalg.norm(proj - X, axis=1) <= PROJECTION_TOL * (
            1.0 + np.linalg.norm(X, axis=1)
        )
        if np.any(close):
            proj[close] = X[close]
        return proj[0] if single else proj

    def sample(self, rng, scale=5.0):
        k = self._onb.shape[1]
        if k == 0:
            return self.anchor.copy()
        return self.anchor + self._onb @ (scale * rng.standard_normal(k))


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lo: np.ndarray
    hi: np.ndarray
    kind = "box"

    def __post_init__(self):
        lo = as_point(self.lo)
        hi = as_point(self.hi, dim=lo.size)
        if np.any(lo > hi):
            raise ValueError("box lower bounds exceed upper bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def project(self, x):
        X, single = _rows(x, self.dim)
        out = np.clip(X, self.lo, self.hi)
        return out[0] if single else out

    def sample(self, rng, scale=5.0):
        return rng.uniform(self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class WholeSpace(ConvexSet):
    _dim: int
    kind = "whole_space"

    def __post_init__(self):
        if int(self._dim) < 1:
            raise ValueError("dimension must be positive")
        object.__setattr__(self, "_dim", int(self._dim))

    @property
    def dim(self):
        return self._dim

    def project(self, x):
        X, single = _rows(x, self.dim)
        return X[0].copy() if single else X.copy()

    def distance(self, x):
        X, single = _rows(x, self.dim)
        z = np.zeros(X.shape[0])
        return float(z[0]) if single else z

    def sample(self, rng, scale=5.0):
        return scale * rng.standard_normal(self.dim)


@dataclass(frozen=True, eq=False)
class Intersection(ConvexSet):
    """Intersection of convex sets, projected by cyclic alternating projections.

    The result is a member of the intersection (to ``_ALTPROJ_TOL``) but is in
    general only an approximation of the true nearest point; no closed form
    exists for arbitrary intersections.  The members must intersect.
    """

    members: tuple
    kind = "intersection"

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 2:
            raise ValueError("an intersection needs at least two members")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise DimensionMismatch(f"member dimensions differ: {sorted(dims)}")
        object.__setattr__(self, "members", members)

    @property
    def dim(self):
        return self.members[0].dim

    def project(self, x):
        X, single = _rows(x, self.dim)
        p = X.copy()
        for _ in range(_ALTPROJ_MAX_SWEEPS):
            before = p
            for m in self.members:
                p = np.atleast_2d(m.project(p))
            move = np.max(np.linalg.norm(p - before, axis=1))
            if move <= _ALTPROJ_TOL:
                break
        else:
            raise NonConvergence(
                "alternating projections did not settle; do the members intersect?",
                last_gap=float(move),
            )
        return p[0] if single else p

    def distance(self, x):
        proj = self.project(x)
        memberwise = np.max(
            np.stack([m.distance(x) for m in self.members]), axis=0
        )
        return np.maximum(norm(np.asarray(x, float) - proj), memberwise)

    def sample(self, rng, scale=5.0):
        z = self.members[0].sample(rng, scale=scale)
        return self.project(z)


@dataclass
class CharacterizationReport:
    """Result of probing the variational characterization of a projection."""

    max_violation: float
    passed: bool
    probes: int

    def to_dict(self):
        return {
            "max_violation": self.max_violation,
            "pass": self.passed,
            "probes": self.probes,
        }


def check_projection_characterization(K, x, probes, tol=PROJECTION_TOL):
    """Check <P(x) - x, P(x) - y> <= tol over probe points y of K.

    The inequality holds for every member y exactly when P(x) is the nearest
    point, so large positive values expose a wrong projection.

    Args:
        K: convex set under test.
        x: query point.
        probes: stack of points that must belong to K (within MEMBERSHIP_TOL).
        tol: pass threshold for the largest inner product.

    Raises:
        MembershipViolation: if some probe is farther than MEMBERSHIP_TOL from K.
    """
    x = as_point(x, dim=K.dim)
    P, _ = _rows(probes, K.dim)
    memb = np.atleast_1d(K.distance(P))
    worst = float(np.max(memb))
    if worst > MEMBERSHIP_TOL:
        raise MembershipViolation(
            f"a probe lies {worst:.3e} away from the set (tolerance {MEMBERSHIP_TOL})"
        )
    p = K.project(x)
    values = inner(p - x, p - P)
    max_violation = float(np.max(values))
    return CharacterizationReport(
        max_violation=max_violation,
        passed=max_violation <= tol,
        probes=P.shape[0],
    )
