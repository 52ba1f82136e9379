"""A zoo of nonexpansive maps with analytically known fixed-point sets.

Each operator kind is 1-Lipschitz by construction and declares its fixed-point
set as a convex set with an exact projection, so the variational-problem
solution can be computed without approximating the projection onto Fix(T).
Operators whose fixed-point set has no analytic description leave it as None,
and diagnostics that need it are skipped rather than guessed.

The maps are defined on all of R^d and restricted to the problem's set by
construction; the source setting defines them on that set only and is silent
on the extension.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np

from ._rng import as_rng
from .errors import DimensionMismatch, MembershipViolation
from .sets import (
    MEMBERSHIP_TOL,
    AffineSubspace,
    Ball,
    ConvexSet,
    WholeSpace,
    as_point,
    norm,
    _rows,
)

_TWO_PI = 2.0 * math.pi


class Operator(abc.ABC):
    """A nonexpansive self-map of R^d."""

    kind = "abstract"

    @property
    @abc.abstractmethod
    def dim(self):
        ...

    @property
    def fix_set(self):
        """Fixed-point set as a ConvexSet, or None when not analytically known."""
        return None

    @abc.abstractmethod
    def __call__(self, x):
        """Apply the map; accepts a vector or a stack of vectors."""


def _origin_set(dim):
    return AffineSubspace(anchor=np.zeros(dim), basis=np.zeros((0, dim)))


def _plane_complement(dim, i, j):
    """Fixed set of a proper rotation in coordinate plane (i, j)."""
    if dim == 2:
        return _origin_set(dim)
    keep = [k for k in range(dim) if k not in (i, j)]
    basis = np.eye(dim)[keep]
    return AffineSubspace(anchor=np.zeros(dim), basis=basis)


@dataclass(frozen=True, eq=False)
class Rotation(Operator):
    """Rotation by ``angle`` in the coordinate plane ``plane``; an isometry."""

    angle: float
    _dim: int = 2
    plane: tuple = (0, 1)
    kind = "rotation"

    def __post_init__(self):
        i, j = self.plane
        if not (0 <= i < self._dim and 0 <= j < self._dim and i != j):
            raise ValueError(f"plane {self.plane} invalid in dimension {self._dim}")
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "plane", (int(i), int(j)))
        matrix = np.eye(self._dim)
        c, s = math.cos(self.angle), math.sin(self.angle)
        matrix[i, i] = c
        matrix[j, j] = c
        matrix[i, j] = -s
        matrix[j, i] = s
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self):
        return self._dim

    @property
    def fix_set(self):
        if math.remainder(self.angle, _TWO_PI) == 0.0:
            return WholeSpace(self._dim)
        return _plane_complement(self._dim, *self.plane)

    def __call__(self, x):
        X, single = _rows(x, self.dim)
        out = X @ self.matrix.T
        return out[0] if single else out


@dataclass(frozen=True, eq=False)
class Negation(Operator):
    """x -> -x; fixed point set {0}."""

    _dim: int
    kind = "negation"

    @property
    def dim(self):
        return self._dim

    @property
    def fix_set(self):
        return _origin_set(self._dim)

    def __call__(self, x):
        X, single = _rows(x, self.dim)
        return -X[0] if single else -X


@dataclass(frozen=True, eq=False)
class ProjectionOp(Operator):
    """Nearest-point map onto a convex set; fixed exactly on that set."""

    set: ConvexSet
    kind = "projection"

    @property
    def dim(self):
        return self.set.dim

    @property
    def fix_set(self):
        return self.set

    def __call__(self, x):
        return self.set.project(x)


@dataclass(frozen=True, eq=False)
class Reflection(Operator):
    """x -> 2 P(x) - x over a convex set; fixed exactly on that set."""

    set: ConvexSet
    kind = "reflection"

    @property
    def dim(self):
        return self.set.dim

    @property
    def fix_set(self):
        return self.set

    def __call__(self, x):
        X = np.asarray(x, dtype=float)
        return 2.0 * self.set.project(X) - X


@dataclass(frozen=True, eq=False)
class Averaged(Operator):
    """(1 - weight) I + weight T for weight in (0, 1); same fixed points as T."""

    weight: float
    inner_op: Operator
    kind = "averaged"

    def __post_init__(self):
        w = float(self.weight)
        if not 0.0 < w < 1.0:
            raise ValueError(f"averaging weight must lie in (0, 1), got {w}")
        object.__setattr__(self, "weight", w)

    @property
    def dim(self):
        return self.inner_op.dim

    @property
    def fix_set(self):
        return self.inner_op.fix_set

    def __call__(self, x):
        X = np.asarray(x, dtype=float)
        return (1.0 - self.weight) * X + self.weight * self.inner_op(X)


@dataclass(frozen=True, eq=False)
class Composition(Operator):
    """parts[-1] o ... o parts[0].

    The fixed-point set of a composition is not determined by the parts'
    fixed-point sets in general, so it stays None unless the caller declares
    one or every part is a rotation in the same plane (net angle decides).
    """

    parts: tuple
    declared_fix_set: ConvexSet | None = None
    kind = "composition"

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("composition needs at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise DimensionMismatch(f"part dimensions differ: {sorted(dims)}")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self):
        return self.parts[0].dim

    @property
    def fix_set(self):
        if self.declared_fix_set is not None:
            return self.declared_fix_set
        if all(isinstance(p, Rotation) for p in self.parts):
            planes = {p.plane for p in self.parts}
            if len(planes) == 1:
                net = sum(p.angle for p in self.parts)
                if math.remainder(net, _TWO_PI) == 0.0:
                    return WholeSpace(self.dim)
                return _plane_complement(self.dim, *self.parts[0].plane)
        return None

    def __call__(self, x):
        out = np.asarray(x, dtype=float)
        for p in self.parts:
            out = p(out)
        return out


class Contraction(abc.ABC):
    """A strict contraction; subclasses expose their coefficient as ``alpha``."""

    kind = "abstract"

    @property
    @abc.abstractmethod
    def dim(self):
        ...

    @abc.abstractmethod
    def __call__(self, x):
        ...


@dataclass(frozen=True, eq=False)
class ConstantMap(Contraction):
    """f(x) = value for every x; coefficient 0."""

    value: np.ndarray
    kind = "constant"
    alpha = 0.0

    def __post_init__(self):
        object.__setattr__(self, "value", as_point(self.value))

    @property
    def dim(self):
        return self.value.size

    def __call__(self, x):
        X, single = _rows(x, self.dim)
        if single:
            return self.value.copy()
        return np.broadcast_to(self.value, X.shape).copy()


@dataclass(frozen=True, eq=False)
class AffineContraction(Contraction):
    """f(x) = alpha * L x + offset with a linear L of operator norm <= 1."""

    alpha: float
    linear: np.ndarray
    offset: np.ndarray
    kind = "affine"

    def __post_init__(self):
        a = float(self.alpha)
        if not 0.0 <= a < 1.0:
            raise ValueError(f"contraction coefficient must lie in [0, 1), got {a}")
        offset = as_point(self.offset)
        linear = np.asarray(self.linear, dtype=float)
        if linear.shape != (offset.size, offset.size):
            raise DimensionMismatch(
                f"linear part must be {offset.size}x{offset.size}, got {linear.shape}"
            )
        spectral = float(np.linalg.norm(linear, 2))
        if spectral > 1.0 + 1e-12:
            raise ValueError(f"linear part has operator norm {spectral:.6g} > 1")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "offset", offset)

    @property
    def dim(self):
        return self.offset.size

    def __call__(self, x):
        X, single = _rows(x, self.dim)
        out = self.alpha * (X @ self.linear.T) + self.offset
        return out[0] if single else out


@dataclass(frozen=True, eq=False)
class Problem:
    """A constraint set C, a nonexpansive T, and a strict contraction f.

    Both maps must send C into itself and T must have a fixed point in C;
    ``validate`` certifies this on random samples.
    """

    set: ConvexSet
    T: Operator
    f: Contraction

    def __post_init__(self):
        dims = {self.set.dim, self.T.dim, self.f.dim}
        if len(dims) != 1:
            raise DimensionMismatch(f"component dimensions differ: {sorted(dims)}")

    @property
    def dim(self):
        return self.set.dim

    @property
    def gamma(self):
        """Contraction gap 1 - alpha."""
        return 1.0 - self.f.alpha

    def validate(self, seed=0, samples=100, scale=None):
        """Certify T(C) in C, f(C) in C, and a fixed point of T inside C."""
        rng = as_rng(seed)
        pts = self.set.sample_many(rng, samples, **({} if scale is None else {"scale": scale}))
        for name, mapped in (("T", self.T(pts)), ("f", self.f(pts))):
            dist = np.max(self.set.distance(mapped))
            if dist > MEMBERSHIP_TOL:
                raise MembershipViolation(
                    f"{name} leaves the constraint set by {dist:.3e} on sampled points"
                )
        if self.T.fix_set is not None:
            z = self.set.project(self.T.fix_set.sample(rng))
            for _ in range(200):
                z_next = self.set.project(self.T.fix_set.project(z))
                if norm(z_next - z) <= 1e-12:
                    z = z_next
                    break
                z = z_next
            if self.T.fix_set.distance(z) > 1e-8 or self.set.distance(z) > 1e-8:
                raise MembershipViolation(
                    "could not locate a fixed point of T inside the constraint set"
                )
        return True


@dataclass(frozen=True, eq=False)
class DomainSampler:
    """Random points of C with norm at most ``radius``.

    Proposals come from the set's own member sampler and are thinned to the
    ball of the given radius; for the whole space the draw is uniform on that
    ball.  Proposing from the member sampler instead of from the ball keeps
    the acceptance rate bounded away from zero for small sets in higher
    dimensions, at the price of the member sampler's own distribution on
    unbounded sets.
    """

    set: ConvexSet
    radius: float = 10.0

    def draw(self, rng, n):
        if isinstance(self.set, WholeSpace):
            ball = Ball(center=np.zeros(self.set.dim), radius=self.radius)
            return ball.sample_many(rng, n)
        out = np.empty((n, self.set.dim))
        filled = 0
        for _ in range(1000):
            batch = self.set.sample_many(rng, n - filled, scale=self.radius)
            keep = batch[np.linalg.norm(batch, axis=1) <= self.radius]
            take = min(len(keep), n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
            if filled == n:
                return out
        raise ValueError(
            f"sampler radius {self.radius} rejects almost all of the set; enlarge it"
        )


@dataclass
class CertificationReport:
    """Largest Lipschitz ratio observed over sampled pairs."""

    max_ratio: float
    passed: bool
    pairs: int

    def to_dict(self):
        return {"max_ratio": self.max_ratio, "pass": self.passed, "pairs": self.pairs}


def _max_pair_ratio(mapping, sampler, pairs, rng):
    xs = sampler.draw(rng, pairs)
    ys = sampler.draw(rng, pairs)
    den = norm(xs - ys)
    ok = den > 1e-12
    if not np.any(ok):
        return 0.0, 0
    num = norm(mapping(xs[ok]) - mapping(ys[ok]))
    return float(np.max(num / den[ok])), int(np.sum(ok))


def verify_nonexpansive(op, sampler, pairs=1000, tol=1e-12, seed=0):
    """Certify ||T(x) - T(y)|| <= ||x - y|| on random pairs from the domain."""
    if pairs < 1:
        raise ValueError("need at least one pair")
    ratio, used = _max_pair_ratio(op, sampler, pairs, as_rng(seed))
    return CertificationReport(max_ratio=ratio, passed=ratio <= 1.0 + tol, pairs=used)


def verify_contraction(f, sampler, pairs=1000, tol=1e-12, seed=0):
    """Certify ||f(x) - f(y)|| <= alpha ||x - y|| on random pairs."""
    if pairs < 1:
        raise ValueError("need at least one pair")
    ratio, used = _max_pair_ratio(f, sampler, pairs, as_rng(seed))
    return CertificationReport(
        max_ratio=ratio, passed=ratio <= f.alpha + tol, pairs=used
    )


def project_fix(op, x):
    """Project onto the fixed-point set of ``op``.

    Raises:
        NotImplementedError: when the operator does not declare its fixed set.
    """
    fix = op.fix_set
    if fix is None:
        raise NotImplementedError(
            f"operator kind '{op.kind}' has no analytic fixed-point set"
        )
    return fix.project(as_point(x, dim=op.dim))
