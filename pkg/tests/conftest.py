"""Shared factories for the test suite."""

import warnings

import numpy as np
import pytest

import viscflow as vf


def power(K, nu, clamp=True):
    """PowerSchedule without the range warning cluttering test output."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return vf.PowerSchedule(K=K, nu=nu, clamp=clamp)


def unit_ball(dim=2):
    return vf.Ball(center=np.zeros(dim), radius=1.0)


def shifted_ball_problem(radius=6.0):
    """T projects onto a ball that misses the origin, f = 0 (gamma = 1).

    q* = (1, 0) by hand: the nearest point of the shifted ball to 0.  The
    anchor drift f(q*) - q* = -q* is nonzero, so the residual genuinely
    decays like theta(t) instead of collapsing below the noise floor.
    """
    C = vf.Ball(center=np.zeros(2), radius=radius)
    T = vf.ProjectionOp(vf.Ball(center=np.array([2.0, 0.0]), radius=1.0))
    return vf.Problem(set=C, T=T, f=vf.ConstantMap(np.zeros(2)))


def affine_f(alpha=0.5, offset=(1.2, 0.0), dim=2, linear=None):
    return vf.AffineContraction(
        alpha=alpha,
        linear=np.eye(dim) if linear is None else linear,
        offset=np.asarray(offset, dtype=float),
    )


def anchored_problems():
    """The four headline operators on C = ball(0, 3) with one affine f.

    All four T map C into C, f does too (||f(x)|| <= 1.5 + 1.2 <= 3), and
    every fixed-point set is analytic:
      negation / rotation -> {0}, so q* = 0;
      ball projection / reflection -> the unit ball, and q* = (1, 0) by hand
      (f's own fixed point (2.4, 0) lies outside, so q* sits on the boundary
      where <f(q*) - q*, z - q*> = 1.2 (z_0 - 1) <= 0 for all z in the ball).
    """
    C = vf.Ball(center=np.zeros(2), radius=3.0)
    f = affine_f()
    ops = {
        "negation": vf.Negation(2),
        "rotation": vf.Rotation(angle=np.pi / 2, _dim=2),
        "projection": vf.ProjectionOp(unit_ball()),
        "reflection": vf.Reflection(unit_ball()),
    }
    return {name: vf.Problem(set=C, T=T, f=f) for name, T in ops.items()}


def halfspace_problem():
    """T projects onto {x0 <= 0.5}; q* = (0.5, 0) by hand."""
    C = vf.Ball(center=np.zeros(2), radius=3.0)
    T = vf.ProjectionOp(vf.Halfspace(normal=np.array([1.0, 0.0]), offset=0.5))
    f = affine_f(offset=(1.0, 0.0))
    return vf.Problem(set=C, T=T, f=f)


def box_problem():
    """d = 5, T projects onto the unit box; q* = (1, .2, .2, .2, .2) by hand."""
    dim = 5
    C = vf.Ball(center=np.zeros(dim), radius=4.0)
    T = vf.ProjectionOp(vf.Box(lo=-np.ones(dim), hi=np.ones(dim)))
    f = affine_f(alpha=0.5, offset=(0.8, 0.1, 0.1, 0.1, 0.1), dim=dim)
    return vf.Problem(set=C, T=T, f=f)


def zoo_problems():
    """Problems with analytic fixed-point sets, keyed by a short name."""
    problems = dict(anchored_problems())
    problems["averaged"] = vf.Problem(
        set=vf.Ball(center=np.zeros(2), radius=3.0),
        T=vf.Averaged(weight=0.5, inner_op=vf.Negation(2)),
        f=affine_f(),
    )
    problems["composition"] = vf.Problem(
        set=vf.Ball(center=np.zeros(2), radius=3.0),
        T=vf.Composition((vf.Rotation(angle=np.pi / 3, _dim=2),
                          vf.Rotation(angle=np.pi / 4, _dim=2))),
        f=affine_f(),
    )
    problems["halfspace"] = halfspace_problem()
    problems["box"] = box_problem()
    problems["shifted_ball"] = shifted_ball_problem()
    return problems


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
