import math

import numpy as np
import pytest

import viscflow as vf
from viscflow.errors import MembershipViolation

from conftest import power, shifted_ball_problem, unit_ball, zoo_problems


def ball_problem(T=None, f=None, radius=5.0):
    dim = 2
    return vf.Problem(
        set=vf.Ball(center=np.zeros(dim), radius=radius),
        T=T if T is not None else vf.Negation(dim),
        f=f if f is not None else vf.ConstantMap(np.zeros(dim)),
    )


class TestAnchoredScheme:
    def test_single_step_formula(self):
        p = ball_problem()
        seq = vf.iterate_dds(p, lambda n: 0.5, np.array([1.0, 0.0]), 2)
        assert np.array_equal(seq.states[1], [-0.5, 0.0])

    def test_anchored_shift_schedule_converges(self):
        # theta_n = 1/(n+2) with the negation: the iterate norm telescopes to
        # prod (k+1)/(k+2) = 2/(N+1), an independent closed form
        p = ball_problem()
        N = 5000
        seq = vf.iterate_dds(p, lambda n: 1.0 / (n + 2), np.array([1.0, 0.0]), N)
        expected = 2.0 / (N + 1)
        assert vf.norm(seq.states[-1]) == pytest.approx(expected, rel=1e-10)
        assert vf.norm(seq.states[-1]) < 1e-3

    def test_fixed_point_is_stationary(self):
        # theta x + (1 - theta) x wobbles by one ulp for generic theta, and
        # the contraction keeps that wobble from compounding
        x1 = np.array([0.3, -0.2])
        p = ball_problem(T=vf.ProjectionOp(unit_ball()), f=vf.ConstantMap(x1))
        seq = vf.iterate_dds(p, lambda n: 1.0 / (n + 1), x1, 50)
        assert np.max(vf.norm(seq.states - x1)) <= 5e-16
        assert np.max(seq.residuals) <= 5e-16

    def test_start_outside_constraint_rejected(self):
        p = ball_problem(radius=1.0)
        with pytest.raises(MembershipViolation):
            vf.iterate_dds(p, lambda n: 0.5, np.array([3.0, 0.0]), 5)

    def test_theta_domain_is_half_open(self):
        p = ball_problem()
        with pytest.raises(ValueError):
            vf.iterate_dds(p, lambda n: 0.0, np.array([1.0, 0.0]), 3)
        seq = vf.iterate_dds(p, lambda n: 1.0, np.array([1.0, 0.0]), 3)
        assert np.all(seq.states[1:] == 0.0)  # theta = 1 pins to f = 0


class TestSchemeIdentities:
    def test_halpern_equals_anchored_with_zero_f(self):
        T = vf.ProjectionOp(unit_ball())
        x1 = np.array([2.0, 1.0])
        theta = lambda n: 1.0 / (n + 1)
        direct = vf.iterate_halpern(T, theta, x1, 200)
        p = vf.Problem(set=vf.WholeSpace(2), T=T, f=vf.ConstantMap(np.zeros(2)))
        via_dds = vf.iterate_dds(p, theta, x1, 200)
        assert np.array_equal(direct.states, via_dds.states)

    def test_lions_equals_anchored_with_constant_f(self):
        T = vf.ProjectionOp(unit_ball())
        u = np.array([2.0, 0.0])
        x1 = np.array([0.0, 0.5])
        theta = lambda n: 1.0 / (n + 1)
        direct = vf.iterate_lions(T, u, theta, x1, 200)
        p = vf.Problem(set=vf.WholeSpace(2), T=T, f=vf.ConstantMap(u))
        via_dds = vf.iterate_dds(p, theta, x1, 200)
        assert np.array_equal(direct.states, via_dds.states)

    def test_halpern_zero_start_stays_zero(self):
        seq = vf.iterate_halpern(vf.ProjectionOp(unit_ball()),
                                 lambda n: 1.0 / n ** 0.5, np.zeros(2), 20)
        assert np.all(seq.states == 0.0)


class TestHalpern:
    def test_identity_map_drives_to_minimum_norm_point(self):
        # T = I on the whole space: x_{n+1} = (1 - theta_n) x_n, whose norm is
        # the partial product of (1 - 1/sqrt(n)); both computed independently
        T = vf.ProjectionOp(vf.WholeSpace(2))
        x1 = np.array([3.0, -4.0])
        N = 2000
        seq = vf.iterate_halpern(T, lambda n: 1.0 / n ** 0.5, x1, N)
        product = 1.0
        for n in range(1, N):
            product *= 1.0 - 1.0 / math.sqrt(n)
        assert vf.norm(seq.states[-1]) == pytest.approx(5.0 * abs(product),
                                                        rel=1e-9, abs=1e-30)
        assert vf.norm(seq.states[-1]) <= 1e-6


class TestLions:
    def test_anchor_outside_ball(self):
        # q* = nearest fixed point to the anchor: the unit ball point (1, 0)
        T = vf.ProjectionOp(unit_ball())
        u = np.array([2.0, 0.0])
        N = 2000
        seq = vf.iterate_lions(T, u, lambda n: 1.0 / (n + 1),
                               np.array([0.5, 0.0]), N)
        assert vf.norm(seq.states[-1] - np.array([1.0, 0.0])) <= 2e-3

    def test_fixed_anchor_start_is_constant(self):
        T = vf.ProjectionOp(unit_ball())
        u = np.array([0.5, 0.0])
        seq = vf.iterate_lions(T, u, lambda n: 1.0 / (n + 1), u, 100)
        assert np.max(vf.norm(seq.states - u)) <= 1e-14


class TestRelaxed:
    def test_negation_half_relaxation_hits_zero(self):
        seq = vf.iterate_km(vf.Negation(2), lambda n: 0.5,
                            np.array([1.0, -2.0]), 10)
        assert np.all(seq.states[1:] == 0.0)

    def test_zero_relaxation_is_picard(self):
        T = vf.Rotation(angle=0.3, _dim=2)
        x1 = np.array([1.0, 1.0])
        seq = vf.iterate_km(T, lambda n: 0.0, x1, 20)
        x = x1
        for n in range(1, 20):
            x = T(x)
            assert np.array_equal(seq.states[n], x)

    def test_rotation_contracts_geometrically(self):
        # (I + R)/2 for the quarter turn has singular values sqrt(2)/2
        T = vf.Rotation(angle=np.pi / 2, _dim=2)
        seq = vf.iterate_km(T, lambda n: 0.5, np.array([2.0, 0.0]), 60)
        norms = vf.norm(seq.states)
        ratios = norms[1:] / norms[:-1]
        assert np.allclose(ratios, np.sqrt(0.5), rtol=1e-10)
        assert norms[-1] <= 1e-7

    def test_relaxation_domain_is_closed(self):
        T = vf.Negation(2)
        vf.iterate_km(T, lambda n: 0.0, np.ones(2), 3)
        vf.iterate_km(T, lambda n: 1.0, np.ones(2), 3)
        with pytest.raises(ValueError):
            vf.iterate_km(T, lambda n: 1.5, np.ones(2), 3)


class TestSequenceDiagnostics:
    def test_iterates_stay_in_constraint_set(self):
        for name, p in zoo_problems().items():
            x1 = p.set.project(np.full(p.dim, 0.4))
            seq = vf.iterate_dds(p, power(2.0, 1.0), x1, 300)
            assert np.max(p.set.distance(seq.states)) <= 1e-12, name

    def test_residual_trend(self):
        for p in (shifted_ball_problem(), zoo_problems()["rotation"]):
            x1 = p.set.project(np.array([2.0, 1.0]))
            seq = vf.iterate_dds(p, power(2.0, 1.0), x1, 1000)
            assert seq.residuals[-1] < seq.residuals[9]

    def test_step_norms_match_state_differences(self):
        p = ball_problem()
        seq = vf.iterate_dds(p, lambda n: 1.0 / (n + 1), np.array([1.0, 2.0]), 50)
        gaps = vf.norm(np.diff(seq.states, axis=0))
        assert np.allclose(seq.step_norms[:-1], gaps, rtol=1e-15)

    def test_csv_layout(self, tmp_path):
        p = ball_problem()
        seq = vf.iterate_dds(p, lambda n: 0.5, np.array([1.0, 0.0]), 4)
        path = tmp_path / "seq.csv"
        seq.to_csv(path, q_star=np.zeros(2))
        lines = path.read_text().splitlines()
        assert lines[0] == "n,x_0,x_1,residual,deriv_norm,dist_qstar"
        assert lines[1].startswith("1,1,0,")
        assert len(lines) == 5
        # 17 significant digits round-trip exactly
        value = float(lines[2].split(",")[1])
        assert value == seq.states[1][0]

    def test_csv_blank_distance_when_unknown(self, tmp_path):
        p = ball_problem()
        seq = vf.iterate_dds(p, lambda n: 0.5, np.array([1.0, 0.0]), 3)
        path = tmp_path / "seq.csv"
        seq.to_csv(path)
        assert path.read_text().splitlines()[1].endswith(",")
