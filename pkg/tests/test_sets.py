import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import viscflow as vf
from viscflow.errors import DimensionMismatch, MembershipViolation


def all_kinds(dim=2):
    basis = np.array([[1.0, 1.0]]) if dim == 2 else np.eye(dim)[: dim - 1]
    return {
        "ball": vf.Ball(center=np.full(dim, 0.5), radius=2.0),
        "halfspace": vf.Halfspace(normal=np.arange(1.0, dim + 1.0), offset=1.0),
        "affine": vf.AffineSubspace(anchor=np.full(dim, 0.25), basis=basis),
        "box": vf.Box(lo=-np.ones(dim), hi=np.full(dim, 2.0)),
        "whole": vf.WholeSpace(dim),
    }


class TestInner:
    def test_orthogonal(self):
        assert vf.inner(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_direct_arithmetic(self):
        assert vf.inner(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0

    def test_matches_sum_of_squares_loop(self, rng):
        # independent oracle: plain Python accumulation
        for _ in range(100):
            x = rng.standard_normal(rng.integers(1, 9))
            expected = 0.0
            for c in x:
                expected += float(c) * float(c)
            assert vf.inner(x, x) == pytest.approx(expected, rel=1e-13)
            assert vf.norm(x) == pytest.approx(np.sqrt(expected), rel=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            vf.inner(np.zeros(2), np.zeros(3))

    def test_rowwise(self):
        x = np.array([[1.0, 0.0], [1.0, 2.0]])
        y = np.array([[0.0, 1.0], [3.0, 4.0]])
        assert vf.inner(x, y).tolist() == [0.0, 11.0]


class TestAsPoint:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            vf.as_point([1.0, np.nan])

    def test_rejects_matrix(self):
        with pytest.raises(DimensionMismatch):
            vf.as_point(np.zeros((2, 2)))

    def test_rejects_wrong_dim(self):
        with pytest.raises(DimensionMismatch):
            vf.as_point([1.0, 2.0], dim=3)


class TestProjectClosedForms:
    def test_halfspace(self):
        K = vf.Halfspace(normal=np.array([1.0, 0.0]), offset=0.0)
        assert K.project(np.array([2.0, 3.0])).tolist() == [0.0, 3.0]

    def test_ball_radial_scaling(self):
        K = vf.Ball(center=np.zeros(2), radius=1.0)
        p = K.project(np.array([3.0, 4.0]))
        assert p == pytest.approx([0.6, 0.8], abs=1e-15)

    @pytest.mark.parametrize("kind", sorted(all_kinds()))
    def test_members_returned_unchanged(self, kind, rng):
        K = all_kinds()[kind]
        for _ in range(20):
            x = K.sample(rng)
            assert np.array_equal(K.project(x), x)

    @pytest.mark.parametrize("kind", sorted(all_kinds()))
    def test_idempotent(self, kind, rng):
        K = all_kinds()[kind]
        X = rng.standard_normal((200, 2)) * 6.0
        P = K.project(X)
        assert np.max(vf.norm(K.project(P) - P)) <= 1e-12

    @pytest.mark.parametrize("kind", sorted(all_kinds()))
    def test_nonexpansive(self, kind, rng):
        K = all_kinds()[kind]
        X = rng.standard_normal((500, 2)) * 6.0
        Y = rng.standard_normal((500, 2)) * 6.0
        assert np.all(vf.norm(K.project(X) - K.project(Y))
                      <= vf.norm(X - Y) + 1e-12)

    @pytest.mark.parametrize("kind", sorted(all_kinds()))
    def test_optimality(self, kind, rng):
        K = all_kinds()[kind]
        X = rng.standard_normal((200, 2)) * 6.0
        members = K.sample_many(rng, 64)
        best = vf.norm(X - K.project(X))
        for z in members:
            assert np.all(best <= vf.norm(X - z) + 1e-12)

    @pytest.mark.parametrize("kind", sorted(all_kinds()))
    def test_samples_belong(self, kind, rng):
        K = all_kinds()[kind]
        pts = K.sample_many(rng, 100)
        assert np.max(K.distance(pts)) <= 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            all_kinds()["ball"].project(np.zeros(3))


class TestSetValidation:
    def test_ball_radius(self):
        with pytest.raises(ValueError):
            vf.Ball(center=np.zeros(2), radius=0.0)

    def test_halfspace_normal(self):
        with pytest.raises(ValueError):
            vf.Halfspace(normal=np.zeros(2), offset=1.0)

    def test_dependent_basis(self):
        with pytest.raises(ValueError):
            vf.AffineSubspace(anchor=np.zeros(2),
                              basis=np.array([[1.0, 0.0], [2.0, 0.0]]))

    def test_box_bounds(self):
        with pytest.raises(ValueError):
            vf.Box(lo=np.array([0.0, 1.0]), hi=np.array([1.0, 0.0]))

    def test_singleton_affine(self):
        K = vf.AffineSubspace(anchor=np.array([1.0, 2.0]), basis=np.zeros((0, 2)))
        assert K.project(np.array([5.0, -3.0])).tolist() == [1.0, 2.0]


class TestCharacterization:
    def test_halfspace_hand_oracle(self):
        # x = (2, 3) projects to (0, 3); the three probes give inner products
        # <(-2, 0), (0, 3)> = 0, <(-2, 0), (0, -2)> = 0, <(-2, 0), (1, 0)> = -2
        K = vf.Halfspace(normal=np.array([1.0, 0.0]), offset=0.0)
        probes = np.array([[0.0, 0.0], [0.0, 5.0], [-1.0, 3.0]])
        rep = vf.check_projection_characterization(K, np.array([2.0, 3.0]), probes)
        assert rep.passed
        assert rep.max_violation == 0.0

    def test_member_gives_exact_zero(self, rng):
        K = vf.Ball(center=np.zeros(2), radius=2.0)
        x = K.sample(rng)
        rep = vf.check_projection_characterization(K, x, K.sample_many(rng, 10))
        assert rep.max_violation == 0.0

    def test_ball_random_probes(self, rng):
        K = vf.Ball(center=np.zeros(2), radius=1.0)
        rep = vf.check_projection_characterization(
            K, np.array([3.0, 4.0]), K.sample_many(rng, 50), tol=1e-12)
        assert rep.passed

    @pytest.mark.parametrize("kind", sorted(all_kinds()))
    def test_all_kinds_randomized(self, kind, rng):
        K = all_kinds()[kind]
        probes = K.sample_many(rng, 50)
        for _ in range(25):
            x = rng.standard_normal(2) * 6.0
            rep = vf.check_projection_characterization(K, x, probes, tol=1e-12)
            assert rep.passed, (kind, rep.max_violation)

    def test_probe_outside_rejected(self):
        K = vf.Ball(center=np.zeros(2), radius=1.0)
        with pytest.raises(MembershipViolation):
            vf.check_projection_characterization(
                K, np.array([3.0, 4.0]), np.array([[2.0, 0.0]]))


class TestIntersection:
    def setup_method(self):
        self.K = vf.Intersection((
            vf.Ball(center=np.zeros(2), radius=2.0),
            vf.Halfspace(normal=np.array([0.0, 1.0]), offset=0.5),
        ))

    def test_projection_lands_in_every_member(self, rng):
        X = rng.standard_normal((100, 2)) * 5.0
        P = self.K.project(X)
        for member in self.K.members:
            assert np.max(member.distance(P)) <= 1e-9

    def test_member_returned_unchanged(self):
        x = np.array([0.5, -0.5])
        assert np.array_equal(self.K.project(x), x)

    def test_sample_belongs(self, rng):
        pts = self.K.sample_many(rng, 50)
        assert np.max(self.K.distance(pts)) <= 1e-8

    def test_needs_two_members(self):
        with pytest.raises(ValueError):
            vf.Intersection((vf.WholeSpace(2),))


@settings(max_examples=100, deadline=None)
@given(x=arrays(np.float64, 2, elements=st.floats(-100, 100)),
       y=arrays(np.float64, 2, elements=st.floats(-100, 100)))
def test_projection_properties_hypothesis(x, y):
    K = vf.Ball(center=np.array([0.5, -0.5]), radius=1.5)
    px, py = K.project(x), K.project(y)
    assert K.distance(px) <= 1e-12
    assert vf.norm(px - py) <= vf.norm(x - y) + 1e-12
    assert vf.norm(K.project(px) - px) <= 1e-12
