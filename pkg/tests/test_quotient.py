import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_orthogonal, random_theta
from ppca_quotient.errors import InvalidInputError
from ppca_quotient.model import PpcaParams
from ppca_quotient.quotient import (
    IdentifiedSet,
    QuotientPoint,
    distance_to_C,
    lift_discontinuity_sequence,
    param_distance,
    procrustes_distance,
    quotient_distance,
    ray_chain_bound,
    ray_chain_table,
)


def grid_orthogonal(q, size=10_000):
    """Brute-force candidates: both reflections for q=1, angle grid times reflection for q=2."""
    if q == 1:
        return [np.array([[1.0]]), np.array([[-1.0]])]
    out = []
    for a in np.linspace(0.0, 2 * np.pi, size // 2, endpoint=False):
        c, s = math.cos(a), math.sin(a)
        out.append(np.array([[c, -s], [s, c]]))
        out.append(np.array([[c, s], [s, -c]]))
    return out


class TestParamDistance:
    def test_examples(self):
        a = PpcaParams(np.array([[1.0], [0.0]]), 1.0)
        b = PpcaParams(np.array([[0.0], [1.0]]), 1.0)
        assert param_distance(a, a) == 0.0
        assert param_distance(a, PpcaParams(a.w, 1.75)) == pytest.approx(0.75)
        assert param_distance(a, b) == pytest.approx(math.sqrt(2))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            param_distance(PpcaParams(np.zeros((3, 1)), 1.0), PpcaParams(np.zeros((3, 2)), 1.0))


class TestProcrustes:
    def test_examples(self, rng):
        w0 = rng.standard_normal((4, 2))
        assert procrustes_distance(w0, w0) == pytest.approx(0.0, abs=1e-12)
        assert procrustes_distance(w0 @ random_orthogonal(2, rng), w0) < 1e-9
        assert procrustes_distance([[0.0], [1.0]], [[1.0], [0.0]]) == pytest.approx(math.sqrt(2))

    def test_closed_form_expression(self, rng):
        w, w0 = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
        nuc = np.linalg.svd(w0.T @ w, compute_uv=False).sum()
        closed = math.sqrt(np.sum(w**2) + np.sum(w0**2) - 2 * nuc)
        assert procrustes_distance(w, w0) == pytest.approx(closed, rel=1e-10)

    @pytest.mark.parametrize("q", [1, 2])
    def test_grid_oracle(self, q, rng):
        cands = grid_orthogonal(q)
        for p in (2, 3, 5):
            if p <= q:
                continue
            w, w0 = rng.standard_normal((p, q)), rng.standard_normal((p, q))
            brute = [np.linalg.norm(w - w0 @ r) for r in cands]
            d = procrustes_distance(w, w0)
            assert d <= min(brute) + 1e-12
            assert abs(d - min(brute)) < 1e-3


class TestDistanceToC:
    def test_examples(self, rng):
        th0 = random_theta(rng, 3, 2)
        c = IdentifiedSet(th0)
        assert distance_to_C(th0, c) == pytest.approx(0.0, abs=1e-12)
        moved = PpcaParams(th0.w @ random_orthogonal(2, rng), th0.sigma2 + 0.3)
        assert distance_to_C(moved, c) == pytest.approx(0.3, abs=1e-9)

    def test_random_p3_q2_against_grid(self, rng):
        th0, th = random_theta(rng, 3, 2), random_theta(rng, 3, 2)
        brute = min(
            math.hypot(np.linalg.norm(th.w - th0.w @ r), th.sigma2 - th0.sigma2) for r in grid_orthogonal(2)
        )
        assert abs(distance_to_C(th, IdentifiedSet(th0)) - brute) < 1e-3

    def test_nearest_is_in_set(self, rng):
        th0, th = random_theta(rng, 5, 2), random_theta(rng, 5, 2)
        c = IdentifiedSet(th0)
        near = c.nearest(th)
        assert c.contains(near)
        assert param_distance(th, near) == pytest.approx(distance_to_C(th, c), rel=1e-12)


class TestQuotientDistance:
    def test_orbit_points_collapse(self, rng):
        th0 = random_theta(rng, 4, 2)
        c = IdentifiedSet(th0)
        a = QuotientPoint(th0.rotated(random_orthogonal(2, rng)), c)
        assert quotient_distance(a, QuotientPoint(th0, c)) < 1e-9
        assert param_distance(a.theta, th0) > 0.01

    def test_far_from_C_takes_direct_branch(self, rng):
        th0 = PpcaParams(np.zeros((3, 1)), 1.0)
        c = IdentifiedSet(th0)
        a = PpcaParams(np.array([[5.0], [0.0], [0.0]]), 4.0)
        b = PpcaParams(np.array([[5.1], [0.0], [0.0]]), 4.0)
        d = quotient_distance(QuotientPoint(a, c), QuotientPoint(b, c))
        assert d == pytest.approx(param_distance(a, b))

    def test_context_mismatch(self, rng):
        a = QuotientPoint(random_theta(rng, 3, 1), IdentifiedSet(random_theta(rng, 3, 1)))
        b = QuotientPoint(a.theta, IdentifiedSet(random_theta(rng, 3, 1)))
        with pytest.raises(InvalidInputError):
            quotient_distance(a, b)

    def test_triangle_inequality_100_triples(self, rng):
        for _ in range(100):
            p = int(rng.integers(2, 6))
            q = int(rng.integers(1, p))
            c = IdentifiedSet(random_theta(rng, p, q))
            pts = []
            for _ in range(3):
                # mix points near C with generic points
                if rng.random() < 0.5:
                    th = c.theta0.rotated(random_orthogonal(q, rng))
                    th = PpcaParams(th.w + 0.1 * rng.standard_normal((p, q)), th.sigma2 + 0.05)
                else:
                    th = random_theta(rng, p, q)
                pts.append(QuotientPoint(th, c))
            a, b, z = pts
            assert quotient_distance(a, b) <= quotient_distance(a, z) + quotient_distance(z, b) + 1e-9

    @given(seed=st.integers(0, 2**31))
    def test_rotation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        th0 = random_theta(rng, 4, 2)
        c = IdentifiedSet(th0)
        th = random_theta(rng, 4, 2)
        rot = th.rotated(random_orthogonal(2, rng))
        assert abs(distance_to_C(th, c) - distance_to_C(rot, c)) < 1e-9
        qa = quotient_distance(QuotientPoint(th, c), QuotientPoint(th0, c))
        assert qa == pytest.approx(distance_to_C(th, c), abs=1e-12)


class TestRayChain:
    def test_examples(self):
        assert ray_chain_bound((1, 0), (0, 1), 1) == math.sqrt(2)
        assert ray_chain_bound((1, 0), (0, 1), 1000) == math.sqrt(2) / 1000

    def test_nonincreasing(self):
        ks = [1, 2, 5, 10, 100, 1415, 10_000]
        values = [r["distance"] for r in ray_chain_table((2.0, 1.0), (0.5, 3.0), ks)]
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-3

    def test_table_value_is_ray_angle(self):
        rows = ray_chain_table((1.0, 0.0), (0.0, 1.0), [1, 10])
        assert all(r["value"] == pytest.approx(math.pi / 2) for r in rows)

    @pytest.mark.parametrize("k", [0, -3, 1.5, True])
    def test_bad_k(self, k):
        with pytest.raises(InvalidInputError):
            ray_chain_bound((1, 0), (0, 1), k)

    @pytest.mark.parametrize("x", [(0, 0), (-1, 0), (1, 0, 0)])
    def test_bad_point(self, x):
        with pytest.raises(InvalidInputError):
            ray_chain_bound(x, (0, 1), 1)


class TestLiftDiscontinuity:
    def test_first_row_hand_value(self):
        row = lift_discontinuity_sequence(2)[0]
        assert row["n"] == 2
        assert row["same_index_chain"] == pytest.approx(1.0)
        assert row["value"] == 1.0

    def test_tends_to_zero_with_constant_value(self):
        rows = lift_discontinuity_sequence(200)
        d = [r["distance"] for r in rows]
        assert all(b <= a + 1e-15 for a, b in zip(d, d[1:]))
        assert d[-1] < 1e-2
        assert all(r["value"] == 1.0 for r in rows)
        assert all(r["distance"] <= r["same_index_chain"] for r in rows)

    def test_limit_is_reciprocal_n(self):
        row = lift_discontinuity_sequence(1000)[-1]
        assert row["distance"] == pytest.approx(1e-3, rel=1e-6)

    def test_bad_n(self):
        with pytest.raises(InvalidInputError):
            lift_discontinuity_sequence(1)
