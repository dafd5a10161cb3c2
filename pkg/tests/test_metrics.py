"""Comparison metrics, checked against hand values and brute-force search."""

import itertools
import math

import numpy as np
import pytest

from bn2mf.metrics import (align, compare_solution, cosine_distance, mean_cosine_distance, orthonormal_basis,
                           relative_error, subspace_distance)


class TestRelativeError:
    def test_values(self):
        t = np.array([[3.0, 4.0]])
        assert relative_error(t, t) == 0.0
        assert relative_error(t, np.zeros_like(t)) == 1.0
        assert relative_error(t, np.array([[0.0, 4.0]])) == pytest.approx(0.6, abs=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            relative_error(np.zeros((2, 2)), np.ones((2, 2)))
        with pytest.raises(ValueError):
            relative_error(np.ones((2, 2)), np.ones((2, 3)))

    def test_triangle_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            t, a, b = rng.normal(size=(3, 5, 4))
            lhs = abs(relative_error(t, a) - relative_error(t, b))
            assert lhs <= np.linalg.norm(a - b) / np.linalg.norm(t) + 1e-12


class TestCosine:
    def test_values(self):
        assert cosine_distance([1, 2], [1, 2]) == pytest.approx(0.0, abs=1e-15)
        assert cosine_distance([1, 0], [0, 1]) == 1.0
        assert cosine_distance([1, 0], [1, 1]) == pytest.approx(1 - 1 / math.sqrt(2), abs=1e-15)

    def test_scale_invariance_and_range(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = rng.uniform(size=(2, 6))
            assert cosine_distance(a, 3.7 * a) == pytest.approx(0.0, abs=1e-12)
            assert 0.0 <= cosine_distance(a, b) <= 1.0

    def test_zero_vector(self):
        with pytest.raises(ValueError):
            cosine_distance([0, 0], [1, 1])

    def test_mean_over_columns(self):
        t = np.eye(2)
        e = np.array([[1.0, 1.0], [0.0, 1.0]])
        assert mean_cosine_distance(t, e) == pytest.approx((0 + 1 - 1 / math.sqrt(2)) / 2)


def _brute_force(truth, est, allow_sign):
    tn = truth / np.linalg.norm(truth, axis=0)
    en = est / np.linalg.norm(est, axis=0)
    sim = tn.T @ en
    best = -np.inf
    for perm in itertools.permutations(range(truth.shape[1])):
        vals = sim[np.arange(len(perm)), list(perm)]
        best = max(best, (np.abs(vals) if allow_sign else vals).sum())
    return best


class TestAlign:
    def test_recovers_permutation(self):
        rng = np.random.default_rng(2)
        t = rng.uniform(size=(20, 5))
        perm = np.array([3, 0, 4, 1, 2])
        est = t[:, np.argsort(perm)]
        al = align(t, est)
        np.testing.assert_array_equal(est[:, al.permutation], t)
        assert al.objective == pytest.approx(5.0)

    def test_sign_flip(self):
        rng = np.random.default_rng(3)
        t = rng.normal(size=(20, 3))
        est = t.copy()
        est[:, 1] *= -1
        al = align(t, est, allow_sign=True)
        assert al.signs.tolist() == [1.0, -1.0, 1.0] and al.objective == pytest.approx(3.0)
        np.testing.assert_allclose(al.apply(est), t)
        assert (align(np.abs(t), np.abs(est)).signs == 1).all()

    @pytest.mark.parametrize("k", range(1, 7))
    @pytest.mark.parametrize("allow_sign", [False, True])
    def test_matches_exhaustive_search(self, k, allow_sign):
        rng = np.random.default_rng(10 * k + allow_sign)
        for _ in range(5):
            t = rng.normal(size=(15, k)) if allow_sign else rng.uniform(size=(15, k))
            e = rng.normal(size=(15, k)) if allow_sign else rng.uniform(size=(15, k))
            assert align(t, e, allow_sign).objective == pytest.approx(_brute_force(t, e, allow_sign), abs=1e-12)

    def test_objective_invariant_to_prepermutation(self):
        rng = np.random.default_rng(4)
        t, e = rng.uniform(size=(2, 12, 5))
        base = align(t, e).objective
        assert align(t, e[:, [4, 2, 0, 1, 3]]).objective == pytest.approx(base, abs=1e-12)
        assert align(t[:, [1, 0, 3, 4, 2]], e).objective == pytest.approx(base, abs=1e-12)

    def test_apply_rows(self):
        al = align(np.eye(3), np.eye(3)[:, [2, 0, 1]])
        h = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(al.apply(h, axis=0), h[al.permutation])

    def test_unequal_columns(self):
        with pytest.raises(ValueError):
            align(np.ones((3, 2)), np.ones((3, 3)))


class TestSubspace:
    def test_hand_values(self):
        e = np.eye(4)
        assert subspace_distance(e[:, :2], e[:, :2]) == pytest.approx(0.0, abs=1e-12)
        assert subspace_distance(e[:, :2], e[:, 2:]) == pytest.approx(1.0, abs=1e-12)
        assert subspace_distance(e[:, [0, 1]], e[:, [0, 2]]) == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_symmetry_and_unequal_ranks(self):
        rng = np.random.default_rng(5)
        for m, n in [(2, 2), (2, 4), (5, 1)]:
            a, b = rng.normal(size=(30, m)), rng.normal(size=(30, n))
            assert abs(subspace_distance(a, b) - subspace_distance(b, a)) <= 1e-12
            assert 0 <= subspace_distance(a, b) <= 1

    def test_basis_invariance(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(20, 3))
        mix = rng.normal(size=(3, 3))
        assert subspace_distance(a, a @ mix) == pytest.approx(0.0, abs=1e-7)

    def test_numerical_rank(self):
        a = np.column_stack([np.ones(5), 2 * np.ones(5), np.arange(5.0)])
        assert orthonormal_basis(a).shape == (5, 2)
        with pytest.raises(ValueError):
            subspace_distance(np.zeros((4, 2)), np.zeros((4, 1)))


class TestCompare:
    def test_exact_solution(self):
        rng = np.random.default_rng(7)
        w, h = rng.uniform(1, 2, (30, 3)), rng.dirichlet(np.ones(3), size=8).T
        perm = [2, 0, 1]
        out = compare_solution(w @ h, w, h, (w * [2.0, 3.0, 0.5])[:, perm], (h / [[2.0], [3.0], [0.5]])[perm])
        for key, value in out.items():
            assert value == pytest.approx(0.0, abs=1e-10), key

    def test_rank_mismatch_uses_subspace_only(self):
        rng = np.random.default_rng(8)
        w, h = rng.uniform(1, 2, (30, 3)), rng.uniform(size=(3, 8))
        out = compare_solution(w @ h, w, h, w[:, :2], h[:2])
        assert out["scores_relerr"] is None and out["loadings_cos"] is None
        assert out["scores_ssd"] > 0 and out["overall_relerr"] > 0
