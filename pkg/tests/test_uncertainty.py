"""Scaled scores and their variational and bootstrap intervals."""

import pickle

import numpy as np
import pytest

from bn2mf.model import GammaVariational, VariationalState
from bn2mf.uncertainty import (ScoreIntervals, aligned_coverage, bn2mf_fitter, bootstrap_ci, coverage,
                               nmf_poisson_fitter, normalize_and_scale, variational_ci, wider_fraction)
from bn2mf.vi import FitConfig


def _state(n=15, k=3, p=6, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    g = lambda *s: GammaVariational(rng.uniform(2, 6, s) * scale, rng.uniform(1, 3, s) * scale)  # noqa: E731
    return VariationalState(g(n, k), g(k), g(k, p))


class TestNormalize:
    def test_example(self):
        scaled, normed = normalize_and_scale(np.array([[1.0], [3.0]]), np.array([[2.0, 2.0, 0.0, 0.0]]))
        np.testing.assert_array_equal(normed, [[0.5, 0.5, 0, 0]])
        np.testing.assert_array_equal(scaled, [[4.0], [12.0]])

    def test_identity_when_normalized(self):
        rng = np.random.default_rng(1)
        h = rng.dirichlet(np.ones(5), size=3)
        w = rng.uniform(size=(7, 3))
        scaled, normed = normalize_and_scale(w, h)
        np.testing.assert_allclose(normed, h, rtol=1e-15)
        np.testing.assert_allclose(scaled, w, rtol=1e-15)

    def test_reconstruction_preserved(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            w, h = rng.gamma(1, 5, (30, 4)), rng.gamma(0.5, 0.1, (4, 12))
            s, n = normalize_and_scale(w, h)
            assert np.linalg.norm(s @ n - w @ h) / np.linalg.norm(w @ h) < 1e-12

    def test_zero_row(self):
        with pytest.raises(ValueError, match="pattern 1"):
            normalize_and_scale(np.ones((2, 2)), np.array([[1.0, 1.0], [0.0, 0.0]]))


class TestVariational:
    def test_bounds(self):
        ci = variational_ci(_state(), n_draws=300, seed=0)
        assert ci.mean.shape == (15, 3)
        assert (ci.lower <= ci.upper).all() and (ci.lower >= 0).all()
        assert not ci.missing.any() and not ci.warnings

    def test_deterministic(self):
        a, b = variational_ci(_state(), 200, seed=4), variational_ci(_state(), 200, seed=4)
        np.testing.assert_array_equal(a.lower, b.lower)
        np.testing.assert_array_equal(a.upper, b.upper)

    def test_concentrated_posterior(self):
        ci = variational_ci(_state(scale=1e8), n_draws=200, seed=1)
        assert (ci.width / ci.mean).max() < 1e-3
        assert ((ci.lower <= ci.mean * (1 + 1e-3)) & (ci.mean * (1 - 1e-3) <= ci.upper)).all()

    def test_level_widening(self):
        st = _state(seed=3)
        narrow = variational_ci(st, 400, seed=2, level=0.95)
        wide = variational_ci(st, 400, seed=2, level=0.99)
        assert (wide.lower <= narrow.lower).all() and (wide.upper >= narrow.upper).all()
        mid = variational_ci(st, 400, seed=2, level=1e-9)
        assert ((narrow.lower <= mid.lower) & (mid.upper <= narrow.upper)).all()

    def test_few_draws_warning(self):
        ci = variational_ci(_state(), n_draws=20, seed=0)
        assert ci.warnings and "n_draws" in ci.warnings[0]

    def test_inactive_components_dropped(self):
        st = _state()
        st = VariationalState(st.qW, st.qa, st.qH, active=np.array([True, False, True]))
        assert variational_ci(st, 100).mean.shape == (15, 2)

    def test_bad_level(self):
        with pytest.raises(ValueError):
            variational_ci(_state(), 100, level=1.0)


def _constant_fitter(value):
    def fitter(x, seed):
        return np.full((x.shape[0], 1), value), np.array([[1.0, 1.0]])
    return fitter


class TestBootstrap:
    def test_constant_fitter_zero_width(self):
        x = np.ones((40, 2))
        ci = bootstrap_ci(x, _constant_fitter(3.0), n_boot=30, seed=0)
        present = ~ci.missing
        np.testing.assert_array_equal(ci.lower[present], 6.0)
        np.testing.assert_array_equal(ci.upper[present], 6.0)

    def test_samples_per_row(self):
        ci = bootstrap_ci(np.ones((3000, 2)), _constant_fitter(1.0), n_boot=150, seed=1)
        assert ci.samples_per_row.mean() == pytest.approx(150 * (1 - np.exp(-1)), rel=0.02)
        assert ci.samples_per_row.max() <= 150

    def test_unsampled_rows_missing(self):
        ci = bootstrap_ci(np.ones((50, 2)), _constant_fitter(1.0), n_boot=1, seed=2)
        miss = ci.samples_per_row == 0
        assert miss.any() and ci.missing[miss].all() and np.isnan(ci.lower[miss]).all()
        assert not ci.missing[~miss].any()

    def test_rank_mismatch_skipped(self):
        calls = []

        def fitter(x, seed):
            calls.append(seed)
            k = 1 if len(calls) % 2 else 2
            return np.ones((x.shape[0], k)), np.ones((k, 3))

        ci = bootstrap_ci(np.ones((10, 3)), fitter, n_boot=6, seed=0)
        assert ci.n_draws == 3 and ci.warnings

    def test_alignment_to_reference(self):
        # refits return patterns in reversed order; alignment must undo it
        h = np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
        x = np.column_stack([np.arange(1.0, 21.0), np.ones(20), np.ones(20)])

        def fitter(data, seed):
            w = np.column_stack([data[:, 0], data[:, 0] + 20])
            return (w, h) if seed == 0 else (w[:, ::-1], h[::-1])

        ci = bootstrap_ci(x, fitter, n_boot=5, seed=0)
        rows = ~ci.missing[:, 0]
        assert rows.any()
        np.testing.assert_array_equal(ci.lower[rows, 0], x[rows, 0])
        np.testing.assert_array_equal(ci.upper[rows, 1], x[rows, 0] + 20)

    def test_fitters_pickle(self):
        for f in (bn2mf_fitter(cfg=FitConfig(n_restarts=1)), nmf_poisson_fitter(2)):
            assert pickle.loads(pickle.dumps(f)).func is f.func

    def test_nmf_poisson_fitter_runs(self):
        x = np.random.default_rng(3).gamma(2, 1, (20, 4))
        ci = bootstrap_ci(x, nmf_poisson_fitter(2, max_iter=200), n_boot=5, seed=0)
        assert ci.mean.shape == (20, 2)


class TestCoverage:
    def _intervals(self, mean, half=1.0):
        mean = np.asarray(mean, dtype=float)
        return ScoreIntervals(mean, mean - half, mean + half, 10)

    def test_inside(self):
        m = np.arange(6.0).reshape(3, 2)
        assert coverage(m, self._intervals(m)) == 1.0

    def test_above(self):
        m = np.arange(6.0).reshape(3, 2)
        assert coverage(m + 5, self._intervals(m)) == 0.0

    def test_partial_and_missing(self):
        m = np.zeros((2, 2))
        iv = self._intervals(m)
        iv = ScoreIntervals(iv.mean, iv.lower, iv.upper, 10, missing=np.array([[False, False], [True, True]]))
        assert coverage(np.array([[0.0, 5.0], [9.0, 9.0]]), iv) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            coverage(np.zeros((2, 2)), self._intervals(np.zeros((3, 2))))

    def test_aligned_coverage_permuted(self):
        rng = np.random.default_rng(4)
        w, h = rng.uniform(1, 2, (10, 3)), rng.dirichlet(np.ones(4), size=3)
        scaled, _ = normalize_and_scale(w, h)
        perm = [2, 0, 1]
        iv = self._intervals(scaled[:, perm], half=1e-9)
        assert aligned_coverage(w, h, iv, h[perm]) == 1.0

    def test_wider_fraction(self):
        a = self._intervals(np.zeros((2, 2)), 2.0)
        b = self._intervals(np.zeros((2, 2)), 1.0)
        assert wider_fraction(a, b) == 1.0 and wider_fraction(b, a) == 0.0
