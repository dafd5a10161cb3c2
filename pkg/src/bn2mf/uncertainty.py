"""Scaled individual scores with variational and bootstrap confidence intervals."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable

import numpy as np

from . import metrics
from .baselines import nmf_poisson
from .model import VariationalState, as_array, expected_value
from .vi import FitConfig, fit as bn2mf_fit

log = logging.getLogger(__name__)

MIN_DRAWS = 100


@dataclass(frozen=True)
class ScoreIntervals:
    """Per-entry interval for scaled scores.

    ``mean`` is the analytic (or reference-fit) value, not the draw average, so
    it need not lie between ``lower`` and ``upper``. Entries with
    ``missing=True`` had no samples and carry NaN bounds.
    """

    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_draws: int
    level: float = 0.95
    missing: np.ndarray | None = None
    samples_per_row: np.ndarray | None = None
    warnings: tuple = field(default=())

    def __post_init__(self):
        if self.missing is None:
            object.__setattr__(self, "missing", np.zeros(self.mean.shape, dtype=bool))

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def reorder(self, alignment: metrics.Alignment) -> "ScoreIntervals":
        """Columns matched to the truth order given by ``alignment``."""
        p = alignment.permutation
        return replace(self, mean=self.mean[:, p], lower=self.lower[:, p],
                       upper=self.upper[:, p], missing=self.missing[:, p])


def normalize_and_scale(scores, loadings):
    """l1-normalize each loading row and scale the matching score column by its norm.

    Returns ``(scaled_scores, normalized_loadings)``; their product equals
    ``scores @ loadings``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    loadings = np.asarray(loadings, dtype=np.float64)
    norms = np.abs(loadings).sum(axis=1)
    zero = np.flatnonzero(~(norms > 0))
    if zero.size:
        raise ValueError(f"pattern {int(zero[0])} has a zero l1 norm")
    return scores * norms, loadings / norms[:, None]


def _quantile_bounds(samples: np.ndarray, level: float, axis: int = 0):
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [tail, 1.0 - tail], axis=axis, method="linear")
    return lo, hi


def variational_ci(state: VariationalState, n_draws: int = 1000, seed: int = 0,
                   level: float = 0.95, chunk: int = 100) -> ScoreIntervals:
    """Empirical intervals of scaled scores from draws of the fitted Gamma factors.

    Each draw samples W, a and H, l1-normalizes the drawn H and scales the drawn
    W diag(a) by the drawn row sums. Only components marked active are used.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    notes = []
    if n_draws < MIN_DRAWS:
        notes.append(f"n_draws={n_draws} is below {MIN_DRAWS}; quantiles are unstable")
        log.warning(notes[-1])
    st = state.restrict() if not state.active.all() else state
    qW, qa, qH = st.qW, st.qa, st.qH
    rng = np.random.default_rng(seed)
    n, k = qW.shape.shape
    draws = np.empty((n_draws, n, k))
    for start in range(0, n_draws, chunk):
        m = min(chunk, n_draws - start)
        w = rng.gamma(qW.shape, 1.0 / qW.rate, size=(m,) + qW.shape.shape)
        a = rng.gamma(qa.shape, 1.0 / qa.rate, size=(m,) + qa.shape.shape)
        h = rng.gamma(qH.shape, 1.0 / qH.rate, size=(m,) + qH.shape.shape)
        draws[start:start + m] = w * (a * h.sum(axis=2))[:, None, :]
    lower, upper = _quantile_bounds(draws, level)
    mean, _ = normalize_and_scale(expected_value(qW) * expected_value(qa), expected_value(qH))
    return ScoreIntervals(mean, lower, upper, n_draws, level, warnings=tuple(notes))


# --------------------------------------------------------------------------
# bootstrap

Fitter = Callable[[np.ndarray, int], tuple]


def _bn2mf_solution(x, seed, hp=None, cfg=None):
    cfg = replace(cfg or FitConfig(), seed=seed)
    res = bn2mf_fit(x, hp, cfg)
    return res.scores, res.loadings


def _nmf_poisson_solution(x, seed, k=4, **kwargs):
    res = nmf_poisson(x, k, seed=seed, **kwargs)
    return res.scores, res.loadings


def bn2mf_fitter(hp=None, cfg: FitConfig | None = None) -> Fitter:
    """Picklable fitter returning BN2MF (E[W diag(a)], E[H])."""
    return partial(_bn2mf_solution, hp=hp, cfg=cfg)


def nmf_poisson_fitter(k: int, **kwargs) -> Fitter:
    """Picklable fitter returning Poisson-NMF (W, H) at fixed rank ``k``."""
    return partial(_nmf_poisson_solution, k=k, **kwargs)


def bootstrap_ci(x, fitter: Fitter, n_boot: int = 150, seed: int = 0, level: float = 0.95,
                 reference: tuple | None = None) -> ScoreIntervals:
    """Case-resampling bootstrap intervals for scaled scores.

    Every resample is refit, normalized, and its patterns aligned to the
    full-data reference solution; each resampled row's scores are credited to
    the original row, once per resample containing it (duplicates in one
    resample share the same data and add no information). Resamples
    whose rank differs from the reference cannot be aligned and are skipped.
    """
    arr = as_array(x)
    n = arr.shape[0]
    rng = np.random.default_rng(seed)
    if reference is None:
        reference = fitter(arr, seed)
    ref_scaled, ref_loadings = normalize_and_scale(*reference)
    k = ref_scaled.shape[1]

    rows, values = [], []
    skipped = 0
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        scores, loadings = fitter(arr[idx], seed + 1 + b)
        if np.shape(loadings)[0] != k:
            skipped += 1
            continue
        scaled, normalized = normalize_and_scale(scores, loadings)
        al = metrics.align(ref_loadings.T, normalized.T)
        uniq, first = np.unique(idx, return_index=True)
        rows.append(uniq)
        values.append(al.apply(scaled, axis=1)[first])
    notes = []
    if skipped:
        notes.append(f"{skipped} of {n_boot} resamples returned a different rank and were skipped")
        log.warning(notes[-1])

    lower = np.full((n, k), np.nan)
    upper = np.full((n, k), np.nan)
    counts = np.zeros(n, dtype=int)
    if rows:
        all_rows = np.concatenate(rows)
        all_vals = np.concatenate(values)
        order = np.argsort(all_rows, kind="stable")
        all_rows, all_vals = all_rows[order], all_vals[order]
        counts = np.bincount(all_rows, minlength=n)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        for i in np.flatnonzero(counts):
            block = all_vals[starts[i]:starts[i] + counts[i]]
            lower[i], upper[i] = _quantile_bounds(block, level)
    missing = np.broadcast_to((counts == 0)[:, None], (n, k)).copy()
    return ScoreIntervals(ref_scaled, lower, upper, n_boot - skipped, level,
                          missing=missing, samples_per_row=counts, warnings=tuple(notes))


def coverage(truth, intervals: ScoreIntervals) -> float:
    """Fraction of non-missing entries with lower <= truth <= upper."""
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != intervals.mean.shape:
        raise ValueError(f"shape mismatch: truth {truth.shape} vs intervals {intervals.mean.shape}")
    keep = ~intervals.missing
    if not keep.any():
        return float("nan")
    inside = (intervals.lower <= truth) & (truth <= intervals.upper)
    return float(inside[keep].mean())


def aligned_coverage(scores_true, loadings_true, intervals: ScoreIntervals, loadings_est) -> float:
    """Coverage of the scaled true scores after matching estimated patterns to the truth."""
    truth_scaled, truth_norm = normalize_and_scale(scores_true, loadings_true)
    _, est_norm = normalize_and_scale(np.ones((1, np.shape(loadings_est)[0])), loadings_est)
    al = metrics.align(truth_norm.T, est_norm.T)
    return coverage(truth_scaled, intervals.reorder(al))


def wider_fraction(first: ScoreIntervals, second: ScoreIntervals) -> float:
    """Fraction of entries (present in both) where ``first`` is wider than ``second``."""
    keep = ~(first.missing | second.missing)
    return float((first.width[keep] > second.width[keep]).mean())
