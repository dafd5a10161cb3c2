"""Simulated exposure datasets with known scores and pattern loadings.

Chemicals are split into ``k`` contiguous blocks, one per pattern. Within a
block the first chemicals are "distinct" (loading 1 on their own pattern only);
the rest are "overlapping", loading Dirichlet(10, 5) on their own pattern and
the next pattern cyclically. Scores are i.i.d. Lognormal(0, 1). Gaussian noise
scaled to a proportion of the clean data's standard deviation is added and the
result clipped at zero.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

NOISE_LEVELS = tuple(round(0.1 * i, 1) for i in range(11))
STRUCTURES = tuple(range(10, -1, -1))

HIGH_ALPHA = 10.0
MEDIUM_ALPHA = 5.0


@dataclass(frozen=True)
class SimSpec:
    n: int = 1000
    p: int = 40
    k: int = 4
    distinct_per_pattern: int = 10
    noise_prop: float = 0.2
    seed: int = 0
    sd_mode: str = "grand"

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.k < 1:
            raise ValueError("n, p and k must be positive")
        if self.p % self.k:
            raise ValueError(f"p={self.p} is not divisible into k={self.k} pattern blocks")
        if not 0 <= self.distinct_per_pattern <= 10:
            raise ValueError(f"distinct_per_pattern must lie in 0..10, got {self.distinct_per_pattern}")
        if not 0 <= self.noise_prop:
            raise ValueError("noise_prop must be non-negative")
        if self.sd_mode not in ("grand", "column"):
            raise ValueError(f"sd_mode must be 'grand' or 'column', got {self.sd_mode!r}")

    @property
    def block_size(self) -> int:
        return self.p // self.k

    @property
    def n_distinct(self) -> int:
        """Distinct chemicals per block; the 0..10 scale is proportional to the block size."""
        return int(round(self.distinct_per_pattern * self.block_size / 10))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimTruth:
    spec: SimSpec
    scores_true: np.ndarray
    loadings_true: np.ndarray
    x_clean: np.ndarray
    x_noisy: np.ndarray
    noise: np.ndarray
    noise_sigma: float | np.ndarray


def _streams(seed: int):
    dictionary, scores, noise = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(dictionary), np.random.default_rng(scores), np.random.default_rng(noise)


def gen_dictionary(spec: SimSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """K x P loadings; every column (chemical) sums to one across patterns."""
    if rng is None:
        rng = _streams(spec.seed)[0]
    k, block = spec.k, spec.block_size
    h = np.zeros((k, spec.p))
    for b in range(k):
        cols = range(b * block, (b + 1) * block)
        for offset, j in enumerate(cols):
            if offset < spec.n_distinct or k == 1:
                h[b, j] = 1.0
            else:
                high, medium = rng.dirichlet([HIGH_ALPHA, MEDIUM_ALPHA])
                h[b, j] = high
                h[(b + 1) % k, j] = medium
    return h


def gen_scores(n: int, k: int, seed=None, rng: np.random.Generator | None = None) -> np.ndarray:
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    if rng is None:
        rng = np.random.default_rng(seed)
    return np.exp(rng.standard_normal((n, k)))


def gen_dataset(spec: SimSpec) -> SimTruth:
    h_rng, w_rng, e_rng = _streams(spec.seed)
    loadings = gen_dictionary(spec, h_rng)
    scores = gen_scores(spec.n, spec.k, rng=w_rng)
    x_clean = scores @ loadings
    if spec.sd_mode == "grand":
        sigma = spec.noise_prop * x_clean.std(ddof=1)
    else:
        sigma = spec.noise_prop * x_clean.std(axis=0, ddof=1)
    noise = e_rng.standard_normal(x_clean.shape) * sigma
    x_noisy = np.maximum(0.0, x_clean + noise)
    return SimTruth(spec, scores, loadings, x_clean, x_noisy, noise, sigma)


def primary_grid(n: int = 1000, seed: int = 0) -> list[SimSpec]:
    """The 11 structures x 11 noise levels of the primary design (one SimSpec per cell)."""
    return [SimSpec(n=n, distinct_per_pattern=d, noise_prop=s, seed=seed)
            for d in STRUCTURES for s in NOISE_LEVELS]
