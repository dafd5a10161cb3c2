"""Gamma-Poisson factorization model with a sparse rank-shrinkage vector.

    X ~ Poisson(W diag(a) H)
    W_ik ~ Gamma(alpha_w, beta_w),  a_k ~ Gamma(1/K, beta_a),  H_kj ~ Gamma(alpha_h, beta_h)

All Gamma distributions use the shape-rate parameterization (mean = shape / rate).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .errors import NumericalError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _readonly(a) -> np.ndarray:
    return _frozen(np.array(a, dtype=np.float64, copy=True))


@dataclass(frozen=True)
class ExposureMatrix:
    """N x P non-negative data matrix with row and column labels."""

    values: np.ndarray
    row_ids: tuple = ()
    col_ids: tuple = ()

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2:
            raise ValueError(f"exposure matrix must be 2-d, got shape {values.shape}")
        n, p = values.shape
        if n < 2 or p < 2:
            raise ValueError(f"exposure matrix needs N >= 2 and P >= 2, got {n} x {p}")
        bad = ~np.isfinite(values)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"non-finite entry at ({i}, {j})")
        if (values < 0).any():
            i, j = np.argwhere(values < 0)[0]
            raise ValueError(f"negative entry {values[i, j]} at ({i}, {j})")
        row_ids = tuple(str(r) for r in self.row_ids) or tuple(f"r{i + 1}" for i in range(n))
        col_ids = tuple(str(c) for c in self.col_ids) or tuple(f"c{j + 1}" for j in range(p))
        if len(row_ids) != n or len(col_ids) != p:
            raise ValueError("label counts do not match matrix dimensions")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "col_ids", col_ids)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def take_rows(self, index: Sequence[int]) -> "ExposureMatrix":
        index = np.asarray(index)
        return ExposureMatrix(self.values[index], tuple(self.row_ids[i] for i in index), self.col_ids)


def as_array(x) -> np.ndarray:
    """Return the raw float array behind ``x`` (an ExposureMatrix or array-like)."""
    if isinstance(x, ExposureMatrix):
        return x.values
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class Hyperparameters:
    """Prior hyperparameters.

    ``k_init=None`` means "use the number of columns P", resolved by :meth:`resolve`.
    The shape of the prior on ``a`` is always ``1 / k_init``.
    """

    alpha_w: float = 1.0
    beta_w: float = 1.0
    alpha_h: float = 1.0
    beta_h: float = 1.0
    beta_a: float = 1.0
    k_init: int | None = None

    def __post_init__(self):
        for name in ("alpha_w", "beta_w", "alpha_h", "beta_h", "beta_a"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if self.k_init is not None and int(self.k_init) < 1:
            raise ValueError(f"k_init must be a positive integer, got {self.k_init}")

    @property
    def alpha_a(self) -> float:
        if self.k_init is None:
            raise ValueError("k_init is unresolved; call resolve(p) first")
        return 1.0 / self.k_init

    def resolve(self, p: int) -> "Hyperparameters":
        if self.k_init is not None:
            return self
        return replace(self, k_init=int(p))


@dataclass(frozen=True)
class GammaVariational:
    """Element-wise Gamma(shape, rate) block."""

    shape: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        shape = _readonly(self.shape)
        rate = _readonly(self.rate)
        if shape.shape != rate.shape:
            raise ValueError(f"shape {shape.shape} and rate {rate.shape} arrays differ")
        if not (np.all(shape > 0) and np.all(rate > 0)):
            raise NumericalError("Gamma parameters must be strictly positive")
        if not (np.all(np.isfinite(shape)) and np.all(np.isfinite(rate))):
            raise NumericalError("Gamma parameters must be finite")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "rate", rate)

    @cached_property
    def mean(self) -> np.ndarray:
        return _frozen(self.shape / self.rate)

    @cached_property
    def _digamma_shape(self) -> np.ndarray:
        return _frozen(digamma(self.shape))

    @cached_property
    def log_mean(self) -> np.ndarray:
        """E[ln x] (not ln E[x])."""
        return _frozen(self._digamma_shape - np.log(self.rate))

    @property
    def variance(self) -> np.ndarray:
        return self.shape / self.rate**2

    def entropy(self) -> np.ndarray:
        s, r = self.shape, self.rate
        return s - np.log(r) + gammaln(s) + (1.0 - s) * self._digamma_shape

    def expected_log_prior(self, alpha: float, beta: float) -> np.ndarray:
        """E_q[ln Gamma(theta; alpha, beta)] element-wise."""
        return (alpha * np.log(beta) - gammaln(alpha)
                + (alpha - 1.0) * expected_log(self) - beta * expected_value(self))

    def subset(self, index, axis: int = 0) -> "GammaVariational":
        return GammaVariational(np.take(self.shape, index, axis=axis),
                                np.take(self.rate, index, axis=axis))


def expected_value(q: GammaVariational) -> np.ndarray:
    """shape / rate, element-wise."""
    return q.mean


def expected_log(q: GammaVariational) -> np.ndarray:
    """digamma(shape) - ln(rate), element-wise."""
    return q.log_mean


@dataclass(frozen=True)
class VariationalState:
    """Mean-field posterior over (W, a, H) plus optimization bookkeeping."""

    qW: GammaVariational
    qa: GammaVariational
    qH: GammaVariational
    temperature: float = 1.0
    elbo_trace: tuple = ()
    active: np.ndarray | None = field(default=None)

    def __post_init__(self):
        n, k = self.qW.shape.shape
        if self.qa.shape.shape != (k,) or self.qH.shape.shape[0] != k:
            raise ValueError("variational blocks have inconsistent dimensions")
        if self.temperature < 1:
            raise ValueError(f"temperature must be >= 1, got {self.temperature}")
        active = np.ones(k, dtype=bool) if self.active is None else np.array(self.active, dtype=bool)
        if active.shape != (k,):
            raise ValueError("active mask length must equal K")
        active.flags.writeable = False
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "elbo_trace", tuple(float(e) for e in self.elbo_trace))

    @property
    def k(self) -> int:
        return self.qa.shape.shape[0]

    @property
    def k_active(self) -> int:
        return int(self.active.sum())

    def restrict(self) -> "VariationalState":
        """Drop inactive components."""
        idx = np.flatnonzero(self.active)
        return VariationalState(self.qW.subset(idx, axis=1), self.qa.subset(idx),
                                self.qH.subset(idx, axis=0), self.temperature,
                                self.elbo_trace, None)


def _gamma_logpdf(x, alpha, beta):
    return alpha * np.log(beta) - gammaln(alpha) + (alpha - 1.0) * np.log(x) - beta * x


def poisson_loglik(x, rate) -> float:
    """Sum of Poisson log-masses, using lnGamma(x + 1) so non-integer x is accepted."""
    x = np.asarray(x, dtype=np.float64)
    terms = np.where(x > 0, x * np.log(np.where(x > 0, rate, 1.0)), 0.0) - rate - gammaln(x + 1.0)
    return _checked_sum(terms, "Poisson likelihood")


def _checked_sum(terms: np.ndarray, label: str) -> float:
    bad = ~np.isfinite(terms)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NumericalError(f"non-finite {label} term at index {idx}", index=idx, term=label)
    return float(terms.sum())


def model_log_joint(x, w, a, h, hp: Hyperparameters) -> float:
    """Log of the unnormalized posterior: Poisson likelihood plus the three Gamma priors."""
    x = as_array(x)
    w, a, h = (np.asarray(v, dtype=np.float64) for v in (w, a, h))
    if w.shape[1] != a.shape[0] or a.shape[0] != h.shape[0] or x.shape != (w.shape[0], h.shape[1]):
        raise ValueError("inconsistent factor dimensions")
    lam = (w * a) @ h
    total = poisson_loglik(x, lam)
    total += _checked_sum(_gamma_logpdf(w, hp.alpha_w, hp.beta_w), "W prior")
    total += _checked_sum(_gamma_logpdf(a, 1.0 / a.shape[0], hp.beta_a), "a prior")
    total += _checked_sum(_gamma_logpdf(h, hp.alpha_h, hp.beta_h), "H prior")
    return total
