"""Frequentist comparators: two multiplicative-update NMFs, PCA and ML factor analysis."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import FitError
from .model import as_array

log = logging.getLogger(__name__)

EPS = 1e-10
PSI_FLOOR = 1e-6


class Method(str, enum.Enum):
    NMF_L2 = "nmf_l2"
    NMF_P = "nmf_p"
    PCA = "pca"
    FA = "fa"

    @property
    def nonnegative(self) -> bool:
        return self in (Method.NMF_L2, Method.NMF_P)


@dataclass(frozen=True)
class BaselineResult:
    method: Method
    scores: np.ndarray
    loadings: np.ndarray
    k: int
    selection_stat: float
    converged: bool
    n_iter: int = 0
    loglik: float | None = None
    trace: tuple = ()
    info: dict = field(default_factory=dict)

    @property
    def reconstruction(self) -> np.ndarray:
        return self.scores @ self.loadings


def _check_rank(k, p):
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"rank must be a positive integer, got {k!r}")
    if k > p:
        raise ValueError(f"rank {k} exceeds the number of columns {p}")


def _init_factors(x, k, rng):
    n, p = x.shape
    # uniform(0,1) factors have E[WH] = k/4; rescale so E[WH] matches the data mean
    scale = np.sqrt(max(x.mean(), EPS) / (0.25 * k))
    return rng.uniform(size=(n, k)) * scale, rng.uniform(size=(k, p)) * scale


def _run_mu(x, k, seed, max_iter, tol, n_init, step, objective):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_init)]
    best = None
    for rng in rngs:
        w, h = _init_factors(x, k, rng)
        trace = [objective(x, w, h)]
        converged = False
        for _ in range(max_iter):
            w, h = step(x, w, h)
            trace.append(objective(x, w, h))
            prev = trace[-2]
            if abs(prev - trace[-1]) <= tol * max(abs(prev), EPS):
                converged = True
                break
        if best is None or trace[-1] < best[2][-1]:
            best = (w, h, trace, converged)
    return best


def _l2_objective(x, w, h):
    return float(((x - w @ h) ** 2).sum())


def _l2_step(x, w, h):
    h = h * (w.T @ x) / (w.T @ w @ h + EPS)
    w = w * (x @ h.T) / (w @ (h @ h.T) + EPS)
    return w, h


def kl_divergence(x, lam) -> float:
    """Generalized KL divergence D(X || Lambda) with 0 ln 0 = 0."""
    lam = np.maximum(lam, EPS)
    pos = x > 0
    return float((x[pos] * np.log(x[pos] / lam[pos])).sum() - x.sum() + lam.sum())


def _kl_objective(x, w, h):
    return kl_divergence(x, w @ h)


def _kl_step(x, w, h):
    ratio = x / np.maximum(w @ h, EPS)
    h = h * (w.T @ ratio) / (w.sum(axis=0)[:, None] + EPS)
    ratio = x / np.maximum(w @ h, EPS)
    w = w * (ratio @ h.T) / (h.sum(axis=1)[None, :] + EPS)
    return w, h


def nmf_l2(x, k: int, seed: int = 0, max_iter: int = 5000, tol: float = 1e-6, n_init: int = 5) -> BaselineResult:
    """Squared-error NMF by Lee-Seung multiplicative updates; best of ``n_init`` starts."""
    x = as_array(x)
    n, p = x.shape
    _check_rank(k, p)
    w, h, trace, converged = _run_mu(x, k, seed, max_iter, tol, n_init, _l2_step, _l2_objective)
    if not converged:
        log.warning("nmf_l2 (k=%d) did not converge in %d iterations", k, max_iter)
    rss = trace[-1]
    bic = n * p * np.log(max(rss, EPS) / (n * p)) + k * (n + p) * np.log(n * p)
    return BaselineResult(Method.NMF_L2, w, h, k, float(bic), converged, len(trace) - 1,
                          trace=tuple(trace), info={"rss": rss})


def nmf_poisson(x, k: int, seed: int = 0, max_iter: int = 5000, tol: float = 1e-6, n_init: int = 5) -> BaselineResult:
    """KL-divergence (Poisson maximum likelihood) NMF by multiplicative updates."""
    x = as_array(x)
    n, p = x.shape
    _check_rank(k, p)
    w, h, trace, converged = _run_mu(x, k, seed, max_iter, tol, n_init, _kl_step, _kl_objective)
    if not converged:
        log.warning("nmf_poisson (k=%d) did not converge in %d iterations", k, max_iter)
    lam = np.maximum(w @ h, EPS)
    loglik = float((x * np.log(lam) - lam - gammaln(x + 1.0)).sum())
    bic = -2.0 * loglik + k * (n + p) * np.log(n * p)
    return BaselineResult(Method.NMF_P, w, h, k, float(bic), converged, len(trace) - 1,
                          loglik=loglik, trace=tuple(trace), info={"divergence": trace[-1]})


def pca_retain(x, variance_threshold: float = 0.80) -> BaselineResult:
    """Mean-centred PCA keeping the fewest components explaining >= ``variance_threshold``."""
    x = as_array(x)
    xc = x - x.mean(axis=0)
    u, s, vt = np.linalg.svd(xc, full_matrices=False)
    var = s**2
    ratios = var / var.sum() if var.sum() > 0 else np.zeros_like(var)
    cumulative = np.cumsum(ratios)
    # slack absorbs rounding in sums such as 4 x 0.2
    k = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
    k = min(k, len(s))
    return BaselineResult(Method.PCA, u[:, :k] * s[:k], vt[:k], k, float(cumulative[k - 1]), True,
                          info={"explained_variance_ratio": ratios})


def _fa_loglik(s_cov, lam, psi, n):
    p = s_cov.shape[0]
    sigma = lam @ lam.T + np.diag(psi)
    sign, logdet = np.linalg.slogdet(sigma)
    return float(-0.5 * n * (p * np.log(2 * np.pi) + logdet + np.trace(np.linalg.solve(sigma, s_cov))))


def factor_analysis(x, k: int, max_iter: int = 2000, tol: float = 1e-6) -> BaselineResult:
    """Maximum-likelihood factor analysis with diagonal uniquenesses, fit by EM.

    Scores are regression (Thomson) scores. Uniquenesses that fall below
    ``PSI_FLOOR`` (Heywood cases) are floored and reported in ``info``.
    """
    x = as_array(x)
    n, p = x.shape
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"rank must be a positive integer, got {k!r}")
    if k >= p:
        raise ValueError(f"factor rank {k} must be below the number of columns {p}")
    mu = x.mean(axis=0)
    xc = x - mu
    s_cov = xc.T @ xc / n

    evals, evecs = np.linalg.eigh(s_cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    resid = max(evals[k:].mean(), 0.0)
    lam = evecs[:, :k] * np.sqrt(np.maximum(evals[:k] - resid, PSI_FLOOR))
    psi = np.maximum(np.diag(s_cov) - (lam**2).sum(axis=1), PSI_FLOOR)

    trace = [_fa_loglik(s_cov, lam, psi, n)]
    converged = False
    heywood = False
    eye = np.eye(k)
    for _ in range(max_iter):
        # E-step via Woodbury: beta = L' Sigma^-1
        lt_psi = lam.T / psi
        m = np.linalg.inv(eye + lt_psi @ lam)
        beta = m @ lt_psi
        ezz = eye - beta @ lam + beta @ s_cov @ beta.T
        lam = s_cov @ beta.T @ np.linalg.inv(ezz)
        psi = np.diag(s_cov) - np.einsum("jk,kj->j", lam, beta @ s_cov)
        if (psi < PSI_FLOOR).any():
            heywood = True
            psi = np.maximum(psi, PSI_FLOOR)
        trace.append(_fa_loglik(s_cov, lam, psi, n))
        if abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            converged = True
            break
    if not converged:
        log.warning("factor analysis (k=%d) did not converge in %d iterations", k, max_iter)

    sigma = lam @ lam.T + np.diag(psi)
    scores = xc @ np.linalg.solve(sigma, lam)
    loglik = trace[-1]
    n_params = p * k + p - k * (k - 1) / 2
    bic = -2.0 * loglik + n_params * np.log(n)
    return BaselineResult(Method.FA, scores, lam.T, k, float(bic), converged, len(trace) - 1,
                          loglik=loglik, trace=tuple(trace),
                          info={"uniquenesses": psi, "heywood": heywood})


_FITTERS = {Method.NMF_L2: nmf_l2, Method.NMF_P: nmf_poisson, Method.FA: factor_analysis}


def fit_baseline(x, method, k: int, seed: int = 0, **kwargs) -> BaselineResult:
    method = Method(method)
    if method is Method.PCA:
        return pca_retain(x, **kwargs)
    if method is Method.FA:
        return factor_analysis(x, k, **kwargs)
    return _FITTERS[method](x, k, seed=seed, **kwargs)


def select_by_bic(x, method, k_candidates, seed: int = 0, **kwargs) -> BaselineResult:
    """Fit every candidate rank and return the lowest-BIC model (ties go to the smaller rank)."""
    method = Method(method)
    if method is Method.PCA:
        raise ValueError("PCA selects its rank by explained variance, not BIC")
    candidates = sorted(set(int(k) for k in k_candidates))
    if not candidates:
        raise ValueError("k_candidates is empty")
    best, failures = None, []
    for k in candidates:
        try:
            res = fit_baseline(x, method, k, seed=seed, **kwargs)
        except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            failures.append(f"k={k}: {exc}")
            continue
        if not np.isfinite(res.selection_stat):
            failures.append(f"k={k}: non-finite BIC")
            continue
        if best is None or res.selection_stat < best.selection_stat:
            best = res
    if best is None:
        raise FitError(f"every {method.value} candidate failed: " + "; ".join(failures), failures)
    info = dict(best.info, failures=failures, candidates=candidates)
    return BaselineResult(best.method, best.scores, best.loadings, best.k, best.selection_stat,
                          best.converged, best.n_iter, best.loglik, best.trace, info)
