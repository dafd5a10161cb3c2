"""Annealed coordinate-ascent variational inference for the Gamma-Poisson model.

The updates follow from augmenting each observation with latent counts
``x_ij = sum_k z_ijk`` whose mean-field posterior is multinomial with
responsibilities ``phi_ijk ∝ exp(E[ln W_ik] + E[ln a_k] + E[ln H_kj])``.
The N x P x K responsibility tensor is never formed: with
``Wt = exp(E ln W + E ln a)``, ``Ht = exp(E ln H)`` and ``S = Wt @ Ht``,

    sum_j x_ij phi_ijk = Wt_ik * ((X / S) @ Ht.T)_ik
    sum_i x_ij phi_ijk = Ht_kj * (Wt.T @ (X / S))_kj
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .errors import FitError, NumericalError
from .model import (
    GammaVariational,
    Hyperparameters,
    VariationalState,
    as_array,
    expected_log,
    expected_value,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    n_restarts: int = 10
    max_sweeps: int = 100_000
    rel_tol: float = 1e-6
    t0: float = 2.0
    anneal_sweeps: int = 50
    prune_rel_threshold: float = 1e-3
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_restarts < 1 or self.max_sweeps < 1 or self.anneal_sweeps < 0 or self.n_jobs < 1:
            raise ValueError("n_restarts, max_sweeps and n_jobs must be positive")
        if not 0 < self.rel_tol < 1:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.t0 < 1:
            raise ValueError(f"t0 must be >= 1, got {self.t0}")
        if not 0 < self.prune_rel_threshold < 1:
            raise ValueError("prune_rel_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class RestartSummary:
    index: int
    seed: int
    elbo: float | None
    sweeps: int
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class FactorizationResult:
    """Best restart of a fit, with inactive components removed from scores/loadings.

    ``scores`` is E_q[W diag(a)] (data units), ``loadings`` is E_q[H].
    ``state`` keeps every component; its ``active`` mask marks the retained ones.
    """

    scores: np.ndarray
    loadings: np.ndarray
    k_effective: int
    elbo: float
    state: VariationalState
    sweeps_used: int
    restart_index: int
    converged: bool = True
    restarts: tuple = field(default=())

    @property
    def reconstruction(self) -> np.ndarray:
        return self.scores @ self.loadings


# --------------------------------------------------------------------------
# responsibilities

class _Data:
    """Per-dataset constants reused across sweeps."""

    def __init__(self, x):
        self.x = as_array(x)
        self.pos = self.x > 0
        self.dense = bool(self.pos.all())
        self.row_sums = self.x.sum(axis=1)
        self.col_sums = self.x.sum(axis=0)
        self.log_factorial = float(gammaln(self.x + 1.0).sum())


@dataclass
class _Allocation:
    """Exponentiated factors with row/column maxima removed, and S = Wt @ Ht.

    The offsets cancel in the responsibilities; the true normalizer is
    ``S * exp(row_off + col_off)``.
    """

    wt: np.ndarray
    ht: np.ndarray
    s: np.ndarray
    ratio: np.ndarray
    row_off: np.ndarray
    col_off: np.ndarray

    def stat_w(self) -> np.ndarray:
        """sum_j x_ij phi_ijk, shape N x K."""
        return self.wt * (self.ratio @ self.ht.T)

    def stat_h(self) -> np.ndarray:
        """sum_i x_ij phi_ijk, shape K x P."""
        return self.ht * (self.wt.T @ self.ratio)

    def x_log_s(self, data: _Data) -> float:
        """sum_ij x_ij ln S_ij on the unscaled normalizer."""
        log_s = np.log(np.where(data.pos, self.s, 1.0))
        return float((data.x * log_s).sum() + data.row_sums @ self.row_off.ravel()
                     + data.col_sums @ self.col_off.ravel())


def _allocate(data: _Data, eln_wa: np.ndarray, eln_h: np.ndarray) -> _Allocation:
    row_off = eln_wa.max(axis=1, keepdims=True)
    col_off = eln_h.max(axis=0, keepdims=True)
    wt = np.exp(eln_wa - row_off)
    ht = np.exp(eln_h - col_off)
    s = wt @ ht
    ok = (s > 0) & np.isfinite(s)
    if not ok[data.pos].all():
        i, j = np.argwhere(data.pos & ~ok)[0]
        raise NumericalError(f"non-finite responsibility at ({i}, {j})", index=(int(i), int(j)),
                             term="responsibility")
    if data.dense:
        ratio = data.x / s
    else:
        ratio = np.divide(data.x, s, out=np.zeros_like(s), where=data.pos)
    return _Allocation(wt, ht, s, ratio, row_off, col_off)


def _state_allocation(data: _Data, state: VariationalState) -> _Allocation:
    return _allocate(data, state.qW.log_mean + state.qa.log_mean, state.qH.log_mean)


def responsibilities(x, state: VariationalState) -> np.ndarray:
    """Explicit N x P x K responsibility tensor (zero where x_ij == 0). Small problems only."""
    data = _Data(x)
    logits = (expected_log(state.qW) + expected_log(state.qa))[:, None, :] + expected_log(state.qH).T[None, :, :]
    logits -= logits.max(axis=2, keepdims=True)
    phi = np.exp(logits)
    phi /= phi.sum(axis=2, keepdims=True)
    if not np.isfinite(phi[data.pos]).all():
        i, j = np.argwhere(data.pos & ~np.isfinite(phi).all(axis=2))[0]
        raise NumericalError(f"non-finite responsibility at ({i}, {j})", index=(int(i), int(j)),
                             term="responsibility")
    phi[~data.pos] = 0.0
    return phi


# --------------------------------------------------------------------------
# state initialization and updates

def init_state(x, hp: Hyperparameters, seed: int, temperature: float = 1.0) -> VariationalState:
    """Prior parameters with shapes jittered by Uniform(0.5, 1.5) multiplicative noise.

    q(a) is the exception: its shapes start near 1 rather than at the prior
    shape 1/K. With shapes near 1/K, digamma(shape) differs by tens of nats
    across the jittered components and the first responsibility update hands
    nearly all mass to a single component.
    """
    n, p = as_array(x).shape
    hp = hp.resolve(p)
    k = hp.k_init
    rng = np.random.default_rng(seed)
    jitter = lambda size: rng.uniform(0.5, 1.5, size=size)  # noqa: E731
    qW = GammaVariational(hp.alpha_w * jitter((n, k)), np.full((n, k), hp.beta_w))
    qa = GammaVariational(jitter(k), np.full(k, hp.beta_a))
    qH = GammaVariational(hp.alpha_h * jitter((k, p)), np.full((k, p), hp.beta_h))
    return VariationalState(qW, qa, qH, temperature=max(1.0, float(temperature)))


def temper(shape_opt, rate_opt, temperature: float):
    """Divide the natural parameters (shape - 1, -rate) of a Gamma optimum by T."""
    if temperature == 1.0:
        return shape_opt, rate_opt
    return (shape_opt - 1.0) / temperature + 1.0, rate_opt / temperature


def _sweep(data: _Data, state: VariationalState, hp: Hyperparameters,
           alloc: _Allocation | None = None) -> tuple[VariationalState, _Allocation]:
    """Returns the updated state and the allocation evaluated at it."""
    t = state.temperature
    alpha_a = 1.0 / state.k
    qW, qa, qH = state.qW, state.qa, state.qH

    if alloc is None:
        alloc = _state_allocation(data, state)
    rate_w = np.broadcast_to(hp.beta_w + qa.mean * qH.mean.sum(axis=1), qW.shape.shape)
    qW = GammaVariational(*temper(hp.alpha_w + alloc.stat_w(), rate_w, t))

    alloc = _allocate(data, qW.log_mean + qa.log_mean, qH.log_mean)
    rate_a = hp.beta_a + qW.mean.sum(axis=0) * qH.mean.sum(axis=1)
    qa = GammaVariational(*temper(alpha_a + alloc.stat_w().sum(axis=0), rate_a, t))

    alloc = _allocate(data, qW.log_mean + qa.log_mean, qH.log_mean)
    rate_h = np.broadcast_to((hp.beta_h + (qW.mean * qa.mean).sum(axis=0))[:, None], qH.shape.shape)
    qH = GammaVariational(*temper(hp.alpha_h + alloc.stat_h(), rate_h, t))

    new = replace(state, qW=qW, qa=qa, qH=qH)
    return new, _state_allocation(data, new)


def cavi_sweep(x, state: VariationalState, hp: Hyperparameters) -> VariationalState:
    """One coordinate update of qW, qa, qH (in that order) at ``state.temperature``.

    Responsibilities are refreshed before each block, so at T = 1 every block
    update is an exact coordinate maximization of the bound.
    """
    hp = hp.resolve(state.qH.shape.shape[1])
    return _sweep(_Data(x), state, hp)[0]


def _elbo(data: _Data, state: VariationalState, hp: Hyperparameters, temperature: float,
          alloc: _Allocation | None = None) -> float:
    if alloc is None:
        alloc = _state_allocation(data, state)
    e_w, e_a, e_h = state.qW.mean, state.qa.mean, state.qH.mean
    # sum_ij E[W_i.] diag(E[a]) E[H_.j] without forming the N x P product
    mass = float((e_w.sum(axis=0) * e_a * e_h.sum(axis=1)).sum())
    terms = {"likelihood": alloc.x_log_s(data) - mass - data.log_factorial}
    alpha_a = 1.0 / state.k
    priors = (("W", state.qW, hp.alpha_w, hp.beta_w),
              ("a", state.qa, alpha_a, hp.beta_a),
              ("H", state.qH, hp.alpha_h, hp.beta_h))
    for name, q, alpha, beta in priors:
        terms[f"{name} prior"] = float(q.expected_log_prior(alpha, beta).sum())
        terms[f"{name} entropy"] = temperature * float(q.entropy().sum())
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericalError(f"non-finite ELBO term: {name}", term=name)
    return sum(terms.values())


def compute_elbo(x, state: VariationalState, hp: Hyperparameters, temperature: float | None = None) -> float:
    """Evidence lower bound with entropies weighted by the temperature.

    E_q[ln p(X | W, a, H)] is evaluated through the auxiliary-count bound with
    responsibilities recomputed from ``state``; ``temperature`` defaults to
    ``state.temperature``.
    """
    hp = hp.resolve(state.qH.shape.shape[1])
    t = state.temperature if temperature is None else float(temperature)
    return _elbo(_Data(x), state, hp, t)


def anneal_temperature(sweep_index: int, cfg: FitConfig) -> float:
    if sweep_index < 0:
        raise ValueError("sweep_index must be non-negative")
    if cfg.anneal_sweeps == 0:
        return 1.0
    frac = max(0.0, 1.0 - sweep_index / cfg.anneal_sweeps)
    return 1.0 + (cfg.t0 - 1.0) * frac


def effective_rank(state: VariationalState, cfg: FitConfig) -> tuple[int, np.ndarray]:
    """Components with E[a_k] >= threshold * max E[a] are active."""
    e_a = expected_value(state.qa)
    mask = e_a >= cfg.prune_rel_threshold * e_a.max()
    return int(mask.sum()), mask


# --------------------------------------------------------------------------
# full fit

def _run_restart(x: np.ndarray, hp: Hyperparameters, cfg: FitConfig, index: int):
    seed = cfg.seed + index
    data = _Data(x)
    state = init_state(x, hp, seed, temperature=anneal_temperature(0, cfg))
    trace = []
    converged = False
    alloc = None
    for t in range(cfg.max_sweeps):
        temp = anneal_temperature(t, cfg)
        state, alloc = _sweep(data, replace(state, temperature=temp), hp, alloc)
        trace.append(_elbo(data, state, hp, temp, alloc))
        if temp == 1.0 and len(trace) > 1 and anneal_temperature(t - 1, cfg) == 1.0:
            prev = trace[-2]
            if abs(trace[-1] - prev) < cfg.rel_tol * abs(prev):
                converged = True
                break
    state = replace(state, elbo_trace=tuple(trace))
    return state, converged


def _restart_worker(args):
    x, hp, cfg, index = args
    try:
        state, converged = _run_restart(x, hp, cfg, index)
    except NumericalError as exc:
        return index, None, False, f"{type(exc).__name__}: {exc}"
    return index, state, converged, None


def fit(x, hp: Hyperparameters | None = None, cfg: FitConfig | None = None) -> FactorizationResult:
    """Fit from ``cfg.n_restarts`` seeds and keep the restart with the largest final ELBO."""
    hp = (hp or Hyperparameters()).resolve(as_array(x).shape[1])
    cfg = cfg or FitConfig()
    arr = as_array(x)
    jobs = [(arr, hp, cfg, r) for r in range(cfg.n_restarts)]
    if cfg.n_jobs > 1 and cfg.n_restarts > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            outcomes = list(pool.map(_restart_worker, jobs))
    else:
        outcomes = [_restart_worker(job) for job in jobs]

    summaries = []
    best = None
    for index, state, converged, error in outcomes:
        if state is None:
            log.warning("restart %d failed: %s", index, error)
            summaries.append(RestartSummary(index, cfg.seed + index, None, 0, False, error))
            continue
        elbo = state.elbo_trace[-1]
        summaries.append(RestartSummary(index, cfg.seed + index, elbo, len(state.elbo_trace), converged))
        if not converged:
            log.info("restart %d hit max_sweeps=%d before converging", index, cfg.max_sweeps)
        if best is None or elbo > best[1].elbo_trace[-1]:
            best = (index, state, converged)
    if best is None:
        raise FitError("all restarts failed", failures=[s.error for s in summaries])

    index, state, converged = best
    k_eff, mask = effective_rank(state, cfg)
    state = replace(state, active=mask)
    e_w, e_a, e_h = expected_value(state.qW), expected_value(state.qa), expected_value(state.qH)
    return FactorizationResult(
        scores=(e_w * e_a)[:, mask],
        loadings=e_h[mask],
        k_effective=k_eff,
        elbo=state.elbo_trace[-1],
        state=state,
        sweeps_used=len(state.elbo_trace),
        restart_index=index,
        converged=converged,
        restarts=tuple(summaries),
    )
