"""Solution-versus-truth comparison: relative error, cosine distance,
optimal column alignment and symmetric subspace distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr
from scipy.optimize import linear_sum_assignment

RANK_TOL = 1e-10


def relative_error(truth, estimate) -> float:
    """||truth - estimate||_F / ||truth||_F."""
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    denom = np.linalg.norm(truth)
    if denom == 0:
        raise ValueError("relative error is undefined for an all-zero truth")
    return float(np.linalg.norm(truth - estimate) / denom)


def cosine_distance(a, b) -> float:
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine distance is undefined for a zero vector")
    return float(1.0 - a @ b / (na * nb))


def mean_cosine_distance(truth, estimate) -> float:
    """Mean cosine distance over paired columns."""
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    return float(np.mean([cosine_distance(truth[:, k], estimate[:, k]) for k in range(truth.shape[1])]))


def cosine_similarity_matrix(truth, estimate) -> np.ndarray:
    """K x K matrix of cosine similarities between truth column i and estimate column j."""
    t = np.asarray(truth, dtype=np.float64)
    e = np.asarray(estimate, dtype=np.float64)
    tn = np.linalg.norm(t, axis=0)
    en = np.linalg.norm(e, axis=0)
    if (tn == 0).any() or (en == 0).any():
        raise ValueError("cannot align zero columns")
    return (t / tn).T @ (e / en)


@dataclass(frozen=True)
class Alignment:
    """``estimate[:, permutation[k]] * signs[k]`` is matched to ``truth[:, k]``."""

    permutation: np.ndarray
    signs: np.ndarray
    objective: float

    def apply(self, estimate, axis: int = 1) -> np.ndarray:
        """Reorder (and sign-flip) the columns (``axis=1``) or rows (``axis=0``) of ``estimate``."""
        estimate = np.asarray(estimate)
        if axis == 1:
            return estimate[:, self.permutation] * self.signs
        return estimate[self.permutation] * self.signs[:, None]


def align(truth, estimate, allow_sign: bool = False) -> Alignment:
    """Column matching that maximizes the total cosine similarity (exact optimum)."""
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape[1] != estimate.shape[1]:
        raise ValueError(f"column counts differ: {truth.shape[1]} vs {estimate.shape[1]}")
    sim = cosine_similarity_matrix(truth, estimate)
    gain = np.abs(sim) if allow_sign else sim
    rows, cols = linear_sum_assignment(gain, maximize=True)
    perm = cols[np.argsort(rows)]
    matched = sim[np.arange(len(perm)), perm]
    signs = np.where(matched < 0, -1.0, 1.0) if allow_sign else np.ones(len(perm))
    return Alignment(perm, signs, float((matched * signs).sum()))


def orthonormal_basis(a, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column span via column-pivoted QR."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return np.zeros((a.shape[0], 0))
    q, r, _ = qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return np.zeros((a.shape[0], 0))
    rank = int((diag > tol * diag[0]).sum())
    return q[:, :rank]


def subspace_distance(u_basis, v_basis) -> float:
    """Symmetric subspace distance between column spans, scaled to [0, 1].

    d(U, V) = sqrt(max(m, n) - sum_ij (u_i . v_j)^2) / sqrt(max(m, n)) for orthonormal bases.
    """
    u = orthonormal_basis(u_basis)
    v = orthonormal_basis(v_basis)
    m, n = u.shape[1], v.shape[1]
    if max(m, n) == 0:
        raise ValueError("both inputs have numerical rank zero")
    overlap = float(((u.T @ v) ** 2).sum())
    return float(np.sqrt(max(max(m, n) - overlap, 0.0) / max(m, n)))


def _l1_scaled(scores, loadings):
    norms = np.abs(loadings).sum(axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    return scores * norms, loadings / norms[:, None]


def compare_solution(x_clean, scores_true, loadings_true, scores, loadings, allow_sign=False) -> dict:
    """All comparison metrics for one solution.

    Alignment is computed on the loadings (patterns) and applied to the scores.
    Both solutions are first put on a common scale (each loading row l1-normalized,
    its norm moved into the scores) so factor-level relative errors ignore the
    arbitrary scale split between the two factors. Scores/loadings errors and
    cosine distances need equal ranks and are ``None`` otherwise; subspace
    distances are always available.
    """
    scores = np.asarray(scores, dtype=np.float64)
    loadings = np.asarray(loadings, dtype=np.float64)
    scores_true, loadings_true = _l1_scaled(np.asarray(scores_true, dtype=np.float64),
                                            np.asarray(loadings_true, dtype=np.float64))
    predicted = scores @ loadings
    out = {
        "overall_relerr": relative_error(x_clean, predicted),
        "overall_cos": _safe_mean_cos(x_clean, predicted),
        "overall_ssd": subspace_distance(x_clean, predicted),
        "scores_ssd": subspace_distance(scores_true, scores),
        "loadings_ssd": subspace_distance(np.asarray(loadings_true).T, loadings.T),
        "scores_relerr": None, "scores_cos": None,
        "loadings_relerr": None, "loadings_cos": None,
    }
    if scores.shape[1] == np.shape(scores_true)[1]:
        s_sc, h_sc = _l1_scaled(scores, loadings)
        al = align(loadings_true.T, h_sc.T, allow_sign=allow_sign)
        s_al = al.apply(s_sc, axis=1)
        h_al = al.apply(h_sc, axis=0)
        out["scores_relerr"] = relative_error(scores_true, s_al)
        out["scores_cos"] = mean_cosine_distance(scores_true, s_al)
        out["loadings_relerr"] = relative_error(loadings_true, h_al)
        out["loadings_cos"] = mean_cosine_distance(loadings_true.T, h_al.T)
    return out


def _safe_mean_cos(truth, estimate):
    keep = (np.linalg.norm(truth, axis=0) > 0) & (np.linalg.norm(estimate, axis=0) > 0)
    if not keep.any():
        return None
    return mean_cosine_distance(np.asarray(truth)[:, keep], np.asarray(estimate)[:, keep])
