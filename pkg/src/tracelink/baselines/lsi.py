"""Latent semantic indexing via truncated SVD of the document-term matrix.

The SVD is computed with one-sided Jacobi rotations applied along the
smaller Gram dimension (the matrix is transposed first when it has more
columns than rows), iterated until every column pair is orthogonal to a
1e-10 relative tolerance. Documents and queries are projected onto the
top-k right singular vectors (term space); similarity is cosine in that
latent space, which for k = full rank reproduces plain vector-space cosine
ranking exactly for any query inside the fitted span.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..embeddings import SimilarityMatrix, ZeroNormError

JACOBI_MAX_SWEEPS = 1000
JACOBI_TOL = 1e-10


class LsiError(ValueError):
    pass


class LsiConvergenceError(LsiError):
    pass


@dataclass
class LsiModel:
    k: int
    term_projection: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        self.term_projection = np.asarray(self.term_projection, dtype=float)
        self.singular_values = np.asarray(self.singular_values, dtype=float)
        if self.term_projection.shape[1] != self.k:
            raise LsiError("term_projection must have k columns")
        if self.singular_values.shape != (self.k,):
            raise LsiError("need exactly k singular values")
        if np.any(self.singular_values < 0) or np.any(
            np.diff(self.singular_values) > 1e-12
        ):
            raise LsiError("singular values must be non-negative and non-increasing")


def _jacobi_columns(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonalize columns of ``a`` by plane rotations.

    Returns (w, v) with a == w @ v.T, the columns of w mutually orthogonal
    and v orthonormal.
    """
    w = a.copy()
    n_cols = w.shape[1]
    v = np.eye(n_cols)
    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(n_cols - 1):
            for q in range(p + 1, n_cols):
                wp = w[:, p]
                wq = w[:, q]
                app = float(wp @ wp)
                aqq = float(wq @ wq)
                apq = float(wp @ wq)
                if abs(apq) <= JACOBI_TOL * np.sqrt(app * aqq) or apq == 0.0:
                    continue
                rotated = True
                tau = (aqq - app) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                if tau == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * wp - s * wq
                new_q = s * wp + c * wq
                w[:, p] = new_p
                w[:, q] = new_q
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            return w, v
    raise LsiConvergenceError(
        f"Jacobi SVD did not converge within {JACOBI_MAX_SWEEPS} sweeps"
    )


def svd_jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full SVD a == u @ diag(s) @ vt via one-sided Jacobi rotations."""
    a = np.asarray(a, dtype=float)
    transposed = a.shape[1] > a.shape[0]
    work = a.T if transposed else a
    w, v = _jacobi_columns(work)
    norms = np.linalg.norm(w, axis=0)
    order = np.argsort(-norms, kind="stable")
    s = norms[order]
    v = v[:, order]
    w = w[:, order]
    u = np.zeros_like(w)
    scale = float(s[0]) if s.size and s[0] > 0 else 1.0
    for j in range(w.shape[1]):
        if s[j] > 1e-15 * scale:
            u[:, j] = w[:, j] / s[j]
    if transposed:
        return v, s, u.T
    return u, s, v.T


def fit_lsi(tfidf_matrix: np.ndarray, k: int) -> LsiModel:
    """Rank-k truncation of the docs-by-terms matrix SVD."""
    a = np.asarray(tfidf_matrix, dtype=float)
    if a.ndim != 2:
        raise LsiError("expected a 2-d docs-by-terms matrix")
    max_k = min(a.shape)
    if k < 1 or k > max_k:
        raise LsiError(f"k must be in [1, {max_k}], got {k}")
    _, s, vt = svd_jacobi(a)
    return LsiModel(k=k, term_projection=vt[:k].T.copy(), singular_values=s[:k].copy())


def project(model: LsiModel, vec: np.ndarray) -> np.ndarray:
    """Fold a term-space vector into the k-dimensional latent space."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (model.term_projection.shape[0],):
        raise LsiError(
            f"vector length {vec.shape} does not match vocabulary "
            f"{model.term_projection.shape[0]}"
        )
    return model.term_projection.T @ vec


def lsi_similarity_matrix(
    model: LsiModel,
    req_vectors: Mapping[str, np.ndarray],
    prov_vectors: Mapping[str, np.ndarray],
) -> SimilarityMatrix:
    """Cosine similarity between latent projections of requirement and provision vectors."""
    req_ids = tuple(req_vectors)
    prov_codes = tuple(prov_vectors)
    r = np.stack([project(model, req_vectors[i]) for i in req_ids])
    p = np.stack([project(model, prov_vectors[c]) for c in prov_codes])
    r_norm = np.linalg.norm(r, axis=1)
    p_norm = np.linalg.norm(p, axis=1)
    for idx, rid in enumerate(req_ids):
        if r_norm[idx] == 0.0:
            raise ZeroNormError(f"requirement '{rid}' projects to the zero latent vector")
    for idx, code in enumerate(prov_codes):
        if p_norm[idx] == 0.0:
            raise ZeroNormError(f"provision '{code}' projects to the zero latent vector")
    scores = np.clip((r / r_norm[:, None]) @ (p / p_norm[:, None]).T, -1.0, 1.0)
    return SimilarityMatrix(req_ids=req_ids, prov_codes=prov_codes, scores=scores)
