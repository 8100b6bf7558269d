"""Latent Dirichlet allocation fit by collapsed Gibbs sampling.

Seeded, single-threaded, and deterministic: the same corpus, priors, and
seed always give the same model. Topic-word and document-topic estimates
are posterior means averaged over the final sweeps of the chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..embeddings import SimilarityMatrix

DEFAULT_ITERATIONS = 500
DEFAULT_AVERAGE_LAST = 100
FOLD_ITERATIONS = 100
FOLD_AVERAGE_LAST = 20


class LdaError(ValueError):
    pass


@dataclass
class LdaModel:
    T: int
    alpha: float
    beta: float
    topic_word: np.ndarray
    vocabulary: tuple[str, ...]
    iterations: int
    seed: int
    doc_topic: np.ndarray

    def __post_init__(self):
        self.topic_word = np.asarray(self.topic_word, dtype=float)
        if self.alpha <= 0 or self.beta <= 0:
            raise LdaError("alpha and beta priors must be positive")
        if self.topic_word.shape != (self.T, len(self.vocabulary)):
            raise LdaError("topic_word must be T x |V|")
        rows = self.topic_word.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            raise LdaError("topic_word rows must each sum to 1")


def _gibbs_pass(
    doc_tokens: list[list[int]],
    z: list[list[int]],
    n_dk: np.ndarray,
    n_kw: np.ndarray,
    n_k: np.ndarray,
    alpha: float,
    beta: float,
    n_vocab: int,
    rng: np.random.Generator,
) -> None:
    n_topics = n_kw.shape[0]
    vbeta = n_vocab * beta
    for d, tokens in enumerate(doc_tokens):
        zd = z[d]
        for pos, w in enumerate(tokens):
            k_old = zd[pos]
            n_dk[d, k_old] -= 1
            n_kw[k_old, w] -= 1
            n_k[k_old] -= 1
            weights = (n_dk[d] + alpha) * (n_kw[:, w] + beta) / (n_k + vbeta)
            cumulative = np.cumsum(weights)
            k_new = int(
                np.searchsorted(cumulative, rng.random() * cumulative[-1])
            )
            if k_new >= n_topics:
                k_new = n_topics - 1
            zd[pos] = k_new
            n_dk[d, k_new] += 1
            n_kw[k_new, w] += 1
            n_k[k_new] += 1


def fit_lda(
    docs: Sequence[Sequence[str]],
    T: int,
    alpha: float = 0.02,
    beta: float = 0.02,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 16,
    average_last: int = DEFAULT_AVERAGE_LAST,
) -> LdaModel:
    """Run ``iterations`` collapsed Gibbs sweeps from a seeded initialization.

    Posterior means are averaged over the final ``average_last`` sweeps
    (clamped to the sweep count).
    """
    if T < 1:
        raise LdaError("T must be >= 1")
    if alpha <= 0 or beta <= 0:
        raise LdaError("alpha and beta priors must be positive")
    if iterations < 1:
        raise LdaError("iterations must be >= 1")
    docs = [list(d) for d in docs]
    if not docs or all(len(d) == 0 for d in docs):
        raise LdaError("cannot fit LDA on an empty corpus")
    vocabulary = tuple(sorted({t for d in docs for t in d}))
    index = {t: i for i, t in enumerate(vocabulary)}
    doc_tokens = [[index[t] for t in d] for d in docs]
    n_docs = len(docs)
    n_vocab = len(vocabulary)

    rng = np.random.default_rng(seed)
    n_dk = np.zeros((n_docs, T), dtype=float)
    n_kw = np.zeros((T, n_vocab), dtype=float)
    n_k = np.zeros(T, dtype=float)
    z: list[list[int]] = []
    for d, tokens in enumerate(doc_tokens):
        zd = [int(k) for k in rng.integers(0, T, size=len(tokens))]
        z.append(zd)
        for pos, w in enumerate(tokens):
            k = zd[pos]
            n_dk[d, k] += 1
            n_kw[k, w] += 1
            n_k[k] += 1

    average_last = max(1, min(average_last, iterations))
    phi_sum = np.zeros((T, n_vocab), dtype=float)
    theta_sum = np.zeros((n_docs, T), dtype=float)
    samples = 0
    doc_lengths = np.array([len(t) for t in doc_tokens], dtype=float)
    for sweep in range(iterations):
        _gibbs_pass(doc_tokens, z, n_dk, n_kw, n_k, alpha, beta, n_vocab, rng)
        if sweep >= iterations - average_last:
            phi_sum += (n_kw + beta) / (n_k + n_vocab * beta)[:, None]
            theta_sum += (n_dk + alpha) / (doc_lengths + T * alpha)[:, None]
            samples += 1
    return LdaModel(
        T=T,
        alpha=alpha,
        beta=beta,
        topic_word=phi_sum / samples,
        vocabulary=vocabulary,
        iterations=iterations,
        seed=seed,
        doc_topic=theta_sum / samples,
    )


def fold_in(
    model: LdaModel,
    docs: Sequence[Sequence[str]],
    seed: int | None = None,
    iterations: int = FOLD_ITERATIONS,
    average_last: int = FOLD_AVERAGE_LAST,
) -> np.ndarray:
    """Infer topic distributions for unseen documents with topic_word frozen.

    Tokens outside the model vocabulary are dropped; a document left empty
    after that is an error.
    """
    index = {t: i for i, t in enumerate(model.vocabulary)}
    rng = np.random.default_rng(model.seed if seed is None else seed)
    out = np.zeros((len(docs), model.T), dtype=float)
    average_last = max(1, min(average_last, iterations))
    for d, doc in enumerate(docs):
        tokens = [index[t] for t in doc if t in index]
        if not tokens:
            raise LdaError(
                f"document {d} is empty after preprocessing/vocabulary filtering"
            )
        n_k = np.zeros(model.T, dtype=float)
        zd = [int(k) for k in rng.integers(0, model.T, size=len(tokens))]
        for k in zd:
            n_k[k] += 1
        theta_sum = np.zeros(model.T, dtype=float)
        samples = 0
        for sweep in range(iterations):
            for pos, w in enumerate(tokens):
                n_k[zd[pos]] -= 1
                weights = (n_k + model.alpha) * model.topic_word[:, w]
                cumulative = np.cumsum(weights)
                k_new = int(
                    np.searchsorted(cumulative, rng.random() * cumulative[-1])
                )
                if k_new >= model.T:
                    k_new = model.T - 1
                zd[pos] = k_new
                n_k[k_new] += 1
            if sweep >= iterations - average_last:
                theta_sum += (n_k + model.alpha) / (len(tokens) + model.T * model.alpha)
                samples += 1
        out[d] = theta_sum / samples
    return out


def lda_similarity_matrix(
    model: LdaModel,
    req_docs: Mapping[str, Sequence[str]],
    prov_docs: Mapping[str, Sequence[str]],
    seed: int | None = None,
) -> SimilarityMatrix:
    """Cosine similarity of folded-in topic distributions."""
    req_ids = tuple(req_docs)
    prov_codes = tuple(prov_docs)
    r = fold_in(model, [req_docs[i] for i in req_ids], seed=seed)
    p = fold_in(model, [prov_docs[c] for c in prov_codes], seed=seed)
    r_norm = np.linalg.norm(r, axis=1)
    p_norm = np.linalg.norm(p, axis=1)
    scores = np.clip((r / r_norm[:, None]) @ (p / p_norm[:, None]).T, -1.0, 1.0)
    return SimilarityMatrix(req_ids=req_ids, prov_codes=prov_codes, scores=scores)
