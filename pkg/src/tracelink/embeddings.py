"""Embedding providers and the requirement-by-provision similarity matrix.

Three interchangeable vector sources back the similarity pipeline: a JSON
interchange file, an HTTP embedding endpoint, and a deterministic
feature-hashing provider for offline runs and tests.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .corpus import tokenize

EMBEDDING_FORMAT_VERSION = 1
MATRIX_FORMAT_VERSION = 1

API_KEY_ENV = "LLM_API_KEY"


class EmbeddingError(ValueError):
    """Base class for embedding failures."""


class DimensionMismatchError(EmbeddingError):
    pass


class ZeroNormError(EmbeddingError):
    """A vector with zero L2 norm reached a cosine computation."""


class ProviderError(EmbeddingError):
    """HTTP provider failure: transport, retries exhausted, or bad response."""


@dataclass
class EmbeddingSet:
    """Id-keyed dense vectors sharing one dimensionality."""

    dim: int
    provider_tag: str
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        if self.dim <= 0:
            raise EmbeddingError(f"dim must be positive, got {self.dim}")
        for key, vec in self.vectors.items():
            arr = np.asarray(vec, dtype=float)
            if arr.ndim != 1 or arr.shape[0] != self.dim:
                raise DimensionMismatchError(
                    f"vector '{key}' has length {arr.shape}, expected ({self.dim},)"
                )
            if not np.all(np.isfinite(arr)):
                raise EmbeddingError(f"vector '{key}' contains non-finite entries")
            self.vectors[key] = arr

    def restrict(self, ids: Sequence[str]) -> "EmbeddingSet":
        missing = [i for i in ids if i not in self.vectors]
        if missing:
            raise EmbeddingError(f"embedding set is missing ids: {missing}")
        return EmbeddingSet(
            dim=self.dim,
            provider_tag=self.provider_tag,
            vectors={i: self.vectors[i] for i in ids},
        )


@dataclass(frozen=True)
class HttpProviderConfig:
    endpoint_url: str
    model_name: str
    batch_size: int = 32
    timeout_seconds: float = 30.0
    max_retries: int = 3

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass
class SimilarityMatrix:
    """n x m grid of cosine scores, rows keyed by requirement (unit) ids."""

    req_ids: tuple[str, ...]
    prov_codes: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        self.req_ids = tuple(self.req_ids)
        self.prov_codes = tuple(self.prov_codes)
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.shape != (len(self.req_ids), len(self.prov_codes)):
            raise EmbeddingError(
                f"scores shape {self.scores.shape} does not match "
                f"{len(self.req_ids)} ids x {len(self.prov_codes)} codes"
            )
        if not np.all(np.isfinite(self.scores)):
            raise EmbeddingError("similarity scores contain non-finite entries")

    def row(self, req_id: str) -> np.ndarray:
        return self.scores[self.req_ids.index(req_id)]

    def to_dict(self) -> dict:
        return {
            "format_version": MATRIX_FORMAT_VERSION,
            "req_ids": list(self.req_ids),
            "prov_codes": list(self.prov_codes),
            "scores": [[float(x) for x in row] for row in self.scores],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimilarityMatrix":
        if data.get("format_version") != MATRIX_FORMAT_VERSION:
            raise EmbeddingError(
                f"matrix format_version must be {MATRIX_FORMAT_VERSION}"
            )
        return cls(
            req_ids=tuple(data["req_ids"]),
            prov_codes=tuple(data["prov_codes"]),
            scores=np.asarray(data["scores"], dtype=float),
        )


def save_matrix(matrix: SimilarityMatrix, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(matrix.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
    )


def load_matrix(path: str | Path) -> SimilarityMatrix:
    return SimilarityMatrix.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cosine(u, v) -> float:
    """Cosine similarity of two equal-length, nonzero vectors, in [-1, 1]."""
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine undefined for zero-norm vector")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def _hash_bucket(token: str, seed: int, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(
        f"{seed}|{token}".encode("utf-8"), digest_size=16
    ).digest()
    index = int.from_bytes(digest[:8], "big") % dim
    sign = 1.0 if digest[8] & 1 else -1.0
    return index, sign


def hash_embed(text: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic signed feature hashing of lowercased token counts.

    Identical token multisets give bitwise-identical vectors on every
    platform (the bucket/sign hash is keyed blake2b, not Python's salted
    hash). The result is L2-normalized; an empty token multiset yields the
    zero vector, which later cosine calls reject by design.
    """
    if dim < 8:
        raise EmbeddingError(f"hash provider requires dim >= 8, got {dim}")
    counts = Counter(tok.lower() for tok in tokenize(text))
    vec = np.zeros(dim, dtype=float)
    for token, count in counts.items():
        index, sign = _hash_bucket(token, seed, dim)
        vec[index] += sign * count
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def hash_embed_set(
    texts: Sequence[tuple[str, str]], dim: int, seed: int
) -> EmbeddingSet:
    return EmbeddingSet(
        dim=dim,
        provider_tag=f"hash:dim={dim}:seed={seed}",
        vectors={key: hash_embed(text, dim, seed) for key, text in texts},
    )


def save_embedding_set(embedding_set: EmbeddingSet, path: str | Path) -> None:
    data = {
        "format_version": EMBEDDING_FORMAT_VERSION,
        "dim": embedding_set.dim,
        "provider": embedding_set.provider_tag,
        "vectors": {
            key: [float(x) for x in vec]
            for key, vec in embedding_set.vectors.items()
        },
    }
    Path(path).write_text(json.dumps(data, sort_keys=True) + "\n", encoding="utf-8")


def load_embedding_set(path: str | Path) -> EmbeddingSet:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise EmbeddingError(
            f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    if not isinstance(data, dict) or data.get("format_version") != EMBEDDING_FORMAT_VERSION:
        raise EmbeddingError(
            f"{path}: expected format_version {EMBEDDING_FORMAT_VERSION}"
        )
    dim = data.get("dim")
    if not isinstance(dim, int) or dim <= 0:
        raise EmbeddingError(f"{path}: 'dim' must be a positive integer")
    vectors = data.get("vectors")
    if not isinstance(vectors, dict):
        raise EmbeddingError(f"{path}: 'vectors' must be an object")
    out: dict[str, np.ndarray] = {}
    for key, values in vectors.items():
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.shape[0] != dim:
            raise EmbeddingError(
                f"{path}: vector '{key}' has length {arr.size}, expected {dim}"
            )
        out[key] = arr
    return EmbeddingSet(dim=dim, provider_tag=str(data.get("provider", "file")), vectors=out)


def _auth_headers() -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(API_KEY_ENV)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    return headers


def _post_with_retries(
    url: str,
    payload: dict,
    timeout: float,
    max_retries: int,
    backoff_base: float,
    session: requests.Session | None = None,
):
    poster = session.post if session is not None else requests.post
    attempt = 0
    while True:
        try:
            response = poster(
                url, json=payload, headers=_auth_headers(), timeout=timeout
            )
        except (requests.ConnectionError, requests.Timeout) as e:
            if attempt >= max_retries:
                raise ProviderError(
                    f"request to {url} failed after {attempt + 1} attempts: {e}"
                ) from e
            time.sleep(backoff_base * (2 ** attempt))
            attempt += 1
            continue
        if response.status_code == 429 or response.status_code >= 500:
            if attempt >= max_retries:
                raise ProviderError(
                    f"{url} returned {response.status_code} after "
                    f"{attempt + 1} attempts"
                )
            time.sleep(backoff_base * (2 ** attempt))
            attempt += 1
            continue
        if response.status_code != 200:
            raise ProviderError(f"{url} returned {response.status_code}: {response.text[:200]}")
        return response


def fetch_embeddings(
    config: HttpProviderConfig,
    texts: Sequence[tuple[str, str]],
    backoff_base: float = 0.5,
    session: requests.Session | None = None,
) -> EmbeddingSet:
    """Fetch one vector per (id, text) pair from an embedding endpoint.

    Requests are batched per ``config.batch_size`` and sent as
    ``{"model": ..., "input": [...]}``; the endpoint must answer
    ``{"data": [{"index": i, "embedding": [...]}, ...]}``. Transient
    failures (connection errors, timeouts, 429, 5xx) are retried up to
    ``config.max_retries`` times with exponential backoff.
    """
    ids = [key for key, _ in texts]
    if len(set(ids)) != len(ids):
        raise EmbeddingError("duplicate ids in embedding request")
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    for start in range(0, len(texts), config.batch_size):
        batch = texts[start : start + config.batch_size]
        payload = {"model": config.model_name, "input": [text for _, text in batch]}
        response = _post_with_retries(
            config.endpoint_url,
            payload,
            config.timeout_seconds,
            config.max_retries,
            backoff_base,
            session,
        )
        try:
            body = response.json()
            rows = body["data"]
            by_index = {int(row["index"]): row["embedding"] for row in rows}
        except (ValueError, KeyError, TypeError) as e:
            raise ProviderError(f"malformed embedding response: {e}") from e
        if sorted(by_index) != list(range(len(batch))):
            raise ProviderError(
                f"embedding response indices {sorted(by_index)} do not cover batch of {len(batch)}"
            )
        for offset, (key, _) in enumerate(batch):
            arr = np.asarray(by_index[offset], dtype=float)
            if arr.ndim != 1:
                raise ProviderError(f"embedding for '{key}' is not a flat vector")
            if dim is None:
                dim = int(arr.shape[0])
            elif arr.shape[0] != dim:
                raise DimensionMismatchError(
                    f"embedding for '{key}' has dim {arr.shape[0]}, expected {dim}"
                )
            vectors[key] = arr
    if dim is None:
        raise EmbeddingError("no texts to embed")
    return EmbeddingSet(
        dim=dim, provider_tag=f"http:{config.model_name}", vectors=vectors
    )


def build_similarity_matrix(
    reqs: EmbeddingSet, provs: EmbeddingSet
) -> SimilarityMatrix:
    """Cosine of every requirement vector against every provision vector.

    Row and column order follow the insertion order of the two sets.
    """
    if reqs.dim != provs.dim:
        raise DimensionMismatchError(
            f"requirement dim {reqs.dim} != provision dim {provs.dim}"
        )
    req_ids = tuple(reqs.vectors)
    prov_codes = tuple(provs.vectors)
    if not req_ids or not prov_codes:
        raise EmbeddingError("both embedding sets must be non-empty")
    r = np.stack([reqs.vectors[i] for i in req_ids])
    p = np.stack([provs.vectors[c] for c in prov_codes])
    r_norm = np.linalg.norm(r, axis=1)
    p_norm = np.linalg.norm(p, axis=1)
    for idx, norm in enumerate(r_norm):
        if norm == 0.0:
            raise ZeroNormError(
                f"zero-norm embedding for requirement '{req_ids[idx]}' "
                f"(first scored against provision '{prov_codes[0]}')"
            )
    for idx, norm in enumerate(p_norm):
        if norm == 0.0:
            raise ZeroNormError(
                f"zero-norm embedding for provision '{prov_codes[idx]}' "
                f"(first scored against requirement '{req_ids[0]}')"
            )
    scores = (r / r_norm[:, None]) @ (p / p_norm[:, None]).T
    np.clip(scores, -1.0, 1.0, out=scores)
    return SimilarityMatrix(req_ids=req_ids, prov_codes=prov_codes, scores=scores)
