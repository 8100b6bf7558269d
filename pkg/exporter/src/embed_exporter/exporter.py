"""Batch-encode a corpus file into the embedding interchange format.

Reads the version-1 corpus JSON (documents / provisions / links), encodes
every requirement text and every provision text (title + ": " + description)
with the named sentence encoder, and writes the version-1 interchange JSON
that the consuming toolchain loads. Model names of the form ``hash:<dim>``
select a built-in deterministic token-hashing encoder for offline use.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CORPUS_FORMAT_VERSION = 1
EMBEDDING_FORMAT_VERSION = 1
DEFAULT_MODEL = "paraphrase-multilingual-mpnet-base-v2"

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportJob:
    corpus_path: Path
    model_name: str = DEFAULT_MODEL
    output_path: Path = Path("embeddings.json")
    batch_size: int = 32
    deterministic: bool = False
    check_pairs: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")
        if self.check_pairs < 0:
            raise ExportError("check_pairs must be >= 0")


def read_corpus_texts(path: Path) -> list[tuple[str, str]]:
    """(id, text) pairs for every requirement and provision in a corpus file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ExportError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(data, dict) or data.get("format_version") != CORPUS_FORMAT_VERSION:
        raise ExportError(f"{path}: expected corpus format_version {CORPUS_FORMAT_VERSION}")
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for doc in data.get("documents", []):
        for req in doc.get("requirements", []):
            rid, text = str(req["id"]), str(req["text"])
            if rid in seen:
                raise ExportError(f"duplicate id '{rid}' in corpus")
            seen.add(rid)
            pairs.append((rid, text))
    for prov in data.get("provisions", []):
        code = str(prov["code"])
        if code in seen:
            raise ExportError(f"duplicate id '{code}' in corpus")
        seen.add(code)
        pairs.append((code, f"{prov['title']}: {prov['description']}"))
    if not pairs:
        raise ExportError(f"{path}: corpus contains no texts to encode")
    return pairs


class HashingEncoder:
    """Offline fallback: signed token-count hashing, L2-normalized."""

    def __init__(self, dim: int):
        if dim < 8:
            raise ExportError("hash encoder needs dim >= 8")
        self.dim = dim

    def encode(self, texts: Sequence[str], batch_size: int) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=float)
        for row, text in enumerate(texts):
            counts = Counter(t.lower() for t in _TOKEN_RE.findall(text))
            for token, count in counts.items():
                digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16).digest()
                index = int.from_bytes(digest[:8], "big") % self.dim
                sign = 1.0 if digest[8] & 1 else -1.0
                out[row, index] += sign * count
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class SentenceTransformerEncoder:
    def __init__(self, model_name: str, deterministic: bool):
        try:
            import torch
            from sentence_transformers import SentenceTransformer
        except ImportError as e:
            raise ExportError(
                "sentence-transformers is not installed; install the 'st' extra "
                "or use a hash:<dim> model name"
            ) from e
        if deterministic:
            torch.manual_seed(0)
            torch.use_deterministic_algorithms(True, warn_only=True)
        try:
            self.model = SentenceTransformer(model_name, device="cpu")
        except Exception as e:
            raise ExportError(f"cannot load model '{model_name}': {e}") from e
        self.model.eval()

    def encode(self, texts: Sequence[str], batch_size: int) -> np.ndarray:
        return np.asarray(
            self.model.encode(
                list(texts),
                batch_size=batch_size,
                convert_to_numpy=True,
                show_progress_bar=False,
            ),
            dtype=float,
        )


def make_encoder(model_name: str, deterministic: bool):
    if model_name.startswith("hash:"):
        return HashingEncoder(int(model_name.split(":", 1)[1]))
    return SentenceTransformerEncoder(model_name, deterministic)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


def export(job: ExportJob) -> Path:
    """Encode the corpus and write the interchange file; returns its path.

    With ``check_pairs`` > 0, also writes ``<output>.pairs.json`` holding
    the exporter-computed cosine for that many consecutive id pairs, so a
    consumer can verify that its own cosine over the exported vectors
    agrees with the encoder side.
    """
    pairs = read_corpus_texts(job.corpus_path)
    encoder = make_encoder(job.model_name, job.deterministic)
    ids = [key for key, _ in pairs]
    matrix = encoder.encode([text for _, text in pairs], job.batch_size)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ExportError("encoder returned an unexpected shape")
    dim = int(matrix.shape[1])
    payload = {
        "format_version": EMBEDDING_FORMAT_VERSION,
        "dim": dim,
        "provider": f"exporter:{job.model_name}",
        "vectors": {key: [float(x) for x in matrix[i]] for i, key in enumerate(ids)},
    }
    out = Path(job.output_path)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise ExportError(f"cannot write {out}: {e}") from e
    if job.check_pairs:
        checks = []
        for i in range(min(job.check_pairs, len(ids) - 1)):
            checks.append(
                {
                    "a": ids[i],
                    "b": ids[i + 1],
                    "cosine": cosine(matrix[i], matrix[i + 1]),
                }
            )
        sidecar = out.with_suffix(out.suffix + ".pairs.json")
        sidecar.write_text(json.dumps(checks, sort_keys=True) + "\n", encoding="utf-8")
    return out
