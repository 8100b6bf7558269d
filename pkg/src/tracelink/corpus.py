"""Corpus loading, validation, and text preprocessing.

A corpus bundles requirements documents, a provision catalog, and the
ground-truth trace links between them. The on-disk format is a single UTF-8
JSON document (see ``schemas/corpus.schema.json``); ``format_version`` is 1.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .stemmer import stem as _stem
from .stopwords import ENGLISH_STOPWORDS

CORPUS_FORMAT_VERSION = 1

# Separator for sentence-unit ids derived from multi-sentence requirements.
UNIT_SEPARATOR = "::s"

DEFAULT_ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "etc.", "cf.", "vs.", "al.", "ca.", "approx.",
        "fig.", "no.", "sec.", "art.", "para.", "dr.", "mr.", "mrs.",
        "ms.", "prof.", "inc.", "ltd.", "co.", "st.",
    }
)

_TOKEN_RE = re.compile(r"[^\W_]+|\S", re.UNICODE)


class CorpusError(ValueError):
    """Base class for corpus parsing and validation failures."""


class CorpusParseError(CorpusError):
    """Malformed file: not JSON, or a field has the wrong shape/type."""


class CorpusValidationError(CorpusError):
    """Structurally valid file that violates a corpus invariant."""


@dataclass(frozen=True)
class Provision:
    code: str
    title: str
    description: str


@dataclass(frozen=True)
class Requirement:
    id: str
    text: str
    doc_id: str


@dataclass(frozen=True)
class Document:
    id: str
    name: str
    requirements: tuple[Requirement, ...]


@dataclass(frozen=True)
class TraceLinkSet:
    """Ground-truth links: requirement id -> set of provision codes."""

    links: Mapping[str, frozenset[str]]

    def codes_for(self, req_id: str) -> frozenset[str]:
        return self.links.get(req_id, frozenset())

    def has_link(self, req_id: str, code: str) -> bool:
        return code in self.links.get(req_id, frozenset())


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    catalog: tuple[Provision, ...]
    ground_truth: TraceLinkSet

    @property
    def requirements(self) -> tuple[Requirement, ...]:
        return tuple(r for d in self.documents for r in d.requirements)

    @property
    def requirement_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.requirements)

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(p.code for p in self.catalog)

    def document(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.id == doc_id:
                return d
        raise KeyError(doc_id)


@dataclass(frozen=True)
class PreprocessConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    remove_stopwords: bool = True
    stem: bool = False
    stopword_list: frozenset[str] = ENGLISH_STOPWORDS

    def __post_init__(self):
        if self.remove_stopwords and not self.stopword_list:
            raise ValueError("remove_stopwords set but stopword_list is empty")


@dataclass(frozen=True)
class TrainingPair:
    req_id: str
    prov_code: str
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def _expect(cond: bool, msg: str, exc=CorpusParseError) -> None:
    if not cond:
        raise exc(msg)


def corpus_from_dict(data: dict) -> Corpus:
    """Build and validate a Corpus from the decoded JSON structure."""
    _expect(isinstance(data, dict), "top level must be a JSON object")
    version = data.get("format_version")
    _expect(
        version == CORPUS_FORMAT_VERSION,
        f"format_version must be {CORPUS_FORMAT_VERSION}, got {version!r}",
    )
    for key in ("documents", "provisions", "links"):
        _expect(key in data, f"missing top-level key '{key}'")

    raw_docs = data["documents"]
    _expect(isinstance(raw_docs, list), "'documents' must be an array")
    documents: list[Document] = []
    seen_doc_ids: set[str] = set()
    seen_req_ids: set[str] = set()
    for di, rd in enumerate(raw_docs):
        where = f"documents[{di}]"
        _expect(isinstance(rd, dict), f"{where} must be an object")
        for k in ("id", "name", "requirements"):
            _expect(k in rd, f"{where} missing field '{k}'")
        doc_id = _nfc(str(rd["id"]))
        _expect(
            doc_id not in seen_doc_ids,
            f"{where}: duplicate document id '{doc_id}'",
            CorpusValidationError,
        )
        seen_doc_ids.add(doc_id)
        reqs: list[Requirement] = []
        _expect(isinstance(rd["requirements"], list), f"{where}.requirements must be an array")
        for ri, rr in enumerate(rd["requirements"]):
            rwhere = f"{where}.requirements[{ri}]"
            _expect(isinstance(rr, dict), f"{rwhere} must be an object")
            for k in ("id", "text"):
                _expect(k in rr, f"{rwhere} missing field '{k}'")
            rid = _nfc(str(rr["id"]))
            text = _nfc(str(rr["text"]))
            _expect(
                text.strip() != "",
                f"{rwhere}: requirement text is empty",
                CorpusValidationError,
            )
            _expect(
                UNIT_SEPARATOR not in rid,
                f"{rwhere}: requirement id '{rid}' must not contain '{UNIT_SEPARATOR}'",
                CorpusValidationError,
            )
            _expect(
                rid not in seen_req_ids,
                f"{rwhere}: duplicate requirement id '{rid}'",
                CorpusValidationError,
            )
            seen_req_ids.add(rid)
            reqs.append(Requirement(id=rid, text=text, doc_id=doc_id))
        documents.append(Document(id=doc_id, name=_nfc(str(rd["name"])), requirements=tuple(reqs)))

    raw_provs = data["provisions"]
    _expect(isinstance(raw_provs, list), "'provisions' must be an array")
    _expect(len(raw_provs) > 0, "provision catalog is empty", CorpusValidationError)
    catalog: list[Provision] = []
    seen_codes: set[str] = set()
    for pi, rp in enumerate(raw_provs):
        where = f"provisions[{pi}]"
        _expect(isinstance(rp, dict), f"{where} must be an object")
        for k in ("code", "title", "description"):
            _expect(k in rp, f"{where} missing field '{k}'")
        code = _nfc(str(rp["code"]))
        _expect(code.strip() != "", f"{where}: code is empty", CorpusValidationError)
        _expect(
            code not in seen_codes,
            f"{where}: duplicate provision code '{code}'",
            CorpusValidationError,
        )
        seen_codes.add(code)
        description = _nfc(str(rp["description"]))
        _expect(
            description.strip() != "",
            f"{where}: description of '{code}' is empty",
            CorpusValidationError,
        )
        catalog.append(Provision(code=code, title=_nfc(str(rp["title"])), description=description))

    raw_links = data["links"]
    _expect(isinstance(raw_links, dict), "'links' must be an object")
    links: dict[str, frozenset[str]] = {}
    for rid, codes in raw_links.items():
        rid = _nfc(str(rid))
        where = f"links['{rid}']"
        _expect(
            rid in seen_req_ids,
            f"{where}: unknown requirement id '{rid}'",
            CorpusValidationError,
        )
        _expect(isinstance(codes, list), f"{where} must be an array of codes")
        codeset: set[str] = set()
        for code in codes:
            code = _nfc(str(code))
            _expect(
                code in seen_codes,
                f"{where}: unknown provision code '{code}'",
                CorpusValidationError,
            )
            _expect(
                code not in codeset,
                f"{where}: duplicate code '{code}'",
                CorpusValidationError,
            )
            codeset.add(code)
        links[rid] = frozenset(codeset)

    return Corpus(
        documents=tuple(documents),
        catalog=tuple(catalog),
        ground_truth=TraceLinkSet(links=links),
    )


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "format_version": CORPUS_FORMAT_VERSION,
        "documents": [
            {
                "id": d.id,
                "name": d.name,
                "requirements": [{"id": r.id, "text": r.text} for r in d.requirements],
            }
            for d in corpus.documents
        ],
        "provisions": [
            {"code": p.code, "title": p.title, "description": p.description}
            for p in corpus.catalog
        ],
        "links": {
            rid: sorted(codes)
            for rid, codes in sorted(corpus.ground_truth.links.items())
        },
    }


def load_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CorpusParseError(f"cannot read corpus file {path}: {e}") from e
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CorpusParseError(
            f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    return corpus_from_dict(data)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(corpus_to_dict(corpus), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def provision_text(provision: Provision) -> str:
    """Canonical embedding/query text for a provision: title plus description."""
    return f"{provision.title}: {provision.description}"


def split_sentences(
    text: str, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS
) -> list[str]:
    """Split on terminal punctuation, keeping abbreviation periods intact.

    A boundary is a '.', '!' or '?' (plus any adjacent closing quotes or
    brackets) followed by whitespace or end of text, unless the word ending
    at the period is a known abbreviation. Sentences are slices of the
    input stripped of surrounding whitespace, so no non-whitespace
    character is ever dropped.
    """
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in ".!?":
            j = i + 1
            while j < n and text[j] in "\"')]}”’":
                j += 1
            if j >= n or text[j].isspace():
                if ch == ".":
                    k = i
                    while k > 0 and not text[k - 1].isspace():
                        k -= 1
                    word = text[k : i + 1].lower()
                    if word in abbreviations:
                        i += 1
                        continue
                piece = text[start:j].strip()
                if piece:
                    sentences.append(piece)
                start = j
                i = j
                continue
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def tokenize(text: str) -> list[str]:
    """Split into maximal letter/digit runs plus standalone punctuation marks."""
    return _TOKEN_RE.findall(text)


def _is_punctuation(token: str) -> bool:
    return not any(ch.isalnum() for ch in token)


def normalize(tokens: Sequence[str], config: PreprocessConfig) -> list[str]:
    out: list[str] = []
    for tok in tokens:
        if config.strip_punctuation and _is_punctuation(tok):
            continue
        if config.remove_stopwords and tok.lower() in config.stopword_list:
            continue
        if config.lowercase:
            tok = tok.lower()
        if config.stem:
            tok = _stem(tok)
        out.append(tok)
    return out


def preprocess(text: str, config: PreprocessConfig) -> list[str]:
    return normalize(tokenize(text), config)


def build_training_pairs(
    corpus: Corpus, heldout_doc_ids: Iterable[str]
) -> list[TrainingPair]:
    """Cartesian pairs over train-document requirements and the catalog.

    Label is 1 exactly when the pair appears in the ground truth.
    """
    heldout = set(heldout_doc_ids)
    known = {d.id for d in corpus.documents}
    unknown = sorted(heldout - known)
    if unknown:
        raise CorpusValidationError(f"unknown heldout document ids: {unknown}")
    pairs: list[TrainingPair] = []
    for doc in corpus.documents:
        if doc.id in heldout:
            continue
        for req in doc.requirements:
            linked = corpus.ground_truth.codes_for(req.id)
            for prov in corpus.catalog:
                pairs.append(
                    TrainingPair(
                        req_id=req.id,
                        prov_code=prov.code,
                        label=1 if prov.code in linked else 0,
                    )
                )
    return pairs


def requirement_units(
    corpus: Corpus,
    doc_ids: Iterable[str] | None = None,
    split: bool = True,
) -> list[tuple[str, str, str]]:
    """(unit id, requirement id, text) triples for the selected documents.

    Multi-sentence requirements are split into one unit per sentence with
    derived ids ``<req id>::s<n>``; single-sentence requirements keep their
    own id. Predictions made at unit level are unioned back to the parent
    requirement (a provision traces to a requirement when it traces to any
    of its sentences).
    """
    wanted = set(doc_ids) if doc_ids is not None else None
    units: list[tuple[str, str, str]] = []
    for doc in corpus.documents:
        if wanted is not None and doc.id not in wanted:
            continue
        for req in doc.requirements:
            if not split:
                units.append((req.id, req.id, req.text))
                continue
            sentences = split_sentences(req.text)
            if len(sentences) <= 1:
                units.append((req.id, req.id, req.text))
            else:
                for si, sent in enumerate(sentences):
                    units.append((f"{req.id}{UNIT_SEPARATOR}{si}", req.id, sent))
    return units


def unit_parent(unit_id: str) -> str:
    """Requirement id that a (possibly sentence-level) unit id belongs to."""
    sep = unit_id.rfind(UNIT_SEPARATOR)
    return unit_id if sep < 0 else unit_id[:sep]
