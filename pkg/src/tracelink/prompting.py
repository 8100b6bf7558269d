"""Prompt templates, chat-completion client, and response parsing.

Five prompt variants are supported: the recall-first few-shot template
(RICE) that asks for a code list per requirement, a retrieval-plus-pair
prompt (P1) answered inside <trace> tags, a catalog-listing prompt (P2),
and two yes/no pair prompts (P3_1 with step-by-step reasoning, P3_2 bare).
Builders are pure string functions: identical inputs give byte-identical
prompts, and substituted text passes through verbatim (braces included).
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import requests

from .corpus import Corpus, Provision, Requirement, provision_text
from .embeddings import EmbeddingSet, cosine
from .linker import PredictionSet

ELSE_CODE = "ELSE"
ELSE_DESCRIPTION = (
    "No trace link. Use this code when the requirement does not trace to "
    "any regulatory code."
)

API_KEY_ENV = "LLM_API_KEY"


class PromptVariant(str, Enum):
    RICE = "rice"
    P1 = "p1"
    P2 = "p2"
    P3_1 = "p3_1"
    P3_2 = "p3_2"


class PromptError(ValueError):
    pass


class ParseError(PromptError):
    """Response text with no recognizable answer; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class LlmClientError(PromptError):
    pass


@dataclass(frozen=True)
class FewShotExample:
    requirement_text: str
    codes: frozenset[str]
    rationale: str

    def __post_init__(self):
        if not self.codes:
            raise PromptError("few-shot example needs at least one code")
        if not self.rationale.strip():
            raise PromptError("few-shot example needs a rationale")


@dataclass(frozen=True)
class LlmConfig:
    endpoint_url: str
    model_name: str
    temperature: float = 0.0
    seed: int = 16
    max_tokens: int = 2000
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    top_p: float = 1.0
    max_retries: int = 3
    timeout_seconds: float = 120.0

    def __post_init__(self):
        if self.temperature < 0:
            raise PromptError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise PromptError("max_tokens must be positive")


@dataclass
class ParsedPrediction:
    codes: frozenset[str]
    rationale: str
    raw: str


def render_catalog_lines(catalog: Sequence[Provision], include_else: bool) -> str:
    lines = [f"- {p.code}: {p.title}. {p.description}" for p in catalog]
    if include_else:
        lines.append(f"- {ELSE_CODE}: {ELSE_DESCRIPTION}")
    return "\n".join(lines)


RICE_CONTEXT = (
    "I am currently working on a task focused on establishing traceability "
    "between software requirements and regulatory codes. This involves "
    "analyzing and mapping requirements to relevant GDPR regulations, "
    "ensuring that our software development aligns with regulatory "
    "compliance. Below are the main regulatory codes that I want you to "
    "remember at first:"
)

RICE_EXAMPLES_INTRO = (
    "Here are five sample traceability examples. I've also added my "
    "rationale for tracing regulatory codes to the requirements for your "
    "reference."
)

RICE_INSTRUCTION = (
    "Find the trace links for a given requirement and provide the rationale "
    "behind your choice extended from the examples I provided. Please "
    "consider regulatory codes which I have not used in the examples. Pay "
    "attention to the roles (AS_ROLE) in the requirement, if there are any. "
    "Remember, regulations' text focus on personal data, but try to consider "
    "all types of data, role, or functionalities in a software system. Pay "
    "attention to commonsense and indirect relations between requirement "
    "and regulations. Aim to include regulations even if they have a low "
    "likelihood of being traced, prioritizing recall over precision. Choose "
    "at least one regulation for each requirement."
)

RICE_OUTPUT_INDICATOR = (
    "List of alphabetical order of regulatory codes (if any) similar to the "
    "examples I provided to you. Newline to explain the rational behind the "
    "choice(s)."
)

P1_QUESTION = (
    "Below are artifacts from a software system requirement and the GDPR. "
    "Is there a traceability link between (1) and (2)? Give your reasoning "
    "and then answer with 'yes' or 'no' enclosed in <trace> </trace>."
)

P2_HEADER = (
    "Act as a requirements engineering domain expert and list the IDs of "
    "the GDPR regulations that are dependent on the following requirement:"
)

P3_SCENARIO = (
    "Consider the following scenario where the Requirement text represent "
    "requirements of the software system and Regulation represent a GDPR "
    "regulation."
)

P3_1_STEPS = (
    "Let's think step by step: 1. Identify the key elements of the "
    "requirement; 2. Match these elements with the regulation; 3. Highlight "
    "any gaps; 4. Infer implicit traceability; Finally, answer with Yes or "
    "No if there is a traceability relationship, and provide a brief "
    "rationale in about 10 words."
)

P3_2_QUESTION = "Answer with Yes or No: Does the regulation trace back to the requirement?"


def _render_example(example: FewShotExample) -> str:
    codes = ", ".join(sorted(example.codes))
    return (
        f"Requirement: {example.requirement_text}. "
        f"trace links: [{codes}], "
        f"rational behind choosing these codes: {example.rationale}."
    )


def build_rice_prompt(
    catalog: Sequence[Provision],
    examples: Sequence[FewShotExample],
    requirement: Requirement,
) -> str:
    """Render the recall-first few-shot prompt, requirement last.

    Order is Context, Examples, Instruction, Output Indicator. The catalog
    is rendered with an appended ELSE sentinel entry meaning "no trace
    link". Exactly five examples are required and their codes must come
    from the catalog.
    """
    if len(examples) != 5:
        raise PromptError(f"exactly 5 few-shot examples required, got {len(examples)}")
    known = {p.code for p in catalog}
    if ELSE_CODE in known:
        raise PromptError(f"catalog must not define the reserved code {ELSE_CODE}")
    for example in examples:
        bad = sorted(example.codes - known)
        if bad:
            raise PromptError(f"example codes not in catalog: {bad}")
    if not requirement.text.strip():
        raise PromptError("requirement text is empty")
    example_block = "\n".join(_render_example(e) for e in examples)
    return (
        f"{RICE_CONTEXT}\n"
        f"{render_catalog_lines(catalog, include_else=True)}\n"
        f"\n"
        f"{RICE_EXAMPLES_INTRO}\n"
        f"{example_block}\n"
        f"\n"
        f"{RICE_INSTRUCTION}\n"
        f"\n"
        f"{RICE_OUTPUT_INDICATOR}\n"
        f"\n"
        f"Requirement: {requirement.text}\n"
    )


def build_p1_prompt(requirement: Requirement, provision: Provision) -> str:
    if not requirement.text.strip():
        raise PromptError("requirement text is empty")
    return (
        f"{P1_QUESTION}\n"
        f"(1) Requirement: '''{requirement.text}'''\n"
        f"(2) Regulation: '''{provision_text(provision)}'''\n"
    )


def build_p2_prompt(requirement: Requirement, catalog: Sequence[Provision]) -> str:
    if not requirement.text.strip():
        raise PromptError("requirement text is empty")
    if not catalog:
        raise PromptError("catalog is empty")
    return (
        f"{P2_HEADER}\n"
        f"Requirement: '''{requirement.text}'''\n"
        f"List of Regulations: '''{render_catalog_lines(catalog, include_else=False)}'''\n"
    )


def build_p3_prompt(
    variant: PromptVariant, requirement: Requirement, provision: Provision
) -> str:
    if variant not in (PromptVariant.P3_1, PromptVariant.P3_2):
        raise PromptError(f"not a P3 variant: {variant}")
    if not requirement.text.strip():
        raise PromptError("requirement text is empty")
    tail = P3_1_STEPS if variant is PromptVariant.P3_1 else P3_2_QUESTION
    return (
        f"{P3_SCENARIO} {tail}\n"
        f"Requirement: '''{requirement.text}'''\n"
        f"Regulation: '''{provision_text(provision)}'''\n"
    )


def retrieve_topk(
    req_vector: np.ndarray, prov_set: EmbeddingSet, k: int
) -> list[str]:
    """Provision codes by descending cosine to the query, ties lexicographic."""
    codes = list(prov_set.vectors)
    if k < 1 or k > len(codes):
        raise PromptError(f"k must be in [1, {len(codes)}], got {k}")
    scored = sorted(
        codes, key=lambda c: (-cosine(req_vector, prov_set.vectors[c]), c)
    )
    return scored[:k]


def query_llm(
    config: LlmConfig,
    prompt: str,
    backoff_base: float = 0.5,
    session: requests.Session | None = None,
) -> str:
    """Send one chat-completion request and return the raw assistant text.

    The request carries every sampling setting from the config; transient
    failures (429, 5xx, connection errors, timeouts) are retried up to
    ``config.max_retries`` times with exponential backoff.
    """
    token = os.environ.get(API_KEY_ENV)
    if not token:
        raise LlmClientError(f"{API_KEY_ENV} is not set")
    payload = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "seed": config.seed,
        "max_tokens": config.max_tokens,
        "frequency_penalty": config.frequency_penalty,
        "presence_penalty": config.presence_penalty,
        "top_p": config.top_p,
    }
    headers = {
        "Content-Type": "application/json",
        "Authorization": f"Bearer {token}",
    }
    poster = session.post if session is not None else requests.post
    attempt = 0
    while True:
        try:
            response = poster(
                config.endpoint_url,
                json=payload,
                headers=headers,
                timeout=config.timeout_seconds,
            )
        except (requests.ConnectionError, requests.Timeout) as e:
            if attempt >= config.max_retries:
                raise LlmClientError(
                    f"request failed after {attempt + 1} attempts: {e}"
                ) from e
            time.sleep(backoff_base * (2 ** attempt))
            attempt += 1
            continue
        if response.status_code in (401, 403):
            raise LlmClientError(f"authentication failed ({response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            if attempt >= config.max_retries:
                raise LlmClientError(
                    f"endpoint returned {response.status_code} after "
                    f"{attempt + 1} attempts"
                )
            time.sleep(backoff_base * (2 ** attempt))
            attempt += 1
            continue
        if response.status_code != 200:
            raise LlmClientError(
                f"endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise LlmClientError(f"malformed response envelope: {e}") from e


_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")
_SEP_RE = re.compile(r"[,\s;]+")


def _match_codes(tokens: Iterable[str], by_fold: Mapping[str, str]) -> list[str]:
    found = []
    for tok in tokens:
        tok = tok.strip().strip(".,;:")
        if not tok:
            continue
        hit = by_fold.get(tok.casefold())
        if hit is not None:
            found.append(hit)
    return found


def parse_code_list(raw: str, catalog_codes: Iterable[str]) -> ParsedPrediction:
    """Extract predicted provision codes and trailing rationale from a response.

    Accepts a bracketed list ("Trace links: [ACC, CNF, SEC]"), comma lists,
    or one code per line, case-folded against the catalog. The ELSE
    sentinel maps to the empty set. Raises ParseError when no recognizable
    code token is found.
    """
    codes = list(catalog_codes)
    by_fold = {c.casefold(): c for c in codes}
    by_fold[ELSE_CODE.casefold()] = ELSE_CODE

    for match in _BRACKET_RE.finditer(raw):
        tokens = _SEP_RE.split(match.group(1))
        found = _match_codes(tokens, by_fold)
        if found:
            rationale = raw[match.end():].strip()
            return ParsedPrediction(
                codes=frozenset(c for c in found if c != ELSE_CODE),
                rationale=rationale,
                raw=raw,
            )

    lines = raw.splitlines()
    collected: list[str] = []
    rationale_start = 0
    for li, line in enumerate(lines):
        stripped = line.strip().lstrip("-*").strip()
        if not stripped:
            if collected:
                rationale_start = li + 1
                break
            continue
        tokens = _SEP_RE.split(stripped)
        cleaned = [t.strip().strip(".,;:") for t in tokens if t.strip()]
        if cleaned and all(t.casefold() in by_fold for t in cleaned):
            collected.extend(_match_codes(cleaned, by_fold))
            rationale_start = li + 1
        else:
            if collected:
                rationale_start = li
            break
    if collected:
        rationale = "\n".join(lines[rationale_start:]).strip()
        return ParsedPrediction(
            codes=frozenset(c for c in collected if c != ELSE_CODE),
            rationale=rationale,
            raw=raw,
        )
    raise ParseError("no recognizable provision code in response", raw=raw)


_TRACE_TAG_RE = re.compile(r"<trace>(.*?)</trace>", re.IGNORECASE | re.DOTALL)


def parse_trace_tag(raw: str) -> bool:
    """True when the first <trace>...</trace> pair contains "yes" (any case)."""
    match = _TRACE_TAG_RE.search(raw)
    if match is None:
        raise ParseError("no <trace></trace> tag in response", raw=raw)
    return "yes" in match.group(1).casefold()


_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_yes_no(raw: str) -> bool:
    """First standalone yes/no token in the response."""
    match = _YES_NO_RE.search(raw)
    if match is None:
        raise ParseError("no yes/no answer in response", raw=raw)
    return match.group(1).casefold() == "yes"


@dataclass(frozen=True)
class PromptItem:
    key: str
    req_id: str
    prov_code: str | None
    prompt: str
    kind: str  # "codelist" or "boolean"


def iter_prompt_items(
    variant: PromptVariant,
    corpus: Corpus,
    examples: Sequence[FewShotExample] | None = None,
    embeddings: tuple[EmbeddingSet, EmbeddingSet] | None = None,
    k: int | None = None,
) -> list[PromptItem]:
    """Expand a variant into its concrete prompt items over a corpus.

    RICE and P2 yield one item per requirement; P1 and P3 yield one item
    per (requirement, provision) pair, with P1 restricted to the top-k
    provisions retrieved by embedding similarity (default: the whole
    catalog, so retrieval never hides a provision).
    """
    items: list[PromptItem] = []
    catalog = corpus.catalog
    if variant is PromptVariant.RICE:
        if examples is None:
            raise PromptError("RICE needs few-shot examples")
        for req in corpus.requirements:
            items.append(
                PromptItem(
                    key=f"{variant.value}::{req.id}::-",
                    req_id=req.id,
                    prov_code=None,
                    prompt=build_rice_prompt(catalog, examples, req),
                    kind="codelist",
                )
            )
    elif variant is PromptVariant.P2:
        for req in corpus.requirements:
            items.append(
                PromptItem(
                    key=f"{variant.value}::{req.id}::-",
                    req_id=req.id,
                    prov_code=None,
                    prompt=build_p2_prompt(req, catalog),
                    kind="codelist",
                )
            )
    elif variant is PromptVariant.P1:
        if embeddings is None:
            raise PromptError("P1 needs (requirement, provision) embeddings for retrieval")
        req_set, prov_set = embeddings
        top_k = k if k is not None else len(prov_set.vectors)
        by_code = {p.code: p for p in catalog}
        for req in corpus.requirements:
            if req.id not in req_set.vectors:
                raise PromptError(f"no embedding for requirement '{req.id}'")
            retrieved = retrieve_topk(req_set.vectors[req.id], prov_set, top_k)
            for code in retrieved:
                items.append(
                    PromptItem(
                        key=f"{variant.value}::{req.id}::{code}",
                        req_id=req.id,
                        prov_code=code,
                        prompt=build_p1_prompt(req, by_code[code]),
                        kind="boolean",
                    )
                )
    elif variant in (PromptVariant.P3_1, PromptVariant.P3_2):
        for req in corpus.requirements:
            for provision in catalog:
                items.append(
                    PromptItem(
                        key=f"{variant.value}::{req.id}::{provision.code}",
                        req_id=req.id,
                        prov_code=provision.code,
                        prompt=build_p3_prompt(variant, req, provision),
                        kind="boolean",
                    )
                )
    else:
        raise PromptError(f"unknown variant: {variant}")
    return items


@dataclass
class StrategyRun:
    prediction_set: PredictionSet
    failures: list[tuple[str, str]] = field(default_factory=list)
    transcript_path: Path | None = None


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_transcript(path: Path) -> dict[str, str]:
    recorded: dict[str, str] = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("ok") and "response" in record:
                recorded[record["key"]] = record["response"]
    return recorded


def _parse_item(
    item: PromptItem, raw: str, variant: PromptVariant, catalog_codes: Sequence[str]
):
    if item.kind == "codelist":
        return parse_code_list(raw, catalog_codes)
    if variant is PromptVariant.P1:
        return parse_trace_tag(raw)
    return parse_yes_no(raw)


def run_prompt_strategy(
    variant: PromptVariant,
    corpus: Corpus,
    config: LlmConfig,
    examples: Sequence[FewShotExample] | None = None,
    embeddings: tuple[EmbeddingSet, EmbeddingSet] | None = None,
    k: int | None = None,
    transcript_path: str | Path | None = None,
    backoff_base: float = 0.5,
    parallelism: int = 1,
) -> StrategyRun:
    """Run a prompt variant over every requirement and aggregate predictions.

    Each request/response is appended to the JSON-lines transcript keyed by
    (variant, requirement, provision); items already present in the
    transcript are replayed without touching the network, which makes
    interrupted runs resumable and recorded runs replayable. Client and
    parse errors are recorded per item without aborting the batch.
    """
    items = iter_prompt_items(
        variant, corpus, examples=examples, embeddings=embeddings, k=k
    )
    path = Path(transcript_path) if transcript_path is not None else None
    recorded = _load_transcript(path) if path is not None else {}

    raw_by_key: dict[str, str | None] = {}
    errors: dict[str, str] = {}
    to_query = [item for item in items if item.key not in recorded]

    def _one(item: PromptItem) -> tuple[str, str | None, str | None, str, str]:
        requested_at = _utc_now()
        try:
            raw = query_llm(config, item.prompt, backoff_base=backoff_base)
            return item.key, raw, None, requested_at, _utc_now()
        except LlmClientError as e:
            return item.key, None, str(e), requested_at, _utc_now()

    results: list[tuple[str, str | None, str | None, str, str]] = []
    if parallelism > 1 and to_query:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_one, to_query))
    else:
        results = [_one(item) for item in to_query]
    fetched = {key: (raw, err, t0, t1) for key, raw, err, t0, t1 in results}

    catalog_codes = corpus.codes
    transcript_lines: list[str] = []
    parsed_by_key: dict[str, object] = {}
    for item in items:
        if item.key in recorded:
            raw, err, t0, t1 = recorded[item.key], None, None, None
        else:
            raw, err, t0, t1 = fetched[item.key]
        record: dict = {
            "key": item.key,
            "variant": variant.value,
            "req_id": item.req_id,
            "prov_code": item.prov_code,
            "config": {
                "model": config.model_name,
                "temperature": config.temperature,
                "seed": config.seed,
                "max_tokens": config.max_tokens,
                "frequency_penalty": config.frequency_penalty,
                "presence_penalty": config.presence_penalty,
                "top_p": config.top_p,
            },
            "prompt": item.prompt,
            "requested_at": t0,
            "received_at": t1,
        }
        if raw is None:
            record["ok"] = False
            record["error"] = err
            errors[item.key] = err or "client error"
        else:
            record["response"] = raw
            try:
                parsed = _parse_item(item, raw, variant, catalog_codes)
                parsed_by_key[item.key] = parsed
                record["ok"] = True
                if isinstance(parsed, ParsedPrediction):
                    record["parse"] = {
                        "codes": sorted(parsed.codes),
                        "rationale": parsed.rationale,
                    }
                else:
                    record["parse"] = {"answer": bool(parsed)}
            except ParseError as e:
                record["ok"] = False
                record["error"] = str(e)
                errors[item.key] = str(e)
        if item.key not in recorded:
            transcript_lines.append(json.dumps(record, sort_keys=True))

    if path is not None and transcript_lines:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            for line in transcript_lines:
                fh.write(line + "\n")

    predictions: dict[str, frozenset[str]] = {
        req.id: frozenset() for req in corpus.requirements
    }
    for item in items:
        parsed = parsed_by_key.get(item.key)
        if parsed is None:
            continue
        if isinstance(parsed, ParsedPrediction):
            predictions[item.req_id] = parsed.codes
        elif parsed is True and item.prov_code is not None:
            predictions[item.req_id] = predictions[item.req_id] | {item.prov_code}
    return StrategyRun(
        prediction_set=PredictionSet(
            predictions=predictions, strategy_tag=f"prompt:{variant.value}"
        ),
        failures=sorted(errors.items()),
        transcript_path=path,
    )
