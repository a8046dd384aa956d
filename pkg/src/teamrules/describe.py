"""Contrastive natural-language descriptions of regions.

The description loop samples member and non-member texts, asks a completion
backend for a summary, then for m rounds finds the non-member text most
similar and the member text least similar to the current summary's
embedding, adds both as counterexamples, and asks again. Exactly m+1
completion calls per region.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import StudyDataset
from .errors import BackendError, ValidationError
from .regions import Region, region_members

PRE_INSTRUCTION_CONTRAST = """I will provide you with a set of descriptions of points that belong to a region and a set of descriptions of points that do not belong to the region. Your task is to summarize the points inside the region in a concise and precise short sentence while making sure the summary contrasts to points outside the region. Your one sentence summary should be able to allow a person to distinguish between points inside and outside the region while describing the region well. The summary should be no more than 20 words, it should be accurate, concise, distinguishing and precise.

Example:

inside the region:

- two cows and two sheep grazing in a pasture.

- the sheep is standing near a tree.

outside the region:

- the cows are lying on the grass beside the water.

summary: The region consists of descriptions that have sheep in them outside in nature, it could have cows but must have sheep.

End of Example"""

PRE_INSTRUCTION_NO_CONTRAST = """I will provide you with a set of descriptions of points that belong to a region.Your task is to summarize the points inside the region in a concise and precise short sentence .Your one sentence summary should be able to allow a person to distinguish  points inside the region while describing the region well.The summary should be a single word, it should be accurate, concise, distinguishing and precise.

Example:

inside the region:
- two cows and two sheep grazing in a pasture.

-the sheep is standing near a tree.

summary: sheep.

End of Example"""

PRE_INSTRUCTION_LEGACY = ("summarize the points inside the region in a concise and "
                          "precise short sentence while making sure the summary "
                          "contrasts to points outside the region")

POST_INSTRUCTION = "summary:"

PROMPT_STYLES = ("recommended", "legacy")


def build_prompt(inside_texts, outside_texts, style: str = "recommended",
                 word_limit: int = 20) -> str:
    """Assemble the completion prompt; the no-contrast preamble is used
    whenever there are no outside texts."""
    if style not in PROMPT_STYLES:
        raise ValidationError(f"unknown prompt style {style!r}")
    if word_limit < 1:
        raise ValidationError("word_limit must be >= 1")
    if not outside_texts:
        pre = PRE_INSTRUCTION_NO_CONTRAST
    else:
        pre = PRE_INSTRUCTION_CONTRAST if style == "recommended" else PRE_INSTRUCTION_LEGACY
        pre = pre.replace("no more than 20 words", f"no more than {word_limit} words")
    prompt = pre + "\n"
    prompt += "inside the region: \n "
    for text in inside_texts:
        prompt += text + ", \n "
    if outside_texts:
        prompt += ". \n not in the region: \n"
        for text in outside_texts:
            prompt += text + ",\n"
    prompt += POST_INSTRUCTION
    return prompt


def tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; 0 when either is zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError("vectors must have the same dimension")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class TransportFailure(BackendError):
    """Network-level failure; eligible for retry with backoff."""


class LLMClient:
    """Completion backend. ``calls`` counts complete() invocations."""

    calls: int = 0

    def complete(self, prompt: str) -> str:
        raise NotImplementedError


class ScriptedLLM(LLMClient):
    """Replays scripted responses in order; call t gets scripted output t."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    @classmethod
    def from_fixture(cls, path) -> "ScriptedLLM":
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
        if isinstance(doc, dict):
            responses = [doc[key] for key in sorted(doc, key=int)]
        else:
            responses = list(doc)
        return cls(responses)

    def complete(self, prompt: str) -> str:
        if self.calls >= len(self.responses):
            raise BackendError(f"scripted backend exhausted after {self.calls} calls")
        response = self.responses[self.calls]
        self.calls += 1
        return response


class KeywordMockLLM(LLMClient):
    """Deterministic stand-in: answers with the most frequent token that
    appears in the prompt's inside section but nowhere in its outside
    section (ties alphabetical). Exercises the loop without a live model."""

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        body = prompt[prompt.rfind("inside the region:"):]
        if body.endswith(POST_INSTRUCTION):
            body = body[: -len(POST_INSTRUCTION)]
        marker = body.rfind("not in the region:")
        if marker >= 0:
            inside, outside = body[:marker], body[marker:]
        else:
            inside, outside = body, ""
        inside_tokens = tokenize(inside.replace("inside the region:", ""))
        banned = set(tokenize(outside.replace("not in the region:", "")))
        counts: dict[str, int] = {}
        for token in inside_tokens:
            if token not in banned:
                counts[token] = counts.get(token, 0) + 1
        if not counts:
            return "unknown"
        return min(counts, key=lambda tok: (-counts[tok], tok))


class HTTPLLMClient(LLMClient):
    """JSON-over-HTTP completion endpoint, temperature pinned to 0."""

    def __init__(self, endpoint: str, model: str = "", auth_env: str | None = None,
                 timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.auth_env = auth_env
        self.timeout = timeout
        self.calls = 0

    def _headers(self) -> dict:
        headers = {"content-type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env, "")
            if token:
                headers["authorization"] = f"Bearer {token}"
        return headers

    def complete(self, prompt: str) -> str:
        import httpx
        self.calls += 1
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        try:
            response = httpx.post(self.endpoint, json=payload,
                                  headers=self._headers(), timeout=self.timeout)
        except httpx.TransportError as err:
            raise TransportFailure(f"completion endpoint unreachable: {err}") from err
        if response.status_code >= 500:
            raise TransportFailure(f"completion endpoint returned {response.status_code}")
        if response.status_code != 200:
            raise BackendError(f"completion endpoint returned {response.status_code}")
        try:
            choice = response.json()["choices"][0]
            if "message" in choice:
                return choice["message"]["content"]
            return choice["text"]
        except (KeyError, IndexError, TypeError, ValueError) as err:
            raise BackendError(f"malformed completion response: {err}") from err


class TextEmbedder:
    """Text embedding backend with a fixed output dimension."""

    dim: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class LookupEmbedder(TextEmbedder):
    """Precomputed text-to-vector table loaded from a fixture."""

    def __init__(self, table: dict):
        if not table:
            raise ValidationError("lookup embedder table is empty")
        self.table = {key: np.asarray(value, dtype=float) for key, value in table.items()}
        dims = {vec.shape[0] for vec in self.table.values()}
        if len(dims) != 1:
            raise ValidationError("lookup embedder vectors disagree on dimension")
        self.dim = dims.pop()

    @classmethod
    def from_fixture(cls, path) -> "LookupEmbedder":
        with open(path, encoding="utf-8") as handle:
            return cls(json.load(handle))

    def embed(self, text: str) -> np.ndarray:
        if text not in self.table:
            raise BackendError(f"no precomputed vector for text {text[:60]!r}")
        return self.table[text].copy()


class BagOfWordsEmbedder(TextEmbedder):
    """Token counts over a fixed vocabulary, in vocabulary order."""

    def __init__(self, vocabulary):
        self.vocabulary = list(vocabulary)
        if not self.vocabulary:
            raise ValidationError("bag-of-words vocabulary is empty")
        self.index = {token: i for i, token in enumerate(self.vocabulary)}
        self.dim = len(self.vocabulary)

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in tokenize(text):
            slot = self.index.get(token)
            if slot is not None:
                vec[slot] += 1.0
        return vec


class HTTPEmbedder(TextEmbedder):
    def __init__(self, endpoint: str, dim: int,
                 auth_env: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self.dim = dim
        self.auth_env = auth_env
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        import httpx
        headers = {"content-type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env, "")
            if token:
                headers["authorization"] = f"Bearer {token}"
        try:
            response = httpx.post(self.endpoint, json={"texts": [text]},
                                  headers=headers, timeout=self.timeout)
        except httpx.TransportError as err:
            raise TransportFailure(f"embedding endpoint unreachable: {err}") from err
        if response.status_code >= 500:
            raise TransportFailure(f"embedding endpoint returned {response.status_code}")
        if response.status_code != 200:
            raise BackendError(f"embedding endpoint returned {response.status_code}")
        try:
            vec = np.asarray(response.json()["vectors"][0], dtype=float)
        except (KeyError, IndexError, TypeError, ValueError) as err:
            raise BackendError(f"malformed embedding response: {err}") from err
        if vec.shape != (self.dim,):
            raise BackendError(f"embedding has dimension {vec.shape}, expected {self.dim}")
        return vec


@dataclass
class DescriberConfig:
    m: int = 2
    n_inside: int = 15
    n_outside: int = 5
    word_limit: int = 20
    contrast: bool = True  # False: never sample or add outside texts
    prompt_style: str = "recommended"
    seed: int = 0
    max_retries: int = 3
    backoff: float = 0.5

    def validate(self) -> "DescriberConfig":
        if self.m < 0:
            raise ValidationError("m must be >= 0")
        if self.n_inside < 1:
            raise ValidationError("n_inside must be >= 1")
        if self.n_outside < 0:
            raise ValidationError("n_outside must be >= 0")
        if self.word_limit < 1:
            raise ValidationError("word_limit must be >= 1")
        if self.prompt_style not in PROMPT_STYLES:
            raise ValidationError(f"unknown prompt style {self.prompt_style!r}")
        if self.max_retries < 0 or self.backoff < 0:
            raise ValidationError("retry settings must be non-negative")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "DescriberConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(values) - known
        if unknown:
            raise ValidationError(f"unknown describer config keys: {sorted(unknown)}")
        return cls(**values).validate()


@dataclass
class DescriptionTrace:
    region_id: int
    rounds: list[dict] = field(default_factory=list)
    final: str = ""
    llm_calls: int = 0

    def to_json(self) -> dict:
        return {"region_id": self.region_id, "rounds": self.rounds,
                "final": self.final, "llm_calls": self.llm_calls}


def find_counterexamples(description_vector: np.ndarray, dataset: StudyDataset,
                         member_ids: set, exclude_inside: set, exclude_outside: set):
    """(least similar member id, most similar non-member id).

    Only examples with text are eligible; either side is None when
    exhausted. Similarity ties resolve to the lowest example id.
    """
    best_plus = None   # (similarity, id) minimizing similarity
    best_minus = None  # maximizing similarity
    for ex in dataset.examples:
        if ex.text is None:
            continue
        sim = cosine_similarity(description_vector, np.asarray(ex.embedding, dtype=float))
        if ex.id in member_ids:
            if ex.id in exclude_inside:
                continue
            if best_plus is None or (sim, ex.id) < best_plus:
                best_plus = (sim, ex.id)
        else:
            if ex.id in exclude_outside:
                continue
            if best_minus is None or sim > best_minus[0] or \
                    (sim == best_minus[0] and ex.id < best_minus[1]):
                best_minus = (sim, ex.id)
    plus = None if best_plus is None else best_plus[1]
    minus = None if best_minus is None else best_minus[1]
    return plus, minus


def _with_retries(action, cfg: DescriberConfig, trace: DescriptionTrace,
                  sleep=time.sleep):
    attempt = 0
    while True:
        try:
            return action()
        except TransportFailure as err:
            if attempt >= cfg.max_retries:
                raise BackendError(
                    f"backend failed after {attempt + 1} attempts: {err}",
                    trace=trace) from err
            if cfg.backoff > 0:
                sleep(cfg.backoff * (2 ** attempt))
            attempt += 1


def describe_region(region: Region, dataset: StudyDataset, llm: LLMClient,
                    embedder: TextEmbedder | None, cfg: DescriberConfig,
                    sleep=time.sleep):
    """Produce a contrastive description for one region.

    Returns (description, DescriptionTrace). Deterministic given a
    deterministic backend pair and cfg.seed.
    """
    cfg.validate()
    member_idx = set(region_members(region, dataset))
    inside_pool = [i for i in sorted(member_idx)
                   if dataset.examples[i].text is not None]
    outside_pool = [i for i in range(len(dataset.examples))
                    if i not in member_idx and dataset.examples[i].text is not None]
    if not inside_pool:
        raise ValidationError(f"region {region.id} has no members with text")
    if cfg.m > 0:
        if embedder is None:
            raise ValidationError("refinement rounds need an embedder")
        if embedder.dim != dataset.manifest.embedding_dim:
            raise ValidationError(
                f"embedder dimension {embedder.dim} does not match dataset "
                f"embedding dimension {dataset.manifest.embedding_dim}")

    rng = np.random.default_rng([cfg.seed, region.id])
    take_in = min(cfg.n_inside, len(inside_pool))
    take_out = min(cfg.n_outside, len(outside_pool)) if cfg.contrast else 0
    inside_ids = [dataset.examples[inside_pool[j]].id
                  for j in rng.choice(len(inside_pool), size=take_in, replace=False)]
    outside_ids = [dataset.examples[outside_pool[j]].id
                   for j in rng.choice(len(outside_pool), size=take_out, replace=False)] \
        if take_out else []

    by_id = {ex.id: ex for ex in dataset.examples}
    member_ids = {dataset.examples[i].id for i in member_idx}
    trace = DescriptionTrace(region_id=region.id)

    def ask() -> tuple[str, str]:
        prompt = build_prompt([by_id[i].text for i in inside_ids],
                              [by_id[i].text for i in outside_ids],
                              cfg.prompt_style, cfg.word_limit)
        response = _with_retries(lambda: llm.complete(prompt), cfg, trace, sleep)
        trace.llm_calls += 1
        return prompt, response

    prompt, description = ask()
    trace.rounds.append({"round": 0, "prompt": prompt, "response": description,
                         "inside_ids": list(inside_ids),
                         "outside_ids": list(outside_ids)})
    for round_idx in range(1, cfg.m + 1):
        vector = _with_retries(lambda: embedder.embed(description), cfg, trace, sleep)
        plus, minus = find_counterexamples(vector, dataset, member_ids,
                                           set(inside_ids), set(outside_ids))
        entry = {"round": round_idx, "added_inside": plus, "added_outside": minus}
        if plus is not None:
            entry["inside_similarity"] = cosine_similarity(
                vector, np.asarray(by_id[plus].embedding, dtype=float))
            inside_ids.append(plus)
        if minus is not None and cfg.contrast:
            entry["outside_similarity"] = cosine_similarity(
                vector, np.asarray(by_id[minus].embedding, dtype=float))
            outside_ids.append(minus)
        elif not cfg.contrast:
            entry["added_outside"] = None
        prompt, description = ask()
        entry.update({"prompt": prompt, "response": description,
                      "inside_ids": list(inside_ids),
                      "outside_ids": list(outside_ids)})
        trace.rounds.append(entry)
    trace.final = description
    return description, trace
