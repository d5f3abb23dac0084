"""Candidate scoring: the shared contract, a deterministic in-process
reference scorer, and the HTTP client for the remote inference sidecar.

A score request carries a context with exactly one "[Y]" object slot and an
ordered candidate list; a response carries one probability and one token
count per candidate, in request order.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass
from typing import Protocol

import requests

from .corpus import OBJECT_PLACEHOLDER, normalize
from .errors import InputError, ScorerError


@dataclass(frozen=True)
class ScoreRequest:
    context: str
    candidates: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))


@dataclass(frozen=True)
class ScoreResponse:
    scores: tuple[float, ...]
    token_counts: tuple[int, ...]
    skipped: tuple[int, ...] = ()  # candidate indices the scorer refused (e.g. over max_masks)


def validate_request(request: ScoreRequest) -> None:
    if request.context.count(OBJECT_PLACEHOLDER) != 1:
        raise InputError(f"request context must contain exactly one {OBJECT_PLACEHOLDER}: {request.context!r}")
    if not request.candidates:
        raise InputError("request needs at least one candidate")
    if any(not c for c in request.candidates):
        raise InputError("empty candidate in request")


def multi_token_score(token_probabilities: list[float]) -> float:
    """Arithmetic mean of per-token probabilities: (1/l) * sum(p_i)."""
    if not token_probabilities:
        raise InputError("empty_input: no token probabilities")
    return sum(token_probabilities) / len(token_probabilities)


class CandidateScorer(Protocol):
    model_tag: str

    def score_candidates(self, request: ScoreRequest) -> ScoreResponse: ...


class ReferenceScorer:
    """Deterministic toy scorer: whitespace tokenizer + probability table.

    The table maps a rendered masked context (the request context with "[Y]"
    replaced by l space-joined mask tokens) to one distribution per mask
    slot. Unknown contexts fall back to the uniform distribution over the
    vocabulary; tokens outside a stored distribution score 0.
    """

    def __init__(self, name: str, vocabulary: list[str], table: dict[str, list[dict[str, float]]],
                 mask_token: str = "[MASK]"):
        if not vocabulary:
            raise InputError("reference model needs a non-empty vocabulary")
        for context, dists in table.items():
            expected = context.count(mask_token)
            if expected == 0 or len(dists) != expected:
                raise InputError(f"reference table entry {context!r} must carry one distribution per mask")
            for dist in dists:
                total = sum(dist.values())
                if abs(total - 1.0) > 1e-9:
                    raise InputError(f"reference distribution for {context!r} sums to {total!r}, not 1")
                if any(p < 0.0 or p > 1.0 for p in dist.values()):
                    raise InputError(f"reference distribution for {context!r} has probabilities outside [0,1]")
        self.name = name
        self.vocabulary = list(vocabulary)
        self.table = table
        self.mask_token = mask_token
        self.model_tag = f"reference-{name}"

    @classmethod
    def from_json(cls, path: str) -> "ReferenceScorer":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot load reference model {path}: {exc}") from exc
        return cls(
            name=raw.get("name", "fixture"),
            vocabulary=raw["vocabulary"],
            table=raw.get("table", {}),
            mask_token=raw.get("mask_token", "[MASK]"),
        )

    def tokenize(self, candidate: str) -> list[str]:
        return candidate.split()

    def render_masked(self, context: str, n_masks: int) -> str:
        masks = " ".join([self.mask_token] * n_masks)
        return normalize(context.replace(OBJECT_PLACEHOLDER, masks))

    def _slot_probability(self, context_key: str, position: int, token: str) -> float:
        dists = self.table.get(context_key)
        if dists is None:
            return 1.0 / len(self.vocabulary) if token in self.vocabulary else 0.0
        return dists[position].get(token, 0.0)

    def score_candidates(self, request: ScoreRequest) -> ScoreResponse:
        validate_request(request)
        scores = []
        token_counts = []
        for candidate in request.candidates:
            tokens = self.tokenize(candidate)
            if not tokens:
                raise ScorerError(f"tokenization_failure: candidate {candidate!r} yields no tokens")
            rendered = self.render_masked(request.context, len(tokens))
            probs = [self._slot_probability(rendered, i, tok) for i, tok in enumerate(tokens)]
            scores.append(multi_token_score(probs))
            token_counts.append(len(tokens))
        return ScoreResponse(scores=tuple(scores), token_counts=tuple(token_counts))


_TRANSIENT_STATUSES = (500, 502, 503, 504)


class RemoteScorer:
    """Client for the inference sidecar speaking the /v1 wire protocol.

    Splits candidates into batches, merges responses in request order, and
    retries transient failures with exponential backoff. In-flight requests
    are bounded by max_concurrency.
    """

    def __init__(self, endpoint: str, batch_size: int = 32, max_retries: int = 3,
                 backoff: float = 0.25, timeout: float = 60.0, max_concurrency: int = 8,
                 session: requests.Session | None = None):
        if batch_size < 1:
            raise InputError(f"batch_size must be >= 1: {batch_size}")
        self.endpoint = endpoint.rstrip("/")
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(max_concurrency)
        self._model_tag: str | None = None
        self._tag_lock = threading.Lock()

    @property
    def model_tag(self) -> str:
        with self._tag_lock:
            if self._model_tag is None:
                info = self._get_json("/v1/model")
                name = info.get("model_name")
                if not isinstance(name, str) or not name:
                    raise ScorerError(f"protocol_error: /v1/model returned {info!r}")
                self._model_tag = name
            return self._model_tag

    def health(self) -> bool:
        try:
            return self._get_json("/v1/health").get("status") == "ok"
        except ScorerError:
            return False

    def _get_json(self, path: str) -> dict:
        try:
            resp = self._session.get(self.endpoint + path, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScorerError(f"scorer_unavailable: GET {path}: {exc}") from exc
        if resp.status_code != 200:
            raise ScorerError(f"scorer_unavailable: GET {path} -> {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ScorerError(f"protocol_error: GET {path} returned non-JSON body") from exc

    def _post_batch(self, context: str, batch: tuple[str, ...]) -> dict:
        payload = {"context": context, "candidates": list(batch)}
        last_error: str | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                with self._slots:
                    resp = self._session.post(self.endpoint + "/v1/score", json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code in _TRANSIENT_STATUSES:
                last_error = f"status {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ScorerError(f"protocol_error: POST /v1/score -> {resp.status_code}: {resp.text[:500]}")
            try:
                return resp.json()
            except ValueError:
                raise ScorerError("protocol_error: POST /v1/score returned non-JSON body")
        raise ScorerError(f"scorer_unavailable: POST /v1/score failed after {self.max_retries + 1} attempts: {last_error}")

    @staticmethod
    def _check_batch(body: dict, batch_len: int) -> tuple[list[float], list[int], list[int]]:
        if not isinstance(body, dict) or "scores" not in body or "token_counts" not in body:
            raise ScorerError(f"protocol_error: response missing scores/token_counts: {body!r}")
        scores, counts = body["scores"], body["token_counts"]
        skipped = body.get("skipped", [])
        if not isinstance(scores, list) or not isinstance(counts, list) or not isinstance(skipped, list):
            raise ScorerError(f"protocol_error: response fields have wrong types: {body!r}")
        if len(scores) != batch_len or len(counts) != batch_len:
            raise ScorerError(
                f"protocol_error: response length mismatch: got {len(scores)} scores / "
                f"{len(counts)} token_counts for {batch_len} candidates")
        for s in scores:
            if not isinstance(s, (int, float)) or not math.isfinite(s) or s < 0.0 or s > 1.0:
                raise ScorerError(f"protocol_error: score out of [0,1]: {s!r}")
        for c in counts:
            if not isinstance(c, int) or isinstance(c, bool) or c < 1:
                raise ScorerError(f"protocol_error: token count must be a positive integer: {c!r}")
        for i in skipped:
            if not isinstance(i, int) or i < 0 or i >= batch_len:
                raise ScorerError(f"protocol_error: skipped index out of range: {i!r}")
        return [float(s) for s in scores], list(counts), list(skipped)

    def score_candidates(self, request: ScoreRequest) -> ScoreResponse:
        validate_request(request)
        scores: list[float] = []
        token_counts: list[int] = []
        skipped: list[int] = []
        for start in range(0, len(request.candidates), self.batch_size):
            batch = request.candidates[start:start + self.batch_size]
            body = self._post_batch(request.context, batch)
            batch_scores, batch_counts, batch_skipped = self._check_batch(body, len(batch))
            scores.extend(batch_scores)
            token_counts.extend(batch_counts)
            skipped.extend(start + i for i in batch_skipped)
        return ScoreResponse(scores=tuple(scores), token_counts=tuple(token_counts), skipped=tuple(skipped))


def scorer_from_spec(spec: str) -> CandidateScorer:
    """Build a scorer from a CLI spec: "reference:<fixture>" or "remote:<url>"."""
    kind, _, arg = spec.partition(":")
    if kind == "reference" and arg:
        return ReferenceScorer.from_json(arg)
    if kind == "remote" and arg:
        return RemoteScorer(arg)
    raise InputError(f"scorer spec must be reference:PATH or remote:URL, got {spec!r}")
