"""
Provider-agnostic access to text generation and text embedding.

The gateway wraps a generator and an embedder with per-stage sampling
parameters, a concurrency cap and an optional on-disk response cache.
Scripted and hashed bag-of-words backends make every test deterministic.
"""
import hashlib
import json
import re
import threading
from collections import Counter
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from doc2eg.api import (
    ChatCompletionClient,
    EmbeddingClient,
    FixtureMissingError,
    ProviderError,
)
from doc2eg.console_output import log_console


class Stage(Enum):
    SUMMARY = "summary"
    EVENTS = "events"
    GRAPH = "graph"
    GRADER = "grader"
    MENTION = "mention"


class SamplingParams(NamedTuple):
    temperature: float
    top_p: float
    max_tokens: int


DEFAULT_STAGE_PARAMS = {
    Stage.SUMMARY: SamplingParams(temperature=0.8, top_p=0.9, max_tokens=1024),
    Stage.EVENTS: SamplingParams(temperature=0.5, top_p=0.9, max_tokens=1024),
    Stage.GRAPH: SamplingParams(temperature=0.5, top_p=0.9, max_tokens=4096),
    Stage.GRADER: SamplingParams(temperature=0.0, top_p=0.9, max_tokens=1024),
    Stage.MENTION: SamplingParams(temperature=0.0, top_p=0.9, max_tokens=1024),
}


def validate_sampling(temperature: float, top_p: float, max_tokens: int):
    if not 0.0 <= temperature <= 2.0:
        raise ValueError(f"temperature must be in [0, 2], got {temperature}")
    if not 0.0 < top_p <= 1.0:
        raise ValueError(f"top_p must be in (0, 1], got {top_p}")
    if int(max_tokens) != max_tokens or max_tokens < 1:
        raise ValueError(f"max_tokens must be a positive integer, got {max_tokens}")


class StageParams(object):
    def __init__(self, overrides: Optional[Dict[Stage, SamplingParams]] = None):
        self._params = dict(DEFAULT_STAGE_PARAMS)
        for stage, params in (overrides or {}).items():
            validate_sampling(*params)
            self._params[Stage(stage)] = SamplingParams(*params)

    def __getitem__(self, stage: Stage) -> SamplingParams:
        return self._params[stage]

    def __eq__(self, other):
        return isinstance(other, StageParams) and self._params == other._params

    def to_dict(self):
        return {stage.value: params._asdict() for stage, params in self._params.items()}

    @classmethod
    def from_dict(cls, data: Dict[str, Dict[str, float]]) -> "StageParams":
        overrides = dict()
        for stage_name, values in (data or {}).items():
            stage = Stage(stage_name)
            default = DEFAULT_STAGE_PARAMS[stage]
            overrides[stage] = SamplingParams(
                temperature=float(values.get("temperature", default.temperature)),
                top_p=float(values.get("top_p", default.top_p)),
                max_tokens=int(values.get("max_tokens", default.max_tokens)),
            )
        return cls(overrides)


class GenerationRequest(object):
    __slots__ = ("prompt", "temperature", "top_p", "max_tokens", "stage", "history")

    def __init__(
        self,
        prompt: str,
        stage: Stage,
        temperature: float,
        top_p: float,
        max_tokens: int,
        history: Sequence[Tuple[str, str]] = (),
    ):
        validate_sampling(temperature, top_p, max_tokens)
        self.prompt = prompt
        self.stage = stage
        self.temperature = temperature
        self.top_p = top_p
        self.max_tokens = max_tokens
        self.history = tuple(tuple(turn) for turn in history)

    @classmethod
    def for_stage(
        cls,
        prompt: str,
        stage: Stage,
        stage_params: Optional[StageParams] = None,
        history: Sequence[Tuple[str, str]] = (),
    ) -> "GenerationRequest":
        params = (stage_params or StageParams())[stage]
        return cls(
            prompt,
            stage,
            temperature=params.temperature,
            top_p=params.top_p,
            max_tokens=params.max_tokens,
            history=history,
        )

    def transcript(self) -> str:
        """The conversation so far, rendered as one string; the prompt itself
        when there is no history."""
        if not self.history:
            return self.prompt
        turns = [f"{prompt}\n\n{response}" for prompt, response in self.history]
        return "\n\n".join(turns + [self.prompt])

    def prompt_sha1(self) -> str:
        return hashlib.sha1(self.transcript().encode()).hexdigest()

    def cache_key(self) -> str:
        payload = json.dumps(
            [
                self.stage.value,
                self.transcript(),
                self.temperature,
                self.top_p,
                self.max_tokens,
            ]
        )
        return hashlib.sha1(payload.encode()).hexdigest()

    def __repr__(self):
        return f"GenerationRequest({self.stage.value}, sha1={self.prompt_sha1()[:10]})"


class TextGenerator(object):
    def generate(self, request: GenerationRequest) -> str:
        raise NotImplementedError


class TextEmbedder(object):
    dimension: Optional[int] = None

    def embed_batch(self, texts: Sequence[str]) -> List[np.ndarray]:
        raise NotImplementedError


class ChatGenerator(TextGenerator):
    def __init__(self, client: ChatCompletionClient):
        self.client = client

    def generate(self, request: GenerationRequest) -> str:
        return self.client.complete(
            request.prompt,
            temperature=request.temperature,
            top_p=request.top_p,
            max_tokens=request.max_tokens,
            history=request.history,
        )


class HttpEmbedder(TextEmbedder):
    def __init__(self, client: EmbeddingClient):
        self.client = client

    def embed_batch(self, texts):
        vectors = self.client.embed(texts)
        dimensions = {vector.shape[0] for vector in vectors}
        if self.dimension is not None:
            dimensions.add(self.dimension)
        if len(dimensions) > 1:
            raise ProviderError(
                f"embedding provider returned mixed dimensions {sorted(dimensions)}"
            )
        if vectors:
            self.dimension = vectors[0].shape[0]
        return vectors


class ScriptedGenerator(TextGenerator):
    """
    Replays canned responses keyed by (stage, sha1 of the prompt transcript).

    A value can be a single response or a list; a list is consumed one entry
    per call and its last entry repeats.
    """

    def __init__(
        self,
        fixtures: Optional[Dict[Tuple[str, str], object]] = None,
        fallback: Optional[Callable[[GenerationRequest], Optional[str]]] = None,
    ):
        self.fixtures: Dict[Tuple[str, str], object] = dict(fixtures or {})
        self.fallback = fallback
        self.calls: List[GenerationRequest] = list()
        self._positions: Counter = Counter()
        self._lock = threading.Lock()

    @staticmethod
    def key_for(stage: Stage, prompt: str, history=()) -> Tuple[str, str]:
        request = GenerationRequest(prompt, stage, 0.0, 1.0, 1, history=history)
        return stage.value, request.prompt_sha1()

    def add(self, stage: Stage, prompt: str, response, history=()):
        self.fixtures[self.key_for(stage, prompt, history)] = response
        return self

    def generate(self, request: GenerationRequest) -> str:
        key = (request.stage.value, request.prompt_sha1())
        with self._lock:
            self.calls.append(request)
            if key in self.fixtures:
                scripted = self.fixtures[key]
                if isinstance(scripted, (list, tuple)):
                    position = min(self._positions[key], len(scripted) - 1)
                    self._positions[key] += 1
                    return scripted[position]
                return scripted
        if self.fallback is not None:
            response = self.fallback(request)
            if response is not None:
                return response
        raise FixtureMissingError(
            f"fixture missing for stage {key[0]!r} and prompt sha1 {key[1]}"
        )

    @classmethod
    def from_file(cls, path: Path) -> "ScriptedGenerator":
        """
        Load fixtures from a JSON-lines file.

        Each line holds "stage", "response" and either the full "prompt"
        (optionally with "history") or its "prompt_sha1".
        """
        generator = cls()
        with open(path, encoding="utf-8") as fixture_file:
            for line_number, line in enumerate(fixture_file, start=1):
                if not line.strip():
                    continue
                try:
                    item = json.loads(line)
                    stage = Stage(item["stage"])
                    response = item["response"]
                    if "prompt_sha1" in item:
                        key = (stage.value, item["prompt_sha1"])
                    else:
                        key = cls.key_for(
                            stage, item["prompt"], item.get("history", ())
                        )
                except (ValueError, KeyError, TypeError) as e:
                    raise ValueError(
                        f"{path}:{line_number}: invalid fixture line ({e})"
                    ) from e
                generator.fixtures[key] = response
        return generator


_TOKEN_REGEX = re.compile(r"\w+")


class HashedBagOfWordsEmbedder(TextEmbedder):
    """
    L2-normalized hashed bag of lowercase word tokens. Text without word
    tokens, such as a lone dash, falls into the single bucket of its
    stripped characters.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def bucket(self, token: str) -> int:
        digest = hashlib.sha1(token.encode()).hexdigest()
        return int(digest, 16) % self.dimension

    def embed_one(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=float)
        for token in _TOKEN_REGEX.findall(text.lower()):
            vector[self.bucket(token)] += 1.0
        norm = np.linalg.norm(vector)
        if norm == 0:
            vector[self.bucket(text.strip())] = 1.0
            return vector
        return vector / norm

    def embed_batch(self, texts):
        return [self.embed_one(text) for text in texts]


class ResponseCache(object):
    """One JSON file per request hash; safe to share between threads."""

    def __init__(self, directory: Path, namespace: str = ""):
        self.directory = Path(directory)
        self.namespace = namespace
        self._lock = threading.Lock()

    def _path(self, request: GenerationRequest) -> Path:
        key = request.cache_key()
        if self.namespace:
            key = hashlib.sha1(f"{self.namespace}:{key}".encode()).hexdigest()
        return self.directory / key[:2] / f"{key}.json"

    def get(self, request: GenerationRequest) -> Optional[str]:
        path = self._path(request)
        with self._lock:
            if not path.is_file():
                return None
            try:
                with open(path, encoding="utf-8") as cache_file:
                    return json.load(cache_file)["response"]
            except (ValueError, KeyError):
                log_console.log(f":warning-emoji: ignoring corrupt cache entry {path}")
                return None

    def put(self, request: GenerationRequest, response: str):
        path = self._path(request)
        entry = {
            "stage": request.stage.value,
            "prompt_sha1": request.prompt_sha1(),
            "response": response,
        }
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp_path = path.with_suffix(".tmp")
            with open(tmp_path, "w", encoding="utf-8") as cache_file:
                json.dump(entry, cache_file, ensure_ascii=False)
            tmp_path.replace(path)


class Gateway(object):
    def __init__(
        self,
        generator: Optional[TextGenerator] = None,
        embedder: Optional[TextEmbedder] = None,
        stage_params: Optional[StageParams] = None,
        cache: Optional[ResponseCache] = None,
        max_concurrency: int = 4,
        embedding_batch_size: int = 32,
    ):
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")
        if embedding_batch_size < 1:
            raise ValueError("embedding_batch_size must be at least 1")
        self.generator = generator
        self.embedder = embedder
        self.stage_params = stage_params or StageParams()
        self.cache = cache
        self.embedding_batch_size = embedding_batch_size
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        self._metrics_lock = threading.Lock()
        self.metrics: Counter = Counter()

    def _count(self, **increments):
        with self._metrics_lock:
            self.metrics.update(increments)

    def request(
        self, prompt: str, stage: Stage, history: Sequence[Tuple[str, str]] = ()
    ) -> GenerationRequest:
        return GenerationRequest.for_stage(prompt, stage, self.stage_params, history)

    def ask(self, prompt: str, stage: Stage, history=()) -> str:
        return self.complete(self.request(prompt, stage, history))

    def complete(self, request: GenerationRequest) -> str:
        if self.generator is None:
            raise ProviderError("no text generation provider is configured")

        if self.cache is not None:
            cached = self.cache.get(request)
            if cached is not None:
                self._count(cache_hits=1)
                return cached

        with self._semaphore:
            response = self.generator.generate(request)

        self._count(
            requests=1,
            prompt_chars=len(request.transcript()),
            response_chars=len(response),
        )
        if self.cache is not None:
            self.cache.put(request, response)
        return response

    def embed(self, texts: Iterable[str]) -> List[np.ndarray]:
        if self.embedder is None:
            raise ProviderError("no embedding provider is configured")
        texts = list(texts)
        if not texts:
            raise ValueError("embed needs at least one text")
        if any(not text.strip() for text in texts):
            raise ValueError("embed cannot encode empty texts")

        vectors: List[np.ndarray] = list()
        for start in range(0, len(texts), self.embedding_batch_size):
            batch = texts[start : start + self.embedding_batch_size]
            with self._semaphore:
                vectors.extend(self.embedder.embed_batch(batch))
            self._count(embedding_requests=1, embedded_texts=len(batch))
        return vectors
