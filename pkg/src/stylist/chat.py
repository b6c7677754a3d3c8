"""Chat model backends.

One real HTTP client speaking the chat-completions wire format, plus three
deterministic stand-ins used for tests and offline evaluation: a scripted
queue, a seeded random chooser, and an embedding-similarity oracle.
"""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx
import numpy as np

from .embedding import EmbeddingProvider
from .prompting import OPTION_LABELS, PromptBundle, extract_fitb_structure

logger = logging.getLogger(__name__)

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class ChatBackendError(RuntimeError):
    """A backend could not produce a reply."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if not self.messages:
            raise ValueError("chat request needs at least one message")
        for m in self.messages:
            if m.role not in ("system", "user", "assistant"):
                raise ValueError(f"bad message role {m.role!r}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    usage: dict = field(default_factory=dict)


def bundle_to_request(
    bundle: PromptBundle, model: str, temperature: float = 0.0, max_tokens: int = 256
) -> ChatRequest:
    messages = tuple(ChatMessage(role, content) for role, content in bundle.to_messages())
    return ChatRequest(
        model=model, messages=messages, temperature=temperature, max_tokens=max_tokens
    )


def build_chat_payload(request: ChatRequest) -> bytes:
    """Serialize a request to the exact bytes posted to /v1/chat/completions."""
    body = {
        "model": request.model,
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    return json.dumps(body, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


class ChatBackend(Protocol):
    def describe(self) -> str: ...

    def chat(self, request: ChatRequest) -> ChatResponse: ...


class HttpChatBackend:
    """Client for an OpenAI-style chat-completions endpoint.

    Retries transport failures and retryable statuses with exponential
    backoff; any other non-2xx status fails immediately.
    """

    def __init__(
        self,
        base_url: str,
        model: str = "default",
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff_base: float = 0.5,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._sleep = sleep
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def describe(self) -> str:
        return f"http:{self.base_url}:{self.model}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/v1/chat/completions"
        payload = build_chat_payload(request)
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post(url, content=payload)
            except httpx.HTTPError as exc:
                last_error = f"transport error calling {url}: {exc}"
                logger.warning("chat attempt %d failed: %s", attempt + 1, last_error)
                continue
            if response.status_code in RETRYABLE_STATUSES:
                last_error = f"{url} returned {response.status_code}"
                logger.warning("chat attempt %d failed: %s", attempt + 1, last_error)
                continue
            if response.status_code != 200:
                raise ChatBackendError(
                    f"{url} returned {response.status_code}: {response.text[:200]}"
                )
            return self._parse(response, url)
        raise ChatBackendError(f"chat failed after {self.max_retries + 1} attempts: {last_error}")

    def _parse(self, response: httpx.Response, url: str) -> ChatResponse:
        try:
            data = response.json()
            choice = data["choices"][0]
            text = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ChatBackendError(f"malformed chat response from {url}: {exc}") from exc
        if not isinstance(text, str):
            raise ChatBackendError(f"malformed chat response from {url}: content is not text")
        return ChatResponse(
            text=text,
            finish_reason=choice.get("finish_reason", "stop"),
            usage=data.get("usage", {}),
        )

    def close(self):
        self._client.close()


class ScriptedChatBackend:
    """Replays a fixed list of replies; raises when the script runs out."""

    def __init__(self, replies: Sequence[str]):
        self._replies = list(replies)
        self._cursor = 0
        self.requests: list[ChatRequest] = []

    def describe(self) -> str:
        return f"scripted:{len(self._replies)}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        if self._cursor >= len(self._replies):
            raise ChatBackendError(
                f"scripted backend exhausted after {len(self._replies)} replies"
            )
        text = self._replies[self._cursor]
        self._cursor += 1
        return ChatResponse(text=text)


class RandomChoiceBackend:
    """Uniform random pick among fixed replies; the floor baseline."""

    def __init__(self, seed: int = 0, choices: Sequence[str] = OPTION_LABELS):
        self.seed = seed
        self._choices = tuple(choices)
        self._rng = random.Random(seed)

    def describe(self) -> str:
        return f"random:{self.seed}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        return ChatResponse(text=self._rng.choice(self._choices))


class SimilarityOracleBackend:
    """Answers FITB prompts by embedding similarity instead of a language model.

    Parses the rendered prompt, embeds the context items and each option with
    the given provider, and picks the option closest to the context centroid.
    Ties break toward the earlier option label. Non-FITB prompts get a fixed
    refusal so parse failures are visible rather than silently random.
    """

    def __init__(self, provider: EmbeddingProvider):
        self._provider = provider

    def describe(self) -> str:
        return f"similarity-oracle:{self._provider.fingerprint()}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        user_text = ""
        for message in request.messages:
            if message.role == "user":
                user_text = message.content
        structure = extract_fitb_structure(user_text)
        if structure is None:
            return ChatResponse(text="cannot answer: prompt is not a completion question")
        context_texts, option_texts = structure
        vectors = self._provider.embed_batch(list(context_texts) + list(option_texts))
        n_ctx = len(context_texts)
        centroid = np.mean([v.as_array() for v in vectors[:n_ctx]], axis=0)
        norm = float(np.linalg.norm(centroid))
        if norm == 0.0:
            return ChatResponse(text=OPTION_LABELS[0])
        best = 0
        best_score = float("-inf")
        for i, option_vector in enumerate(vectors[n_ctx:]):
            score = float(np.dot(centroid, option_vector.as_array()) / norm)
            if score > best_score:
                best, best_score = i, score
        return ChatResponse(text=OPTION_LABELS[best])
