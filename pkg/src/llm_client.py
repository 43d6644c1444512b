"""
LLM-backed trace and answer generators over any OpenAI-compatible endpoint.
"""

import logging
import os
from typing import Any, AsyncIterator, Dict, List, Optional, Sequence

from dotenv import load_dotenv
from openai import AsyncOpenAI

from .errors import CoAError, ConfigError, GeneratorFailure
from .message_system import Demonstration, answer_messages, coa_messages
from .pipeline.clock import Clock
from .pipeline.base_pipeline import WorkItem
from .pipeline.generator import Chunk, split_chunks
from .trace_dsl import Domain

load_dotenv()

logger = logging.getLogger(__name__)


class LLMClient:
    """Thin async wrapper around the chat completions API."""

    def __init__(
        self,
        model_name: str,
        api_key: Optional[str] = None,
        base_url: Optional[str] = None,
        seed: Optional[int] = None,
    ):
        """
        Initialize LLM client.

        Args:
            model_name: Model to request
            api_key: OpenAI API key (defaults to OPENAI_API_KEY env var)
            base_url: OpenAI base URL (defaults to OPENAI_BASE_URL env var)
            seed: Sampling seed sent with every request, for endpoints that honour it
        """
        api_key = api_key or os.getenv("OPENAI_API_KEY")
        base_url = base_url or os.getenv("OPENAI_BASE_URL")

        if not api_key:
            raise ConfigError("OpenAI API key is required (set OPENAI_API_KEY)")
        if not model_name:
            raise ConfigError("A model name is required for the llm generator")

        kwargs: Dict[str, Any] = {"api_key": api_key}
        if base_url:
            kwargs["base_url"] = base_url

        self.client = AsyncOpenAI(**kwargs)
        self.model = model_name
        self.seed = seed

    def _seeded(self, kwargs: Dict[str, Any]) -> Dict[str, Any]:
        if self.seed is not None:
            kwargs.setdefault("seed", self.seed)
        return kwargs

    async def chat_completion(self, messages: List[Dict[str, Any]], temperature: float = 0.0, **kwargs) -> str:
        """
        One chat completion.

        Args:
            messages: Chat messages in OpenAI format
            temperature: Sampling temperature

        Returns:
            The assistant message text ("" when the model returned none)
        """
        response = await self.client.chat.completions.create(
            model=self.model, messages=messages, temperature=temperature, **self._seeded(kwargs)
        )
        return response.choices[0].message.content or ""

    async def stream_completion(self, messages: List[Dict[str, Any]], temperature: float = 0.0) -> AsyncIterator[str]:
        """Text deltas of a streamed chat completion."""
        stream = await self.client.chat.completions.create(
            model=self.model, messages=messages, temperature=temperature, stream=True, **self._seeded({})
        )
        async for event in stream:
            if event.choices and event.choices[0].delta.content:
                yield event.choices[0].delta.content


class LLMGenerator:
    """Generates CoA traces with few-shot demonstrations.

    ``next_trace`` waits for the whole trace. ``stream_trace`` hands over text
    every time an operation's closing bracket arrives. Decode time is whatever
    the endpoint takes, so pair it with the real clock.
    """

    def __init__(self, client: LLMClient, domain: Domain, demonstrations: Sequence[Demonstration] = ()):
        self.client = client
        self.domain = Domain(domain)
        self.demonstrations = list(demonstrations)

    def _messages(self, item: WorkItem) -> List[Dict[str, Any]]:
        return coa_messages(item.question, self.domain, self.demonstrations).to_openai_format()

    async def next_trace(self, item: WorkItem, clock: Clock) -> str:
        try:
            text = await self.client.chat_completion(self._messages(item))
        except Exception as exc:
            raise GeneratorFailure(f"Completion failed: {exc}", item.id) from exc
        logger.debug("Trace for %s: %s", item.id, text)
        return text.strip()

    async def stream_trace(self, item: WorkItem, clock: Clock) -> AsyncIterator[Chunk]:
        text = ""
        emitted = 0
        try:
            async for delta in self.client.stream_completion(self._messages(item)):
                text += delta
                if "]" not in delta:
                    continue
                # everything up to the last closing bracket is final
                chunks = split_chunks(text[: text.rindex("]") + 1], self.domain)
                for chunk in chunks[emitted:]:
                    if chunk.operations:
                        emitted += 1
                        yield chunk
        except CoAError:
            raise
        except Exception as exc:
            raise GeneratorFailure(f"Completion failed: {exc}", item.id) from exc
        for chunk in split_chunks(text, self.domain)[emitted:]:
            yield chunk


class LLMAnswerGenerator:
    """Final wiki answers from the reified search context."""

    def __init__(self, client: LLMClient):
        self.client = client

    async def answer(self, item_id: str, question: str, context: str) -> str:
        try:
            return await self.client.chat_completion(answer_messages(question, context).to_openai_format())
        except Exception as exc:
            raise CoAError(f"Answer generation failed for {item_id!r}: {exc}", item_id=item_id) from exc

