import asyncio
from types import SimpleNamespace

import pytest

from src.config import RunConfig
from src.errors import ConfigError, GeneratorFailure
from src.llm_client import LLMAnswerGenerator, LLMClient, LLMGenerator
from src.message_system import answer_messages, coa_messages, load_demonstrations
from src.pipeline import VirtualClock, WorkItem
from src.resource_manager import ResourceManager
from src.trace_dsl import Domain
from tests.conftest import FIGURE_TRACE


class FakeCompletions:
    """Stands in for ``client.chat.completions``; records every request."""

    def __init__(self, reply: str = "", deltas=(), fail: bool = False):
        self.reply = reply
        self.deltas = list(deltas)
        self.fail = fail
        self.requests = []

    async def create(self, **kwargs):
        self.requests.append(kwargs)
        if self.fail:
            raise RuntimeError("endpoint down")
        if kwargs.get("stream"):
            return self._stream()
        message = SimpleNamespace(content=self.reply)
        return SimpleNamespace(choices=[SimpleNamespace(message=message)])

    async def _stream(self):
        for delta in self.deltas:
            yield SimpleNamespace(choices=[SimpleNamespace(delta=SimpleNamespace(content=delta))])


def _client(completions: FakeCompletions, seed=None) -> LLMClient:
    client = LLMClient("test-model", api_key="sk-test", seed=seed)
    client.client = SimpleNamespace(chat=SimpleNamespace(completions=completions))
    return client


def test_client_needs_key_and_model(monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    with pytest.raises(ConfigError):
        LLMClient("test-model")
    with pytest.raises(ConfigError):
        LLMClient("", api_key="sk-test")


def test_seed_is_sent_with_every_request():
    completions = FakeCompletions(reply="ok", deltas=["a", "b"])
    client = _client(completions, seed=7)
    assert asyncio.run(client.chat_completion([{"role": "user", "content": "hi"}])) == "ok"

    async def drain():
        return [delta async for delta in client.stream_completion([])]

    assert asyncio.run(drain()) == ["a", "b"]
    assert [request["seed"] for request in completions.requests] == [7, 7]
    assert completions.requests[0]["model"] == "test-model"


def test_no_seed_by_default():
    completions = FakeCompletions(reply="ok")
    asyncio.run(_client(completions).chat_completion([]))
    assert "seed" not in completions.requests[0]


def test_coa_messages_are_few_shot():
    demos = load_demonstrations(Domain.MATH, limit=2)
    messages = coa_messages("How many?", Domain.MATH, demos).to_openai_format()
    assert [m["role"] for m in messages] == ["system", "user", "assistant", "user", "assistant", "user"]
    assert messages[2]["content"] == demos[0][1]
    assert messages[-1] == {"role": "user", "content": "Question: How many?"}
    assert answer_messages("Q?", "ctx").to_openai_format()[1]["content"] == "References: ctx\nQuestion: Q?"


def test_generator_returns_stripped_trace():
    client = _client(FakeCompletions(reply=f"  {FIGURE_TRACE}\n"))
    generator = LLMGenerator(client, Domain.MATH)
    clock = VirtualClock()
    assert clock.run(generator.next_trace(WorkItem(id="fig", question="q"), clock)) == FIGURE_TRACE


def test_generator_streams_one_chunk_per_operation():
    deltas = ["The shop sold [20 + ", "35 = y1] apples. ", "So [90 - y1 = y2]", ". The answer is y2."]
    generator = LLMGenerator(_client(FakeCompletions(deltas=deltas)), Domain.MATH)
    clock = VirtualClock()

    async def collect():
        return [chunk.text async for chunk in generator.stream_trace(WorkItem(id="fig"), clock)]

    chunks = clock.run(collect())
    assert "".join(chunks) == "".join(deltas)
    assert chunks[0] == "The shop sold [20 + 35 = y1]"


def test_endpoint_failures_become_generator_failures():
    generator = LLMGenerator(_client(FakeCompletions(fail=True)), Domain.MATH)
    clock = VirtualClock()
    with pytest.raises(GeneratorFailure):
        clock.run(generator.next_trace(WorkItem(id="x"), clock))


def test_answer_generator():
    completions = FakeCompletions(reply="The answer is Greenwich Village.")
    answer = asyncio.run(LLMAnswerGenerator(_client(completions)).answer("bsg", "Where?", "ctx"))
    assert answer == "The answer is Greenwich Village."
    assert completions.requests[0]["messages"][0]["role"] == "system"


def test_resource_manager_passes_run_seed(monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
    manager = ResourceManager(RunConfig(generator="llm", model="test-model", seed=11))
    assert manager.llm_client().seed == 11
    assert isinstance(manager.trace_generator([]), LLMGenerator)
