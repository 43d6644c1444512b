"""
Chat message assembly for the LLM-backed generators.

Trace prompts are few-shot: every bundled worked example becomes a
question/trace exchange ahead of the real question.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .data import traces_path
from .jsonl import iter_jsonl
from .trace_dsl import Domain

COA_INSTRUCTIONS = {
    Domain.MATH: (
        "Answer the question with a reasoning chain. Write every arithmetic step as "
        "[expression = yK], using y1, y2, ... for results that are not known yet, and "
        "reuse a placeholder wherever its value is needed again. End with "
        "'The answer is yK.' Never compute the values yourself."
    ),
    Domain.WIKI: (
        "Answer the question with a chain of lookups. Write each Wikipedia search as "
        "[query -Wiki-> yK] and each entity extraction as [yJ -NER(class)-> yK], where "
        "class is one of person, group, location, culture, date, numeral. Later queries "
        "may mention earlier placeholders. Do not answer the question itself."
    ),
}

ANSWER_INSTRUCTIONS = (
    "Answer the question using only the reference articles. Reply with one sentence "
    "of the form 'The answer is <answer>.'"
)


@dataclass
class Message:
    """Individual message in the conversation."""

    role: str  # "system", "user" or "assistant"
    content: Optional[str] = None

    def to_openai_format(self) -> Dict[str, Any]:
        msg: Dict[str, Any] = {"role": self.role}
        if self.content is not None:
            msg["content"] = self.content
        return msg


class MessageSystem:
    """Ordered chat messages."""

    def __init__(self):
        self.messages: List[Message] = []

    def add_system_message(self, content: str) -> "MessageSystem":
        self.messages.append(Message(role="system", content=content))
        return self

    def add_user_message(self, content: str) -> "MessageSystem":
        self.messages.append(Message(role="user", content=content))
        return self

    def add_assistant_message(self, content: str) -> "MessageSystem":
        self.messages.append(Message(role="assistant", content=content))
        return self

    def to_openai_format(self) -> List[Dict[str, Any]]:
        """Convert all messages to OpenAI API format."""
        return [msg.to_openai_format() for msg in self.messages]


Demonstration = Tuple[str, str]


def load_demonstrations(domain: Domain, limit: Optional[int] = None) -> List[Demonstration]:
    """``(question, trace)`` pairs from the bundled worked examples."""
    pairs = [(row["question"], row["trace"]) for row in iter_jsonl(traces_path(domain))]
    return pairs[:limit] if limit is not None else pairs


def coa_messages(question: str, domain: Domain, demonstrations: Sequence[Demonstration] = ()) -> MessageSystem:
    """System instructions, one exchange per demonstration, then the question."""
    messages = MessageSystem().add_system_message(COA_INSTRUCTIONS[Domain(domain)])
    for demo_question, trace in demonstrations:
        messages.add_user_message(f"Question: {demo_question}")
        messages.add_assistant_message(trace)
    return messages.add_user_message(f"Question: {question}")


def answer_messages(question: str, context: str) -> MessageSystem:
    return (
        MessageSystem()
        .add_system_message(ANSWER_INSTRUCTIONS)
        .add_user_message(f"References: {context}\nQuestion: {question}")
    )
