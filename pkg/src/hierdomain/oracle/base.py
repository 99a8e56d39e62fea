import logging
from abc import ABC, abstractmethod
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ClassifierError, ParseFailure, PDDLError, UnparseableDecision
from ..utils import append_jsonl, digest
from .prompts import Message, build_prompt
from .responses import parse_response
from .roles import OracleRole


log = logging.getLogger(__name__)


# errors that earn one re-ask with the error appended
RETRYABLE = (ParseFailure, UnparseableDecision, PDDLError, ClassifierError, ValueError)


def request_digest(role: OracleRole, messages: tuple[Message, ...]) -> str:
    return digest({"role": role.value, "messages": [m.to_dict() for m in messages]})


def count_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class Exchange:
    seq: int
    role: OracleRole
    messages: tuple[Message, ...]
    response: str

    @property
    def digest(self) -> str:
        return request_digest(self.role, self.messages)

    @property
    def chars_in(self) -> int:
        return sum(len(m.content) for m in self.messages)

    @property
    def chars_out(self) -> int:
        return len(self.response)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "role": self.role.value,
            "digest": self.digest,
            "messages": [m.to_dict() for m in self.messages],
            "response": self.response,
            "chars_in": self.chars_in,
            "chars_out": self.chars_out,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Exchange":
        return cls(
            int(data["seq"]),
            OracleRole(data["role"]),
            tuple(Message(m["role"], m["content"]) for m in data["messages"]),
            data["response"],
        )


@dataclass
class RoleUsage:
    calls: int = 0
    retries: int = 0
    chars_in: int = 0
    chars_out: int = 0
    tokens_in: int = 0
    tokens_out: int = 0

    def add(self, exchange: Exchange) -> None:
        self.calls += 1
        self.chars_in += exchange.chars_in
        self.chars_out += exchange.chars_out
        self.tokens_in += sum(count_tokens(m.content) for m in exchange.messages)
        self.tokens_out += count_tokens(exchange.response)


@dataclass
class OracleSession:
    exchanges: list[Exchange] = field(default_factory=list)
    history: list[Message] = field(default_factory=list)
    usage: dict[OracleRole, RoleUsage] = field(default_factory=dict)


class Oracle(ABC):
    """Answers requests of every oracle role.

    Subclasses only produce response text; prompt building, parsing, the
    single re-ask on unusable answers and the transcript live here.
    """

    def __init__(self, record: Path | None = None):
        self.record = record
        self.session = OracleSession()
        self.last_retried = False

    @classmethod
    @abstractmethod
    def shortname(cls) -> str:
        pass

    @abstractmethod
    def _respond(self, role: OracleRole, messages: tuple[Message, ...], context: Mapping, seq: int) -> str:
        pass

    def preflight(self) -> None:
        """Raise before any learning state changes if the backend cannot serve requests"""

    @property
    def seq(self) -> int:
        return len(self.session.exchanges)

    def calls(self, role: OracleRole) -> int:
        usage = self.session.usage.get(role)
        return usage.calls if usage else 0

    def usage_report(self) -> dict[str, dict[str, int]]:
        return {role.value: vars(u).copy() for role, u in sorted(self.session.usage.items(), key=lambda i: i[0].value)}

    def _exchange(self, role: OracleRole, messages: tuple[Message, ...], context: Mapping) -> str:
        seq = self.seq + 1
        text = self._respond(role, messages, context, seq)
        exchange = Exchange(seq, role, messages, text)
        self.session.exchanges.append(exchange)
        self.session.usage.setdefault(role, RoleUsage()).add(exchange)
        if self.record is not None:
            append_jsonl(self.record, exchange.to_dict())
        log.debug("ORACLE #%d %s: %d chars in, %d out", seq, role.value, exchange.chars_in, exchange.chars_out)
        return text

    def ask(self, role: OracleRole, context: Mapping, validate: Callable | None = None):
        """Typed answer for a request; an unusable answer is re-asked once with the error appended"""
        self.last_retried = False
        messages = build_prompt(role, context)
        text = self._exchange(role, messages, context)
        try:
            result = parse_response(role, text, context)
            if validate is not None:
                validate(result)
        except RETRYABLE as e:
            log.info("REASK  %s: %s", role.value, e)
            self.last_retried = True
            self.session.usage[role].retries += 1
            retry = messages + (
                Message("assistant", text),
                Message("user", f"Your answer could not be used: {e}\nAnswer again in the requested format."),
            )
            text = self._exchange(role, retry, context)
            result = parse_response(role, text, context)
            if validate is not None:
                validate(result)
        # a re-ask sub-dialogue collapses to the request and its accepted answer
        self.session.history += [messages[-1], Message("assistant", text)]
        return result
