import difflib
import logging
from collections.abc import Mapping
from pathlib import Path

from ..errors import ReplayDivergence, TranscriptExhausted
from ..utils import read_jsonl
from .base import Exchange, Oracle, request_digest
from .prompts import Message
from .roles import OracleRole


log = logging.getLogger(__name__)


def _text(messages: tuple[Message, ...]) -> list[str]:
    lines = []
    for m in messages:
        lines.append(f"[{m.role}]")
        lines += m.content.splitlines()
    return lines


class ReplayOracle(Oracle):
    """Serves the responses of a recorded transcript, in order, fully offline"""

    def __init__(self, transcript: Path, record: Path | None = None):
        super().__init__(record)
        self.transcript = transcript
        self.recorded = [Exchange.from_dict(r) for r in read_jsonl(transcript)]

    @classmethod
    def shortname(cls) -> str:
        return "replay"

    def _respond(self, role: OracleRole, messages: tuple[Message, ...], context: Mapping, seq: int) -> str:
        if seq > len(self.recorded):
            raise TranscriptExhausted(f"Transcript {self.transcript} ends after {len(self.recorded)} exchanges, request #{seq} has no answer")
        recorded = self.recorded[seq - 1]
        if recorded.role is not role or recorded.digest != request_digest(role, messages):
            diff = difflib.unified_diff(
                [f"role: {recorded.role.value}"] + _text(recorded.messages),
                [f"role: {role.value}"] + _text(messages),
                fromfile="transcript", tofile="request", lineterm="",
            )
            raise ReplayDivergence(seq, "\n".join(diff))
        return recorded.response
